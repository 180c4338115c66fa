"""Residual evaluation: virtual sensors on batch means, ARR values,
calibration of the heat-transfer conductance and nominal statistics, and the
consecutive-exceedance activation detector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import (
    DivisionByZeroFlow,
    InsufficientTraining,
    MissingInput,
    OutOfOrderSample,
)
from .graph import DependencyGraph, DetectorConfig
from .thermo import lmtd_from_terminals

SIGMA_FLOOR = 1e-12

# slot layout of the exchanger expressions
_SLOTS = ("ft_103", "tc_114", "tc_117", "tc_116", "tc_119")


@dataclass(frozen=True)
class Batch:
    index: int                       # 1-based
    t_start: float
    t_end: float
    samples: dict[str, np.ndarray]   # sensor id -> raw values, aligned window

    def mean(self, sensor_id: str) -> float:
        if sensor_id not in self.samples:
            raise MissingInput(sensor_id)
        return float(np.mean(self.samples[sensor_id]))


@dataclass
class ResidualState:
    residual_id: str
    value: float = 0.0
    z_score: float = 0.0
    active: bool = False
    activation_time: float | None = None


@dataclass(frozen=True)
class CalibrationRecord:
    mu0: dict[str, float]
    sigma0: dict[str, float]
    ua_w_c: float
    window: tuple[float, float]
    n_batches: int


class Batcher:
    """Groups synchronous 1 Hz samples into fixed-width aligned batches."""

    def __init__(self, graph: DependencyGraph, batch_len: int | None = None):
        self.graph = graph
        p = graph.plant
        self.batch_len = batch_len or int(round(graph.detector.batch_seconds / p.sample_period_s))
        self._sensors = graph.physical_sensor_ids()
        self._open: dict[str, list[float]] = {s: [] for s in self._sensors}
        self._open_times: list[float] = []
        self._last_time = -np.inf
        self._next_index = 1

    def push(self, time_s: float, values: dict[str, float]) -> Batch | None:
        """Add one synchronous sample row; returns a Batch when one closes."""
        if time_s < self._last_time:
            raise OutOfOrderSample(f"sample at {time_s} precedes {self._last_time}")
        self._last_time = time_s
        self._open_times.append(time_s)
        for sid in self._sensors:
            if sid not in values:
                raise MissingInput(sid)
            self._open[sid].append(values[sid])
        if len(self._open_times) < self.batch_len:
            return None
        batch = Batch(
            index=self._next_index,
            t_start=self._open_times[0],
            t_end=self._open_times[-1] + self.graph.plant.sample_period_s,
            samples={sid: np.array(vals) for sid, vals in self._open.items()},
        )
        self._next_index += 1
        self._open = {s: [] for s in self._sensors}
        self._open_times = []
        return batch


def compute_virtual_sensors(batch: Batch, graph: DependencyGraph) -> dict[str, float]:
    """Virtual-sensor solutions applied to the batch means of their inputs."""
    for vid in graph.virtuals:
        for inp in graph.virtuals[vid].solution_inputs:
            if inp not in batch.samples:
                raise MissingInput(inp)

    values: dict[str, float] = {}
    ref = graph.virtuals.get("vf_102")
    if ref is not None and ref.expression_id == "reference_flow":
        values["vf_102"] = float(ref.params["reference_kg_s"])
    vf = values.get("vf_102", 0.0)
    for vid in sorted(graph.virtuals):
        spec = graph.virtuals[vid]
        if spec.expression_id == "reference_flow":
            continue
        ft = batch.mean("ft_103")
        if spec.expression_id == "balance_hot_inlet":
            if ft == 0.0:
                raise DivisionByZeroFlow("ft_103 batch mean is zero")
            values[vid] = batch.mean("tc_117") + (vf / ft) * (
                batch.mean("tc_119") - batch.mean("tc_116")
            )
        elif spec.expression_id == "balance_hot_outlet":
            if ft == 0.0:
                raise DivisionByZeroFlow("ft_103 batch mean is zero")
            values[vid] = batch.mean("tc_114") - (vf / ft) * (
                batch.mean("tc_119") - batch.mean("tc_116")
            )
        elif spec.expression_id == "balance_cold_outlet":
            if vf == 0.0:
                raise DivisionByZeroFlow("vf_102 is zero")
            values[vid] = batch.mean("tc_116") + (ft / vf) * (
                batch.mean("tc_114") - batch.mean("tc_117")
            )
        elif spec.expression_id == "balance_cold_inlet":
            if vf == 0.0:
                raise DivisionByZeroFlow("vf_102 is zero")
            values[vid] = batch.mean("tc_119") - (ft / vf) * (
                batch.mean("tc_114") - batch.mean("tc_117")
            )
    return values


def _slot_values(batch: Batch, virtuals: dict[str, float], substitutions) -> dict[str, float]:
    vals = {}
    for slot in _SLOTS:
        source = substitutions.get(slot, slot)
        vals[slot] = virtuals[source] if source in virtuals else batch.mean(source)
    return vals


def evaluate_residuals(
    batch: Batch,
    graph: DependencyGraph,
    calibration: CalibrationRecord,
) -> list[tuple[str, float]]:
    """All residual values on one batch, using the calibrated conductance.

    heat_balance: cp * (ft*(hot_in - hot_out) - vf*(cold_out - cold_in))
    ua_lmtd:      cp * ft * (hot_in - hot_out) - UA * LMTD(terminals),
    with per-residual virtual substitutions in the temperature slots.
    """
    cp = graph.plant.cp_j_kg_c
    virtuals = compute_virtual_sensors(batch, graph)
    out: list[tuple[str, float]] = []
    for rid in sorted(graph.residuals):
        spec = graph.residuals[rid]
        v = _slot_values(batch, virtuals, spec.substitutions)
        if spec.expression_id == "heat_balance":
            value = cp * (
                v["ft_103"] * (v["tc_114"] - v["tc_117"])
                - virtuals["vf_102"] * (v["tc_119"] - v["tc_116"])
            )
        else:
            duty = cp * v["ft_103"] * (v["tc_114"] - v["tc_117"])
            value = duty - calibration.ua_w_c * lmtd_from_terminals(
                v["tc_114"], v["tc_117"], v["tc_116"], v["tc_119"]
            )
        out.append((rid, float(value)))
    return out


def fit_ua(batches: list[Batch], graph: DependencyGraph) -> float:
    """Least-squares conductance: minimizes the primary heat-transfer residual.

    r2(UA) = Q_b - UA * L_b is linear in UA, so UA* = sum(Q L) / sum(L^2).
    """
    cp = graph.plant.cp_j_kg_c
    num = 0.0
    den = 0.0
    for b in batches:
        q = cp * b.mean("ft_103") * (b.mean("tc_114") - b.mean("tc_117"))
        lm = lmtd_from_terminals(
            b.mean("tc_114"), b.mean("tc_117"), b.mean("tc_116"), b.mean("tc_119")
        )
        num += q * lm
        den += lm * lm
    return num / den


def calibrate(batches: list[Batch], graph: DependencyGraph) -> CalibrationRecord:
    """Fit UA on fault-free training batches, then nominal (mu0, sigma0) per residual."""
    min_batches = 10
    if len(batches) < min_batches:
        raise InsufficientTraining(
            f"calibration needs >= {min_batches} batches, got {len(batches)}"
        )
    ua = fit_ua(batches, graph)
    trained = CalibrationRecord({}, {}, ua, (batches[0].t_start, batches[-1].t_end), len(batches))
    per_res: dict[str, list[float]] = {rid: [] for rid in graph.residuals}
    for b in batches:
        for rid, value in evaluate_residuals(b, graph, trained):
            per_res[rid].append(value)
    mu0 = {}
    sigma0 = {}
    for rid, vals in per_res.items():
        arr = np.array(vals)
        mu0[rid] = float(arr.mean())
        sigma0[rid] = max(float(arr.std(ddof=1)), SIGMA_FLOOR)
    return CalibrationRecord(mu0, sigma0, ua, trained.window, len(batches))


class Detector:
    """Latching batch-mean z-test: |z| > k for c consecutive batches activates.

    Owns per-residual latch state; feed batches sequentially from one pipeline.
    """

    def __init__(self, calibration: CalibrationRecord, config: DetectorConfig):
        self.calibration = calibration
        self.config = config
        self.states: dict[str, ResidualState] = {
            rid: ResidualState(rid) for rid in calibration.mu0
        }
        self._runs: dict[str, int] = {rid: 0 for rid in calibration.mu0}

    def reset(self) -> None:
        for rid in self.states:
            self.states[rid] = ResidualState(rid)
            self._runs[rid] = 0

    def update(self, batch_end: float, values: list[tuple[str, float]]) -> list[ResidualState]:
        k = self.config.z_threshold
        c = self.config.consecutive
        out = []
        for rid, value in values:
            st = self.states[rid]
            mu = self.calibration.mu0[rid]
            sigma = self.calibration.sigma0[rid]
            st.value = value
            st.z_score = (value - mu) / sigma
            if abs(st.z_score) > k:
                self._runs[rid] += 1
            else:
                self._runs[rid] = 0
            if not st.active and self._runs[rid] >= c:
                st.active = True
                st.activation_time = batch_end
            out.append(st)
        return out

    def active_set(self) -> frozenset[str]:
        return frozenset(rid for rid, st in self.states.items() if st.active)


def scan_activation(z_scores: np.ndarray, config: DetectorConfig) -> int:
    """Offline latch scan over a |z| series; -1 when never active (kernel-backed)."""
    return kernels.consecutive_exceed_latch(
        np.abs(z_scores), config.z_threshold, config.consecutive
    )
