"""Steady-state purification-loop simulator with sensor streams and fault injection.

Truth model: the branch carries one regulated flow through the economizer hot
side, the cold trap, and back through the economizer cold side.  Outlet
temperatures follow the counterflow duty/UA-LMTD solve; after a parameter
change the four node temperatures relax toward the new steady state with a
common first-order lag, which preserves the hot/cold duty balance exactly at
every step.  Sensor faults act on emitted values only; component faults act on
the physics.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
import yaml

from . import kernels
from .errors import DivisionByZeroFlow, ParseError, UnknownFaultId, ValidationError
from .graph import DependencyGraph, FaultKind
from .thermo import steady_outlets

TEMP_NODES = ("tc_114", "tc_117", "tc_116", "tc_119")


@dataclass(frozen=True)
class FaultScenario:
    fault_id: str
    onset_s: float
    magnitude: float

    def __post_init__(self):
        if self.onset_s < 0:
            raise ValidationError("scenario onset must be >= 0", self.fault_id)


@dataclass(frozen=True)
class SensorSample:
    sensor_id: str
    time_s: float
    value: float


@dataclass
class LoopState:
    """Truth snapshot; `temperatures` is keyed by the thermocouple node ids."""

    time_s: float
    flows: dict[str, float]          # {"ft_103": hot-side, "cold_return": cold-side}
    temperatures: dict[str, float]
    boundary: dict[str, float]
    ua_actual_w_c: float

    def copy(self) -> "LoopState":
        return LoopState(
            self.time_s,
            dict(self.flows),
            dict(self.temperatures),
            dict(self.boundary),
            self.ua_actual_w_c,
        )


def load_scenarios(document: str, graph: DependencyGraph) -> list[FaultScenario]:
    """Parse a scenario document (YAML list under `scenarios`)."""
    try:
        doc = yaml.safe_load(document)
    except yaml.YAMLError as exc:
        raise ParseError(f"scenario file does not parse: {exc}") from exc
    if doc is None:
        return []
    entries = doc.get("scenarios", doc) if isinstance(doc, dict) else doc
    if not isinstance(entries, list):
        raise ParseError("scenario document must hold a list of scenarios")
    out = []
    for entry in entries:
        fid = entry.get("fault_id")
        if fid not in graph.faults:
            raise UnknownFaultId(f"scenario references unknown fault {fid!r}")
        out.append(FaultScenario(fid, float(entry.get("onset_s", 0.0)), float(entry["magnitude"])))
    return out


def steady_state(
    graph: DependencyGraph,
    *,
    hot_inlet_c: float | None = None,
    cold_inlet_c: float | None = None,
    m_hot_kg_s: float | None = None,
    m_cold_kg_s: float | None = None,
    ua_w_c: float | None = None,
) -> LoopState:
    """Steady loop state for the given (or configured) boundary and parameters."""
    p = graph.plant
    hot_in = p.hot_inlet_c if hot_inlet_c is None else hot_inlet_c
    cold_in = p.cold_trap_outlet_c if cold_inlet_c is None else cold_inlet_c
    m_hot = p.pump_flow_kg_s if m_hot_kg_s is None else m_hot_kg_s
    m_cold = m_hot if m_cold_kg_s is None else m_cold_kg_s
    ua = p.ua_w_c if ua_w_c is None else ua_w_c
    sol = steady_outlets(hot_in, cold_in, m_hot, m_cold, p.cp_j_kg_c, ua)
    return LoopState(
        time_s=0.0,
        flows={"ft_103": m_hot, "cold_return": m_cold},
        temperatures={
            "tc_114": hot_in,
            "tc_117": sol.hot_out_c,
            "tc_116": cold_in,
            "tc_119": sol.cold_out_c,
        },
        boundary={
            "hot_inlet_c": hot_in,
            "cold_trap_outlet_c": cold_in,
            "pump_flow_kg_s": m_hot,
        },
        ua_actual_w_c=ua,
    )


def virtual_truth(graph: DependencyGraph, state: LoopState) -> dict[str, float]:
    """Virtual-sensor solutions evaluated on truth values."""
    t = state.temperatures
    ft = state.flows["ft_103"]
    values: dict[str, float] = {}
    for vid in sorted(graph.virtuals):
        spec = graph.virtuals[vid]
        if spec.expression_id == "reference_flow":
            values[vid] = float(spec.params["reference_kg_s"])
    vf = values.get("vf_102", state.flows["cold_return"])
    for vid in sorted(graph.virtuals):
        spec = graph.virtuals[vid]
        if spec.expression_id == "reference_flow":
            continue
        if spec.expression_id in ("balance_hot_inlet", "balance_hot_outlet"):
            if ft == 0.0:
                raise DivisionByZeroFlow("hot-side flow is zero")
            ratio = vf / ft
            if spec.expression_id == "balance_hot_inlet":
                values[vid] = t["tc_117"] + ratio * (t["tc_119"] - t["tc_116"])
            else:
                values[vid] = t["tc_114"] - ratio * (t["tc_119"] - t["tc_116"])
        else:
            if vf == 0.0:
                raise DivisionByZeroFlow("cold-side flow is zero")
            ratio = ft / vf
            if spec.expression_id == "balance_cold_outlet":
                values[vid] = t["tc_116"] + ratio * (t["tc_114"] - t["tc_117"])
            else:
                values[vid] = t["tc_119"] - ratio * (t["tc_114"] - t["tc_117"])
    return values


@dataclass
class _ActiveEffects:
    ua_multiplier: float = 1.0
    flow_multiplier: float = 1.0
    trap_offset_c: float = 0.0

    def key(self) -> tuple:
        return (self.ua_multiplier, self.flow_multiplier, self.trap_offset_c)


class Simulator:
    """Single logical producer of the sensor stream; `step` is not reentrant."""

    def __init__(
        self,
        graph: DependencyGraph,
        scenarios: list[FaultScenario] | None = None,
        seed: int | None = 0,
    ):
        self.graph = graph
        self.scenarios = list(scenarios or [])
        for sc in self.scenarios:
            if sc.fault_id not in graph.faults:
                raise UnknownFaultId(f"unknown fault in scenario: {sc.fault_id!r}")
        self._rng = np.random.default_rng(seed)
        self._physical = graph.physical_sensor_ids()
        self._noise_std = np.array(
            [graph.plant.noise_std.get(s, 0.0) for s in self._physical]
        )
        self.state = steady_state(graph)
        self._target_cache: dict[tuple, LoopState] = {}

    # -- fault bookkeeping ---------------------------------------------------

    def _component_effects(self, t: float) -> _ActiveEffects:
        eff = _ActiveEffects()
        for sc in self.scenarios:
            if t < sc.onset_s:
                continue
            fault = self.graph.faults[sc.fault_id]
            if fault.fault_kind != FaultKind.COMPONENT_DEGRADATION:
                continue
            if fault.effect == "ua_multiplier":
                eff.ua_multiplier *= sc.magnitude
            elif fault.effect == "flow_multiplier":
                eff.flow_multiplier *= sc.magnitude
            elif fault.effect == "trap_outlet_offset":
                eff.trap_offset_c += sc.magnitude
        return eff

    def _sensor_offset(self, sensor_id: str, t: float) -> float:
        offset = 0.0
        for sc in self.scenarios:
            if t < sc.onset_s:
                continue
            fault = self.graph.faults[sc.fault_id]
            if fault.target != sensor_id:
                continue
            if fault.fault_kind == FaultKind.SENSOR_BIAS:
                offset += sc.magnitude
            elif fault.fault_kind == FaultKind.SENSOR_DRIFT:
                offset += sc.magnitude * (t - sc.onset_s)
        return offset

    def _targets(self, eff: _ActiveEffects) -> LoopState:
        key = eff.key()
        cached = self._target_cache.get(key)
        if cached is None:
            p = self.graph.plant
            cached = steady_state(
                self.graph,
                cold_inlet_c=p.cold_trap_outlet_c + eff.trap_offset_c,
                m_hot_kg_s=p.pump_flow_kg_s * eff.flow_multiplier,
                ua_w_c=p.ua_w_c * eff.ua_multiplier,
            )
            self._target_cache[key] = cached
        return cached

    # -- stepping ------------------------------------------------------------

    def step(self, dt: float | None = None) -> tuple[LoopState, list[SensorSample]]:
        """Advance one sample period and emit one sample per physical sensor."""
        p = self.graph.plant
        dt = p.sample_period_s if dt is None else dt
        if dt <= 0:
            raise ValueError("dt must be positive")
        t_new = self.state.time_s + dt

        eff = self._component_effects(t_new)
        targets = self._targets(eff)
        decay = math.exp(-dt / p.lag_tau_s)
        st = self.state
        for node in TEMP_NODES:
            tgt = targets.temperatures[node]
            st.temperatures[node] = tgt + (st.temperatures[node] - tgt) * decay
        st.flows = dict(targets.flows)          # flows respond immediately
        st.boundary = dict(targets.boundary)
        st.ua_actual_w_c = targets.ua_actual_w_c
        st.time_s = t_new

        noise = self._rng.normal(0.0, 1.0, size=len(self._physical)) * self._noise_std
        samples = []
        for i, sid in enumerate(self._physical):
            truth = st.flows["ft_103"] if sid == "ft_103" else st.temperatures[sid]
            value = truth + noise[i] + self._sensor_offset(sid, t_new)
            samples.append(SensorSample(sid, t_new, float(value)))
        return st, samples

    def run_samples(self, duration_s: float) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        """Vectorized fast path: all samples for [dt, duration] in one pass.

        Equivalent stream to repeated `step()` with the same seed; the truth
        trajectories are generated per segment between fault transitions with
        the lag kernel, and noise is drawn in the same order as the stepper.
        """
        p = self.graph.plant
        dt = p.sample_period_s
        n = int(round(duration_s / dt))
        times = self.state.time_s + dt * np.arange(1, n + 1)

        transition_times = sorted(
            {sc.onset_s for sc in self.scenarios if self.state.time_s < sc.onset_s <= times[-1]}
        )
        truth = {node: np.empty(n) for node in TEMP_NODES}
        flow = np.empty(n)
        decay = math.exp(-dt / p.lag_tau_s)

        start = 0
        current = {node: self.state.temperatures[node] for node in TEMP_NODES}
        bounds = transition_times + [float("inf")]
        for bound in bounds:
            stop = int(np.searchsorted(times, bound, side="left"))
            if stop > start:
                eff = self._component_effects(times[start])
                targets = self._targets(eff)
                seg = slice(start, stop)
                m = stop - start
                for node in TEMP_NODES:
                    tgt = targets.temperatures[node]
                    truth[node][seg] = kernels.lag_sequence(current[node], tgt, decay, m)
                    current[node] = truth[node][stop - 1]
                flow[seg] = targets.flows["ft_103"]
                start = stop
            if bound == float("inf") or start >= n:
                break

        noise = self._rng.normal(0.0, 1.0, size=(n, len(self._physical))) * self._noise_std
        streams: dict[str, np.ndarray] = {}
        for i, sid in enumerate(self._physical):
            base = flow if sid == "ft_103" else truth[sid]
            offsets = np.zeros(n)
            for sc in self.scenarios:
                fault = self.graph.faults[sc.fault_id]
                if fault.target != sid:
                    continue
                mask = times >= sc.onset_s
                if fault.fault_kind == FaultKind.SENSOR_BIAS:
                    offsets[mask] += sc.magnitude
                elif fault.fault_kind == FaultKind.SENSOR_DRIFT:
                    offsets[mask] += sc.magnitude * (times[mask] - sc.onset_s)
            streams[sid] = base + noise[:, i] + offsets

        # leave the simulator positioned at the end of the run
        eff = self._component_effects(times[-1])
        targets = self._targets(eff)
        self.state.time_s = float(times[-1])
        for node in TEMP_NODES:
            self.state.temperatures[node] = float(truth[node][-1])
        self.state.flows = dict(targets.flows)
        self.state.boundary = dict(targets.boundary)
        self.state.ua_actual_w_c = targets.ua_actual_w_c
        return times, streams


def samples_to_csv(times: np.ndarray, streams: dict[str, np.ndarray]) -> str:
    """CSV export with columns time_s, sensor_id, value."""
    buf = io.StringIO()
    buf.write("time_s,sensor_id,value\n")
    for i, t in enumerate(times):
        for sid in sorted(streams):
            buf.write(f"{t:.3f},{sid},{streams[sid][i]:.9g}\n")
    return buf.getvalue()
