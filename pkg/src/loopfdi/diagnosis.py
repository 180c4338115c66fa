"""Signature matching with exoneration, forward consistency checks, and the
structured explanation record the agent renders.  Stateless pure functions.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import UnknownFault, UnknownResidual
from .graph import DependencyGraph, FaultSignatureMatrix, SensorKind


@dataclass(frozen=True)
class ForwardCheck:
    fault_id: str
    consistent: bool
    missing: tuple[str, ...]   # predicted by the signature but not observed
    extra: tuple[str, ...]     # observed but outside the signature


@dataclass(frozen=True)
class DiagnosisReport:
    observed_active: tuple[str, ...]
    matched_faults: tuple[str, ...]
    exonerated_faults: tuple[str, ...]
    unexplained_residuals: tuple[str, ...]
    partial: bool
    per_residual_sensors: dict[str, tuple[str, ...]]
    unique_sensor_set: tuple[str, ...]
    timestamp_s: float

    def to_dict(self) -> dict:
        return {
            "observed_active": list(self.observed_active),
            "matched_faults": list(self.matched_faults),
            "exonerated_faults": list(self.exonerated_faults),
            "unexplained_residuals": list(self.unexplained_residuals),
            "partial": self.partial,
            "per_residual_sensors": {k: list(v) for k, v in self.per_residual_sensors.items()},
            "unique_sensor_set": list(self.unique_sensor_set),
            "timestamp_s": self.timestamp_s,
        }


@dataclass(frozen=True)
class ExplanationRecord:
    """Fully grounded digest of a report; every identifier exists in the graph."""

    matched: tuple[tuple[str, str], ...]          # (fault id, fault name)
    partial: bool
    active_residuals: tuple[tuple[str, str, tuple[str, ...]], ...]  # (id, name, sensors)
    unique_sensor_set: tuple[str, ...]
    exoneration: tuple[tuple[str, str, tuple[str, ...], tuple[str, ...]], ...]
    # (fault id, fault name, missing residuals, extra residuals)
    unexplained_residuals: tuple[str, ...]
    timestamp_s: float


def diagnose(
    active: frozenset[str] | set[str],
    matrix: FaultSignatureMatrix,
    graph: DependencyGraph,
    timestamp_s: float = 0.0,
) -> DiagnosisReport:
    """Exact signature match first; minimal strict supersets as a flagged partial fallback."""
    active = frozenset(active)
    for rid in active:
        if rid not in matrix.residual_order:
            raise UnknownResidual(f"active set names unknown residual {rid!r}")

    matched = sorted(f for f, sig in matrix.rows.items() if sig == active)
    partial = False
    if not matched and active:
        candidates = {f: sig for f, sig in matrix.rows.items() if sig >= active}
        minimal = [
            f
            for f, sig in candidates.items()
            if not any(other != f and osig < sig for other, osig in candidates.items())
        ]
        if minimal:
            matched = sorted(minimal)
            partial = True

    matched_cover: set[str] = set()
    for f in matched:
        matched_cover.update(matrix.rows[f])
    unexplained = tuple(sorted(active - matched_cover))

    exonerated = sorted(set(matrix.rows) - set(matched))
    per_residual = {
        rid: tuple(graph.residuals[rid].direct_sensors) for rid in sorted(active)
    }
    unique = sorted(
        {
            sid
            for rid in active
            for sid in graph.residuals[rid].direct_sensors
            if graph.sensors[sid].kind == SensorKind.PHYSICAL
        }
    )
    return DiagnosisReport(
        observed_active=tuple(sorted(active)),
        matched_faults=tuple(matched),
        exonerated_faults=tuple(exonerated),
        unexplained_residuals=unexplained,
        partial=partial,
        per_residual_sensors=per_residual,
        unique_sensor_set=tuple(unique),
        timestamp_s=timestamp_s,
    )


def forward_check(
    fault_id: str,
    matrix: FaultSignatureMatrix,
    active: frozenset[str] | set[str],
) -> ForwardCheck:
    """Diff a fault's predicted signature against the observed active set."""
    if fault_id not in matrix.rows:
        raise UnknownFault(f"no such fault: {fault_id!r}")
    active = frozenset(active)
    predicted = matrix.rows[fault_id]
    missing = tuple(sorted(predicted - active))
    extra = tuple(sorted(active - predicted))
    return ForwardCheck(fault_id, not missing and not extra, missing, extra)


def explanation_record(
    report: DiagnosisReport,
    graph: DependencyGraph,
    matrix: FaultSignatureMatrix,
) -> ExplanationRecord:
    """Deterministic grounded digest; the rationale per exonerated fault is its
    signature diff against the observed active set."""
    active = frozenset(report.observed_active)
    matched = tuple(
        (fid, graph.faults[fid].name) for fid in report.matched_faults
    )
    residual_lines = tuple(
        (rid, graph.residuals[rid].name, tuple(graph.residuals[rid].direct_sensors))
        for rid in report.observed_active
    )
    exoneration = []
    for fid in report.exonerated_faults:
        check = forward_check(fid, matrix, active)
        exoneration.append((fid, graph.faults[fid].name, check.missing, check.extra))
    return ExplanationRecord(
        matched=matched,
        partial=report.partial,
        active_residuals=residual_lines,
        unique_sensor_set=report.unique_sensor_set,
        exoneration=tuple(exoneration),
        unexplained_residuals=report.unexplained_residuals,
        timestamp_s=report.timestamp_s,
    )
