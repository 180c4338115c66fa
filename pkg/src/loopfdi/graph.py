"""System knowledge graph: sensors, virtual-sensor solutions, components,
faults, residual declarations, and the fault-signature matrix derived from
dependency closures.

The graph is immutable after load; every structure here is safe to share
read-only across threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping

import yaml

from .errors import ParseError, UnknownFault, UnknownResidual, ValidationError

SCHEMA_VERSION = 1

# expression forms understood by the engines
VIRTUAL_EXPRESSIONS = {
    "reference_flow",
    "balance_hot_inlet",
    "balance_hot_outlet",
    "balance_cold_outlet",
    "balance_cold_inlet",
}
RESIDUAL_EXPRESSIONS = {"heat_balance", "ua_lmtd"}


class SensorKind(str, enum.Enum):
    PHYSICAL = "physical"
    VIRTUAL = "virtual"


class Quantity(str, enum.Enum):
    TEMPERATURE = "temperature"  # degrees C
    FLOW = "flow"                # kg/s
    PRESSURE = "pressure"        # kPa


class FaultKind(str, enum.Enum):
    SENSOR_BIAS = "sensor_bias"
    SENSOR_DRIFT = "sensor_drift"
    COMPONENT_DEGRADATION = "component_degradation"


@dataclass(frozen=True)
class SensorSpec:
    id: str
    kind: SensorKind
    quantity: Quantity
    component_id: str
    description: str = ""


@dataclass(frozen=True)
class VirtualSensorSpec:
    sensor_id: str
    solution_inputs: frozenset[str]      # physical sensor ids only
    solution_components: frozenset[str]
    expression_id: str
    params: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ComponentSpec:
    id: str
    description: str = ""


@dataclass(frozen=True)
class FaultSpec:
    id: str
    name: str
    target: str                 # sensor id or component id
    fault_kind: FaultKind
    effect: str = "bias"        # how the simulator realizes this fault
    canonical_magnitude: float = 0.0
    description: str = ""


@dataclass(frozen=True)
class ResidualSpec:
    id: str
    name: str
    expression_id: str
    direct_sensors: tuple[str, ...]      # declared dependency order (printed as-is)
    component_ids: frozenset[str]
    substitutions: Mapping[str, str] = field(default_factory=dict)  # slot sensor -> virtual id


@dataclass(frozen=True)
class DetectorConfig:
    batch_seconds: float = 30.0
    z_threshold: float = 3.0
    consecutive: int = 2
    calibration_batches: int = 10
    warmup_s: float = 170.0


@dataclass(frozen=True)
class PlantConfig:
    cp_j_kg_c: float
    ua_w_c: float
    sample_period_s: float
    lag_tau_s: float
    hot_inlet_c: float
    cold_trap_outlet_c: float
    pump_flow_kg_s: float
    noise_std: Mapping[str, float]


@dataclass(frozen=True)
class DependencyGraph:
    schema_version: int
    sensors: Mapping[str, SensorSpec]
    virtuals: Mapping[str, VirtualSensorSpec]
    components: Mapping[str, ComponentSpec]
    faults: Mapping[str, FaultSpec]
    residuals: Mapping[str, ResidualSpec]
    plant: PlantConfig
    detector: DetectorConfig
    buffer_capacity: int
    token_budget: int
    raw: Mapping = field(default_factory=dict, repr=False)

    def physical_sensor_ids(self) -> list[str]:
        return sorted(s for s, spec in self.sensors.items() if spec.kind == SensorKind.PHYSICAL)

    def virtual_sensor_ids(self) -> list[str]:
        return sorted(self.virtuals)

    def residual_ids(self) -> list[str]:
        return sorted(self.residuals)

    def fault_ids(self) -> list[str]:
        return sorted(self.faults)

    def vocabulary(self) -> frozenset[str]:
        """Every identifier an answer may legitimately cite."""
        vocab: set[str] = set(self.sensors)
        vocab.update(self.components)
        vocab.update(self.residuals)
        vocab.update(r.name for r in self.residuals.values())
        vocab.update(self.faults)
        vocab.update(f.name for f in self.faults.values())
        return frozenset(vocab)


@dataclass(frozen=True)
class FaultSignatureMatrix:
    rows: Mapping[str, frozenset[str]]   # fault id -> residual ids
    residual_order: tuple[str, ...]      # lexicographic column order

    def signature(self, fault_id: str) -> frozenset[str]:
        if fault_id not in self.rows:
            raise UnknownFault(f"no such fault: {fault_id!r}")
        return self.rows[fault_id]

    def as_bool_rows(self) -> dict[str, tuple[bool, ...]]:
        return {
            f: tuple(r in sig for r in self.residual_order)
            for f, sig in sorted(self.rows.items())
        }


@dataclass(frozen=True)
class Diagnostic:
    kind: str       # AmbiguityWarning | UnreachableSensorWarning | EmptySignatureWarning
    message: str
    subject_ids: tuple[str, ...]


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------

def default_config_text() -> str:
    return resources.files("loopfdi.configs").joinpath("metl_default.yaml").read_text()


def load_default_graph() -> DependencyGraph:
    return load_system_config(default_config_text())


def _require(mapping: Mapping, key: str, ctx: str):
    if key not in mapping:
        raise ParseError(f"missing key {key!r} in {ctx}")
    return mapping[key]


def load_system_config(document: str) -> DependencyGraph:
    """Parse and validate the system-description document (YAML, schema v1)."""
    try:
        doc = yaml.safe_load(document)
    except yaml.YAMLError as exc:
        raise ParseError(f"config does not parse: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("config root must be a mapping")

    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ParseError(f"unsupported schema_version {version!r}, expected {SCHEMA_VERSION}")

    components: dict[str, ComponentSpec] = {}
    for entry in doc.get("components", []):
        cid = _require(entry, "id", "component")
        if cid in components:
            raise ValidationError(f"duplicate component id {cid!r}", cid)
        components[cid] = ComponentSpec(cid, entry.get("description", ""))

    sensor_entries = doc.get("sensors", [])
    if not sensor_entries:
        raise ValidationError("config declares no sensors", None)
    sensors: dict[str, SensorSpec] = {}
    for entry in sensor_entries:
        sid = _require(entry, "id", "sensor")
        if sid in sensors:
            raise ValidationError(f"duplicate sensor id {sid!r}", sid)
        try:
            kind = SensorKind(_require(entry, "kind", f"sensor {sid}"))
            quantity = Quantity(_require(entry, "quantity", f"sensor {sid}"))
        except ValueError as exc:
            raise ValidationError(f"sensor {sid!r}: {exc}", sid) from exc
        component_id = _require(entry, "component", f"sensor {sid}")
        if component_id not in components:
            raise ValidationError(
                f"sensor {sid!r} references unknown component {component_id!r}", component_id
            )
        sensors[sid] = SensorSpec(sid, kind, quantity, component_id, entry.get("description", ""))

    physical = {s for s, sp in sensors.items() if sp.kind == SensorKind.PHYSICAL}
    if not physical:
        raise ValidationError("config declares no physical sensors", None)

    virtuals: dict[str, VirtualSensorSpec] = {}
    for vid, entry in (doc.get("virtual_sensors") or {}).items():
        if vid not in sensors:
            raise ValidationError(f"virtual solution for undeclared sensor {vid!r}", vid)
        if sensors[vid].kind != SensorKind.VIRTUAL:
            raise ValidationError(f"sensor {vid!r} is physical but has a virtual solution", vid)
        expression = _require(entry, "expression", f"virtual sensor {vid}")
        if expression not in VIRTUAL_EXPRESSIONS:
            raise ValidationError(f"virtual sensor {vid!r}: unknown expression {expression!r}", vid)
        inputs = tuple(entry.get("inputs", []))
        for inp in inputs:
            if inp not in sensors:
                raise ValidationError(
                    f"virtual sensor {vid!r} input {inp!r} is not a declared sensor", inp
                )
            if sensors[inp].kind == SensorKind.VIRTUAL:
                raise ValidationError(
                    f"virtual sensor {vid!r} derives from virtual sensor {inp!r} "
                    "(virtual-of-virtual chains are rejected)",
                    inp,
                )
        comps = tuple(entry.get("components", []))
        for cid in comps:
            if cid not in components:
                raise ValidationError(
                    f"virtual sensor {vid!r} references unknown component {cid!r}", cid
                )
        virtuals[vid] = VirtualSensorSpec(
            vid,
            frozenset(inputs),
            frozenset(comps),
            expression,
            dict(entry.get("params", {})),
        )

    for sid, spec in sensors.items():
        if spec.kind == SensorKind.VIRTUAL and sid not in virtuals:
            raise ValidationError(f"virtual sensor {sid!r} has no derivation", sid)

    residuals: dict[str, ResidualSpec] = {}
    for entry in doc.get("residuals", []):
        rid = _require(entry, "id", "residual")
        if rid in residuals:
            raise ValidationError(f"duplicate residual id {rid!r}", rid)
        expression = _require(entry, "expression", f"residual {rid}")
        if expression not in RESIDUAL_EXPRESSIONS:
            raise ValidationError(f"residual {rid!r}: unknown expression {expression!r}", rid)
        direct = tuple(_require(entry, "direct_sensors", f"residual {rid}"))
        for sid in direct:
            if sid not in sensors:
                raise ValidationError(f"residual {rid!r} references unknown sensor {sid!r}", sid)
        comps = tuple(entry.get("components", []))
        for cid in comps:
            if cid not in components:
                raise ValidationError(f"residual {rid!r} references unknown component {cid!r}", cid)
        subs = dict(entry.get("substitute", {}))
        for slot, vid in subs.items():
            if vid not in sensors or sensors[vid].kind != SensorKind.VIRTUAL:
                raise ValidationError(
                    f"residual {rid!r} substitutes unknown virtual sensor {vid!r}", vid
                )
        residuals[rid] = ResidualSpec(
            rid,
            _require(entry, "name", f"residual {rid}"),
            expression,
            direct,
            frozenset(comps),
            subs,
        )
    if not residuals:
        raise ValidationError("config declares no residuals", None)

    names_seen: dict[str, str] = {}
    faults: dict[str, FaultSpec] = {}
    for entry in doc.get("faults", []):
        fid = _require(entry, "id", "fault")
        name = _require(entry, "name", f"fault {fid}")
        if fid in faults:
            raise ValidationError(f"duplicate fault id {fid!r}", fid)
        if name in names_seen:
            raise ValidationError(f"duplicate fault name {name!r}", fid)
        names_seen[name] = fid
        target = _require(entry, "target", f"fault {fid}")
        if target not in sensors and target not in components:
            raise ValidationError(
                f"fault {fid!r} targets unknown sensor/component {target!r}", target
            )
        try:
            kind = FaultKind(_require(entry, "kind", f"fault {fid}"))
        except ValueError as exc:
            raise ValidationError(f"fault {fid!r}: {exc}", fid) from exc
        faults[fid] = FaultSpec(
            fid,
            name,
            target,
            kind,
            entry.get("effect", "bias"),
            float(entry.get("canonical_magnitude", 0.0)),
            entry.get("description", ""),
        )

    plant_doc = _require(doc, "plant", "config")
    boundary = _require(plant_doc, "boundary", "plant")
    noise = dict(_require(plant_doc, "noise_std", "plant"))
    for sid in noise:
        if sid not in sensors:
            raise ValidationError(f"noise_std references unknown sensor {sid!r}", sid)
    plant = PlantConfig(
        cp_j_kg_c=float(_require(plant_doc, "cp_j_per_kg_c", "plant")),
        ua_w_c=float(_require(plant_doc, "ua_w_per_c", "plant")),
        sample_period_s=float(plant_doc.get("sample_period_s", 1.0)),
        lag_tau_s=float(plant_doc.get("lag_tau_s", 10.0)),
        hot_inlet_c=float(_require(boundary, "hot_inlet_c", "boundary")),
        cold_trap_outlet_c=float(_require(boundary, "cold_trap_outlet_c", "boundary")),
        pump_flow_kg_s=float(_require(boundary, "pump_flow_kg_s", "boundary")),
        noise_std=noise,
    )
    if plant.cp_j_kg_c <= 0 or plant.ua_w_c <= 0:
        raise ValidationError("plant cp and UA must be positive", None)
    if plant.sample_period_s <= 0:
        raise ValidationError("sample_period_s must be positive", None)
    if any(v < 0 for v in noise.values()):
        raise ValidationError("noise_std values must be non-negative", None)
    if plant.hot_inlet_c <= plant.cold_trap_outlet_c:
        raise ValidationError("hot inlet temperature must exceed cold-trap outlet", None)
    if plant.pump_flow_kg_s <= 0:
        raise ValidationError("pump flow setpoint must be positive", None)

    det_doc = doc.get("detector", {})
    detector = DetectorConfig(
        batch_seconds=float(det_doc.get("batch_seconds", 30.0)),
        z_threshold=float(det_doc.get("z_threshold", 3.0)),
        consecutive=int(det_doc.get("consecutive", 2)),
        calibration_batches=int(det_doc.get("calibration_batches", 10)),
        warmup_s=float(det_doc.get("warmup_s", 170.0)),
    )

    graph = DependencyGraph(
        schema_version=version,
        sensors=sensors,
        virtuals=virtuals,
        components=components,
        faults=faults,
        residuals=residuals,
        plant=plant,
        detector=detector,
        buffer_capacity=int(doc.get("buffer", {}).get("capacity_batches", 20)),
        token_budget=int(doc.get("agent", {}).get("token_budget", 8192)),
        raw=doc,
    )
    return graph


# ---------------------------------------------------------------------------
# closures, signatures, validation
# ---------------------------------------------------------------------------

def dependency_closure(graph: DependencyGraph, residual_id: str) -> tuple[frozenset[str], frozenset[str]]:
    """(physical sensors, components) a residual transitively depends on.

    Direct physical sensors, plus each direct virtual sensor expanded into its
    solution inputs and solution components, plus the residual's own components.
    """
    if residual_id not in graph.residuals:
        raise UnknownResidual(f"no such residual: {residual_id!r}")
    spec = graph.residuals[residual_id]
    phys: set[str] = set()
    comps: set[str] = set(spec.component_ids)
    for sid in spec.direct_sensors:
        sensor = graph.sensors[sid]
        if sensor.kind == SensorKind.PHYSICAL:
            phys.add(sid)
        else:
            solution = graph.virtuals[sid]
            phys.update(solution.solution_inputs)
            comps.update(solution.solution_components)
    return frozenset(phys), frozenset(comps)


def build_signature_matrix(graph: DependencyGraph) -> FaultSignatureMatrix:
    """signature(F) = residuals whose dependency closure contains F's target."""
    closures = {rid: dependency_closure(graph, rid) for rid in graph.residuals}
    rows: dict[str, frozenset[str]] = {}
    for fid, fault in graph.faults.items():
        hit = set()
        for rid, (phys, comps) in closures.items():
            spec = graph.residuals[rid]
            if fault.target in phys or fault.target in comps:
                hit.add(rid)
            elif fault.target in spec.direct_sensors:
                # virtual-sensor target declared directly on the residual
                hit.add(rid)
        rows[fid] = frozenset(hit)
    return FaultSignatureMatrix(rows, tuple(sorted(graph.residuals)))


def validate_graph(graph: DependencyGraph) -> list[Diagnostic]:
    """Report-only structural checks run after the matrix is built."""
    matrix = build_signature_matrix(graph)
    diagnostics: list[Diagnostic] = []

    for fid in sorted(matrix.rows):
        if not matrix.rows[fid]:
            diagnostics.append(
                Diagnostic(
                    "EmptySignatureWarning",
                    f"fault {fid} has an empty signature (its target appears in no residual)",
                    (fid,),
                )
            )

    by_sig: dict[frozenset[str], list[str]] = {}
    for fid, sig in matrix.rows.items():
        if sig:
            by_sig.setdefault(sig, []).append(fid)
    for sig, fids in sorted(by_sig.items(), key=lambda kv: sorted(kv[1])):
        if len(fids) > 1:
            diagnostics.append(
                Diagnostic(
                    "AmbiguityWarning",
                    "faults " + ", ".join(sorted(fids)) + " share an identical signature "
                    "{" + ", ".join(sorted(sig)) + "} and cannot be isolated",
                    tuple(sorted(fids)),
                )
            )

    reachable: set[str] = set()
    for rid in graph.residuals:
        phys, _ = dependency_closure(graph, rid)
        reachable.update(phys)
        reachable.update(graph.residuals[rid].direct_sensors)
    for sid in sorted(graph.sensors):
        if sid not in reachable:
            diagnostics.append(
                Diagnostic(
                    "UnreachableSensorWarning",
                    f"sensor {sid} is attached to no residual",
                    (sid,),
                )
            )
    return diagnostics
