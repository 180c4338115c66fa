"""Pipeline orchestration (simulate -> batch -> residuals -> detect -> diagnose
-> snapshot), JSON-lines run logs with replay, and the HTTP/WebSocket service.
"""

from __future__ import annotations

import asyncio
import json
import os
import threading
import time as _time
from dataclasses import dataclass

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from pydantic import BaseModel

from .agent import ChatEndpoint, ExplanationAgent
from .analytics import AnalyticsBank
from .diagnosis import DiagnosisReport, diagnose
from .errors import (
    BindError,
    ConfigError,
    CorruptLog,
    InsufficientData,
    NoDiagnosisAvailable,
    UnknownSensor,
)
from .graph import DependencyGraph, build_signature_matrix
from .plant import FaultScenario, Simulator
from .residuals import Batcher, Detector, calibrate, evaluate_residuals

SNAPSHOT_SCHEMA_VERSION = "1"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class Snapshot:
    """One per closed detection batch; treat as immutable once emitted."""

    schema_version: str
    timestamp_s: float
    sensors: list
    residuals: list
    diagnosis: dict
    scenario: list

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "timestamp_s": self.timestamp_s,
            "sensors": self.sensors,
            "residuals": self.residuals,
            "diagnosis": self.diagnosis,
            "scenario": self.scenario,
        }


class RunLogWriter:
    """Append-only JSON-lines log of snapshots and answer records."""

    def __init__(self, path: str):
        self.path = path
        self._fh = open(path, "w")

    def append_snapshot(self, snapshot: Snapshot) -> None:
        self._fh.write(canonical_json({"type": "snapshot", "data": snapshot.to_dict()}) + "\n")
        self._fh.flush()

    def append_answer(self, record_dict: dict) -> None:
        self._fh.write(canonical_json({"type": "answer", "data": record_dict}) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def replay(path: str):
    """Yield snapshot dicts from a run log; raises CorruptLog with the line number."""
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            if not line.endswith("\n"):
                raise CorruptLog(lineno, f"truncated line {lineno}")
            try:
                entry = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorruptLog(lineno, f"line {lineno}: {exc}") from exc
            if not isinstance(entry, dict) or "type" not in entry or "data" not in entry:
                raise CorruptLog(lineno, f"line {lineno}: not a run-log entry")
            if entry["type"] == "snapshot":
                yield entry["data"]


class Pipeline:
    """Owns simulation, batching, calibration, detection and diagnosis state."""

    def __init__(
        self,
        graph: DependencyGraph,
        scenarios: list[FaultScenario] | None = None,
        seed: int = 42,
        calibration_batches: int | None = None,
    ):
        self.graph = graph
        self.scenarios = list(scenarios or [])
        self.matrix = build_signature_matrix(graph)
        self.simulator = Simulator(graph, self.scenarios, seed=seed)
        self.batcher = Batcher(graph)
        det = graph.detector
        self.calibration_batches = calibration_batches or det.calibration_batches
        batch_len = int(round(det.batch_seconds / graph.plant.sample_period_s))
        self.analytics = AnalyticsBank(
            graph.physical_sensor_ids(), batch_len, graph.buffer_capacity
        )
        self.detector: Detector | None = None
        self.calibration = None
        self._training: list = []
        self.latest_report: DiagnosisReport | None = None

    def check_duration(self, duration_s: float) -> None:
        det = self.graph.detector
        needed = det.warmup_s + self.calibration_batches * det.batch_seconds
        if duration_s < needed:
            raise ConfigError(
                f"duration {duration_s}s is shorter than warmup + calibration window ({needed}s)"
            )

    def residual_rows(self) -> list[dict]:
        rows = []
        for rid in self.graph.residual_ids():
            spec = self.graph.residuals[rid]
            st = self.detector.states[rid] if self.detector else None
            rows.append(
                {
                    "id": rid,
                    "name": spec.name,
                    "value": st.value if st else 0.0,
                    "z_score": st.z_score if st else 0.0,
                    "active": bool(st.active) if st else False,
                    "activation_time": st.activation_time if st else None,
                    "direct_sensors": list(spec.direct_sensors),
                }
            )
        return rows

    def _snapshot(self, t_end: float) -> Snapshot:
        sensors = []
        for sid in self.graph.physical_sensor_ids():
            buf = self.analytics.buffers[sid]
            latest = buf.batch_metrics()[-1].to_dict() if len(buf) else None
            sensors.append(
                {"id": sid, "kind": "physical", "latest_metrics": latest}
            )
        report = self.latest_report
        return Snapshot(
            schema_version=SNAPSHOT_SCHEMA_VERSION,
            timestamp_s=t_end,
            sensors=sensors,
            residuals=self.residual_rows(),
            diagnosis=report.to_dict() if report else {},
            scenario=[
                {"fault_id": sc.fault_id, "onset_s": sc.onset_s, "magnitude": sc.magnitude}
                for sc in self.scenarios
            ],
        )

    def step_sample(self):
        """Advance one sample; returns a Snapshot when a detection batch closed."""
        state, samples = self.simulator.step()
        t = state.time_s
        if t < self.graph.detector.warmup_s:
            return None
        values = {s.sensor_id: s.value for s in samples}
        self.analytics.push(t, values)
        batch = self.batcher.push(t, values)
        if batch is None:
            return None
        if self.calibration is None:
            self._training.append(batch)
            if len(self._training) >= self.calibration_batches:
                self.calibration = calibrate(self._training, self.graph)
                self.detector = Detector(self.calibration, self.graph.detector)
            return None
        values_list = evaluate_residuals(batch, self.graph, self.calibration)
        self.detector.update(batch.t_end, values_list)
        self.latest_report = diagnose(
            self.detector.active_set(), self.matrix, self.graph, timestamp_s=batch.t_end
        )
        return self._snapshot(batch.t_end)

    def metrics_tables(self) -> dict:
        return {
            sid: self.analytics.buffers[sid].batch_metrics()
            for sid in self.graph.physical_sensor_ids()
            if len(self.analytics.buffers[sid])
        }


def run_pipeline(
    graph: DependencyGraph,
    scenarios: list[FaultScenario] | None,
    duration_s: float,
    seed: int = 42,
    out_path: str | None = None,
    calibration_batches: int | None = None,
) -> list[Snapshot]:
    """Batch-mode run; returns all snapshots and optionally writes the run log."""
    pipeline = Pipeline(graph, scenarios, seed, calibration_batches)
    pipeline.check_duration(duration_s)
    for sc in pipeline.scenarios:
        if duration_s < sc.onset_s:
            raise ConfigError(
                f"duration {duration_s}s ends before scenario onset {sc.onset_s}s"
            )
    writer = RunLogWriter(out_path) if out_path else None
    snapshots = []
    n_steps = int(round(duration_s / graph.plant.sample_period_s))
    try:
        for _ in range(n_steps):
            snap = pipeline.step_sample()
            if snap is not None:
                snapshots.append(snap)
                if writer:
                    writer.append_snapshot(snap)
    finally:
        if writer:
            writer.close()
    return snapshots


# ---------------------------------------------------------------------------
# HTTP / WebSocket service
# ---------------------------------------------------------------------------

def endpoint_from_env():
    """Chat endpoint configured from the environment, or None for the renderer."""
    base = os.environ.get("LOOPFDI_LLM_BASE_URL", "")
    if not base:
        return None
    return ChatEndpoint(
        base,
        os.environ.get("LOOPFDI_LLM_MODEL", "gpt-4"),
        os.environ.get("LOOPFDI_LLM_API_KEY", ""),
    )


class ServiceRuntime:
    """Shared state between the pipeline task and the API handlers."""

    def __init__(self, graph: DependencyGraph, pipeline: Pipeline, agent: ExplanationAgent):
        self.graph = graph
        self.pipeline = pipeline
        self.agent = agent
        self.lock = threading.Lock()
        self.latest: Snapshot | None = None
        self.seq = 0
        # healthy-by-default diagnosis so operator queries work before data flows
        self.agent.update_state(
            diagnose(frozenset(), pipeline.matrix, graph, 0.0), [], {}, 0.0
        )

    def publish(self, snapshot: Snapshot) -> None:
        with self.lock:
            self.latest = snapshot
            self.seq += 1
            p = self.pipeline
            residual_lines = [
                f"{r['id']} ({r['name']}): value {r['value']:.3f} W, z {r['z_score']:.2f}, "
                + ("ACTIVE" if r["active"] else "inactive")
                for r in p.residual_rows()
            ]
            self.agent.update_state(
                p.latest_report,
                residual_lines,
                p.metrics_tables(),
                snapshot.timestamp_s,
            )


class CustomQuery(BaseModel):
    question: str
    save: bool = False


class SensorDataQuery(BaseModel):
    sensor_id: str


def create_app(runtime: ServiceRuntime, console_dir: str | None = None):
    from fastapi.middleware.cors import CORSMiddleware

    app = FastAPI(title="loopfdi service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.get("/state")
    def get_state():
        with runtime.lock:
            if runtime.latest is None:
                raise HTTPException(status_code=404, detail="no snapshot yet")
            return runtime.latest.to_dict()

    @app.get("/graph")
    def get_graph():
        return runtime.graph.raw

    @app.get("/sensors/{sensor_id}/metrics")
    def get_metrics(sensor_id: str):
        if sensor_id not in runtime.graph.sensors:
            raise HTTPException(status_code=404, detail=f"UnknownSensor: {sensor_id}")
        buf = runtime.pipeline.analytics.buffers.get(sensor_id)
        if buf is None or not len(buf):
            return []
        return [m.to_dict() for m in buf.batch_metrics()]

    @app.post("/query/fault")
    def query_fault():
        with runtime.lock:
            try:
                record = runtime.agent.fault_query()
            except NoDiagnosisAvailable as exc:
                raise HTTPException(status_code=409, detail=str(exc))
            return record.to_dict()

    @app.post("/query/custom")
    def query_custom(body: CustomQuery):
        with runtime.lock:
            return runtime.agent.custom_query(body.question, save=body.save).to_dict()

    @app.post("/query/sensor-data")
    def query_sensor_data(body: SensorDataQuery):
        with runtime.lock:
            try:
                return runtime.agent.query_sensor_data(body.sensor_id).to_dict()
            except UnknownSensor as exc:
                raise HTTPException(status_code=404, detail=f"UnknownSensor: {exc}")
            except InsufficientData as exc:
                raise HTTPException(status_code=409, detail=f"InsufficientData: {exc}")

    @app.websocket("/stream")
    async def stream(ws: WebSocket):
        await ws.accept()
        sent = 0
        try:
            while True:
                with runtime.lock:
                    latest, seq = runtime.latest, runtime.seq
                if latest is not None and seq > sent:
                    await ws.send_text(canonical_json(latest.to_dict()))
                    sent = seq
                else:
                    await asyncio.sleep(0.05)
        except WebSocketDisconnect:
            return

    if console_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/console", StaticFiles(directory=console_dir, html=True), name="console")

    return app


class PipelineThread(threading.Thread):
    """Runs the pipeline against the wall clock (scaled) and publishes snapshots."""

    def __init__(self, runtime: ServiceRuntime, duration_s: float, time_scale: float = 1.0):
        super().__init__(daemon=True)
        self.runtime = runtime
        self.duration_s = duration_s
        self.time_scale = max(time_scale, 1e-9)
        self.stop_event = threading.Event()

    def run(self) -> None:
        graph = self.runtime.graph
        dt = graph.plant.sample_period_s
        n_steps = int(round(self.duration_s / dt))
        wall_start = _time.monotonic()
        for i in range(n_steps):
            if self.stop_event.is_set():
                return
            snap = self.runtime.pipeline.step_sample()
            if snap is not None:
                self.runtime.publish(snap)
            target_wall = wall_start + (i + 1) * dt / self.time_scale
            delay = target_wall - _time.monotonic()
            if delay > 0:
                _time.sleep(delay)


def serve(
    graph: DependencyGraph,
    scenarios: list[FaultScenario] | None,
    port: int,
    time_scale: float = 1.0,
    duration_s: float = 7200.0,
    seed: int = 42,
    console_dir: str | None = None,
):  # pragma: no cover - exercised via the CLI against a live socket
    import socket

    import uvicorn

    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind(("127.0.0.1", port))
    except OSError as exc:
        raise BindError(f"port {port} unavailable: {exc}") from exc
    finally:
        probe.close()

    pipeline = Pipeline(graph, scenarios, seed)
    agent = ExplanationAgent(graph, pipeline.matrix, endpoint_from_env())
    runtime = ServiceRuntime(graph, pipeline, agent)
    thread = PipelineThread(runtime, duration_s, time_scale)
    thread.start()
    app = create_app(runtime, console_dir=console_dir)
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")
