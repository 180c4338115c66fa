"""Operator explanation agent.

Builds token-budgeted context bundles from the knowledge graph and live state,
answers the three operator queries through a chat-completion endpoint, and
falls back to a deterministic grounded renderer whenever the endpoint is
unavailable or produces identifiers that do not exist in the graph.
"""

from __future__ import annotations

import json
import math
import re
import time as _time
from dataclasses import dataclass, field

import requests

from .analytics import BatchMetrics
from .diagnosis import DiagnosisReport, ExplanationRecord, explanation_record
from .errors import (
    ContextOverflow,
    EndpointError,
    InsufficientData,
    NoDiagnosisAvailable,
    UnknownSensor,
)
from .graph import DependencyGraph, FaultSignatureMatrix

PROMPT_LAYOUT_VERSION = "1"
DEFAULT_TOKEN_BUDGET = 8192


def estimate_tokens(text: str) -> int:
    """ceil(len/4): a rough token estimate, documented as such, never billed."""
    return math.ceil(len(text) / 4)


# ---------------------------------------------------------------------------
# grounding
# ---------------------------------------------------------------------------

_ID_PATTERNS = (
    re.compile(r"\b[a-z]{2}_\d{3}\b"),                     # sensor ids (ft_103, vt_101, ...)
    re.compile(r"\br\d+\b"),                               # residual ids
    re.compile(r"\bF\d+\b"),                               # fault codes
    re.compile(r"\b[a-z][a-z0-9-]*(?:_copy\d+)?_r\b"),     # residual names
    re.compile(r"\b[A-Z][A-Za-z]*Fault-[A-Za-z0-9_.]+(?::[A-Za-z0-9_]+)*\b"),  # fault names
)


def extract_identifiers(text: str) -> set[str]:
    found: set[str] = set()
    for pat in _ID_PATTERNS:
        found.update(pat.findall(text))
    return found


def ground_check(
    text: str,
    graph: DependencyGraph,
    allowed_extra: set[str] | None = None,
) -> tuple[bool, list[str]]:
    """True iff every identifier-shaped token exists in the graph vocabulary.

    Identifiers in `allowed_extra` (e.g. echoed from the operator's question)
    do not count as violations.
    """
    vocab = graph.vocabulary()
    extra = allowed_extra or set()
    offending = sorted(t for t in extract_identifiers(text) if t not in vocab and t not in extra)
    return (not offending, offending)


# ---------------------------------------------------------------------------
# context bundles
# ---------------------------------------------------------------------------

@dataclass
class ContextBundle:
    background: str
    realtime: str
    conversation: str
    estimated_tokens: int
    dropped_metric_blocks: int = 0
    dropped_turns: int = 0

    def as_prompt_sections(self) -> list[str]:
        sections = [self.background]
        if self.realtime:
            sections.append(self.realtime)
        if self.conversation:
            sections.append(self.conversation)
        return sections


@dataclass(frozen=True)
class AnswerRecord:
    query_kind: str           # fault | custom | sensor_data
    question: str
    answer: str
    grounded: bool
    source: str               # llm | grounded_renderer
    cited_ids: tuple[str, ...]
    timestamp: float

    def to_dict(self) -> dict:
        return {
            "query_kind": self.query_kind,
            "question": self.question,
            "answer": self.answer,
            "grounded": self.grounded,
            "source": self.source,
            "cited_ids": list(self.cited_ids),
            "timestamp": self.timestamp,
        }


def render_background(graph: DependencyGraph, matrix: FaultSignatureMatrix) -> str:
    """Static system description: inventory, faults, residual dependencies."""
    lines = ["## System background", "Physical sensors:"]
    for sid in graph.physical_sensor_ids():
        s = graph.sensors[sid]
        lines.append(f"- {sid} ({s.quantity.value}, at {s.component_id}): {s.description}")
    lines.append("Virtual sensors:")
    for vid in graph.virtual_sensor_ids():
        v = graph.virtuals[vid]
        inputs = ", ".join(sorted(v.solution_inputs)) or "none"
        comps = ", ".join(sorted(v.solution_components)) or "none"
        lines.append(
            f"- {vid}: {graph.sensors[vid].description} "
            f"(solution inputs: {inputs}; solution components: {comps})"
        )
    lines.append("Residuals and their dependency structure:")
    for rid in graph.residual_ids():
        r = graph.residuals[rid]
        lines.append(
            f"- {rid}: '{r.name}' relies on the sensors: {', '.join(r.direct_sensors)}; "
            f"model components: {', '.join(sorted(r.component_ids)) or 'none'}"
        )
    lines.append("Configured faults and signatures:")
    for fid in graph.fault_ids():
        f = graph.faults[fid]
        sig = ", ".join(sorted(matrix.rows[fid]))
        lines.append(f"- {fid}: '{f.name}' (target {f.target}); signature: {{{sig}}}")
    return "\n".join(lines)


def assemble_context(
    background: str,
    realtime_blocks: list[str],
    conversation: list[tuple[str, str]],
    budget: int = DEFAULT_TOKEN_BUDGET,
) -> ContextBundle:
    """Pack background fully, then realtime newest-first, then conversation
    newest-first; drop oldest realtime blocks before oldest turns."""
    bg_tokens = estimate_tokens(background)
    if bg_tokens > budget:
        raise ContextOverflow(
            f"background alone needs {bg_tokens} tokens, budget is {budget}"
        )

    kept_realtime = list(realtime_blocks)
    kept_turns = list(conversation)

    def total() -> int:
        rt = "\n".join(kept_realtime)
        conv = "\n".join(f"Q: {q}\nA: {a}" for q, a in kept_turns)
        return bg_tokens + estimate_tokens(rt) + estimate_tokens(conv)

    dropped_blocks = 0
    dropped_turns = 0
    while total() > budget and kept_realtime:
        kept_realtime.pop(0)       # oldest realtime first
        dropped_blocks += 1
    while total() > budget and kept_turns:
        kept_turns.pop(0)          # then oldest conversation turns
        dropped_turns += 1

    realtime = "\n".join(kept_realtime)
    conv = "\n".join(f"Q: {q}\nA: {a}" for q, a in kept_turns)
    return ContextBundle(
        background=background,
        realtime=realtime,
        conversation=conv,
        estimated_tokens=total(),
        dropped_metric_blocks=dropped_blocks,
        dropped_turns=dropped_turns,
    )


# ---------------------------------------------------------------------------
# deterministic grounded renderer
# ---------------------------------------------------------------------------

def render_explanation(record: ExplanationRecord) -> str:
    """Byte-stable fault-diagnosis text; grounded by construction."""
    if not record.active_residuals:
        return "No active residuals; no fault diagnosed."
    lines = []
    if record.matched:
        verb = "is consistent with" if record.partial else "is"
        names = "; ".join(f"{fid} ('{name}')" for fid, name in record.matched)
        lines.append(f"The fault signature identified {verb} {names}.")
        if record.partial:
            lines.append(
                "The match is partial: the active residuals form a subset of the "
                "candidate signature (activation may still be developing)."
            )
    else:
        lines.append(
            "The active residuals match no configured fault signature, even partially."
        )
    lines.append("")
    lines.append("The residuals identified are:")
    for rid, name, sensors in record.active_residuals:
        lines.append(f"- {rid}: '{name}' which relies on the sensors: {', '.join(sensors)}")
    lines.append("")
    lines.append(
        "The unique set of sensors involved in these residuals are: "
        + ", ".join(record.unique_sensor_set)
        + "."
    )
    if record.exoneration:
        lines.append("")
        lines.append("Exonerated faults (signature disagrees with the active set):")
        for fid, name, missing, extra in record.exoneration:
            parts = []
            if missing:
                parts.append("expected but inactive: " + ", ".join(missing))
            if extra:
                parts.append("active but outside its signature: " + ", ".join(extra))
            lines.append(f"- {fid} ('{name}'): " + "; ".join(parts))
    if record.unexplained_residuals:
        lines.append("")
        lines.append(
            "Unexplained active residuals: " + ", ".join(record.unexplained_residuals) + "."
        )
    return "\n".join(lines)


def render_metrics_summary(sensor_id: str, metrics: list[BatchMetrics]) -> str:
    """Template summary of a sensor's metrics table.

    A batch is flagged when |d_mean| exceeds 3x the robust scatter of the
    d_mean series (the 3-sigma step rule).
    """
    d = [m.d_mean for m in metrics[1:]]  # first batch has no predecessor
    if d:
        abs_sorted = sorted(abs(x) for x in d)
        mid = abs_sorted[len(abs_sorted) // 2]
        scale = max(mid * 1.4826, 1e-12)
    else:
        scale = 1e-12
    flagged = [m.batch_index for m in metrics[1:] if abs(m.d_mean) > 3.0 * scale]
    first = metrics[0]
    last = metrics[-1]
    lines = [
        f"Sensor {sensor_id}: {len(metrics)} batches analyzed "
        f"(indices {first.batch_index}..{last.batch_index}).",
        f"Latest mean {last.mean:.4f}, std {last.std:.4f}; "
        f"rate of change of the mean {last.d_mean:+.4f} per batch.",
        f"Spectral entropy {last.spectral_entropy:.4f} nats; "
        f"KL divergence against the reference batch {last.kl_divergence:.4f} nats.",
    ]
    if flagged:
        lines.append(
            f"Step rule: |d_mean| exceeded 3 sigma first at batch {flagged[0]}; "
            "the mean and standard deviation shift abruptly there. "
            f"Behavior appears anomalous from batch {flagged[0]} on."
        )
    else:
        lines.append(
            "Step rule: no batch exceeded the 3-sigma change threshold. "
            "Behavior appears normal; the sensor is operating normally."
        )
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# endpoints
# ---------------------------------------------------------------------------

class ChatEndpoint:
    """Minimal chat-completion client: messages in, assistant text out."""

    def __init__(self, base_url: str, model: str, api_key: str = "", timeout_s: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.timeout_s = timeout_s

    def complete(self, messages: list[dict]) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {"model": self.model, "messages": messages}
        last_error: Exception | None = None
        for _ in range(2):  # one retry
            try:
                resp = requests.post(
                    f"{self.base_url}/chat/completions",
                    json=payload,
                    headers=headers,
                    timeout=self.timeout_s,
                )
                resp.raise_for_status()
                return resp.json()["choices"][0]["message"]["content"]
            except (requests.RequestException, KeyError, ValueError) as exc:
                last_error = exc
        raise EndpointError(f"chat endpoint failed after retry: {last_error}")


class MockEndpoint:
    """In-repo replacement replaying canned completions.

    Replies are served from an explicit script first (popped in order), then
    by query-kind lookup based on the prompt's query tag.  Raises EndpointError
    when nothing is scripted, which drives the agent onto the fallback path.
    """

    def __init__(self, by_kind: dict[str, str] | None = None, script: list[str] | None = None):
        self.by_kind = dict(by_kind or {})
        self.script = list(script or [])
        self.calls: list[list[dict]] = []

    def complete(self, messages: list[dict]) -> str:
        self.calls.append(messages)
        if self.script:
            return self.script.pop(0)
        text = "\n".join(m["content"] for m in messages)
        m = re.search(r"\[query-kind: (\w+)\]", text)
        kind = m.group(1) if m else ""
        if kind in self.by_kind:
            return self.by_kind[kind]
        raise EndpointError("mock endpoint has no reply configured")


# ---------------------------------------------------------------------------
# the agent
# ---------------------------------------------------------------------------

SYSTEM_PREAMBLE = (
    "You are the diagnostics explanation agent for a sodium purification loop. "
    "Answer using only facts and identifiers present in the provided context. "
    "If the operator mentions an identifier that is not in the context, state "
    "that it is unknown instead of inventing properties for it."
)


@dataclass
class AgentState:
    """Live inputs to the agent: diagnosis plus analytics, updated per batch."""

    report: DiagnosisReport | None = None
    residual_lines: list[str] = field(default_factory=list)
    metrics: dict[str, list[BatchMetrics]] = field(default_factory=dict)
    timestamp_s: float = 0.0


class ExplanationAgent:
    """One conversation session against a shared read-only graph and state."""

    def __init__(
        self,
        graph: DependencyGraph,
        matrix: FaultSignatureMatrix,
        endpoint=None,
        token_budget: int | None = None,
        transcript_path: str | None = None,
        clock=None,
    ):
        self.graph = graph
        self.matrix = matrix
        self.endpoint = endpoint
        self.budget = token_budget or graph.token_budget or DEFAULT_TOKEN_BUDGET
        self.background = render_background(graph, matrix)
        self.conversation: list[tuple[str, str]] = []
        self.transcript_path = transcript_path
        self.state = AgentState()
        self.last_bundle: ContextBundle | None = None
        self._clock = clock or _time.time

    # -- state ingestion ------------------------------------------------

    def update_state(
        self,
        report: DiagnosisReport | None,
        residual_lines: list[str] | None = None,
        metrics: dict[str, list[BatchMetrics]] | None = None,
        timestamp_s: float = 0.0,
    ) -> None:
        self.state = AgentState(
            report=report,
            residual_lines=list(residual_lines or []),
            metrics=dict(metrics or {}),
            timestamp_s=timestamp_s,
        )

    # -- internals --------------------------------------------------------

    def _realtime_blocks(self) -> list[str]:
        blocks: list[str] = []
        for sid in sorted(self.state.metrics):
            rows = [
                f"batch {m.batch_index}: mean {m.mean:.4f}, std {m.std:.4f}, "
                f"d_mean {m.d_mean:+.4f}, d_std {m.d_std:+.4f}, "
                f"entropy {m.spectral_entropy:.4f}, kl {m.kl_divergence:.4f}"
                for m in self.state.metrics[sid]
            ]
            # oldest rows first so the budget drops them first
            blocks.extend(f"[metrics {sid}] {row}" for row in rows)
        if self.state.residual_lines:
            blocks.append("## Residual states\n" + "\n".join(self.state.residual_lines))
        if self.state.report is not None:
            blocks.append(
                "## Current diagnosis\n"
                + json.dumps(self.state.report.to_dict(), sort_keys=True)
            )
        return blocks

    def _prompt(self, question: str, kind: str) -> list[dict]:
        bundle = assemble_context(
            self.background, self._realtime_blocks(), self.conversation, self.budget
        )
        self.last_bundle = bundle
        user = "\n\n".join(
            [
                f"[prompt-layout v{PROMPT_LAYOUT_VERSION}] [query-kind: {kind}]",
                *bundle.as_prompt_sections(),
                f"## Operator question\n{question}",
            ]
        )
        return [
            {"role": "system", "content": SYSTEM_PREAMBLE},
            {"role": "user", "content": user},
        ]

    def _record(self, kind: str, question: str, answer: str, grounded: bool, source: str) -> AnswerRecord:
        cited = tuple(sorted(extract_identifiers(answer) & self.graph.vocabulary()))
        record = AnswerRecord(kind, question, answer, grounded, source, cited, self._clock())
        if self.transcript_path:
            with open(self.transcript_path, "a") as fh:
                fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
        return record

    def _ask_endpoint(self, question: str, kind: str, allowed_extra: set[str]) -> tuple[str, bool] | None:
        """(answer, grounded=True) from the endpoint, or None to use the fallback."""
        if self.endpoint is None:
            return None
        try:
            messages = self._prompt(question, kind)
            answer = self.endpoint.complete(messages)
            ok, offending = ground_check(answer, self.graph, allowed_extra)
            if ok:
                return answer, True
            # one corrective retry, then give up on the endpoint
            messages.append({"role": "assistant", "content": answer})
            messages.append(
                {
                    "role": "user",
                    "content": (
                        "Your previous answer used identifiers that do not exist in "
                        "this system: " + ", ".join(offending) + ". Answer again using "
                        "only identifiers from the context."
                    ),
                }
            )
            answer = self.endpoint.complete(messages)
            ok, _ = ground_check(answer, self.graph, allowed_extra)
            if ok:
                return answer, True
            return None
        except EndpointError:
            return None

    def _explanation(self) -> ExplanationRecord:
        if self.state.report is None:
            raise NoDiagnosisAvailable("no diagnosis report available yet")
        return explanation_record(self.state.report, self.graph, self.matrix)

    # -- the three operator queries ----------------------------------------

    def fault_query(self) -> AnswerRecord:
        record = self._explanation()
        question = "Explain the current fault diagnosis."
        result = self._ask_endpoint(question, "fault", set())
        if result is not None:
            answer, grounded = result
            return self._record("fault", question, answer, grounded, "llm")
        return self._record("fault", question, render_explanation(record), True, "grounded_renderer")

    def custom_query(self, question: str, save: bool = False) -> AnswerRecord:
        allowed = extract_identifiers(question)
        result = self._ask_endpoint(question, "custom", allowed)
        if result is not None:
            answer, grounded = result
            record = self._record("custom", question, answer, grounded, "llm")
        else:
            answer = self._fallback_custom(question)
            record = self._record("custom", question, answer, True, "grounded_renderer")
        if save:
            self.conversation.append((question, record.answer))
        return record

    def _fallback_custom(self, question: str) -> str:
        q = question.lower()
        if "exonerat" in q and self.state.report is not None:
            rec = self._explanation()
            lines = [
                "The other faults were exonerated because their signatures do not "
                "match the observed set of active residuals; each would have "
                "triggered a different set of residuals."
            ]
            for fid, name, missing, extra in rec.exoneration:
                parts = []
                if missing:
                    parts.append("residuals " + ", ".join(missing) + " would also be active")
                if extra:
                    parts.append("residuals " + ", ".join(extra) + " lie outside its signature")
                lines.append(f"- {fid} ('{name}'): " + "; ".join(parts) + ".")
            return "\n".join(lines)
        unknown = sorted(
            t for t in extract_identifiers(question) if t not in self.graph.vocabulary()
        )
        if unknown:
            return (
                "The identifier(s) "
                + ", ".join(unknown)
                + " are unknown in this system; no facts are available about them."
            )
        return "Cannot answer this question without the language model endpoint."

    def query_sensor_data(self, sensor_id: str) -> AnswerRecord:
        if sensor_id not in self.graph.sensors:
            raise UnknownSensor(f"no such sensor: {sensor_id!r}")
        metrics = self.state.metrics.get(sensor_id)
        if not metrics or len(metrics) < 2:
            raise InsufficientData(f"{sensor_id} has fewer than 2 closed batches")
        question = f"Summarize the recent behavior of sensor {sensor_id}."
        result = self._ask_endpoint(question, "sensor_data", set())
        if result is not None:
            answer, grounded = result
            return self._record("sensor_data", question, answer, grounded, "llm")
        return self._record(
            "sensor_data",
            question,
            render_metrics_summary(sensor_id, metrics),
            True,
            "grounded_renderer",
        )
