// Pure rendering: ConsoleState in, HTML strings out.  Same state, same DOM.

import { axisLabels, seriesPath } from "./charts.js";
import {
  diagnosisView,
  residualTiles,
  sensorIds,
  seriesFor,
} from "./state.js";
import type { ConsoleState } from "./state.js";
import type { AnswerRecord } from "./types.js";

const CHART_BOX = { width: 260, height: 72, pad: 6 };

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderBanner(state: ConsoleState): string {
  if (state.connection === "stale") {
    return '<div class="banner stale">Feed stale: no snapshots arriving; reconnecting...</div>';
  }
  if (state.connection === "connecting") {
    return '<div class="banner connecting">Connecting to the diagnostics service...</div>';
  }
  const t = state.latest ? state.latest.timestamp_s.toFixed(0) : "-";
  return `<div class="banner live">Live - plant time ${t} s</div>`;
}

export function renderCharts(state: ConsoleState): string {
  const cards = sensorIds(state).map((sid) => {
    const points = seriesFor(state, sid);
    const path = seriesPath(points, CHART_BOX);
    const labels = axisLabels(points);
    return (
      `<div class="chart-card" data-sensor="${sid}">` +
      `<header>${sid} <span class="last">${labels.last}</span></header>` +
      `<svg viewBox="0 0 ${CHART_BOX.width} ${CHART_BOX.height}">` +
      `<path d="${path}" fill="none" stroke="currentColor" stroke-width="1.5"/>` +
      `</svg>` +
      `<footer><span>${labels.min}</span><span>${labels.max}</span></footer>` +
      `</div>`
    );
  });
  return cards.join("");
}

export function renderTiles(state: ConsoleState): string {
  return residualTiles(state)
    .map(
      (tile) =>
        `<div class="tile ${tile.active ? "active" : "inactive"}" data-residual="${tile.id}">` +
        `<span class="rid">${tile.id}</span>` +
        `<span class="z">z=${tile.z.toFixed(1)}</span>` +
        (tile.activationTime !== null
          ? `<span class="at">at ${tile.activationTime.toFixed(0)} s</span>`
          : "") +
        `</div>`,
    )
    .join("");
}

export function renderDiagnosis(state: ConsoleState): string {
  const view = diagnosisView(state);
  if (!view) return '<p class="empty">No diagnosis yet.</p>';
  if (view.matched.length === 0 && view.active.length === 0) {
    return '<p class="healthy">System healthy: no active residuals, no matched fault.</p>';
  }
  const matched = view.matched
    .map((f) => `<span class="fault matched">${f}</span>`)
    .join(" ");
  const exonerated = view.exonerated.join(", ");
  return (
    `<div class="diagnosis">` +
    `<p>Matched${view.partial ? " (partial)" : ""}: ${matched || "none"}</p>` +
    `<p>Active residuals: ${view.active.join(", ") || "none"}</p>` +
    `<p>Implicated sensors: ${view.uniqueSensors.join(", ") || "none"}</p>` +
    `<p class="exonerated">Exonerated: ${exonerated}</p>` +
    (view.unexplained.length
      ? `<p class="unexplained">Unexplained residuals: ${view.unexplained.join(", ")}</p>`
      : "") +
    `</div>`
  );
}

export function renderAnswer(record: AnswerRecord): string {
  const badge = record.source === "llm" ? "LLM" : "renderer";
  const grounded = record.grounded ? "grounded" : "ungrounded";
  return (
    `<div class="answer ${record.query_kind}">` +
    `<header><span class="kind">${record.query_kind}</span>` +
    `<span class="badge source-${record.source}">${badge}</span>` +
    `<span class="badge ${grounded}">${grounded}</span></header>` +
    (record.question ? `<p class="q">${escapeHtml(record.question)}</p>` : "") +
    `<pre class="a">${escapeHtml(record.answer)}</pre>` +
    `</div>`
  );
}

export function renderTranscript(state: ConsoleState): string {
  const answers = state.transcript.map(renderAnswer).join("");
  const errors = state.errors
    .map((e) => `<div class="answer error"><pre class="a">${escapeHtml(e)}</pre></div>`)
    .join("");
  return answers + errors;
}
