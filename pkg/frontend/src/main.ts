// Browser entry point: one rendering loop over a single ConsoleState.

import { ApiClient, ApiError } from "./api.js";
import {
  appendAnswer,
  appendError,
  initialState,
} from "./state.js";
import type { ConsoleState } from "./state.js";
import {
  renderBanner,
  renderCharts,
  renderDiagnosis,
  renderTiles,
  renderTranscript,
} from "./render.js";
import { connectStream } from "./stream.js";

const base = window.location.origin;
const api = new ApiClient(base);

let state: ConsoleState = initialState();

function draw(): void {
  byId("banner").innerHTML = renderBanner(state);
  byId("charts").innerHTML = renderCharts(state);
  byId("tiles").innerHTML = renderTiles(state);
  byId("diagnosis").innerHTML = renderDiagnosis(state);
  byId("transcript").innerHTML = renderTranscript(state);
}

function byId(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el;
}

function setState(next: ConsoleState): void {
  state = next;
  draw();
}

const stream = connectStream({
  url: base.replace(/^http/, "ws") + "/stream",
  socketFactory: (url) => new WebSocket(url),
  getState: () => state,
  setState,
});
setInterval(() => stream.pollStaleness(), 1000);

async function ask(run: () => Promise<import("./types.js").AnswerRecord>): Promise<void> {
  try {
    setState(appendAnswer(state, await run()));
  } catch (err) {
    const message = err instanceof ApiError ? err.message : String(err);
    setState(appendError(state, message));
  }
}

function wireControls(): void {
  byId("ask-fault").onclick = () => void ask(() => api.queryFault());
  byId("ask-custom").onclick = () => {
    const question = (byId("custom-question") as HTMLInputElement).value.trim();
    const save = (byId("custom-save") as HTMLInputElement).checked;
    if (question) void ask(() => api.queryCustom(question, save));
  };
  byId("ask-sensor").onclick = () => {
    const sensorId = (byId("sensor-id") as HTMLInputElement).value.trim();
    if (sensorId) void ask(() => api.querySensorData(sensorId));
  };
}

wireControls();
draw();
