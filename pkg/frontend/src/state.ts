// Console state and pure view-model derivations.
//
// The console performs no diagnosis logic: everything shown is selected from
// a Snapshot or an AnswerRecord.  All functions here are pure (new state in,
// new state out) so rendering is reproducible from state alone.

import type { AnswerRecord, Diagnosis, ResidualRow, Snapshot } from "./types.js";

export type Connection = "connecting" | "live" | "stale";

export interface SeriesPoint {
  t: number;
  mean: number;
}

export interface ConsoleState {
  latest: Snapshot | null;
  series: Record<string, SeriesPoint[]>;
  transcript: AnswerRecord[];
  connection: Connection;
  lastMessageMs: number | null;
  capacity: number;
  errors: string[];
}

export function initialState(capacity = 20): ConsoleState {
  return {
    latest: null,
    series: {},
    transcript: [],
    connection: "connecting",
    lastMessageMs: null,
    capacity,
    errors: [],
  };
}

export function applySnapshot(
  state: ConsoleState,
  snapshot: Snapshot,
  wallMs: number,
): ConsoleState {
  const series: Record<string, SeriesPoint[]> = { ...state.series };
  for (const sensor of snapshot.sensors) {
    const metrics = sensor.latest_metrics;
    if (!metrics) continue;
    const prior = series[sensor.id] ?? [];
    const last = prior[prior.length - 1];
    if (last && last.t === snapshot.timestamp_s) continue; // replayed snapshot
    const next = [...prior, { t: snapshot.timestamp_s, mean: metrics.mean }];
    series[sensor.id] = next.slice(Math.max(0, next.length - state.capacity));
  }
  return {
    ...state,
    latest: snapshot,
    series,
    connection: "live",
    lastMessageMs: wallMs,
  };
}

export function appendAnswer(state: ConsoleState, record: AnswerRecord): ConsoleState {
  const transcript = [...state.transcript, record].sort((a, b) => a.timestamp - b.timestamp);
  return { ...state, transcript };
}

export function appendError(state: ConsoleState, message: string): ConsoleState {
  return { ...state, errors: [...state.errors, message] };
}

export function setConnection(state: ConsoleState, connection: Connection): ConsoleState {
  if (state.connection === connection) return state;
  return { ...state, connection };
}

/** Mark the feed stale when no snapshot arrived within `staleAfterMs`. */
export function checkStale(state: ConsoleState, nowMs: number, staleAfterMs = 5000): ConsoleState {
  if (state.connection === "live" && state.lastMessageMs !== null
      && nowMs - state.lastMessageMs > staleAfterMs) {
    return setConnection(state, "stale");
  }
  return state;
}

// -- view models --------------------------------------------------------------

export interface ResidualTile {
  id: string;
  name: string;
  active: boolean;
  z: number;
  activationTime: number | null;
}

export function residualTiles(state: ConsoleState): ResidualTile[] {
  if (!state.latest) return [];
  return state.latest.residuals.map((row: ResidualRow) => ({
    id: row.id,
    name: row.name,
    active: row.active,
    z: row.z_score,
    activationTime: row.activation_time,
  }));
}

export interface DiagnosisView {
  matched: string[];
  exonerated: string[];
  unexplained: string[];
  partial: boolean;
  uniqueSensors: string[];
  active: string[];
}

export function diagnosisView(state: ConsoleState): DiagnosisView | null {
  const diag = state.latest?.diagnosis as Diagnosis | undefined;
  if (!diag || diag.matched_faults === undefined) return null;
  return {
    matched: diag.matched_faults,
    exonerated: diag.exonerated_faults,
    unexplained: diag.unexplained_residuals,
    partial: diag.partial,
    uniqueSensors: diag.unique_sensor_set,
    active: diag.observed_active,
  };
}

export function sensorIds(state: ConsoleState): string[] {
  if (!state.latest) return Object.keys(state.series).sort();
  return state.latest.sensors.map((s) => s.id);
}

export function seriesFor(state: ConsoleState, sensorId: string): SeriesPoint[] {
  return state.series[sensorId] ?? [];
}
