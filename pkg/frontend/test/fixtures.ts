import type { AnswerRecord, ResidualRow, Snapshot } from "../src/types.js";

const GOLDEN_ACTIVE = ["r1", "r2", "r3", "r5", "r6"];

export function residualRow(id: string, active: boolean): ResidualRow {
  return {
    id,
    name: `${id}-name_r`,
    value: active ? -3175.0 : 0.4,
    z_score: active ? -219.1 : -0.4,
    active,
    activation_time: active ? 560.0 : null,
    direct_sensors: ["ft_103", "tc_114"],
  };
}

export function makeSnapshot(t: number, activeIds: string[] = [], means?: Record<string, number>): Snapshot {
  const sensors = ["ft_103", "tc_114", "tc_116", "tc_117", "tc_119"].map((id) => ({
    id,
    kind: "physical",
    latest_metrics: {
      batch_index: Math.round((t - 170) / 30),
      mean: means?.[id] ?? (id === "ft_103" ? 0.25 : 150.0),
      std: 0.15,
      d_mean: 0.0,
      d_std: 0.0,
      spectral_entropy: 2.4,
      kl_divergence: 0.5,
    },
  }));
  const matched = activeIds.length === GOLDEN_ACTIVE.length ? ["F6"] : [];
  return {
    schema_version: "1",
    timestamp_s: t,
    sensors,
    residuals: ["r1", "r2", "r3", "r4", "r5", "r6"].map((id) =>
      residualRow(id, activeIds.includes(id)),
    ),
    diagnosis: {
      observed_active: activeIds,
      matched_faults: matched,
      exonerated_faults: ["F1", "F2", "F3", "F4", "F5", "F7", "F8", "F9"],
      unexplained_residuals: [],
      partial: false,
      per_residual_sensors: {},
      unique_sensor_set: ["ft_103", "tc_114", "tc_116", "tc_117", "tc_119"],
      timestamp_s: t,
    },
    scenario: [{ fault_id: "F6", onset_s: 500.0, magnitude: 10.0 }],
  };
}

export function answer(kind: AnswerRecord["query_kind"], ts: number, source: AnswerRecord["source"] = "grounded_renderer"): AnswerRecord {
  return {
    query_kind: kind,
    question: `question at ${ts}`,
    answer: `answer for ${kind}`,
    grounded: true,
    source,
    cited_ids: ["F6"],
    timestamp: ts,
  };
}
