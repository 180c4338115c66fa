// Wire types mirroring the diagnostics service JSON (snapshot schema v1).

export interface BatchMetrics {
  batch_index: number;
  mean: number;
  std: number;
  d_mean: number;
  d_std: number;
  spectral_entropy: number;
  kl_divergence: number;
}

export interface SensorRow {
  id: string;
  kind: string;
  latest_metrics: BatchMetrics | null;
}

export interface ResidualRow {
  id: string;
  name: string;
  value: number;
  z_score: number;
  active: boolean;
  activation_time: number | null;
  direct_sensors: string[];
}

export interface Diagnosis {
  observed_active: string[];
  matched_faults: string[];
  exonerated_faults: string[];
  unexplained_residuals: string[];
  partial: boolean;
  per_residual_sensors: Record<string, string[]>;
  unique_sensor_set: string[];
  timestamp_s: number;
}

export interface ScenarioEntry {
  fault_id: string;
  onset_s: number;
  magnitude: number;
}

export interface Snapshot {
  schema_version: string;
  timestamp_s: number;
  sensors: SensorRow[];
  residuals: ResidualRow[];
  diagnosis: Partial<Diagnosis>;
  scenario: ScenarioEntry[];
}

export interface AnswerRecord {
  query_kind: "fault" | "custom" | "sensor_data";
  question: string;
  answer: string;
  grounded: boolean;
  source: "llm" | "grounded_renderer";
  cited_ids: string[];
  timestamp: number;
}
