// HTTP client for the operator queries; fetch is injectable for tests.

import type { AnswerRecord, Snapshot } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export class ApiClient {
  constructor(
    private base: string,
    private fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.base + path, init);
    const body = await resp.json().catch(() => ({}));
    if (!resp.ok) {
      const detail = typeof body?.detail === "string" ? body.detail : resp.statusText;
      throw new ApiError(resp.status, detail);
    }
    return body as T;
  }

  state(): Promise<Snapshot> {
    return this.request<Snapshot>("/state");
  }

  queryFault(): Promise<AnswerRecord> {
    return this.request<AnswerRecord>("/query/fault", { method: "POST" });
  }

  queryCustom(question: string, save: boolean): Promise<AnswerRecord> {
    return this.request<AnswerRecord>("/query/custom", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ question, save }),
    });
  }

  querySensorData(sensorId: string): Promise<AnswerRecord> {
    return this.request<AnswerRecord>("/query/sensor-data", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ sensor_id: sensorId }),
    });
  }
}
