/** Thin client for the /v1 scoring service. Every number shown in the UI
 * originates from one of these responses; no model math happens here. */

import type {
  ApiErrorBody,
  ExplanationBody,
  ForceData,
  ModelEntry,
  ModelSummary,
  ScoreResult,
  WhatIfResponse,
} from './types.js';

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  readonly code: string;
  readonly status: number;
  readonly details: ApiErrorBody['details'];

  constructor(status: number, body: ApiErrorBody) {
    super(body.message);
    this.code = body.code;
    this.status = status;
    this.details = body.details ?? {};
  }

  fieldErrors(): Record<string, string> {
    const out: Record<string, string> = {};
    for (const f of this.details.fields ?? []) {
      out[f.field] = f.error;
    }
    return out;
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch.bind(globalThis),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    const body = await res.json();
    if (!res.ok) {
      throw new ApiError(res.status, body as ApiErrorBody);
    }
    return body as T;
  }

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.request<T>(path, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(payload),
    });
  }

  listModels(): Promise<ModelSummary[]> {
    return this.request('/v1/models');
  }

  getModel(modelId: string): Promise<ModelEntry> {
    return this.request(`/v1/models/${modelId}`);
  }

  score(modelId: string, record: Record<string, number>): Promise<ScoreResult> {
    return this.post('/v1/score', { model_id: modelId, record });
  }

  explain(
    modelId: string,
    record: Record<string, number>,
    interactions = false,
  ): Promise<{ explanation: ExplanationBody; force: ForceData }> {
    return this.post('/v1/explain', { model_id: modelId, record, interactions });
  }

  whatif(
    modelId: string,
    record: Record<string, number>,
    overrides: Record<string, number>,
  ): Promise<WhatIfResponse> {
    return this.post('/v1/whatif', { model_id: modelId, record, overrides });
  }
}
