// Typed client for the co-pilot service. The UI talks to the documented
// HTTP API and nothing else.

import type {
  AssignmentResponse,
  BeliefsResponse,
  Catalog,
  DebriefPayload,
  DynamicsResponse,
  RecommendationResponse,
  RosterResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public detail: string = "",
  ) {
    super(message);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class CopilotClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    const body = await resp.json();
    if (!resp.ok) {
      throw new ApiError(resp.status, body.code ?? "error",
        body.message ?? resp.statusText, body.detail ?? "");
    }
    return body as T;
  }

  private post<T>(path: string, payload: unknown,
                  headers: Record<string, string> = {}): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json", ...headers },
      body: JSON.stringify(payload),
    });
  }

  catalog(): Promise<Catalog> {
    return this.request("/catalog");
  }

  roster(): Promise<RosterResponse> {
    return this.request("/trainees");
  }

  createTrainee(id: string) {
    return this.post<{ id: string }>("/trainees", { id });
  }

  beliefs(traineeId: string): Promise<BeliefsResponse> {
    return this.request(`/trainees/${traineeId}/beliefs`);
  }

  dynamics(traineeId: string): Promise<DynamicsResponse> {
    return this.request(`/trainees/${traineeId}/dynamics`);
  }

  recommendations(traineeId: string, k: number): Promise<RecommendationResponse> {
    return this.request(`/trainees/${traineeId}/recommendations?k=${k}`);
  }

  submitDebrief(traineeId: string, payload: DebriefPayload,
                idempotencyKey: string) {
    return this.post<{ ingested: number }>(
      `/trainees/${traineeId}/debriefs`, payload,
      { "Idempotency-Key": idempotencyKey });
  }

  submitAssignment(traineeId: string, recommendationId: string,
                   chosen: string[]): Promise<AssignmentResponse> {
    return this.post(`/trainees/${traineeId}/assignments`, {
      recommendation_id: recommendationId,
      chosen,
    });
  }
}

/** Stable idempotency key for a debrief payload: retries of the same
 * submission reuse the key, so the server ingests it exactly once. */
export function debriefIdempotencyKey(payload: DebriefPayload): string {
  const canonical = JSON.stringify({
    session: payload.session,
    scenario: payload.scenario,
    timestamp: payload.timestamp,
    observations: payload.observations,
  });
  let hash = 0x811c9dc5;
  for (let i = 0; i < canonical.length; i++) {
    hash ^= canonical.charCodeAt(i);
    hash = Math.imul(hash, 0x01000193) >>> 0;
  }
  return `ui-${hash.toString(16).padStart(8, "0")}`;
}
