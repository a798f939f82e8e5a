/** Thin fetch client for the intervention service.
 *
 * Every method maps one-to-one onto a documented endpoint; the UI talks to
 * the model exclusively through these calls. `fetchImpl` is injectable so
 * tests can run against canned fixture responses.
 */

import type {
  CodeEntry,
  Edit,
  ExplanationPayload,
  IntervenePayload,
  RecordPayload,
  SessionPayload,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, detail: string) {
    super(detail);
    this.name = "ApiError";
    this.status = status;
  }
}

/** Pull the human-readable detail out of an error body, whatever its shape. */
async function errorDetail(response: Response): Promise<string> {
  let body: unknown;
  try {
    body = await response.json();
  } catch {
    return response.statusText || `HTTP ${response.status}`;
  }
  if (body !== null && typeof body === "object" && "detail" in body) {
    const detail = (body as { detail: unknown }).detail;
    if (typeof detail === "string") {
      return detail;
    }
    return JSON.stringify(detail);
  }
  return JSON.stringify(body);
}

export class ApiClient {
  private readonly baseUrl: string;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl = "", fetchImpl?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, init);
    if (!response.ok) {
      throw new ApiError(response.status, await errorDetail(response));
    }
    return (await response.json()) as T;
  }

  getRecord(patientId: string): Promise<RecordPayload> {
    return this.request(`/patients/${encodeURIComponent(patientId)}/record`);
  }

  getExplanation(patientId: string, topK: number): Promise<ExplanationPayload> {
    return this.request(
      `/patients/${encodeURIComponent(patientId)}/explanation?top_k=${topK}`,
    );
  }

  /** POST staged edits; omit `sessionId` on the first call and the service
   * opens a session whose id comes back in the response. */
  intervene(
    patientId: string,
    edits: Edit[],
    sessionId: string | null,
    topK: number,
  ): Promise<IntervenePayload> {
    const body: Record<string, unknown> = { edits, top_k: topK };
    if (sessionId !== null) {
      body.session_id = sessionId;
    }
    return this.request(`/patients/${encodeURIComponent(patientId)}/intervene`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  getSession(sessionId: string): Promise<SessionPayload> {
    return this.request(`/sessions/${encodeURIComponent(sessionId)}`);
  }

  getCode(code: string): Promise<CodeEntry> {
    return this.request(`/codes/${encodeURIComponent(code)}`);
  }
}
