/** Thin typed client over the platform HTTP API — the UI's only data source. */

import type {
  ApiErrorBody,
  FeedbackReportPayload,
  FlagPayload,
  PassagePayload,
  ReviewEntryPayload,
  Verdict,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  readonly body: ApiErrorBody;

  constructor(status: number, body: ApiErrorBody) {
    super(body.detail ?? `request failed with status ${status}`);
    this.name = "ApiError";
    this.status = status;
    this.body = body;
  }

  /** A 409 means the server already holds a different truth (decided
   * elsewhere, terminal, or ordering rule) — recoverable by refreshing. */
  get isConflict(): boolean {
    return this.status === 409;
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export interface DecisionRequest {
  verdict: Verdict;
  reason_codes: string[];
  note: string;
}

export class ApiClient {
  private readonly baseUrl: string;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl = "", fetchImpl?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    const impl = fetchImpl ?? (globalThis.fetch as FetchLike | undefined);
    if (!impl) throw new Error("no fetch implementation available");
    this.fetchImpl = impl.bind(globalThis) as FetchLike;
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
    headers: Record<string, string> = {},
  ): Promise<T> {
    const init: RequestInit = { method, headers: { ...headers } };
    if (body !== undefined) {
      (init.headers as Record<string, string>)["Content-Type"] = "application/json";
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    const payload = (await response.json()) as unknown;
    if (!response.ok) {
      throw new ApiError(response.status, payload as ApiErrorBody);
    }
    return payload as T;
  }

  queue(filters: { stage?: string; subjectType?: string } = {}): Promise<{ entries: ReviewEntryPayload[] }> {
    const params = new URLSearchParams();
    if (filters.stage) params.set("stage", filters.stage);
    if (filters.subjectType) params.set("subject_type", filters.subjectType);
    const suffix = params.size ? `?${params.toString()}` : "";
    return this.request("GET", `/v1/review/queue${suffix}`);
  }

  entry(entryId: string): Promise<ReviewEntryPayload> {
    return this.request("GET", `/v1/review/${entryId}`);
  }

  passage(passageId: string): Promise<PassagePayload> {
    return this.request("GET", `/v1/passages/${passageId}`);
  }

  flag(responseId: string): Promise<FlagPayload> {
    return this.request("GET", `/v1/responses/${responseId}/flag`);
  }

  decide(entryId: string, reviewerId: string, decision: DecisionRequest): Promise<ReviewEntryPayload> {
    return this.request("POST", `/v1/review/${entryId}/decision`, decision, {
      "X-Reviewer-Id": reviewerId,
    });
  }

  feedbackReport(start: number, end: number): Promise<FeedbackReportPayload> {
    return this.request("GET", `/v1/review/feedback/report?start=${start}&end=${end}`);
  }
}
