// Thin fetch client for the review API. No additional endpoints beyond the
// documented surface; errors carry the server's error name for callers.

import type {
  ActionRequest,
  AuditResponse,
  FinalizeSummary,
  LogEntry,
  NextResponse,
  TimelineResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public errorName: string,
    message: string,
  ) {
    super(message);
  }
}

async function parseOrThrow<T>(resp: Response): Promise<T> {
  const body = await resp.json().catch(() => ({}));
  if (!resp.ok) {
    const err = body as { error?: string; message?: string };
    throw new ApiError(resp.status, err.error ?? "HttpError", err.message ?? resp.statusText);
  }
  return body as T;
}

export class ReviewApi {
  constructor(
    private baseUrl: string,
    private sessionId: string,
  ) {}

  private url(suffix: string): string {
    return `${this.baseUrl}/sessions/${this.sessionId}/${suffix}`;
  }

  private async post<T>(suffix: string, payload: unknown): Promise<T> {
    const resp = await fetch(this.url(suffix), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    return parseOrThrow<T>(resp);
  }

  async timeline(): Promise<TimelineResponse> {
    return parseOrThrow(await fetch(this.url("timeline")));
  }

  async next(reviewer: string): Promise<NextResponse> {
    return parseOrThrow(await fetch(this.url(`next?reviewer=${encodeURIComponent(reviewer)}`)));
  }

  async submitAction(action: ActionRequest): Promise<{ ok: boolean }> {
    return this.post("actions", action);
  }

  async audit(): Promise<AuditResponse> {
    return parseOrThrow(await fetch(this.url("audit")));
  }

  async finalize(questionnaire: unknown): Promise<FinalizeSummary> {
    return this.post("finalize", { questionnaire });
  }

  async log(entries: LogEntry[]): Promise<{ logged: number }> {
    return this.post("log", { entries });
  }

  async media(path: string, range?: { start: number; end: number }): Promise<Response> {
    const headers: Record<string, string> = {};
    if (range) headers["Range"] = `bytes=${range.start}-${range.end}`;
    return fetch(this.url(`media/${path}`), { headers });
  }
}
