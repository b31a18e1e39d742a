/** Typed client for the rating service HTTP API. */

export interface CaseInfo {
  case_id: string;
  source_url: string;
  edited_url: string;
  prompt: string;
  dims: string[];
  score_min: number;
  score_max: number;
}

export interface CasePayloadMsg {
  kind: 'case';
  case: CaseInfo;
  served_at_ms: number;
  min_dwell_ms: number;
  progress: { done: number; total: number };
}

export interface BreakMsg {
  kind: 'break';
  break_until_ms: number;
}

export interface DoneMsg {
  kind: 'done';
  rated: number;
}

export type NextSample = CasePayloadMsg | BreakMsg | DoneMsg;

export interface SubmitAck {
  ok: true;
  progress: { done: number; total: number };
}

export class EarlySubmissionRejection extends Error {
  constructor(readonly retryAfterMs: number) {
    super(`submission rejected: wait ${retryAfterMs} ms`);
  }
}

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(detail);
  }
}

async function raiseForStatus(resp: Response): Promise<void> {
  if (resp.ok) return;
  if (resp.status === 429) {
    const retryAfter = Number(resp.headers.get('Retry-After-Ms') ?? '0');
    throw new EarlySubmissionRejection(retryAfter);
  }
  let detail = resp.statusText;
  try {
    const body = await resp.json();
    if (body.detail) detail = String(body.detail);
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(resp.status, detail);
}

export class RatingApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async post(path: string, body: unknown): Promise<Response> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body),
    });
    await raiseForStatus(resp);
    return resp;
  }

  async registerRater(raterId: string): Promise<void> {
    await this.post('/raters', { rater_id: raterId });
  }

  async createSession(raterId: string): Promise<string> {
    const resp = await this.post('/sessions', { rater_id: raterId });
    const body = await resp.json();
    return body.session_id as string;
  }

  async nextSample(sessionId: string): Promise<NextSample> {
    const resp = await this.fetchFn(`${this.baseUrl}/sessions/${sessionId}/next`);
    await raiseForStatus(resp);
    return (await resp.json()) as NextSample;
  }

  async submitRating(
    sessionId: string,
    caseId: string,
    scores: Record<string, number>,
  ): Promise<SubmitAck> {
    const resp = await this.post(`/sessions/${sessionId}/ratings`, {
      case_id: caseId,
      scores,
    });
    return (await resp.json()) as SubmitAck;
  }
}
