/**
 * Typed client for the annotation service's HTTP/JSON API.
 *
 * Every shape here mirrors a service response field for field; the console
 * never derives model state of its own. Errors carry the HTTP status plus
 * the service's `detail` string so callers can branch on conflict (409,
 * stale offer or spent budget) versus validation (422) versus transport
 * failures (status 0).
 */

export interface DatasetRef {
  kind: 'synthetic' | 'files' | 'file';
  spec?: Record<string, unknown>;
  probe?: string;
  gallery?: string;
  path?: string;
}

export interface SessionRequest {
  dataset: DatasetRef;
  policy?: string;
  seed?: number;
  lambda?: number;
  budget?: number;
  budget_fraction?: number;
  gallery_mode?: 'full' | 'unlabeled';
  milestones?: number[];
  split?: { protocol?: string; train_fraction?: number; single_shot?: boolean };
  page_size?: number;
  snapshot_dir?: string;
}

export interface SessionCreated {
  session_id: string;
  policy: string;
  budget: number;
  probe_count: number;
  gallery_count: number;
  feature_dim: number;
  step: number;
}

export interface RankedCandidate {
  gallery_id: number;
  distance: number;
  rank: number;
}

export interface NextProbeResponse {
  session_id: string;
  probe_id: number;
  step: number;
  selections: number;
  scores: Record<string, number | null> | null;
  ranking: RankedCandidate[];
  total_candidates: number;
  offset: number;
  returned: number;
}

export interface UpdateReport {
  samples_applied: number;
  classes_added: number;
  path: string;
  elapsed: number;
  drift_estimate: number | null;
}

export interface Milestone {
  fraction: number;
  step: number;
  rank1: number;
  rank5: number;
  rank10: number;
  rank20: number;
}

export interface LabelResponse {
  session_id: string;
  step: number;
  selections: number;
  matched: boolean;
  identity: number | null;
  probe_id: number;
  gallery_id: number | null;
  report: UpdateReport | null;
  milestones_recorded: Milestone[];
  exhausted: boolean;
}

export interface MetricsResponse {
  session_id: string;
  policy: string;
  step: number;
  selections: number;
  budget: number;
  labeled: number;
  parked: number;
  unlabeled_probes: number;
  unlabeled_gallery: number;
  classes: number;
  exhausted: boolean;
  milestones: Milestone[];
  last_update: UpdateReport | null;
}

export type LabelBody =
  | { probe_id: number; gallery_id: number }
  | { probe_id: number; no_match: true };

/** Service failure. `status` 0 marks a transport error (no response). */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(status === 0 ? `network failure: ${detail}` : `HTTP ${status}: ${detail}`);
    this.name = 'ApiError';
  }

  /** Offer went stale or the budget is spent. */
  get isConflict(): boolean {
    return this.status === 409;
  }

  get isValidation(): boolean {
    return this.status === 422;
  }

  get isNetwork(): boolean {
    return this.status === 0;
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function readDetail(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { detail?: unknown };
    if (typeof body.detail === 'string') return body.detail;
    return JSON.stringify(body.detail ?? body);
  } catch {
    return response.statusText || 'unreadable error body';
  }
}

export class AnnotationApi {
  private readonly fetchImpl: FetchLike;

  constructor(
    readonly baseUrl: string,
    fetchImpl?: FetchLike,
  ) {
    // bind lazily so tests can stub globalThis.fetch after construction
    this.fetchImpl = fetchImpl ?? ((input, init) => globalThis.fetch(input, init));
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(this.baseUrl + path, {
        method,
        headers: body === undefined ? undefined : { 'content-type': 'application/json' },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiError(0, err instanceof Error ? err.message : String(err));
    }
    if (!response.ok) {
      throw new ApiError(response.status, await readDetail(response));
    }
    return (await response.json()) as T;
  }

  createSession(request: SessionRequest): Promise<SessionCreated> {
    return this.request('POST', '/sessions', request);
  }

  nextProbe(sessionId: string, offset = 0, limit?: number): Promise<NextProbeResponse> {
    const query = new URLSearchParams({ offset: String(offset) });
    if (limit !== undefined) query.set('limit', String(limit));
    return this.request('GET', `/sessions/${sessionId}/next-probe?${query}`);
  }

  submitLabel(sessionId: string, body: LabelBody): Promise<LabelResponse> {
    return this.request('POST', `/sessions/${sessionId}/labels`, body);
  }

  metrics(sessionId: string): Promise<MetricsResponse> {
    return this.request('GET', `/sessions/${sessionId}/metrics`);
  }

  async healthy(): Promise<boolean> {
    try {
      await this.request('GET', '/healthz');
      return true;
    } catch {
      return false;
    }
  }
}
