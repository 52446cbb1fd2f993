/**
 * Typed client for the annotation session HTTP API.
 *
 * All methods reject with ApiError on non-2xx responses, carrying the
 * HTTP status and the server's `detail` payload, which the UI surfaces
 * inline (validation problems) or uses to branch (409 while computing).
 */

export type Phase = 'awaiting_labels' | 'computing' | 'finished';

export interface DisplayInfo {
  x2d?: number;
  y2d?: number;
  image_url?: string;
}

export interface BatchItem {
  id: number;
  pseudolabel: number;
  display: DisplayInfo | null;
}

export interface ConfirmedPattern {
  round: number;
  members: number[];
}

export interface CreateSessionRequest {
  dataset_path: string;
  theta: number;
  batch_size: number;
  m: number;
  knn: number;
  budget: number;
  seed: number;
  strategy: 'DS' | 'US';
}

export interface CreateSessionResponse {
  session_id: string;
  phase: Phase;
  n: number;
  n_classes: number;
  batch: BatchItem[];
}

export interface SessionView {
  session_id: string;
  phase: Phase;
  n: number;
  n_classes: number;
  queried_count: number;
  max_queries: number;
  confirmed_patterns: ConfirmedPattern[];
  pending_batch: BatchItem[];
}

export interface LabelItem {
  id: number;
  true_label: number;
}

export interface SubmitLabelsResponse {
  phase: Phase;
  round: number;
  queried_count: number;
  new_confirmed: number[][];
  batch: BatchItem[];
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: unknown,
  ) {
    super(typeof detail === 'string' ? detail : JSON.stringify(detail));
    this.name = 'ApiError';
  }
}

async function parseDetail(response: Response): Promise<unknown> {
  try {
    const body = (await response.json()) as { detail?: unknown };
    return body.detail ?? body;
  } catch {
    return response.statusText;
  }
}

export class AnnotationApi {
  constructor(private readonly baseUrl: string) {
    this.baseUrl = baseUrl.replace(/\/+$/, '');
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      throw new ApiError(response.status, await parseDetail(response));
    }
    if (response.status === 204) {
      return undefined as T;
    }
    return (await response.json()) as T;
  }

  createSession(req: CreateSessionRequest): Promise<CreateSessionResponse> {
    return this.request('/sessions', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(req),
    });
  }

  getSession(sessionId: string): Promise<SessionView> {
    return this.request(`/sessions/${sessionId}`);
  }

  submitLabels(sessionId: string, labels: LabelItem[]): Promise<SubmitLabelsResponse> {
    return this.request(`/sessions/${sessionId}/labels`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ labels }),
    });
  }

  deleteSession(sessionId: string): Promise<void> {
    return this.request(`/sessions/${sessionId}`, { method: 'DELETE' });
  }
}
