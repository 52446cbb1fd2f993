/**
 * Client-side session state: the latest server view plus per-item label
 * drafts.  Drafts never leave the browser until the whole batch is
 * submitted; everything else renders purely from API responses.
 */

import type {
  BatchItem,
  ConfirmedPattern,
  CreateSessionResponse,
  Phase,
  SessionView,
  SubmitLabelsResponse,
  LabelItem,
} from './api.js';

export class SessionState {
  sessionId = '';
  phase: Phase = 'awaiting_labels';
  n = 0;
  nClasses = 0;
  queriedCount = 0;
  maxQueries = 0;
  round = 0;
  batch: BatchItem[] = [];
  patterns: ConfirmedPattern[] = [];
  busy = false;
  error: string | null = null;

  private drafts = new Map<number, number>();

  applyCreate(resp: CreateSessionResponse): void {
    this.sessionId = resp.session_id;
    this.phase = resp.phase;
    this.n = resp.n;
    this.nClasses = resp.n_classes;
    this.setBatch(resp.batch);
  }

  applyView(view: SessionView): void {
    this.sessionId = view.session_id;
    this.phase = view.phase;
    this.n = view.n;
    this.nClasses = view.n_classes;
    this.queriedCount = view.queried_count;
    this.maxQueries = view.max_queries;
    this.patterns = view.confirmed_patterns;
    this.setBatch(view.pending_batch);
  }

  applySubmit(resp: SubmitLabelsResponse): void {
    this.phase = resp.phase;
    this.round = resp.round + 1;
    this.queriedCount = resp.queried_count;
    for (const members of resp.new_confirmed) {
      const sorted = [...members].sort((a, b) => a - b);
      this.patterns = [...this.patterns, { round: resp.round, members: sorted }];
    }
    this.setBatch(resp.batch);
  }

  /** Replace the pending batch and drop drafts for ids no longer in it. */
  setBatch(items: BatchItem[]): void {
    this.batch = items;
    const ids = new Set(items.map((item) => item.id));
    for (const id of [...this.drafts.keys()]) {
      if (!ids.has(id)) {
        this.drafts.delete(id);
      }
    }
  }

  setDraft(id: number, label: number | null): void {
    if (!this.batch.some((item) => item.id === id)) {
      return; // stale event from a previous batch
    }
    if (label === null) {
      this.drafts.delete(id);
    } else {
      this.drafts.set(id, label);
    }
  }

  draftFor(id: number): number | null {
    return this.drafts.has(id) ? (this.drafts.get(id) as number) : null;
  }

  get labeledCount(): number {
    return this.batch.filter((item) => this.drafts.has(item.id)).length;
  }

  /** Submit is allowed only with a draft for every pending item. */
  get submitEnabled(): boolean {
    return (
      this.phase === 'awaiting_labels' &&
      !this.busy &&
      this.batch.length > 0 &&
      this.labeledCount === this.batch.length
    );
  }

  get progress(): number {
    return this.maxQueries > 0 ? this.queriedCount / this.maxQueries : 0;
  }

  toLabels(): LabelItem[] {
    return this.batch.map((item) => ({
      id: item.id,
      true_label: this.drafts.get(item.id) as number,
    }));
  }
}
