/**
 * Annotation app: create a session from the form, label each recommended
 * batch, submit, repeat until the budget is spent.  Confirmed patterns
 * appear in the side panel as the server reports them.
 */

import { AnnotationApi, ApiError, CreateSessionRequest } from './api.js';
import { SessionState } from './state.js';
import { renderBatch, renderError, renderPatterns, renderStatus } from './render.js';

const POLL_INTERVAL_MS = 400;

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

export class AnnotationApp {
  readonly state = new SessionState();
  private api: AnnotationApi | null = null;

  constructor(private readonly root: HTMLElement) {
    this.root.innerHTML = `
      <section class="setup" data-section="setup">${this.setupForm()}</section>
      <section class="session hidden" data-section="session">
        <div data-region="status"></div>
        <div data-region="error"></div>
        <div class="columns">
          <div class="batch-pane" data-region="batch"></div>
          <aside class="pattern-pane">
            <h2>Confirmed patterns</h2>
            <div data-region="patterns"></div>
          </aside>
        </div>
      </section>
    `;
    this.root.addEventListener('submit', (event) => {
      if ((event.target as HTMLElement).matches('[data-form="create"]')) {
        event.preventDefault();
        void this.createSession();
      }
    });
    this.root.addEventListener('change', (event) => {
      const select = event.target as HTMLSelectElement;
      const idAttr = select.getAttribute?.('data-label-for');
      if (idAttr !== null && idAttr !== undefined) {
        const value = select.value === '' ? null : Number(select.value);
        this.state.setDraft(Number(idAttr), value);
        this.refresh();
      }
    });
    this.root.addEventListener('click', (event) => {
      if ((event.target as HTMLElement).matches('[data-action="submit-labels"]')) {
        void this.submitBatch();
      }
    });
  }

  private setupForm(): string {
    return `
      <form data-form="create">
        <h1>failure-scout annotation</h1>
        <label>API base <input name="base" value="http://127.0.0.1:8000"></label>
        <label>dataset path <input name="dataset" placeholder="/path/to/data.jsonl" required></label>
        <label>mixture weight <input name="theta" type="number" step="0.05" min="0" max="1" value="0.5"></label>
        <label>batch size <input name="batch" type="number" min="1" value="25"></label>
        <label>pattern threshold <input name="m" type="number" min="1" value="10"></label>
        <label>graph neighbors <input name="knn" type="number" min="0" value="10"></label>
        <label>budget <input name="budget" type="number" step="0.05" min="0.05" max="1" value="1.0"></label>
        <label>seed <input name="seed" type="number" value="0"></label>
        <label>strategy
          <select name="strategy"><option value="DS">directed</option><option value="US">uniform</option></select>
        </label>
        <button type="submit">Start session</button>
        <div data-region="setup-error"></div>
      </form>
    `;
  }

  private field(name: string): string {
    const input = this.root.querySelector<HTMLInputElement | HTMLSelectElement>(`[name="${name}"]`);
    return input ? input.value : '';
  }

  async createSession(): Promise<void> {
    const request: CreateSessionRequest = {
      dataset_path: this.field('dataset'),
      theta: Number(this.field('theta')),
      batch_size: Number(this.field('batch')),
      m: Number(this.field('m')),
      knn: Number(this.field('knn')),
      budget: Number(this.field('budget')),
      seed: Number(this.field('seed')),
      strategy: this.field('strategy') === 'US' ? 'US' : 'DS',
    };
    this.api = new AnnotationApi(this.field('base'));
    const errorRegion = this.root.querySelector('[data-region="setup-error"]')!;
    try {
      const created = await this.api.createSession(request);
      this.state.applyCreate(created);
      // the create response carries no progress numbers; fetch them
      this.state.applyView(await this.api.getSession(created.session_id));
    } catch (error) {
      errorRegion.innerHTML = `<div class="error-banner">${String(
        error instanceof ApiError ? error.message : error,
      )}</div>`;
      return;
    }
    this.root.querySelector('[data-section="setup"]')!.classList.add('hidden');
    this.root.querySelector('[data-section="session"]')!.classList.remove('hidden');
    this.refresh();
  }

  async submitBatch(): Promise<void> {
    if (!this.api || !this.state.submitEnabled) {
      return;
    }
    this.state.busy = true;
    this.state.error = null;
    this.refresh();
    try {
      const result = await this.api.submitLabels(this.state.sessionId, this.state.toLabels());
      this.state.applySubmit(result);
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        await this.waitOutConflict();
      } else {
        this.state.error = error instanceof ApiError ? error.message : String(error);
      }
    } finally {
      this.state.busy = false;
      this.refresh();
    }
  }

  /** Another submission is computing; poll until the session settles. */
  private async waitOutConflict(): Promise<void> {
    for (let attempt = 0; attempt < 50; attempt++) {
      await sleep(POLL_INTERVAL_MS);
      const view = await this.api!.getSession(this.state.sessionId);
      if (view.phase !== 'computing') {
        this.state.applyView(view);
        return;
      }
    }
    this.state.error = 'session is still computing; try again';
  }

  refresh(): void {
    const region = (name: string) => this.root.querySelector(`[data-region="${name}"]`)!;
    region('status').innerHTML = renderStatus(this.state);
    region('error').innerHTML = renderError(this.state);
    region('batch').innerHTML = renderBatch(this.state);
    region('patterns').innerHTML = renderPatterns(this.state);
  }
}

export function mountAnnotationApp(root: HTMLElement): AnnotationApp {
  return new AnnotationApp(root);
}

const autoRoot = typeof document !== 'undefined' ? document.getElementById('app') : null;
if (autoRoot) {
  mountAnnotationApp(autoRoot);
}
