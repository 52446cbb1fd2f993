/**
 * HTML renderers.  Pure string builders over SessionState; event wiring
 * stays in main.ts via delegation on data-* attributes.
 */

import type { BatchItem } from './api.js';
import { SessionState } from './state.js';

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

const PHASE_LABELS: Record<string, string> = {
  awaiting_labels: 'awaiting labels',
  computing: 'computing',
  finished: 'finished',
};

export function renderStatus(state: SessionState): string {
  const pct = Math.round(state.progress * 100);
  return `
    <div class="status-bar">
      <span class="phase phase-${state.phase}">${PHASE_LABELS[state.phase] ?? state.phase}</span>
      <span class="progress-text">${state.queriedCount} / ${state.maxQueries} labeled</span>
      <div class="progress-track"><div class="progress-fill" style="width:${pct}%"></div></div>
    </div>
  `;
}

function renderScatter(items: BatchItem[]): string {
  const points = items.filter(
    (item) => item.display && item.display.x2d !== undefined && item.display.y2d !== undefined,
  );
  if (points.length === 0) return '';
  const xs = points.map((p) => p.display!.x2d!);
  const ys = points.map((p) => p.display!.y2d!);
  const xMin = Math.min(...xs);
  const xMax = Math.max(...xs);
  const yMin = Math.min(...ys);
  const yMax = Math.max(...ys);
  const scale = (v: number, lo: number, hi: number, size: number) =>
    hi > lo ? 8 + ((v - lo) / (hi - lo)) * (size - 16) : size / 2;
  const circles = points
    .map((p) => {
      const cx = scale(p.display!.x2d!, xMin, xMax, 320).toFixed(1);
      const cy = scale(p.display!.y2d!, yMin, yMax, 200).toFixed(1);
      return `<circle cx="${cx}" cy="${cy}" r="5" data-point="${p.id}"><title>#${p.id}</title></circle>`;
    })
    .join('');
  return `<svg class="batch-scatter" viewBox="0 0 320 200" role="img">${circles}</svg>`;
}

function renderItemRow(item: BatchItem, nClasses: number, draft: number | null): string {
  const options = ['<option value="">choose</option>'];
  for (let label = 0; label < nClasses; label++) {
    const selected = draft === label ? ' selected' : '';
    options.push(`<option value="${label}"${selected}>${label}</option>`);
  }
  const thumb = item.display?.image_url
    ? `<img class="thumb" src="${escapeHtml(item.display.image_url)}" alt="sample ${item.id}">`
    : '';
  return `
    <li class="batch-item" data-item="${item.id}">
      ${thumb}
      <span class="item-id">#${item.id}</span>
      <span class="item-pred">predicted ${item.pseudolabel}</span>
      <label>true label
        <select data-label-for="${item.id}">${options.join('')}</select>
      </label>
    </li>
  `;
}

export function renderBatch(state: SessionState): string {
  if (state.phase === 'finished') {
    return renderFinished(state);
  }
  const rows = state.batch
    .map((item) => renderItemRow(item, state.nClasses, state.draftFor(item.id)))
    .join('');
  const disabled = state.submitEnabled ? '' : ' disabled';
  const busyNote = state.busy
    ? '<p class="busy-note">computing next batch, hang on</p>'
    : '';
  return `
    ${renderScatter(state.batch)}
    <ul class="batch-list">${rows}</ul>
    <p class="draft-count">${state.labeledCount} of ${state.batch.length} labeled</p>
    ${busyNote}
    <button type="button" data-action="submit-labels"${disabled}>Submit batch</button>
  `;
}

export function renderPatterns(state: SessionState): string {
  if (state.patterns.length === 0) {
    return '<p class="no-patterns">No patterns confirmed yet.</p>';
  }
  const entries = state.patterns
    .map(
      (p, i) => `
      <li class="pattern-entry">
        <strong>pattern ${i + 1}</strong>
        <span>${p.members.length} members</span>
        <span>round ${p.round}</span>
        <code class="pattern-members">${p.members.join(', ')}</code>
      </li>
    `,
    )
    .join('');
  return `<ul class="pattern-list">${entries}</ul>`;
}

export function renderFinished(state: SessionState): string {
  const fraction = state.n > 0 ? state.queriedCount / state.n : 0;
  return `
    <div class="finished-summary">
      <h2>Session finished</h2>
      <p>${state.queriedCount} of ${state.n} samples labeled
         (${(fraction * 100).toFixed(1)}% of the dataset).</p>
      <p class="pattern-count">${state.patterns.length} failure patterns confirmed.</p>
    </div>
  `;
}

export function renderError(state: SessionState): string {
  return state.error ? `<div class="error-banner">${escapeHtml(state.error)}</div>` : '';
}
