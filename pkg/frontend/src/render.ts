/** DOM rendering for the rating screen.
 *
 * Layout: source image on the left, edited result on the right; below them
 * a first text row with the editing instruction and a second row with the
 * 1-10 controls for the three rating dimensions; submit button last. A
 * break replaces everything with a full-screen overlay.
 */

import type { RatingViewState } from './state';
import { canSubmit } from './state';

export interface RenderHandlers {
  onSelect(dim: string, score: number): void;
  onSubmit(): void;
  onImageRetry(): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function formatMs(ms: number): string {
  const total = Math.ceil(ms / 1000);
  const m = Math.floor(total / 60);
  const s = total % 60;
  return m > 0 ? `${m}:${String(s).padStart(2, '0')}` : `${s}s`;
}

function dimLabel(dim: string): string {
  return dim.replace(/_/g, ' ');
}

export function render(
  root: HTMLElement,
  state: RatingViewState,
  handlers: RenderHandlers,
  nowMs: number,
): void {
  const doc = root.ownerDocument;
  root.textContent = '';
  root.classList.add('rater-root'); // neutral gray background via stylesheet

  if (state.screen === 'break') {
    const overlay = el(doc, 'div', 'break-overlay');
    overlay.setAttribute('data-testid', 'break-overlay');
    const remaining = Math.max(0, (state.breakUntilMs ?? nowMs) - nowMs);
    overlay.appendChild(el(doc, 'h1', 'break-title', 'Break time'));
    overlay.appendChild(
      el(doc, 'p', 'break-countdown', `Rating resumes in ${formatMs(remaining)}`),
    );
    root.appendChild(overlay);
    return;
  }

  if (state.screen === 'done') {
    const summary = el(doc, 'div', 'done-screen');
    summary.setAttribute('data-testid', 'done-screen');
    summary.appendChild(el(doc, 'h1', 'done-title', 'Session complete'));
    summary.appendChild(
      el(doc, 'p', 'done-summary', `You rated ${state.progress.done} image pairs.`),
    );
    root.appendChild(summary);
    return;
  }

  if (state.screen !== 'case' || state.case === null) {
    root.appendChild(el(doc, 'p', 'loading', 'Loading…'));
    return;
  }

  const c = state.case;
  const pair = el(doc, 'div', 'image-pair');
  pair.setAttribute('data-testid', 'image-pair');
  for (const [side, url] of [
    ['source', c.source_url],
    ['edited', c.edited_url],
  ] as const) {
    const img = el(doc, 'img', `image image-${side}`);
    img.src = url;
    img.alt = side === 'source' ? 'source image' : 'edited result';
    img.addEventListener('error', () => {
      // image load failure: offer a retry, never skip the case silently
      const retry = el(doc, 'button', 'image-retry', 'Retry loading images');
      retry.addEventListener('click', handlers.onImageRetry);
      pair.appendChild(retry);
    });
    pair.appendChild(img);
  }
  root.appendChild(pair);

  // first text row: the editing instruction
  root.appendChild(el(doc, 'p', 'prompt-row', c.prompt));

  // second row: score controls, one group of 1-10 buttons per dimension
  const controls = el(doc, 'div', 'controls-row');
  controls.setAttribute('data-testid', 'controls-row');
  for (const dim of c.dims) {
    const group = el(doc, 'fieldset', 'dim-group');
    group.setAttribute('data-dim', dim);
    group.appendChild(el(doc, 'legend', 'dim-label', dimLabel(dim)));
    for (let score = c.score_min; score <= c.score_max; score++) {
      const btn = el(doc, 'button', 'score-button', String(score));
      btn.setAttribute('data-score', String(score));
      if (state.selected[dim] === score) btn.classList.add('selected');
      btn.addEventListener('click', () => handlers.onSelect(dim, score));
      group.appendChild(btn);
    }
    controls.appendChild(group);
  }
  root.appendChild(controls);

  const submit = el(doc, 'button', 'submit-button');
  submit.setAttribute('data-testid', 'submit');
  submit.disabled = !canSubmit(state);
  submit.textContent =
    state.countdownRemainingMs > 0
      ? `Submit (wait ${formatMs(state.countdownRemainingMs)})`
      : 'Submit';
  submit.addEventListener('click', () => {
    if (!submit.disabled) handlers.onSubmit();
  });
  root.appendChild(submit);

  if (state.notice !== null) {
    root.appendChild(el(doc, 'p', 'notice-row', state.notice));
  }

  const progress = el(
    doc,
    'p',
    'progress-row',
    `${state.progress.done} / ${state.progress.total}`,
  );
  root.appendChild(progress);
}

/** Keyboard shortcuts: digits 1-9 and 0 (=10) rate the focused dimension. */
export function keyToScore(key: string): number | null {
  if (/^[1-9]$/.test(key)) return Number(key);
  if (key === '0') return 10;
  return null;
}
