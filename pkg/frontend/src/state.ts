/** View-state machine for a rating session.
 *
 * Pure and clock-injected: every transition takes the current time in
 * milliseconds, so tests drive it deterministically. The UI gate here is a
 * convenience — the server independently enforces the minimum dwell.
 */

import type { BreakMsg, CasePayloadMsg, DoneMsg, NextSample } from './api';

export type Screen = 'loading' | 'case' | 'break' | 'done' | 'error';

export interface RatingViewState {
  screen: Screen;
  case: CasePayloadMsg['case'] | null;
  /** wall-clock end of the current countdown; null when none is armed */
  countdownEndsAtMs: number | null;
  /** remaining countdown; submit stays disabled while > 0 */
  countdownRemainingMs: number;
  /** selected score per dimension; null until the rater picks one */
  selected: Record<string, number | null>;
  progress: { done: number; total: number };
  breakUntilMs: number | null;
  /** set while a submission is in flight; guards double clicks */
  submitting: boolean;
  notice: string | null;
}

export function initialState(): RatingViewState {
  return {
    screen: 'loading',
    case: null,
    countdownEndsAtMs: null,
    countdownRemainingMs: 0,
    selected: {},
    progress: { done: 0, total: 0 },
    breakUntilMs: null,
    submitting: false,
    notice: null,
  };
}

/** Apply a next-sample response. A case render (re)arms the countdown. */
export function applySample(
  state: RatingViewState,
  sample: NextSample,
  nowMs: number,
): RatingViewState {
  switch (sample.kind) {
    case 'case':
      return renderCase(state, sample, nowMs);
    case 'break':
      return renderBreak(state, sample);
    case 'done':
      return renderDone(state, sample);
  }
}

function renderCase(
  state: RatingViewState,
  sample: CasePayloadMsg,
  nowMs: number,
): RatingViewState {
  return {
    ...state,
    screen: 'case',
    case: sample.case,
    selected: Object.fromEntries(sample.case.dims.map((d) => [d, null])),
    progress: sample.progress,
    breakUntilMs: null,
    submitting: false,
    notice: null,
    countdownEndsAtMs: nowMs + sample.min_dwell_ms,
    countdownRemainingMs: sample.min_dwell_ms,
  };
}

function renderBreak(state: RatingViewState, sample: BreakMsg): RatingViewState {
  return {
    ...state,
    screen: 'break',
    case: null, // the overlay must not leave a case visible
    selected: {},
    breakUntilMs: sample.break_until_ms,
    submitting: false,
    countdownEndsAtMs: null,
    countdownRemainingMs: 0,
  };
}

function renderDone(state: RatingViewState, sample: DoneMsg): RatingViewState {
  return {
    ...state,
    screen: 'done',
    case: null,
    selected: {},
    breakUntilMs: null,
    submitting: false,
    progress: { ...state.progress, done: sample.rated },
    countdownEndsAtMs: null,
    countdownRemainingMs: 0,
  };
}

/** Advance the countdown to the given time. */
export function tick(state: RatingViewState, nowMs: number): RatingViewState {
  if (state.countdownEndsAtMs === null) return state;
  const remaining = Math.max(0, state.countdownEndsAtMs - nowMs);
  if (remaining === state.countdownRemainingMs) return state;
  return { ...state, countdownRemainingMs: remaining };
}

export function selectScore(
  state: RatingViewState,
  dim: string,
  score: number,
): RatingViewState {
  if (state.screen !== 'case' || state.case === null) return state;
  if (!(dim in state.selected)) return state;
  if (
    !Number.isInteger(score) ||
    score < state.case.score_min ||
    score > state.case.score_max
  ) {
    return state; // out-of-range picks are impossible from the rendered controls
  }
  return { ...state, selected: { ...state.selected, [dim]: score } };
}

/** Submit is enabled only when the countdown has elapsed and every
 * dimension has a selection. */
export function canSubmit(state: RatingViewState): boolean {
  if (state.screen !== 'case' || state.submitting) return false;
  if (state.countdownRemainingMs > 0) return false;
  return Object.values(state.selected).every((v) => v !== null);
}

export function beginSubmit(state: RatingViewState): RatingViewState {
  if (!canSubmit(state)) {
    throw new Error('submit attempted while disabled');
  }
  return { ...state, submitting: true };
}

/** Server rejected the submission as too early: re-arm the countdown with
 * the server-provided wait, keeping the selections. */
export function applyEarlyRejection(
  state: RatingViewState,
  retryAfterMs: number,
  nowMs: number,
): RatingViewState {
  return {
    ...state,
    submitting: false,
    notice: 'Please study the pair a little longer.',
    countdownEndsAtMs: nowMs + retryAfterMs,
    countdownRemainingMs: retryAfterMs,
  };
}

export function applyNetworkFailure(state: RatingViewState): RatingViewState {
  return {
    ...state,
    submitting: false,
    notice: 'Connection problem - your rating was not sent. Retrying…',
  };
}
