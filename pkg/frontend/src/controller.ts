/** Session controller: wires the HTTP client to the view-state machine.
 *
 * One active session per tab; the state only advances after a server ack
 * (optimistic UI is limited to the in-flight `submitting` flag).
 */

import { EarlySubmissionRejection, RatingApi } from './api';
import {
  applyEarlyRejection,
  applyNetworkFailure,
  applySample,
  beginSubmit,
  canSubmit,
  initialState,
  RatingViewState,
  selectScore,
  tick,
} from './state';

export type Now = () => number;

export class SessionController {
  private state: RatingViewState = initialState();
  private sessionId: string | null = null;

  constructor(
    private readonly api: RatingApi,
    private readonly now: Now = () => Date.now(),
    private readonly onChange: (state: RatingViewState) => void = () => {},
  ) {}

  getState(): RatingViewState {
    return this.state;
  }

  private setState(next: RatingViewState): void {
    this.state = next;
    this.onChange(next);
  }

  async start(raterId: string): Promise<void> {
    await this.api.registerRater(raterId);
    this.sessionId = await this.api.createSession(raterId);
    await this.advance();
  }

  async advance(): Promise<void> {
    if (this.sessionId === null) throw new Error('session not started');
    const sample = await this.api.nextSample(this.sessionId);
    this.setState(applySample(this.state, sample, this.now()));
  }

  tick(): void {
    this.setState(tick(this.state, this.now()));
  }

  select(dim: string, score: number): void {
    this.setState(selectScore(this.state, dim, score));
  }

  /** Submit the current ratings; no client path reaches the server before
   * the countdown elapses, and the server rejects it anyway if one did. */
  async submit(): Promise<void> {
    if (!canSubmit(this.state) || this.state.case === null) return;
    const caseId = this.state.case.case_id;
    const scores: Record<string, number> = {};
    for (const [dim, value] of Object.entries(this.state.selected)) {
      if (value === null) return;
      scores[dim] = value;
    }
    this.setState(beginSubmit(this.state));
    try {
      await this.api.submitRating(this.sessionId!, caseId, scores);
      await this.advance();
    } catch (err) {
      if (err instanceof EarlySubmissionRejection) {
        this.setState(applyEarlyRejection(this.state, err.retryAfterMs, this.now()));
        return;
      }
      this.setState(applyNetworkFailure(this.state));
      throw err;
    }
  }
}
