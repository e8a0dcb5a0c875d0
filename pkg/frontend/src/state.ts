/** Session state machine for the experiment runner.
 *
 * Phases follow the trial protocol; a key press is turned into a response
 * message only during `stimulus` or `awaiting_response`, and only once per
 * trial.  Frame sequence regressions flag a desync instead of advancing.
 */

import type { FrameMsg, ResponseKey, ServerMsg } from "./protocol.js";

export type Phase =
  | "idle"
  | "connecting"
  | "fixation"
  | "stimulus"
  | "awaiting_response"
  | "feedback"
  | "done";

export class UiSessionState {
  phase: Phase = "idle";
  trialIndex = 0;
  trialsTotal = 0;
  lastFrameSeq = -1;
  onsetTStim: number | null = null;
  responded = false;
  desync: string | null = null;
  blockReport: unknown = null;

  startConnecting(): void {
    this.phase = "connecting";
  }

  /** Advance on a server message; returns the (possibly new) phase. */
  onServerMsg(msg: ServerMsg): Phase {
    switch (msg.type) {
      case "config":
        this.trialsTotal = msg.trials;
        this.trialIndex = 0;
        this.phase = "fixation";
        break;
      case "tone":
        this.trialIndex = msg.trial;
        this.onsetTStim = msg.onset_t_stim_ms;
        this.responded = false;
        this.phase = "stimulus";
        break;
      case "frame":
        this.onFrame(msg);
        break;
      case "block_done":
        this.blockReport = msg.report;
        this.phase = "done";
        break;
      case "error":
        this.desync = msg.message;
        break;
    }
    return this.phase;
  }

  private onFrame(msg: FrameMsg): void {
    if (msg.seq <= this.lastFrameSeq) {
      this.desync = `frame sequence went backwards (${msg.seq} after ${this.lastFrameSeq})`;
      return;
    }
    this.lastFrameSeq = msg.seq;
    if (msg.trial !== this.trialIndex && this.phase !== "fixation") {
      // server moved on (e.g. after our response): back to fixation
      this.trialIndex = msg.trial;
      this.phase = "fixation";
      return;
    }
    if (
      this.phase === "stimulus" &&
      this.onsetTStim !== null &&
      msg.t_stim_ms > this.onsetTStim
    ) {
      this.phase = "awaiting_response";
    }
  }

  /** Gate a key press: non-null exactly once per trial, and only while the
   * stimulus is up or the response window is open. */
  acceptResponse(key: ResponseKey | null): ResponseKey | null {
    if (key === null || this.responded) return null;
    if (this.phase !== "awaiting_response" && this.phase !== "stimulus") {
      return null;
    }
    this.responded = true;
    this.phase = "feedback";
    return key;
  }

  /** Feedback is off by default; the UI calls this right after showing it. */
  endFeedback(): void {
    if (this.phase === "feedback") this.phase = "fixation";
  }
}
