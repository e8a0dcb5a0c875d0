/** Keyboard and pointer input: arrow keys answer, shift+arrows or pointer
 * drags pan the viewport (the desk-scale stand-in for head motion). */

import type { ResponseKey } from "./protocol.js";

const ARROWS: Record<string, ResponseKey> = {
  ArrowLeft: "left",
  ArrowRight: "right",
  ArrowUp: "up",
  ArrowDown: "down",
};

export interface KeyEventLike {
  code: string;
  shiftKey?: boolean;
  repeat?: boolean;
}

/** Response key for a keydown, or null when the key is not an answer
 * (non-arrows, auto-repeats, and shift-panning chords). */
export function keyToResponse(ev: KeyEventLike): ResponseKey | null {
  if (ev.repeat || ev.shiftKey) return null;
  return ARROWS[ev.code] ?? null;
}

/** Pan direction for shift+arrow chords, in degrees of (yaw, pitch). */
export function keyToPanStep(ev: KeyEventLike, stepDeg = 1.0): [number, number] | null {
  if (!ev.shiftKey) return null;
  switch (ev.code) {
    case "ArrowLeft":
      return [-stepDeg, 0];
    case "ArrowRight":
      return [stepDeg, 0];
    case "ArrowUp":
      return [0, stepDeg];
    case "ArrowDown":
      return [0, -stepDeg];
    default:
      return null;
  }
}

export interface PoseMsgOut {
  yaw_deg: number;
  pitch_deg: number;
}

/** Accumulates pose deltas and emits at most one message per interval
 * (default 60 Hz), coalescing whatever arrived in between. */
export class PoseCoalescer {
  private yaw = 0;
  private pitch = 0;
  private dirty = false;
  private lastEmit = -Infinity;

  constructor(
    readonly minIntervalMs: number = 1000 / 60,
    readonly yawRange: [number, number] = [-10, 10],
    readonly pitchRange: [number, number] = [-10, 10],
  ) {}

  get pose(): PoseMsgOut {
    return { yaw_deg: this.yaw, pitch_deg: this.pitch };
  }

  /** Apply a delta; returns a message when the rate limiter allows one. */
  update(dYaw: number, dPitch: number, nowMs: number): PoseMsgOut | null {
    this.yaw = clamp(this.yaw + dYaw, this.yawRange);
    this.pitch = clamp(this.pitch + dPitch, this.pitchRange);
    this.dirty = true;
    return this.flush(nowMs);
  }

  /** Emit the pending pose if the interval has elapsed. */
  flush(nowMs: number): PoseMsgOut | null {
    if (!this.dirty || nowMs - this.lastEmit < this.minIntervalMs) return null;
    this.lastEmit = nowMs;
    this.dirty = false;
    return this.pose;
  }

  reset(): void {
    this.yaw = 0;
    this.pitch = 0;
    this.dirty = false;
    this.lastEmit = -Infinity;
  }
}

function clamp(v: number, [lo, hi]: [number, number]): number {
  return Math.min(Math.max(v, lo), hi);
}
