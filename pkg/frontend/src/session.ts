/** WebSocket client glue: drives the state machine, renders frames, plays
 * the tone, and forwards exactly one response per trial. */

import { playTone, type AudioContextLike } from "./audio.js";
import { keyToPanStep, keyToResponse, PoseCoalescer, type KeyEventLike } from "./input.js";
import { parseServerMsg, type ConfigMsg } from "./protocol.js";
import type { ClientMsg, FrameMsg, ResponseKey } from "./protocol.js";
import { decodeBase64 } from "./render.js";
import { UiSessionState } from "./state.js";

export interface ClientHooks {
  onFrame(gray: Uint8Array, msg: FrameMsg): void;
  onState(state: UiSessionState): void;
  onConfig(cfg: ConfigMsg): void;
  onDone(report: unknown): void;
  onError(message: string): void;
}

export interface SessionOptions {
  subject: string;
  test?: string;
  condition?: string;
  trials?: number;
  panStepDeg?: number;
  dragDegPerPx?: number;
}

interface SocketLike {
  send(data: string): void;
  close(): void;
  // eslint-disable-next-line @typescript-eslint/no-explicit-any
  onopen: ((ev?: any) => void) | null;
  // eslint-disable-next-line @typescript-eslint/no-explicit-any
  onmessage: ((ev: any) => void) | null;
  // eslint-disable-next-line @typescript-eslint/no-explicit-any
  onclose: ((ev?: any) => void) | null;
}

export class ExperimentClient {
  readonly state = new UiSessionState();
  readonly pose = new PoseCoalescer();
  config: ConfigMsg | null = null;
  private seq = 0;
  private socket: SocketLike | null = null;
  private flushTimer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private readonly opts: SessionOptions,
    private readonly hooks: ClientHooks,
    private readonly audio: AudioContextLike | null = null,
    private readonly now: () => number = () => performance.now(),
  ) {}

  connect(socket: SocketLike): void {
    this.socket = socket;
    this.state.startConnecting();
    this.hooks.onState(this.state);
    socket.onopen = () => {
      const hello: ClientMsg = {
        type: "hello",
        seq: ++this.seq,
        subject: this.opts.subject,
      };
      if (this.opts.test) (hello as { test?: string }).test = this.opts.test;
      if (this.opts.condition) (hello as { condition?: string }).condition = this.opts.condition;
      if (this.opts.trials) (hello as { trials?: number }).trials = this.opts.trials;
      socket.send(JSON.stringify(hello));
    };
    socket.onmessage = (ev) => this.handleMessage(ev.data);
    socket.onclose = () => {
      if (this.state.phase !== "done") {
        this.hooks.onError("connection lost mid-block");
      }
      this.stopFlushTimer();
    };
    this.flushTimer = setInterval(() => this.flushPose(), 16);
  }

  handleMessage(raw: string): void {
    const msg = parseServerMsg(raw);
    this.state.onServerMsg(msg);
    if (this.state.desync) {
      this.hooks.onError(this.state.desync);
    }
    switch (msg.type) {
      case "config":
        this.config = msg;
        this.hooks.onConfig(msg);
        break;
      case "tone":
        if (this.audio) playTone(this.audio);
        break;
      case "frame":
        this.hooks.onFrame(decodeBase64(msg.data_b64), msg);
        break;
      case "block_done":
        this.hooks.onDone(msg.report);
        this.stopFlushTimer();
        break;
      case "error":
        this.hooks.onError(msg.message);
        break;
    }
    this.hooks.onState(this.state);
  }

  /** Keyboard entry point: shift+arrows pan, bare arrows answer. */
  handleKey(ev: KeyEventLike): void {
    const pan = keyToPanStep(ev, this.opts.panStepDeg ?? 1.0);
    if (pan) {
      const out = this.pose.update(pan[0], pan[1], this.now());
      if (out) this.sendPose(out.yaw_deg, out.pitch_deg);
      return;
    }
    const key = keyToResponse(ev);
    const accepted = this.state.acceptResponse(key);
    if (accepted) {
      this.sendResponse(accepted);
      this.state.endFeedback(); // per-trial feedback is off by default
      this.hooks.onState(this.state);
    }
  }

  /** Pointer-drag panning; dx/dy in canvas pixels. */
  handleDrag(dxPx: number, dyPx: number): void {
    const k = this.opts.dragDegPerPx ?? 0.05;
    const out = this.pose.update(dxPx * k, -dyPx * k, this.now());
    if (out) this.sendPose(out.yaw_deg, out.pitch_deg);
  }

  private flushPose(): void {
    const out = this.pose.flush(this.now());
    if (out) this.sendPose(out.yaw_deg, out.pitch_deg);
  }

  private sendResponse(key: ResponseKey): void {
    this.send({ type: "response", seq: ++this.seq, key });
  }

  private sendPose(yaw: number, pitch: number): void {
    this.send({ type: "pose", seq: ++this.seq, yaw_deg: yaw, pitch_deg: pitch });
  }

  private send(msg: ClientMsg): void {
    this.socket?.send(JSON.stringify(msg));
  }

  /** Tear down timers and the socket (idempotent). */
  stop(): void {
    this.stopFlushTimer();
    this.socket?.close();
    this.socket = null;
  }

  private stopFlushTimer(): void {
    if (this.flushTimer !== null) {
      clearInterval(this.flushTimer);
      this.flushTimer = null;
    }
  }
}
