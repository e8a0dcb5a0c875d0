import { describe, expect, it } from "vitest";

import type { FrameMsg, ServerMsg } from "../src/protocol.js";
import { UiSessionState } from "../src/state.js";

let seqCounter = 0;
function msg<T extends ServerMsg>(partial: Omit<T, "seq">): T {
  return { ...partial, seq: ++seqCounter } as T;
}

function frame(trial: number, t: number, seq?: number): FrameMsg {
  const m = msg<FrameMsg>({
    type: "frame", trial, width: 2, height: 2, t_stim_ms: t,
    clamped: false, data_b64: "AAAA",
  });
  if (seq !== undefined) m.seq = seq;
  return m;
}

function freshState(): UiSessionState {
  seqCounter = 0;
  const st = new UiSessionState();
  st.startConnecting();
  st.onServerMsg(msg({
    type: "config", test: "light",
    condition: { label: "C4", phosphene_count: 1000, fov_deg: 20 },
    width_px: 2, height_px: 2, level_count: 8, trials: 3, fps: 30,
    timing: {},
  } as never));
  return st;
}

describe("phase transitions", () => {
  it("follows connect -> fixation -> stimulus -> awaiting_response -> done", () => {
    const st = freshState();
    expect(st.phase).toBe("fixation");
    st.onServerMsg(msg({ type: "tone", trial: 0, onset_t_stim_ms: 70 } as never));
    expect(st.phase).toBe("stimulus");
    st.onServerMsg(frame(0, 50));
    expect(st.phase).toBe("stimulus"); // before the onset
    st.onServerMsg(frame(0, 90));
    expect(st.phase).toBe("awaiting_response");
    st.onServerMsg(msg({ type: "block_done", report: {} } as never));
    expect(st.phase).toBe("done");
  });

  it("keydown during fixation emits nothing", () => {
    const st = freshState();
    expect(st.phase).toBe("fixation");
    expect(st.acceptResponse("up")).toBeNull();
  });

  it("arrow during awaiting_response is accepted with its key", () => {
    const st = freshState();
    st.onServerMsg(msg({ type: "tone", trial: 0, onset_t_stim_ms: 70 } as never));
    st.onServerMsg(frame(0, 90));
    expect(st.acceptResponse("up")).toBe("up");
  });

  it("accepts exactly one response per trial", () => {
    const st = freshState();
    st.onServerMsg(msg({ type: "tone", trial: 0, onset_t_stim_ms: 70 } as never));
    st.onServerMsg(frame(0, 90));
    expect(st.acceptResponse("left")).toBe("left");
    expect(st.acceptResponse("right")).toBeNull();
    st.endFeedback();
    expect(st.acceptResponse("right")).toBeNull(); // still the same trial
    // next trial re-arms
    st.onServerMsg(msg({ type: "tone", trial: 1, onset_t_stim_ms: 70 } as never));
    st.onServerMsg(frame(1, 90));
    expect(st.acceptResponse("down")).toBe("down");
  });

  it("responses are allowed during the stimulus phase", () => {
    const st = freshState();
    st.onServerMsg(msg({ type: "tone", trial: 0, onset_t_stim_ms: 70 } as never));
    expect(st.phase).toBe("stimulus");
    expect(st.acceptResponse("left")).toBe("left");
  });
});

describe("desync detection", () => {
  it("flags a frame sequence regression", () => {
    const st = freshState();
    st.onServerMsg(msg({ type: "tone", trial: 0, onset_t_stim_ms: 70 } as never));
    st.onServerMsg(frame(0, 80, 100));
    expect(st.desync).toBeNull();
    st.onServerMsg(frame(0, 95, 99));
    expect(st.desync).toMatch(/sequence went backwards/);
  });

  it("reports server errors", () => {
    const st = freshState();
    st.onServerMsg(msg({ type: "error", message: "boom" } as never));
    expect(st.desync).toBe("boom");
  });
});
