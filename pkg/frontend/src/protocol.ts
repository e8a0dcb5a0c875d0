/** Wire message schema shared with the session service. */

export type ResponseKey = "left" | "right" | "up" | "down";

export interface Envelope {
  type: string;
  seq: number;
  t_server_ms?: number;
}

export interface ConfigMsg extends Envelope {
  type: "config";
  test: string;
  condition: { label: string; phosphene_count: number; fov_deg: number };
  width_px: number;
  height_px: number;
  level_count: number;
  trials: number;
  fps: number;
  timing: Record<string, number>;
}

export interface ToneMsg extends Envelope {
  type: "tone";
  trial: number;
  onset_t_stim_ms: number;
}

export interface FrameMsg extends Envelope {
  type: "frame";
  trial: number;
  width: number;
  height: number;
  t_stim_ms: number;
  clamped: boolean;
  data_b64: string;
}

export interface BlockDoneMsg extends Envelope {
  type: "block_done";
  report: {
    session_id: string;
    test: string;
    condition: string;
    aborted: boolean;
    summary: Record<string, unknown>;
    acuity?: Record<string, unknown>;
  };
}

export interface ErrorMsg extends Envelope {
  type: "error";
  message: string;
}

export type ServerMsg = ConfigMsg | ToneMsg | FrameMsg | BlockDoneMsg | ErrorMsg;

export interface HelloOut {
  type: "hello";
  seq: number;
  subject: string;
  test?: string;
  condition?: string;
  trials?: number;
}

export interface ResponseOut {
  type: "response";
  seq: number;
  key: ResponseKey;
}

export interface PoseOut {
  type: "pose";
  seq: number;
  yaw_deg: number;
  pitch_deg: number;
}

export type ClientMsg = HelloOut | ResponseOut | PoseOut;

export function parseServerMsg(raw: string): ServerMsg {
  const msg = JSON.parse(raw) as ServerMsg;
  if (typeof msg.type !== "string" || typeof msg.seq !== "number") {
    throw new Error("malformed server message");
  }
  return msg;
}
