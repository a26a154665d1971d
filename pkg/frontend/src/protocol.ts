// Wire protocol: JSON text frames, protocol version 1.
// Client messages are encoded in canonical form (fixed key order, compact
// separators) so transcripts are reproducible byte for byte.

export const PROTOCOL_VERSION = 1;

export type Mode = "free" | "exp1" | "exp2-single" | "exp2-parallel";

export interface HelloMessage {
  v: number;
  seq: number;
  type: "hello";
  joints: number;
  nodes: number;
  modes: Mode[];
  rate_hz: number;
  workspace?: { lo: number[]; hi: number[] };
  node_positions?: number[][];
}

export interface StartedMessage {
  v: number;
  seq: number;
  type: "started";
  mode: Mode;
  seed: number;
  duration?: number;
  profile?: { times: number[]; values: number[] };
  schedule?: {
    initial_radius: number;
    radius_steps: number[];
    step_interval: number;
    alignment: number;
    center: number[];
  };
}

export interface StateMessage {
  v: number;
  seq: number;
  type: "state";
  t: number;
  q: number[];
  hand: number[];
  value: number;
  task: Record<string, unknown>;
  inside_hull: boolean;
  clamped?: boolean;
}

export interface ResultMessage {
  v: number;
  seq: number;
  type: "result";
  label: string;
  signal_rmse: number;
  success: boolean;
  radius_rmse?: number;
  position_rmse?: number;
}

export interface ErrorMessage {
  v: number;
  seq: number;
  type: "error";
  message: string;
}

export type ServerMessage =
  | HelloMessage
  | StartedMessage
  | StateMessage
  | ResultMessage
  | ErrorMessage;

export class ProtocolError extends Error {}

const SERVER_TYPES = new Set(["hello", "started", "state", "result", "error"]);

export function decodeServerMessage(text: string): ServerMessage {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch (exc) {
    throw new ProtocolError(`malformed JSON frame: ${exc}`);
  }
  const msg = raw as Record<string, unknown>;
  if (typeof msg !== "object" || msg === null) {
    throw new ProtocolError("frame is not an object");
  }
  if (msg["v"] !== PROTOCOL_VERSION) {
    throw new ProtocolError(`unsupported protocol version ${msg["v"]}`);
  }
  if (typeof msg["seq"] !== "number") {
    throw new ProtocolError("frame has no sequence number");
  }
  const type = msg["type"];
  if (typeof type !== "string" || !SERVER_TYPES.has(type)) {
    throw new ProtocolError(`unknown server message type ${String(type)}`);
  }
  return msg as unknown as ServerMessage;
}

// -- canonical client encoding ---------------------------------------------
// Field order is fixed per message type: v, seq, type, then the payload.

export function encodeHello(seq: number): string {
  return JSON.stringify({ v: PROTOCOL_VERSION, seq, type: "hello" });
}

export function encodeStart(seq: number, mode: Mode, seed: number): string {
  return JSON.stringify({ v: PROTOCOL_VERSION, seq, type: "start", mode, seed });
}

export function encodeJog(seq: number, u: number): string {
  return JSON.stringify({ v: PROTOCOL_VERSION, seq, type: "jog", u });
}

export function encodeIkMove(seq: number, dx: [number, number, number]): string {
  return JSON.stringify({ v: PROTOCOL_VERSION, seq, type: "ik_move", dx });
}

export function encodeDirect(seq: number, value: number): string {
  return JSON.stringify({ v: PROTOCOL_VERSION, seq, type: "direct", value });
}
