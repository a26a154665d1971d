// Wire protocol: JSON text frames, protocol version 1.
// Client messages are encoded in canonical form (fixed key order, compact
// separators) so transcripts are reproducible byte for byte.
export const PROTOCOL_VERSION = 1;
export class ProtocolError extends Error {
}
const SERVER_TYPES = new Set(["hello", "started", "state", "result", "error"]);
export function decodeServerMessage(text) {
    let raw;
    try {
        raw = JSON.parse(text);
    }
    catch (exc) {
        throw new ProtocolError(`malformed JSON frame: ${exc}`);
    }
    const msg = raw;
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
    return msg;
}
// -- canonical client encoding ---------------------------------------------
// Field order is fixed per message type: v, seq, type, then the payload.
export function encodeHello(seq) {
    return JSON.stringify({ v: PROTOCOL_VERSION, seq, type: "hello" });
}
export function encodeStart(seq, mode, seed) {
    return JSON.stringify({ v: PROTOCOL_VERSION, seq, type: "start", mode, seed });
}
export function encodeJog(seq, u) {
    return JSON.stringify({ v: PROTOCOL_VERSION, seq, type: "jog", u });
}
export function encodeIkMove(seq, dx) {
    return JSON.stringify({ v: PROTOCOL_VERSION, seq, type: "ik_move", dx });
}
export function encodeDirect(seq, value) {
    return JSON.stringify({ v: PROTOCOL_VERSION, seq, type: "direct", value });
}
