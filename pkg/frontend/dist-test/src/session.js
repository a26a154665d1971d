// Session model: the client-side mirror of server-authoritative state.
// The UI never computes control values; every displayed number originates
// in a server message.  Frames arriving with a stale sequence number are
// dropped so the view never rewinds.
import { ProtocolError, decodeServerMessage, encodeDirect, encodeHello, encodeIkMove, encodeJog, encodeStart, } from "./protocol.js";
const STRIP_CAPACITY = 3000;
export class SessionModel {
    transport;
    status = "idle";
    statusMessage = "";
    hello = null;
    started = null;
    state = null;
    strip = [];
    trail = [];
    summaries = [];
    droppedFrames = 0;
    lastSeq = 0;
    seqOut = 0;
    constructor(transport) {
        this.transport = transport;
    }
    // -- outbound -------------------------------------------------------------
    post(text) {
        this.transport.send(text);
        return text;
    }
    sendHello() {
        return this.post(encodeHello(++this.seqOut));
    }
    sendStart(mode, seed) {
        this.trail = [];
        this.strip = [];
        return this.post(encodeStart(++this.seqOut, mode, seed));
    }
    sendJog(u) {
        return this.post(encodeJog(++this.seqOut, u));
    }
    sendIkMove(dx) {
        return this.post(encodeIkMove(++this.seqOut, dx));
    }
    sendDirect(value) {
        return this.post(encodeDirect(++this.seqOut, value));
    }
    // -- inbound --------------------------------------------------------------
    ingest(text) {
        let msg;
        try {
            msg = decodeServerMessage(text);
        }
        catch (exc) {
            if (exc instanceof ProtocolError) {
                this.status = "error";
                this.statusMessage = exc.message;
                return null;
            }
            throw exc;
        }
        if (msg.seq <= this.lastSeq) {
            this.droppedFrames += 1;
            return null; // stale frame: no visual rewind
        }
        this.lastSeq = msg.seq;
        switch (msg.type) {
            case "hello":
                this.hello = msg;
                this.status = "connected";
                this.statusMessage = "";
                break;
            case "started":
                this.started = msg;
                break;
            case "state":
                this.state = msg;
                this.strip.push({
                    t: msg.t,
                    value: msg.value,
                    reference: typeof msg.task["reference"] === "number"
                        ? msg.task["reference"]
                        : undefined,
                });
                if (this.strip.length > STRIP_CAPACITY) {
                    this.strip.splice(0, this.strip.length - STRIP_CAPACITY);
                }
                if (this.started?.mode === "exp1") {
                    this.trail.push({ t: msg.t, value: msg.value });
                }
                break;
            case "result":
                this.summaries.push(summarize(msg));
                break;
            case "error":
                this.status = "error";
                this.statusMessage = msg.message;
                break;
        }
        return msg;
    }
    lastSummary() {
        return this.summaries.length ? this.summaries[this.summaries.length - 1] : null;
    }
}
function summarize(msg) {
    const out = {
        label: msg.label,
        rmseText: String(msg.signal_rmse),
        success: msg.success,
    };
    if (typeof msg.radius_rmse === "number") {
        out.radiusRmseText = String(msg.radius_rmse);
    }
    if (typeof msg.position_rmse === "number") {
        out.positionRmseText = String(msg.position_rmse);
    }
    return out;
}
