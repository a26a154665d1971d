import assert from "node:assert/strict";
import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { test } from "node:test";
import { fileURLToPath } from "node:url";
import { SessionModel } from "../src/session.js";
const FIXTURE = join(dirname(fileURLToPath(import.meta.url)), "..", "..", "tests", "fixtures", "exp1-transcript.jsonl");
class FakeTransport {
    sent = [];
    send(text) {
        this.sent.push(text);
    }
}
function transcriptLines() {
    return readFileSync(FIXTURE, "utf-8").trim().split("\n");
}
test("a recorded transcript renders the final RMSE exactly as sent", () => {
    const transport = new FakeTransport();
    const model = new SessionModel(transport);
    const lines = transcriptLines();
    for (const line of lines) {
        model.ingest(line);
    }
    const resultLine = lines[lines.length - 1];
    const sentRmse = /"signal_rmse":([0-9.eE+-]+)/.exec(resultLine)?.[1];
    assert.ok(sentRmse, "fixture must end with a result carrying signal_rmse");
    const summary = model.lastSummary();
    assert.ok(summary);
    assert.equal(summary.rmseText, sentRmse);
    assert.equal(summary.rmseText, String(JSON.parse(resultLine).signal_rmse));
    assert.equal(summary.success, true);
});
test("stale frames are dropped without rewinding the state mirror", () => {
    const model = new SessionModel(new FakeTransport());
    const lines = transcriptLines();
    let lastAcceptedT = -1;
    let sawDrop = false;
    for (const line of lines) {
        const before = model.state?.t ?? -1;
        const accepted = model.ingest(line);
        if (accepted === null) {
            sawDrop = true;
            assert.equal(model.state?.t ?? -1, before, "dropped frame must not change state");
        }
        if (model.state) {
            assert.ok(model.state.t >= lastAcceptedT, "state time must never rewind");
            lastAcceptedT = model.state.t;
        }
    }
    assert.ok(sawDrop, "the fixture contains one out-of-order frame");
    assert.equal(model.droppedFrames, 1);
});
test("hello populates the mode list and workspace geometry", () => {
    const model = new SessionModel(new FakeTransport());
    for (const line of transcriptLines())
        model.ingest(line);
    assert.ok(model.hello);
    assert.deepEqual(model.hello.modes, ["free", "exp1", "exp2-single", "exp2-parallel"]);
    assert.equal(model.hello.joints, 7);
    assert.equal(model.hello.nodes, 10);
    assert.ok(model.hello.workspace);
    assert.equal(model.hello.node_positions?.length, 10);
});
test("jog input produces outbound messages matching the wire schema", () => {
    const transport = new FakeTransport();
    const model = new SessionModel(transport);
    model.sendHello();
    model.sendStart("exp1", 2);
    model.sendJog(0.5);
    model.sendJog(-1);
    model.sendIkMove([0.1, 0, 0]);
    model.sendDirect(73);
    assert.deepEqual(transport.sent, [
        '{"v":1,"seq":1,"type":"hello"}',
        '{"v":1,"seq":2,"type":"start","mode":"exp1","seed":2}',
        '{"v":1,"seq":3,"type":"jog","u":0.5}',
        '{"v":1,"seq":4,"type":"jog","u":-1}',
        '{"v":1,"seq":5,"type":"ik_move","dx":[0.1,0,0]}',
        '{"v":1,"seq":6,"type":"direct","value":73}',
    ]);
});
test("strip chart history tracks state values with references", () => {
    const model = new SessionModel(new FakeTransport());
    for (const line of transcriptLines())
        model.ingest(line);
    assert.ok(model.strip.length > 10);
    const withRef = model.strip.filter((s) => s.reference !== undefined);
    assert.ok(withRef.length > 0, "exp1 states carry the reference value");
    for (const s of model.strip) {
        assert.ok(s.value >= 0 && s.value <= 100);
    }
});
test("malformed frames set the error status instead of throwing", () => {
    const model = new SessionModel(new FakeTransport());
    const out = model.ingest("{broken");
    assert.equal(out, null);
    assert.equal(model.status, "error");
});
