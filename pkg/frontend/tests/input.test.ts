import assert from "node:assert/strict";
import { test } from "node:test";

import {
  MOVE_SPEED_M_S,
  dragIntent,
  gamepadIntent,
  intentsEqual,
  keyboardIntent,
  pickScheme,
} from "../src/input.js";

test("keyboard mapping: jog keys and hand-move keys", () => {
  assert.deepEqual(keyboardIntent(new Set()), { jog: 0, move: [0, 0, 0], direct: null });
  assert.equal(keyboardIntent(new Set(["KeyQ"])).jog, 1);
  assert.equal(keyboardIntent(new Set(["ArrowDown"])).jog, -1);
  assert.equal(keyboardIntent(new Set(["KeyQ", "KeyE"])).jog, 0);
  const move = keyboardIntent(new Set(["KeyW", "KeyD", "KeyF"])).move;
  assert.deepEqual(move, [MOVE_SPEED_M_S, -MOVE_SPEED_M_S, -MOVE_SPEED_M_S]);
});

test("gamepad mapping applies the deadzone", () => {
  const idle = gamepadIntent([0.05, -0.1, 0, 0.08]);
  assert.deepEqual(idle, { jog: 0, move: [0, 0, 0], direct: null });
  const active = gamepadIntent([0, -1, 0, -0.5]);
  assert.equal(active.jog, 0.5);
  assert.ok(active.move[0] > 0);
});

test("mouse drag converts pixels to hand velocity", () => {
  const intent = dragIntent(10, -20, 0.001);
  assert.deepEqual(intent.move, [0, -0.01, 0.02]);
  assert.equal(intent.jog, 0);
});

test("gamepad absent falls back to keyboard with a notice", () => {
  const fallback = pickScheme("gamepad", false);
  assert.equal(fallback.scheme, "keyboard");
  assert.match(fallback.notice ?? "", /gamepad/);
  const ok = pickScheme("gamepad", true);
  assert.equal(ok.scheme, "gamepad");
  assert.equal(ok.notice, undefined);
});

test("intent equality drives the resend logic", () => {
  const a = keyboardIntent(new Set(["KeyQ"]));
  const b = keyboardIntent(new Set(["KeyQ"]));
  assert.ok(intentsEqual(a, b));
  assert.ok(!intentsEqual(a, keyboardIntent(new Set())));
});
