// Input mapping: keyboard, mouse drag, or gamepad to steering intents.
// Pure functions here so bindings are testable without a browser.
export const IDLE_INTENT = { jog: 0, move: [0, 0, 0], direct: null };
export const MOVE_SPEED_M_S = 0.15;
export const GAMEPAD_DEADZONE = 0.15;
export function keyboardIntent(pressed) {
    let jog = 0;
    if (pressed.has("KeyQ") || pressed.has("ArrowUp"))
        jog += 1;
    if (pressed.has("KeyE") || pressed.has("ArrowDown"))
        jog -= 1;
    const move = [0, 0, 0];
    if (pressed.has("KeyW"))
        move[0] += MOVE_SPEED_M_S;
    if (pressed.has("KeyS"))
        move[0] -= MOVE_SPEED_M_S;
    if (pressed.has("KeyA"))
        move[1] += MOVE_SPEED_M_S;
    if (pressed.has("KeyD"))
        move[1] -= MOVE_SPEED_M_S;
    if (pressed.has("KeyR"))
        move[2] += MOVE_SPEED_M_S;
    if (pressed.has("KeyF"))
        move[2] -= MOVE_SPEED_M_S;
    return { jog, move, direct: null };
}
function deadzone(x) {
    return Math.abs(x) < GAMEPAD_DEADZONE ? 0 : x;
}
function negate(x) {
    return x === 0 ? 0 : -x; // avoid -0 artifacts in encoded messages
}
export function gamepadIntent(axes) {
    // left stick pans the hand, right stick vertical jogs the kernel
    const move = [
        negate(deadzone(axes[1] ?? 0)) * MOVE_SPEED_M_S,
        negate(deadzone(axes[0] ?? 0)) * MOVE_SPEED_M_S,
        0,
    ];
    const jog = negate(deadzone(axes[3] ?? 0));
    return { jog, move, direct: null };
}
export function dragIntent(dxPixels, dyPixels, metersPerPixel) {
    const move = [
        0,
        -dxPixels * metersPerPixel,
        -dyPixels * metersPerPixel,
    ];
    return { jog: 0, move, direct: null };
}
export function pickScheme(requested, gamepadAvailable) {
    if (requested === "gamepad" && !gamepadAvailable) {
        return { scheme: "keyboard", notice: "no gamepad detected; falling back to keyboard" };
    }
    return { scheme: requested };
}
export function intentsEqual(a, b) {
    return (a.jog === b.jog &&
        a.move[0] === b.move[0] &&
        a.move[1] === b.move[1] &&
        a.move[2] === b.move[2] &&
        a.direct === b.direct);
}
