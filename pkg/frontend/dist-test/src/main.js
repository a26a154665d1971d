// Browser wiring: WebSocket connection, input pumps, render loop.
// Configuration via query parameters: ?server=ws://host:port&mode=exp1
import { IDLE_INTENT, dragIntent, gamepadIntent, intentsEqual, keyboardIntent, pickScheme, } from "./input.js";
import { SessionModel } from "./session.js";
import { drawSphereView, drawStripChart, drawTrackingView, drawWorkspaceView, } from "./views.js";
const INPUT_SEND_HZ = 30;
function byId(id) {
    const el = document.getElementById(id);
    if (!el)
        throw new Error(`missing element #${id}`);
    return el;
}
function main() {
    const params = new URLSearchParams(window.location.search);
    const server = params.get("server") ?? `ws://${window.location.hostname || "127.0.0.1"}:8765`;
    const initialMode = params.get("mode") ?? "free";
    const banner = byId("banner");
    const valueReadout = byId("value");
    const hullWarning = byId("hull-warning");
    const rmseReadout = byId("rmse");
    const modeSelect = byId("mode");
    const schemeSelect = byId("scheme");
    const directSlider = byId("direct-slider");
    const startButton = byId("start");
    const retryButton = byId("retry");
    const trackingCanvas = byId("tracking");
    const sphereCanvas = byId("sphere");
    const workspaceCanvas = byId("workspace");
    const stripCanvas = byId("strip");
    let socket = null;
    let model = new SessionModel({ send: (text) => socket?.send(text) });
    let lastIntent = IDLE_INTENT;
    const pressed = new Set();
    let dragDelta = null;
    let directMode = false;
    function showBanner(text) {
        banner.textContent = text;
        banner.style.display = text ? "block" : "none";
    }
    function connect() {
        showBanner(`connecting to ${server} ...`);
        model = new SessionModel({ send: (text) => socket?.send(text) });
        model.status = "connecting";
        socket = new WebSocket(server);
        const failTimer = window.setTimeout(() => {
            if (model.status === "connecting") {
                showBanner(`no answer from ${server}`);
            }
        }, 2000);
        socket.addEventListener("open", () => {
            model.sendHello();
        });
        socket.addEventListener("message", (event) => {
            const msg = model.ingest(String(event.data));
            if (!msg)
                return;
            if (msg.type === "hello") {
                window.clearTimeout(failTimer);
                showBanner("");
                modeSelect.innerHTML = "";
                for (const mode of model.hello?.modes ?? []) {
                    const opt = document.createElement("option");
                    opt.value = mode;
                    opt.textContent = mode;
                    modeSelect.appendChild(opt);
                }
                modeSelect.value = initialMode;
            }
            else if (msg.type === "result") {
                const s = model.lastSummary();
                if (s) {
                    rmseReadout.textContent =
                        `${s.label}: RMSE ${s.rmseText}` +
                            (s.radiusRmseText ? ` | radius RMSE ${s.radiusRmseText} m` : "") +
                            (s.positionRmseText ? ` | position RMSE ${s.positionRmseText} m` : "");
                }
            }
            else if (msg.type === "error") {
                showBanner(`server error: ${model.statusMessage}`);
            }
        });
        socket.addEventListener("close", () => {
            if (model.status !== "error") {
                showBanner("connection closed");
            }
        });
        socket.addEventListener("error", () => {
            showBanner(`cannot reach ${server}`);
        });
    }
    // -- input ------------------------------------------------------------------
    document.addEventListener("keydown", (e) => {
        pressed.add(e.code);
    });
    document.addEventListener("keyup", (e) => {
        pressed.delete(e.code);
    });
    let dragging = false;
    let dragLast = [0, 0];
    workspaceCanvas.addEventListener("mousedown", (e) => {
        dragging = true;
        dragLast = [e.clientX, e.clientY];
    });
    window.addEventListener("mouseup", () => {
        dragging = false;
        dragDelta = null;
    });
    window.addEventListener("mousemove", (e) => {
        if (dragging) {
            dragDelta = [e.clientX - dragLast[0], e.clientY - dragLast[1]];
            dragLast = [e.clientX, e.clientY];
        }
    });
    directSlider.addEventListener("input", () => {
        directMode = true;
    });
    schemeSelect.addEventListener("change", () => {
        directMode = false;
    });
    startButton.addEventListener("click", () => {
        const seed = Number(params.get("seed") ?? 1);
        model.sendStart(modeSelect.value, seed);
        rmseReadout.textContent = "";
        directMode = false;
    });
    retryButton.addEventListener("click", connect);
    function currentIntent() {
        if (directMode) {
            return { jog: 0, move: [0, 0, 0], direct: Number(directSlider.value) };
        }
        const requested = schemeSelect.value;
        const pads = navigator.getGamepads ? navigator.getGamepads() : [];
        const pad = pads && pads[0];
        const choice = pickScheme(requested, !!pad);
        if (choice.notice)
            showBanner(choice.notice);
        if (choice.scheme === "gamepad" && pad) {
            return gamepadIntent(pad.axes);
        }
        if (choice.scheme === "mouse" && dragDelta) {
            const intent = dragIntent(dragDelta[0], dragDelta[1], 0.001);
            dragDelta = null;
            return intent;
        }
        return keyboardIntent(pressed);
    }
    window.setInterval(() => {
        if (!socket || socket.readyState !== WebSocket.OPEN || !model.hello)
            return;
        const intent = currentIntent();
        if (intent.direct !== null) {
            model.sendDirect(intent.direct);
            lastIntent = intent;
            return;
        }
        // re-send only on change; zero intents are sent once to stop motion
        if (!intentsEqual(intent, lastIntent)) {
            if (intent.jog !== lastIntent.jog)
                model.sendJog(intent.jog);
            const moved = intent.move[0] !== lastIntent.move[0] ||
                intent.move[1] !== lastIntent.move[1] ||
                intent.move[2] !== lastIntent.move[2];
            if (moved)
                model.sendIkMove(intent.move);
            lastIntent = intent;
        }
        else if (intent.jog !== 0 || intent.move.some((v) => v !== 0)) {
            // keep-alive so the server's stall detector stays quiet while steering
            if (intent.jog !== 0)
                model.sendJog(intent.jog);
            else
                model.sendIkMove(intent.move);
        }
    }, 1000 / INPUT_SEND_HZ);
    function render() {
        const state = model.state;
        if (state) {
            valueReadout.textContent = state.value.toFixed(1);
            hullWarning.style.display = state.inside_hull ? "none" : "inline";
        }
        const mode = model.started?.mode;
        trackingCanvas.style.display = mode === "exp1" ? "block" : "none";
        sphereCanvas.style.display = mode?.startsWith("exp2") ? "block" : "none";
        if (mode === "exp1")
            drawTrackingView(trackingCanvas, model);
        if (mode?.startsWith("exp2"))
            drawSphereView(sphereCanvas, model);
        drawWorkspaceView(workspaceCanvas, model);
        drawStripChart(stripCanvas, model);
        window.requestAnimationFrame(render);
    }
    connect();
    window.requestAnimationFrame(render);
}
window.addEventListener("load", main);
