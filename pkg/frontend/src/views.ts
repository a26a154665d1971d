// Canvas rendering of server-authoritative state: the experiment tracking
// panel, the sphere-overlap view, orthographic workspace panels, and the
// live strip chart.  No physics and no control math happen here.

import { SessionModel } from "./session.js";

const TARGET_COLOR = "#3366cc";
const ACTUAL_COLOR = "#cc2222";
const GRID_COLOR = "#dddddd";
const NODE_COLOR = "#88aacc";

export function drawTrackingView(canvas: HTMLCanvasElement, model: SessionModel): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const started = model.started;
  if (!started || started.mode !== "exp1" || !started.profile || !started.duration) {
    drawPlaceholder(ctx, w, h, "start an exp1 trial to see the trajectory");
    return;
  }
  const duration = started.duration;
  const toX = (t: number) => (t / duration) * w;
  const toY = (v: number) => h - (v / 100) * h;

  ctx.strokeStyle = GRID_COLOR;
  for (let v = 0; v <= 100; v += 25) {
    line(ctx, 0, toY(v), w, toY(v));
  }

  // target trajectory
  const { times, values } = started.profile;
  ctx.strokeStyle = TARGET_COLOR;
  ctx.lineWidth = 2;
  ctx.beginPath();
  times.forEach((t, i) => {
    if (i === 0) ctx.moveTo(toX(t), toY(values[i]));
    else ctx.lineTo(toX(t), toY(values[i]));
  });
  ctx.stroke();

  // red progress line joining the positions already reached
  if (model.trail.length > 1) {
    ctx.strokeStyle = ACTUAL_COLOR;
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    model.trail.forEach((p, i) => {
      if (i === 0) ctx.moveTo(toX(p.t), toY(p.value));
      else ctx.lineTo(toX(p.t), toY(p.value));
    });
    ctx.stroke();
  }

  // round red pointer at the current value
  const state = model.state;
  if (state) {
    ctx.fillStyle = ACTUAL_COLOR;
    ctx.beginPath();
    ctx.arc(toX(state.t), toY(state.value), 6, 0, 2 * Math.PI);
    ctx.fill();
  }
}

export function drawSphereView(canvas: HTMLCanvasElement, model: SessionModel): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const task = model.state?.task;
  const started = model.started;
  if (!started || !started.mode.startsWith("exp2") || !task) {
    drawPlaceholder(ctx, w, h, "start an exp2 trial to see the spheres");
    return;
  }
  const targetRadius = task["target_radius"] as number | undefined;
  const radius = task["radius"] as number | undefined;
  const center = task["center"] as number[] | undefined;
  const hand = task["hand"] as number[] | undefined;
  if (targetRadius === undefined || radius === undefined) return;
  const scale = (Math.min(w, h) / 2 - 10) / 0.85; // radii stay under 0.80 m
  const cx = w / 2;
  const cy = h / 2;

  ctx.strokeStyle = "#22aa44";
  ctx.lineWidth = 2;
  circle(ctx, cx, cy, targetRadius * scale);

  // the user's sphere is offset by the hand-to-center error (y/z projection)
  let ox = 0;
  let oy = 0;
  if (center && hand) {
    ox = (hand[1] - center[1]) * scale;
    oy = -(hand[2] - center[2]) * scale;
  }
  ctx.strokeStyle = ACTUAL_COLOR;
  circle(ctx, cx + ox, cy + oy, Math.max(radius * scale, 2));
}

export function drawWorkspaceView(canvas: HTMLCanvasElement, model: SessionModel): void {
  // schematic 3-view (xy / xz / yz) of the calibrated workspace with the
  // node layout and the live hand position
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const hello = model.hello;
  if (!hello?.workspace || !hello.node_positions) {
    drawPlaceholder(ctx, w, h, "connect to see the workspace");
    return;
  }
  const nodePositions = hello.node_positions;
  const { lo, hi } = hello.workspace;
  const planes: [number, number, string][] = [
    [0, 1, "xy"],
    [0, 2, "xz"],
    [1, 2, "yz"],
  ];
  const panel = w / 3;
  planes.forEach(([i, j, label], k) => {
    const x0 = k * panel;
    const pad = 18;
    const sx = (panel - 2 * pad) / Math.max(hi[i] - lo[i], 1e-6);
    const sy = (h - 2 * pad) / Math.max(hi[j] - lo[j], 1e-6);
    const s = Math.min(sx, sy);
    const px = (v: number) => x0 + pad + (v - lo[i]) * s;
    const py = (v: number) => h - pad - (v - lo[j]) * s;

    ctx.strokeStyle = GRID_COLOR;
    ctx.strokeRect(px(lo[i]), py(hi[j]), (hi[i] - lo[i]) * s, (hi[j] - lo[j]) * s);
    ctx.fillStyle = "#666666";
    ctx.font = "11px sans-serif";
    ctx.fillText(label, x0 + pad, 12);

    ctx.fillStyle = NODE_COLOR;
    for (const p of nodePositions) {
      dot(ctx, px(p[i]), py(p[j]), 3);
    }
    const hand = model.state?.hand;
    if (hand) {
      ctx.fillStyle = model.state?.inside_hull ? ACTUAL_COLOR : "#ee8800";
      dot(ctx, px(hand[i]), py(hand[j]), 5);
    }
  });
}

export function drawStripChart(canvas: HTMLCanvasElement, model: SessionModel, windowS = 10): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const samples = model.strip;
  if (samples.length < 2) {
    drawPlaceholder(ctx, w, h, "reference vs actual");
    return;
  }
  const tEnd = samples[samples.length - 1].t;
  const tStart = Math.max(0, tEnd - windowS);
  const visible = samples.filter((s) => s.t >= tStart);
  const toX = (t: number) => ((t - tStart) / windowS) * w;
  const toY = (v: number) => h - (v / 100) * h;

  ctx.strokeStyle = GRID_COLOR;
  for (let v = 0; v <= 100; v += 50) line(ctx, 0, toY(v), w, toY(v));

  ctx.strokeStyle = TARGET_COLOR;
  ctx.beginPath();
  let begun = false;
  for (const s of visible) {
    if (s.reference === undefined) continue;
    if (!begun) {
      ctx.moveTo(toX(s.t), toY(s.reference));
      begun = true;
    } else ctx.lineTo(toX(s.t), toY(s.reference));
  }
  ctx.stroke();

  ctx.strokeStyle = ACTUAL_COLOR;
  ctx.beginPath();
  visible.forEach((s, i) => {
    if (i === 0) ctx.moveTo(toX(s.t), toY(s.value));
    else ctx.lineTo(toX(s.t), toY(s.value));
  });
  ctx.stroke();
}

function drawPlaceholder(ctx: CanvasRenderingContext2D, w: number, h: number, text: string): void {
  ctx.fillStyle = "#999999";
  ctx.font = "13px sans-serif";
  ctx.textAlign = "center";
  ctx.fillText(text, w / 2, h / 2);
  ctx.textAlign = "start";
}

function line(ctx: CanvasRenderingContext2D, x0: number, y0: number, x1: number, y1: number): void {
  ctx.beginPath();
  ctx.moveTo(x0, y0);
  ctx.lineTo(x1, y1);
  ctx.stroke();
}

function circle(ctx: CanvasRenderingContext2D, x: number, y: number, r: number): void {
  ctx.beginPath();
  ctx.arc(x, y, r, 0, 2 * Math.PI);
  ctx.stroke();
}

function dot(ctx: CanvasRenderingContext2D, x: number, y: number, r: number): void {
  ctx.beginPath();
  ctx.arc(x, y, r, 0, 2 * Math.PI);
  ctx.fill();
}
