// Generated by `wasm-bindgen --target web` into ./pkg (see README).
import init, { point_response, RveDemo } from "./pkg/rvemor_web.js";

const $ = (id) => document.getElementById(id);
const status = (msg) => { $("status").textContent = msg; };
let demo = null;

function inputs() {
  return {
    u11: parseFloat($("u11").value),
    u12: parseFloat($("u12").value),
    inc: parseInt($("inc").value, 10),
    div: parseInt($("div").value, 10),
  };
}

function rows(flat, width) {
  const out = [];
  for (let i = 0; i < flat.length; i += width) out.push(Array.from(flat.slice(i, i + width)));
  return out;
}

// series: [{ points: [[x, y], ...], color }]
function plot(canvas, series, xlabel, ylabel, logY = false) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 40;
  ctx.clearRect(0, 0, w, h);
  const tf = (y) => (logY ? Math.log10(Math.max(y, 1e-16)) : y);
  const all = series.flatMap((s) => s.points);
  if (all.length === 0) return;
  let [x0, x1] = [Math.min(...all.map((p) => p[0])), Math.max(...all.map((p) => p[0]))];
  let [y0, y1] = [Math.min(...all.map((p) => tf(p[1]))), Math.max(...all.map((p) => tf(p[1])))];
  if (x1 === x0) x1 = x0 + 1;
  if (y1 === y0) y1 = y0 + 1;
  const sx = (x) => pad + ((x - x0) / (x1 - x0)) * (w - 1.5 * pad);
  const sy = (y) => h - pad - ((tf(y) - y0) / (y1 - y0)) * (h - 1.5 * pad);
  ctx.strokeStyle = "#888";
  ctx.strokeRect(pad, pad / 2, w - 1.5 * pad, h - 1.5 * pad);
  ctx.fillStyle = "#333";
  ctx.font = "11px sans-serif";
  ctx.fillText(xlabel, w / 2 - 20, h - 8);
  ctx.fillText(ylabel, 4, 14);
  ctx.fillText(x0.toPrecision(3), pad, h - pad + 12);
  ctx.fillText(x1.toPrecision(3), w - pad, h - pad + 12);
  ctx.fillText((logY ? "1e" : "") + y1.toPrecision(3), 2, pad / 2 + 10);
  ctx.fillText((logY ? "1e" : "") + y0.toPrecision(3), 2, h - pad);
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.beginPath();
    s.points.forEach(([x, y], i) => (i ? ctx.lineTo(sx(x), sy(y)) : ctx.moveTo(sx(x), sy(y))));
    ctx.stroke();
  }
}

function drawField(canvas, n, phases, lambda) {
  const ctx = canvas.getContext("2d");
  const cell = canvas.width / n;
  const top = Math.max(...lambda, 1e-12);
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  lambda.forEach((l, e) => {
    const i = e % n, j = Math.floor(e / n);
    const t = l / top;
    ctx.fillStyle = phases[e] ? "#446" : `rgb(${Math.round(255 * t)}, ${Math.round(80 + 100 * (1 - t))}, ${Math.round(255 * (1 - t))})`;
    ctx.fillRect(i * cell, canvas.height - (j + 1) * cell, cell, cell);
  });
  ctx.fillStyle = "#fff";
  ctx.fillText(`max λ ${top.toExponential(2)}`, 6, 14);
}

function guarded(fn) {
  return () => {
    try {
      const t = performance.now();
      fn();
      status(status.last + ` (${(performance.now() - t).toFixed(0)} ms)`);
    } catch (e) {
      status(`error: ${e.message ?? e}`);
    }
  };
}
function say(msg) { status.last = msg; status(msg); }

function runPoint() {
  const { u11, u12, inc } = inputs();
  const r = rows(point_response(u11, u12, inc), 5);
  plot($("curve"), [
    { points: r.map((x, k) => [k + 1, x[2]]), color: "#c33" },
    { points: r.map((x, k) => [k + 1, x[3]]), color: "#36c" },
  ], "increment", "P11 (red), P12 (blue)");
  say(`material point: final λ = ${r[r.length - 1][4].toExponential(3)}`);
}

function runRve() {
  const { u11, u12, inc, div } = inputs();
  if (!demo || demo.divisions() !== div) {
    if (demo) demo.free();
    demo = new RveDemo(div);
  }
  const r = rows(demo.run_cyclic(u11, u12, inc), 4);
  plot($("curve"), [
    { points: r.map((x, k) => [k + 1, x[2]]), color: "#c33" },
    { points: r.map((x, k) => [k + 1, x[3]]), color: "#36c" },
  ], "increment", "homogenized P11 (red), P12 (blue)");
  drawField($("field"), div, demo.phases(), Array.from(demo.lambda_field($("end").checked)));
  say(`RVE ${div}×${div}: ${inc} increments solved`);
}

function runPod() {
  if (!demo) runRve();
  const sv = Array.from(demo.pod_spectrum());
  plot($("spectrum"), [{ points: sv.map((s, k) => [k + 1, s]), color: "#393" }], "mode", "σ_k / σ_1 (log)", true);
  say(`POD of ${sv.length} snapshots: σ_5/σ_1 = ${(sv[4] ?? 0).toExponential(2)}`);
}

await init();
$("point").onclick = guarded(runPoint);
$("rve").onclick = guarded(runRve);
$("pod").onclick = guarded(runPod);
$("end").onchange = () => demo && drawField($("field"), demo.divisions(), demo.phases(), Array.from(demo.lambda_field($("end").checked)));
status("ready");
