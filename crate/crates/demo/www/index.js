import init, { Demo, ste_weights } from "./pkg/ste_deflick_demo.js";

const $ = (id) => document.getElementById(id);
const COLORS = { raw: "#d33", output: "#27c", gt: "#393" };
let demo = null;

function status(text, error = false) {
  $("status").textContent = text;
  $("status").className = error ? "error" : "";
}

function num(id) {
  return Number($(id).value);
}

function clear(canvas) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  return ctx;
}

// Polyline of `ys` scaled into the canvas over [lo, hi].
function polyline(ctx, ys, lo, hi, color, pad = 4) {
  const { width, height } = ctx.canvas;
  const span = hi - lo || 1;
  const x = (i) => pad + (i * (width - 2 * pad)) / Math.max(ys.length - 1, 1);
  const y = (v) => height - pad - ((v - lo) * (height - 2 * pad)) / span;
  ctx.strokeStyle = color;
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  ys.forEach((v, i) => (i ? ctx.lineTo(x(i), y(v)) : ctx.moveTo(x(i), y(v))));
  ctx.stroke();
  return { x, y };
}

function drawWeights() {
  const ctx = clear($("weights"));
  try {
    const w = ste_weights(num("scale"), num("radius"));
    const { width, height } = ctx.canvas;
    const max = Math.max(...w);
    const bw = width / w.length;
    ctx.fillStyle = "#27c";
    w.forEach((v, i) => {
      const h = (v / max) * (height - 4);
      ctx.fillRect(i * bw + 0.5, height - h, Math.max(bw - 1, 1), h);
    });
  } catch (e) {
    status(String(e), true);
  }
}

function drawCurves() {
  const curves = Object.fromEntries(["raw", "output", "gt"].map((k) => [k, demo.mean_curve(k)]));
  const all = Object.values(curves).flat();
  const lo = Math.min(...all);
  const hi = Math.max(...all);
  const ctx = clear($("curves"));
  let axes;
  for (const [k, ys] of Object.entries(curves)) axes = polyline(ctx, ys, lo, hi, COLORS[k]);
  const t = num("scrub");
  ctx.strokeStyle = "#999";
  ctx.beginPath();
  ctx.moveTo(axes.x(t), 0);
  ctx.lineTo(axes.x(t), ctx.canvas.height);
  ctx.stroke();

  const kl = demo.kl_series();
  const th = demo.thresholds();
  const top = Math.max(...kl, ...th, 1e-6);
  const kctx = clear($("kl"));
  polyline(kctx, th, 0, top, "#888");
  const ax = polyline(kctx, kl, 0, top, "#a3c");
  kctx.fillStyle = "#a3c";
  for (const s of demo.singular()) {
    kctx.beginPath();
    kctx.arc(ax.x(s), ax.y(kl[s]), 4, 0, 2 * Math.PI);
    kctx.fill();
  }
}

function drawHistogram(canvas, bins, color) {
  const ctx = clear(canvas);
  const { width, height } = canvas;
  const max = Math.max(...bins) || 1;
  ctx.fillStyle = color;
  bins.forEach((v, i) => {
    const h = (v / max) * height;
    ctx.fillRect((i * width) / 256, height - h, width / 256, h);
  });
}

function drawFrames() {
  const t = num("scrub");
  $("scrubOut").textContent = t;
  const w = demo.width();
  const h = demo.height();
  for (const [k, f, hist] of [["raw", "fraw", "hraw"], ["output", "fout", "hout"], ["gt", "fgt", "hgt"]]) {
    const canvas = $(f);
    canvas.width = w;
    canvas.height = h;
    const rgba = new Uint8ClampedArray(demo.frame_rgba(k, t));
    canvas.getContext("2d").putImageData(new ImageData(rgba, w, h), 0, 0);
    drawHistogram($(hist), demo.histogram(k, t), COLORS[k]);
  }
  drawCurves();
}

function summary(prefix) {
  const raw = demo.mean_psnr("raw").toFixed(2);
  const out = demo.mean_psnr("output").toFixed(2);
  const n = demo.singular().length;
  status(`${prefix}: mean PSNR ${raw} dB raw, ${out} dB output; ${n} singular frames; ${demo.elapsed_ms().toFixed(0)} ms`);
}

function rerun() {
  if (!demo) return;
  try {
    demo.deflicker(num("scale"), num("radius"), num("rho"), $("localRepair").checked);
    summary("Re-run");
    drawFrames();
  } catch (e) {
    status(String(e), true);
  }
}

function generate() {
  status("Working…");
  // Let the status paint before the synchronous pipeline run.
  setTimeout(() => {
    try {
      if (demo) demo.free();
      demo = new Demo(num("size"), num("size"), num("frames"), num("seed"), num("window"), num("local"));
      $("scrub").max = demo.len() - 1;
      $("scrub").value = Math.min(num("scrub"), demo.len() - 1);
      // The clip is built with the default parameters; apply the sliders.
      rerun();
    } catch (e) {
      demo = null;
      status(String(e), true);
    }
  }, 10);
}

await init();
for (const id of ["scale", "radius", "rho"]) {
  $(id).addEventListener("input", () => {
    $(id + "Out").textContent = $(id).value;
    drawWeights();
  });
}
$("generate").addEventListener("click", generate);
$("rerun").addEventListener("click", rerun);
$("scrub").addEventListener("input", () => demo && drawFrames());
drawWeights();
generate();
