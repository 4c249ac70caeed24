import init, { branch_curves, spectrum, symbol_overlay } from "./pkg/irk_precond_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf", "#bcbd22"];

function status(id, text, isError = false) {
  const el = $(id);
  el.textContent = text;
  el.className = isError ? "status error" : "status";
}

// Maps data coordinates onto a square canvas with equal aspect.
function complexFrame(canvas, cx, cy, half) {
  const s = canvas.width / (2 * half);
  return {
    x: (re) => (re - cx + half) * s,
    y: (im) => canvas.height - (im - cy + half) * s,
    r: (d) => d * s,
  };
}

function axes(ctx, f, canvas) {
  ctx.strokeStyle = "#ddd";
  ctx.beginPath();
  ctx.moveTo(0, f.y(0));
  ctx.lineTo(canvas.width, f.y(0));
  ctx.stroke();
}

function circle(ctx, f, cx, cy, r, color) {
  ctx.strokeStyle = color;
  ctx.setLineDash([5, 4]);
  ctx.beginPath();
  ctx.arc(f.x(cx), f.y(cy), f.r(r), 0, 2 * Math.PI);
  ctx.stroke();
  ctx.setLineDash([]);
}

function drawBranches() {
  const q = num("b-q");
  try {
    const d = branch_curves(q, num("b-lo"), num("b-hi"), 600);
    const [radius, muStar] = d;
    const stride = 1 + 2 * (q - 1);
    const canvas = $("b-canvas");
    const ctx = canvas.getContext("2d");
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    const f = complexFrame(canvas, 0, 0, radius * 1.15);
    axes(ctx, f, canvas);
    circle(ctx, f, 0, 0, radius, "#888");
    for (let k = 0; k < q - 1; k++) {
      ctx.fillStyle = COLORS[k % COLORS.length];
      for (let p = 2; p + stride <= d.length; p += stride) {
        ctx.fillRect(f.x(d[p + 1 + 2 * k]) - 1, f.y(d[p + 2 + 2 * k]) - 1, 2, 2);
      }
    }
    status("b-status", `radius ${radius.toFixed(10)} attained at μ = ${muStar.toPrecision(8)}`);
  } catch (e) {
    status("b-status", String(e), true);
  }
}

function drawSpectrum() {
  try {
    const d = spectrum(num("s-q"), num("s-n"), $("s-bc").value, $("s-tau").value.trim());
    const [tau, radius] = d;
    const canvas = $("s-canvas");
    const ctx = canvas.getContext("2d");
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    const half = Math.max(radius, 1e-3) * 1.15;
    const f = complexFrame(canvas, 1, 0, half);
    axes(ctx, f, canvas);
    circle(ctx, f, 1, 0, radius, "#888");
    ctx.fillStyle = "rgba(31,119,180,0.6)";
    for (let i = 2; i < d.length; i += 2) {
      ctx.beginPath();
      ctx.arc(f.x(d[i]), f.y(d[i + 1]), 2, 0, 2 * Math.PI);
      ctx.fill();
    }
    status("s-status", `${(d.length - 2) / 2} eigenvalues, τ = ${tau.toExponential(4)}, max |λ - 1| = ${radius.toExponential(4)}`);
  } catch (e) {
    status("s-status", String(e), true);
  }
}

function drawOverlay() {
  try {
    const d = symbol_overlay(num("o-q"), num("o-n"), $("o-bc").value, $("o-tau").value.trim());
    const len = d[0];
    const e1 = d.subarray(1, 1 + len);
    const e2 = d.subarray(1 + len, 1 + 2 * len);
    const canvas = $("o-canvas");
    const ctx = canvas.getContext("2d");
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    let lo = Infinity, hi = -Infinity, dev = 0;
    for (let i = 0; i < len; i++) {
      lo = Math.min(lo, e1[i], e2[i]);
      hi = Math.max(hi, e1[i], e2[i]);
      dev = Math.max(dev, Math.abs(e1[i] - e2[i]));
    }
    const pad = 20;
    const sx = (i) => pad + (canvas.width - 2 * pad) * i / Math.max(len - 1, 1);
    const sy = (v) => canvas.height - pad - (canvas.height - 2 * pad) * (v - lo) / Math.max(hi - lo, 1e-12);
    [[e1, COLORS[0]], [e2, COLORS[1]]].forEach(([e, color]) => {
      ctx.strokeStyle = color;
      ctx.beginPath();
      for (let i = 0; i < len; i++) {
        i === 0 ? ctx.moveTo(sx(i), sy(e[i])) : ctx.lineTo(sx(i), sy(e[i]));
      }
      ctx.stroke();
    });
    status("o-status", `blue: computed, red: symbol; ${len} values in [${lo.toFixed(4)}, ${hi.toFixed(4)}], max |E1 - E2| = ${dev.toExponential(3)}`);
  } catch (e) {
    status("o-status", String(e), true);
  }
}

await init();
$("b-go").onclick = drawBranches;
$("s-go").onclick = drawSpectrum;
$("o-go").onclick = drawOverlay;
drawBranches();
drawSpectrum();
drawOverlay();
