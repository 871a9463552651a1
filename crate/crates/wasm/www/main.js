import init, { proxCurve, simulateAndFit, lambdaPath } from "./pkg/nnqr_wasm.js";

const $ = (id) => document.getElementById(id);

function axes(ctx, w, h) {
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#bbb";
  ctx.beginPath();
  ctx.moveTo(0, h / 2); ctx.lineTo(w, h / 2);
  ctx.moveTo(w / 2, 0); ctx.lineTo(w / 2, h);
  ctx.stroke();
}

function line(ctx, xs, ys, sx, sy, color) {
  ctx.strokeStyle = color;
  ctx.beginPath();
  xs.forEach((x, k) => {
    const px = sx(x), py = sy(ys[k]);
    k === 0 ? ctx.moveTo(px, py) : ctx.lineTo(px, py);
  });
  ctx.stroke();
}

function drawProx() {
  const u = +$("prox-u").value, c = +$("prox-c").value;
  $("prox-label").textContent = `u = ${u.toFixed(2)}, c = ${c.toFixed(1)}`;
  const flat = proxCurve(u, c, -3, 3, 241);
  const g = [], p = [], l = [];
  for (let k = 0; k < flat.length; k += 3) { g.push(flat[k]); p.push(flat[k + 1]); l.push(flat[k + 2]); }
  const cv = $("prox-canvas"), ctx = cv.getContext("2d");
  const sx = (x) => (x + 3) / 6 * cv.width, sy = (y) => cv.height / 2 - y / 6 * cv.height;
  axes(ctx, cv.width, cv.height);
  line(ctx, g, g, sx, sy, "#ccc");
  line(ctx, g, l, sx, sy, "#e08a00");
  line(ctx, g, p, sx, sy, "#1f5fbf");
}

function drawBars(ctx, w, h, values, truth, threshold) {
  ctx.clearRect(0, 0, w, h);
  const k = Math.min(values.length, 12);
  const top = Math.max(values[0] || 1, truth[0] || 1, threshold) * 1.05;
  const bw = w / (2 * k + 1);
  for (let i = 0; i < k; i++) {
    const x = bw * (2 * i + 0.5);
    ctx.fillStyle = "#1f5fbf";
    ctx.fillRect(x, h - values[i] / top * h, bw * 0.9, values[i] / top * h);
    ctx.fillStyle = "#999";
    ctx.fillRect(x + bw * 0.9, h - (truth[i] || 0) / top * h, bw * 0.9, (truth[i] || 0) / top * h);
  }
  ctx.strokeStyle = "#c00";
  ctx.beginPath();
  ctx.moveTo(0, h - threshold / top * h); ctx.lineTo(w, h - threshold / top * h);
  ctx.stroke();
}

function runFit() {
  const v = simulateAndFit(+$("fit-n").value, +$("fit-t").value, +$("fit-u").value, +$("fit-phi").value,
    $("fit-t2").checked, +$("fit-seed").value, +$("fit-scale").value);
  const cv = $("fit-canvas");
  drawBars(cv.getContext("2d"), cv.width, cv.height, Array.from(v.singulars), Array.from(v.trueSingulars), v.threshold);
  const fmt = (a) => Array.from(a).map((x) => x.toFixed(3)).join(", ");
  $("fit-out").textContent =
    `beta      ${fmt(v.beta)}\nbeta true ${fmt(v.betaTrue)}\n` +
    `rank estimate ${v.rHat} (terms in truth: ${v.rTrue}), threshold ${v.threshold.toFixed(2)}\n` +
    `lambda ${v.lambda.toExponential(3)}, iterations ${v.iterations}, converged ${v.converged}, MSE_L ${v.mseL.toFixed(3)}\n` +
    `blue: fitted singular values, grey: truth, red: rank threshold`;
}

function runPath() {
  const n = +$("path-n").value;
  const scales = [0.03, 0.1, 0.3, 1, 3];
  const flat = lambdaPath(n, n, +$("path-u").value, 1, new Float64Array(scales));
  let out = "scale   r_hat   MSE_L     |beta err|^2\n";
  for (let k = 0; k < flat.length; k += 4) {
    out += `${flat[k].toFixed(2).padEnd(8)}${String(flat[k + 1]).padEnd(8)}${flat[k + 2].toFixed(4).padEnd(10)}${flat[k + 3].toFixed(4)}\n`;
  }
  $("path-out").textContent = out;
}

await init();
["prox-u", "prox-c"].forEach((id) => $(id).addEventListener("input", drawProx));
$("fit-run").addEventListener("click", runFit);
$("path-run").addEventListener("click", runPath);
drawProx();
