import init, { sinusoidDemo, jumpDemo, betaCurve } from "./pkg/assim_wasm_demo.js";

const COLORS = { truth: "#222", PBDW: "#d62728", bPBDW: "#1f77b4", sPBDW: "#2ca02c", beta: "#9467bd" };
const num = (id) => Number(document.getElementById(id).value);

function bounds(series) {
  let lo = Infinity, hi = -Infinity;
  for (const s of series) for (const v of s) { lo = Math.min(lo, v); hi = Math.max(hi, v); }
  if (lo === hi) { lo -= 1; hi += 1; }
  const pad = 0.05 * (hi - lo);
  return [lo - pad, hi + pad];
}

function plot(canvas, x, curves, marks = []) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const [x0, x1] = [x[0], x[x.length - 1]];
  const [y0, y1] = bounds(curves.map((c) => c.values));
  const px = (v) => 30 + ((v - x0) / (x1 - x0)) * (w - 40);
  const py = (v) => h - 20 - ((v - y0) / (y1 - y0)) * (h - 30);
  ctx.strokeStyle = "#ddd";
  ctx.beginPath();
  ctx.moveTo(px(x0), py(0)); ctx.lineTo(px(x1), py(0));
  ctx.stroke();
  for (const m of marks) {
    ctx.fillStyle = m.color;
    ctx.fillRect(px(m.x) - 2, py(m.y) - 2, 4, 4);
  }
  for (const c of curves) {
    ctx.strokeStyle = COLORS[c.label] || "#888";
    ctx.lineWidth = c.label === "truth" ? 2 : 1.2;
    ctx.beginPath();
    c.values.forEach((v, k) => (k ? ctx.lineTo(px(x[k]), py(v)) : ctx.moveTo(px(x[k]), py(v))));
    ctx.stroke();
  }
  ctx.fillStyle = "#555";
  ctx.fillText(y1.toPrecision(3), 2, 12);
  ctx.fillText(y0.toPrecision(3), 2, h - 22);
}

function legend(el, r, extra = "") {
  el.innerHTML =
    r.curves
      .map((c) => `<span style="color:${COLORS[c.label]}">${c.label}` +
        (c.error === null || c.label === "truth" ? "" : `: ${(100 * c.error).toFixed(2)}%`) + "</span>")
      .join("") + `<span>β = ${r.beta.toFixed(4)}</span>` + extra;
}

function guarded(el, f) {
  try { f(); } catch (e) { el.innerHTML = `<span class="err">${e.message || e}</span>`; }
}

function sensorMarks(r) {
  // Place each reading at its sensor centre; box readings are local averages.
  return r.sensors.map((x, i) => ({ x, y: r.readings[i], color: "#ff7f0e" }));
}

function runSinusoid() {
  const info = document.getElementById("s-info");
  guarded(info, () => {
    const r = JSON.parse(sinusoidDemo(num("s-n"), num("s-m"), num("s-alpha"), num("s-sigma"), num("s-seed")));
    plot(document.getElementById("s-plot"), r.x, r.curves, sensorMarks(r));
    legend(info, r, '<span style="color:#ff7f0e">sensor readings</span>');
  });
}

function runJump() {
  const info = document.getElementById("j-info");
  guarded(info, () => {
    const r = JSON.parse(jumpDemo(num("j-loc"), num("j-h"), num("j-m"), num("j-n"), num("j-seed")));
    plot(document.getElementById("j-plot"), r.x, r.curves, sensorMarks(r));
    const jumps = r.jumps.map((j) => j.toFixed(3)).join(", ") || "none";
    legend(info, r, `<span>steps at ${jumps}</span>`);
  });
}

function runBeta() {
  const info = document.getElementById("b-info");
  guarded(info, () => {
    const r = JSON.parse(betaCurve(num("b-m"), num("b-n")));
    plot(document.getElementById("b-plot"), r.n, [{ label: "beta", values: r.beta }]);
    info.textContent = r.n.map((n, k) => `n=${n}: ${r.beta[k].toFixed(3)}`).join("  ");
  });
}

await init();
document.getElementById("s-run").onclick = runSinusoid;
document.getElementById("j-run").onclick = runJump;
document.getElementById("b-run").onclick = runBeta;
runSinusoid();
runJump();
runBeta();
