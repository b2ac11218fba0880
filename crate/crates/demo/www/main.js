import init, { gamma_curve, gfunction_bounds, morris_convergence } from "./pkg/dgsm_demo.js";

const $ = (id) => document.getElementById(id);
const fmt = (x) => (x === null || x === undefined ? "" : Number(x).toPrecision(4));
const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

function guard(out, fn) {
  try {
    fn();
  } catch (e) {
    $(out).innerHTML = `<p class="err">${e.message ?? e}</p>`;
  }
}

// Line plot. `series` is [{x, y, color, dash}]; logX puts x on a log axis.
function plot(canvas, series, { logX = false, logY = false, xLabel = "", yLabel = "" } = {}) {
  const ctx = canvas.getContext("2d");
  const W = canvas.width, H = canvas.height, L = 60, R = 15, T = 15, B = 40;
  ctx.clearRect(0, 0, W, H);
  const tx = (v) => (logX ? Math.log10(v) : v);
  const ty = (v) => (logY ? Math.log10(Math.max(v, 1e-300)) : v);
  const xs = series.flatMap((s) => s.x.map(tx));
  const ys = series.flatMap((s) => s.y.filter((v) => v !== null).map(ty));
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  let [y0, y1] = [Math.min(...ys), Math.max(...ys)];
  if (!logY) y0 = Math.min(0, y0);
  if (y1 === y0) y1 = y0 + 1;
  const px = (v) => L + ((tx(v) - x0) / (x1 - x0 || 1)) * (W - L - R);
  const py = (v) => H - B - ((ty(v) - y0) / (y1 - y0)) * (H - T - B);

  ctx.strokeStyle = "#999";
  ctx.strokeRect(L, T, W - L - R, H - T - B);
  ctx.fillStyle = "#444";
  ctx.font = "12px system-ui";
  for (let k = 0; k <= 4; k++) {
    const yv = y0 + ((y1 - y0) * k) / 4;
    const label = logY ? `1e${yv.toFixed(1)}` : yv.toPrecision(3);
    ctx.fillText(label, 4, H - B - ((H - T - B) * k) / 4 + 4);
    const xv = x0 + ((x1 - x0) * k) / 4;
    const xl = logX ? (10 ** xv).toPrecision(3) : xv.toPrecision(3);
    ctx.fillText(xl, L + ((W - L - R) * k) / 4 - 12, H - B + 16);
  }
  ctx.fillText(xLabel, W / 2, H - 6);
  ctx.fillText(yLabel, 4, 12);

  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.setLineDash(s.dash ?? []);
    ctx.lineWidth = 2;
    ctx.beginPath();
    s.x.forEach((x, k) => {
      if (s.y[k] === null) return;
      k === 0 ? ctx.moveTo(px(x), py(s.y[k])) : ctx.lineTo(px(x), py(s.y[k]));
    });
    ctx.stroke();
  }
  ctx.setLineDash([]);
}

function runGamma() {
  guard("gm-out", () => {
    const r = JSON.parse(gamma_curve($("gm-a").value, Number($("gm-i").value) - 1, Number($("gm-n").value)));
    $("gm-out").innerHTML =
      `<p>sample m* = ${fmt(r.m_star)}, LB2 = ${fmt(r.lb2)} &nbsp;|&nbsp; ` +
      `closed form m* = ${fmt(r.m_star_closed)}, LB2 = ${fmt(r.lb2_closed)} &nbsp;|&nbsp; ${r.model_evals} evaluations</p>`;
    plot($("gm-plot"), [
      { x: r.m, y: r.gamma_sample, color: COLORS[0] },
      { x: r.m, y: r.gamma_closed, color: COLORS[1], dash: [6, 4] },
    ], { logX: true, xLabel: "m", yLabel: "γ(m)" });
  });
}

function runBounds() {
  guard("gb-out", () => {
    const r = JSON.parse(gfunction_bounds($("gb-a").value, Number($("gb-n").value)));
    const head = "<tr><th>input</th><th>LB*</th><th>S_tot</th><th>UB1</th><th>UB2</th>" +
      "<th>exact LB*</th><th>exact S_tot</th><th>exact UB1</th><th>exact UB2</th></tr>";
    const rows = r.inputs.map((x) =>
      `<tr><td>x${x.input}</td><td>${fmt(x.lb_star)}</td><td>${fmt(x.s_tot)} ± ${fmt(x.s_tot_se)}</td>` +
      `<td>${fmt(x.ub1)}</td><td>${fmt(x.ub2)}</td><td>${fmt(x.exact.lb_star)}</td>` +
      `<td>${fmt(x.exact.s_tot)}</td><td>${fmt(x.exact.ub1)}</td><td>${fmt(x.exact.ub2)}</td></tr>`).join("");
    $("gb-out").innerHTML = `<p>V = ${fmt(r.variance)} (exact ${fmt(r.variance_exact)}), ` +
      `${r.model_evals} evaluations</p><table>${head}${rows}</table>`;
  });
}

function runMorris() {
  guard("mc-out", () => {
    const r = JSON.parse(morris_convergence($("mc-n").value, Number($("mc-seed").value)));
    const series = [];
    r.ub1.forEach((ys, i) => {
      series.push({ x: r.n, y: ys, color: COLORS[i] });
      series.push({ x: r.n, y: r.n.map(() => r.s_tot[i]), color: COLORS[i], dash: [6, 4] });
    });
    plot($("mc-plot"), series, { logX: true, logY: true, xLabel: "n", yLabel: "UB1 (solid), S_tot (dashed)" });
    $("mc-legend").innerHTML = COLORS.map((c, i) => `<span style="color:${c}">&#9632; x${i + 1}</span>`).join("");
    $("mc-out").innerHTML = `<p>S_tot from 20000 pick-freeze rows: ${r.s_tot.map(fmt).join(", ")}</p>`;
  });
}

await init();
$("gm-run").onclick = runGamma;
$("gb-run").onclick = runBounds;
$("mc-run").onclick = runMorris;
runGamma();
runBounds();
runMorris();
