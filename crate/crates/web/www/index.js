import init, { bin_centers, soften, coral_levels, coral_decode, correlations } from "./pkg/ordinal_mos_web.js";

const LO = 1, HI = 5;
const $ = (id) => document.getElementById(id);

function bars(canvas, values, { max = 1, highlight = -1 } = {}) {
  const g = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, n = values.length;
  g.clearRect(0, 0, w, h);
  const bw = w / n;
  values.forEach((v, i) => {
    const bh = (h - 4) * Math.min(v / max, 1);
    g.fillStyle = i === highlight ? "#d2691e" : "#4682b4";
    g.fillRect(i * bw + 1, h - bh, bw - 2, bh);
  });
}

function show(el, text, isError = false) {
  el.textContent = text;
  el.className = isError ? "out err" : "out";
}

function updateSoft() {
  const score = +$("s-score").value, sigma = +$("s-sigma").value, k = +$("s-k").value;
  $("s-score-v").textContent = score.toFixed(2);
  $("s-sigma-v").textContent = sigma.toFixed(2);
  try {
    const v = soften(score, sigma, k, LO, HI);
    const probs = Array.from(v.slice(0, k));
    const top = probs.indexOf(Math.max(...probs));
    bars($("s-plot"), probs, { max: Math.max(...probs), highlight: top });
    const c = bin_centers(k, LO, HI);
    show($("s-out"), `peak bin ${top} (center ${c[top].toFixed(3)}), decoded ${v[k].toFixed(4)}`);
  } catch (e) {
    show($("s-out"), e.message ?? String(e), true);
  }
}

let levels = [];

function drawCoral() {
  bars($("c-plot"), levels);
  const decoded = coral_decode(Float64Array.from(levels), LO, HI);
  show($("c-out"), `${levels.filter((p) => p > 0.5).length} of ${levels.length} levels above 0.5, decoded ${decoded.toFixed(3)}`);
}

function updateCoral() {
  const score = +$("c-score").value;
  $("c-score-v").textContent = score.toFixed(2);
  levels = Array.from(coral_levels(score, 20, LO, HI));
  drawCoral();
}

function parseList(text) {
  return Float64Array.from(text.split(/[\s,]+/).filter(Boolean).map(Number));
}

function updateRank() {
  try {
    const [p, s, k] = correlations(parseList($("r-x").value), parseList($("r-y").value));
    show($("r-out"), `Pearson ${p.toFixed(4)}  Spearman ${s.toFixed(4)}  Kendall tau-b ${k.toFixed(4)}`);
  } catch (e) {
    show($("r-out"), e.message ?? String(e), true);
  }
}

await init();
for (const id of ["s-score", "s-sigma", "s-k"]) $(id).addEventListener("input", updateSoft);
$("c-score").addEventListener("input", updateCoral);
$("c-plot").addEventListener("click", (ev) => {
  const i = Math.floor((ev.offsetX / ev.target.clientWidth) * levels.length);
  levels[i] = levels[i] > 0.5 ? 0 : 1;
  drawCoral();
});
for (const id of ["r-x", "r-y"]) $(id).addEventListener("input", updateRank);
updateSoft();
updateCoral();
updateRank();
