import init, { kakutaniTrace, grigorchukAction, finitaritySums } from "./pkg/treedyn_wasm.js";

const $ = (id) => document.getElementById(id);
const NS = "http://www.w3.org/2000/svg";
const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

function el(name, attrs, text) {
  const e = document.createElementNS(NS, name);
  for (const [k, v] of Object.entries(attrs)) e.setAttribute(k, v);
  if (text !== undefined) e.textContent = text;
  return e;
}

function call(out, f) {
  out.classList.remove("err");
  try {
    return JSON.parse(f());
  } catch (e) {
    out.classList.add("err");
    out.textContent = String(e);
    return null;
  }
}

function plot(svg, series) {
  svg.replaceChildren();
  const w = +svg.getAttribute("width"), h = +svg.getAttribute("height"), m = 40;
  const pts = series.flatMap((s) => s.ys.filter(Number.isFinite));
  if (!pts.length) return;
  let y0 = Math.min(...pts), y1 = Math.max(...pts);
  if (y1 === y0) { y0 -= 0.5; y1 += 0.5; }
  const n = Math.max(...series.map((s) => s.ys.length));
  const sx = (i) => m + (n > 1 ? (i / (n - 1)) * (w - 2 * m) : 0);
  const sy = (y) => h - m - ((y - y0) / (y1 - y0)) * (h - 2 * m);
  svg.append(el("path", { d: `M${m} ${m} V${h - m} H${w - m}`, fill: "none", stroke: "#000" }));
  svg.append(el("text", { x: m - 4, y: m + 4, "text-anchor": "end", "font-size": 10 }, y1.toPrecision(3)));
  svg.append(el("text", { x: m - 4, y: h - m, "text-anchor": "end", "font-size": 10 }, y0.toPrecision(3)));
  svg.append(el("text", { x: w - m, y: h - m + 14, "text-anchor": "end", "font-size": 10 }, `n = ${n}`));
  series.forEach((s, k) => {
    const d = s.ys.map((y, i) => (Number.isFinite(y) ? `${sx(i).toFixed(1)},${sy(y).toFixed(1)}` : null)).filter(Boolean);
    svg.append(el("polyline", { points: d.join(" "), fill: "none", stroke: COLORS[k % COLORS.length], "stroke-width": 1.5 }));
    svg.append(el("text", { x: w - m - 170, y: m + 12 * k, "font-size": 11, fill: COLORS[k % COLORS.length] }, s.label));
  });
}

function kakutani() {
  const out = $("k-out");
  const r = call(out, () => kakutaniTrace($("k-mu").value, $("k-nu").value, +$("k-n").value));
  if (!r) return;
  out.textContent = `verdict: ${r.verdict} (${r.evidence})`;
  plot($("k-plot"), [{ label: "log Π affinity", ys: r.cumulative_log }]);
}

function grigorchuk() {
  const out = $("g-out"), svg = $("g-plot");
  const r = call(out, () => grigorchukAction($("g-word").value, +$("g-depth").value));
  if (!r) return;
  out.textContent = `element ${r.word}; the group has ${r.group_orbits.length} orbit(s) on level ${r.depth}`;
  svg.replaceChildren();
  const w = +svg.getAttribute("width"), h = +svg.getAttribute("height");
  const rowH = (h - 40) / r.depth;
  const pos = (d, i, count) => [((i + 0.5) / count) * w, 14 + d * rowH];
  const root = pos(0, 0, 1);
  r.levels.forEach((lv, d) => {
    const count = lv.vertices.length;
    lv.vertices.forEach((_, i) => {
      const parentCount = count / 2;
      const [px, py] = d === 0 ? root : pos(d, Math.floor(i / 2), parentCount);
      const [x, y] = pos(d + 1, i, count);
      svg.append(el("line", { x1: px, y1: py, x2: x, y2: y, stroke: "#999" }));
    });
  });
  r.levels.forEach((lv, d) => {
    const parents = d === 0 ? [root] : r.levels[d - 1].vertices.map((_, i, a) => pos(d, i, a.length));
    lv.swaps_above.forEach((s, i) => {
      const [x, y] = parents[i];
      svg.append(el("circle", { cx: x, cy: y, r: 4, fill: s ? "#d62728" : "#555" }));
    });
  });
  const last = r.levels[r.levels.length - 1];
  last.vertices.forEach((v, i) => {
    const [x, y] = pos(r.depth, i, last.vertices.length);
    svg.append(el("circle", { cx: x, cy: y, r: 2.5, fill: "#555" }));
    if (last.vertices.length <= 32) {
      const label = last.vertices[last.image[i]].replace(/[(),]/g, "");
      svg.append(el("text", { x, y: y + 14, "text-anchor": "middle", "font-size": 9 }, label));
    }
  });
}

function finitarity() {
  const out = $("f-out");
  const r = call(out, () => finitaritySums($("f-group").value, $("f-word").value, $("f-mu").value, +$("f-n").value));
  if (!r) return;
  const verdicts = r.verdicts.map((v) => `${v.class}: ${v.holds === null ? "undecided" : v.holds} (${v.evidence})`);
  out.textContent = `element ${r.element}\n|F_n| = ${r.counts.join(", ")}\n${verdicts.join("\n")}`;
  plot($("f-plot"), [
    { label: "Σ μ(F_m)", ys: r.f_partial },
    { label: "Σ μ(F_m⁺)", ys: r.plus_partial },
  ]);
}

await init();
$("k-go").onclick = kakutani;
$("g-go").onclick = grigorchuk;
$("f-go").onclick = finitarity;
kakutani();
grigorchuk();
finitarity();
