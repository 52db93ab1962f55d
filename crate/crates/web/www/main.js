import init, { gumbel_histogram, category_probabilities, Session } from "./pkg/commrelabel_web.js";

const $ = (id) => document.getElementById(id);
const NS = "http://www.w3.org/2000/svg";
const COLOURS = ["#d62728", "#2ca02c", "#1f77b4", "#ff7f0e", "#9467bd"];

function svgEl(parent, name, attrs, text) {
  const e = document.createElementNS(NS, name);
  for (const [k, v] of Object.entries(attrs)) e.setAttribute(k, v);
  if (text !== undefined) e.textContent = text;
  parent.appendChild(e);
  return e;
}

function clear(node) {
  while (node.firstChild) node.removeChild(node.firstChild);
}

function drawHistogram() {
  const logits = new Float64Array($("logits").value.split(",").map(Number));
  const draws = Number($("draws").value);
  const counts = gumbel_histogram(logits, 1.0, draws, BigInt(Date.now() % 100000));
  const probs = category_probabilities(logits);
  const svg = $("histogram");
  clear(svg);
  const w = 500 / counts.length;
  const top = Math.max(...probs, ...Array.from(counts, (c) => c / draws));
  counts.forEach((c, i) => {
    const h = (180 * c) / draws / top;
    svgEl(svg, "rect", { x: 10 + i * w, y: 195 - h, width: w * 0.6, height: h, fill: "#1f77b4" });
    const p = (180 * probs[i]) / top;
    svgEl(svg, "line", { x1: 10 + i * w, x2: 10 + i * w + w * 0.6, y1: 195 - p, y2: 195 - p, stroke: "#d62728", "stroke-width": 2 });
    svgEl(svg, "text", { x: 10 + i * w, y: 212, "font-size": 11 }, `${(c / draws).toFixed(3)} / ${probs[i].toFixed(3)}`);
  });
}

let session = null;
let curve = [];

function newSession() {
  if (session) session.free();
  session = new Session($("scenario").value, $("correction").value, BigInt($("seed").value));
  curve = [];
  drawCurve();
  $("status").textContent = "0 episodes";
}

function drawCurve() {
  const svg = $("curve");
  clear(svg);
  if (curve.length < 2) return;
  const lo = Math.min(...curve), hi = Math.max(...curve);
  const span = hi - lo || 1;
  const pts = curve.map((v, i) => `${10 + (500 * i) / (curve.length - 1)},${150 - (130 * (v - lo)) / span}`);
  svgEl(svg, "polyline", { points: pts.join(" "), fill: "none", stroke: "#1f77b4", "stroke-width": 1.5 });
  svgEl(svg, "text", { x: 12, y: 14, "font-size": 11 }, `mean return per 100 episodes: ${lo.toFixed(2)} to ${hi.toFixed(2)}`);
}

function train() {
  $("status").textContent = "training...";
  setTimeout(() => {
    const t = performance.now();
    const r = session.train(100);
    curve.push(r);
    drawCurve();
    $("status").textContent = `${session.episodes} episodes, last block ${r.toFixed(2)} (${((performance.now() - t) / 1000).toFixed(1)}s)`;
  }, 10);
}

function play() {
  const trace = JSON.parse(session.rollout(BigInt(Math.floor(Math.random() * 1e6))));
  $("return").textContent = `team return ${trace.team_return.toFixed(2)}`;
  const ctx = $("world").getContext("2d");
  const px = (p) => [180 + p[0] * 120, 180 - p[1] * 120];
  let f = 0;
  const frame = () => {
    ctx.clearRect(0, 0, 360, 360);
    trace.landmarks.forEach((l, i) => {
      const [x, y] = px(l);
      ctx.fillStyle = COLOURS[i % COLOURS.length];
      ctx.fillRect(x - 6, y - 6, 12, 12);
    });
    trace.frames[f].agents.forEach((a, i) => {
      const [x, y] = px(a);
      ctx.beginPath();
      ctx.arc(x, y, 7, 0, 2 * Math.PI);
      ctx.fillStyle = "#555";
      ctx.fill();
      ctx.fillStyle = "#fff";
      ctx.fillText(String(i), x - 3, y + 4);
    });
    $("messages").textContent = `step ${f}  messages ${JSON.stringify(trace.frames[f].messages)}  reward ${trace.frames[f].reward.toFixed(3)}`;
    f += 1;
    if (f < trace.frames.length) setTimeout(frame, 120);
  };
  frame();
}

function relabel() {
  const s = JSON.parse(session.staleness(20));
  const svg = $("staleness");
  clear(svg);
  const cw = 500 / s.steps, ch = 150 / s.mismatch.length;
  s.mismatch.forEach((row, k) => {
    svgEl(svg, "text", { x: 2, y: 20 + k * ch + ch / 2, "font-size": 11 }, k === 0 ? "stored" : `K=${k}`);
    row.forEach((v, t) => {
      const shade = Math.round(255 * (1 - Math.min(1, v * 2)));
      const cell = svgEl(svg, "rect", { x: 50 + t * cw, y: 10 + k * ch, width: cw - 1, height: ch - 1, fill: `rgb(255,${shade},${shade})` });
      svgEl(cell, "title", {}, `K=${k} step ${t}: ${v.toFixed(3)}`);
    });
  });
  svgEl(svg, "text", { x: 50, y: 190, "font-size": 11 }, "episode step →");
}

await init();
$("sample").onclick = drawHistogram;
$("reset").onclick = newSession;
$("train").onclick = train;
$("play").onclick = play;
$("relabel").onclick = relabel;
newSession();
drawHistogram();
