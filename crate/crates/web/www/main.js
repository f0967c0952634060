import init, { scene, edgeAware, metrics, train } from "./pkg/saliency_web.js";

const $ = (id) => document.getElementById(id);
const state = { scene: null, pred: null };

function draw(id, values, w, h, map = (v) => [v * 255, v * 255, v * 255]) {
  const ctx = $(id).getContext("2d");
  const img = ctx.createImageData(w, h);
  values.forEach((v, i) => {
    const [r, g, b] = map(v);
    img.data.set([r, g, b, 255], i * 4);
  });
  ctx.putImageData(img, 0, 0);
}

function status(msg, isError = false) {
  $("status").textContent = msg;
  $("status").className = isError ? "err" : "";
}

function guard(fn) {
  return () => {
    try {
      fn();
    } catch (e) {
      status(String(e.message ?? e), true);
    }
  };
}

function load() {
  const s = JSON.parse(scene(Number($("seed").value) >>> 0));
  state.scene = s;
  state.pred = Float64Array.from(s.image);
  draw("c-image", s.image, s.width, s.height);
  draw("c-gt", s.gt, s.width, s.height);
  draw("c-pred", state.pred, s.width, s.height);
  status("prediction = raw intensity; train to replace it");
}

function args() {
  const s = state.scene;
  return [s.width, s.height, state.pred, Uint8Array.from(s.gt)];
}

function runEdgeAware() {
  const s = state.scene;
  const r = JSON.parse(edgeAware(...args(), Number($("lambda").value)));
  draw("c-pc", r.pred_contour, s.width, s.height);
  draw("c-gc", r.gt_contour, s.width, s.height);
  const peak = Math.max(...r.gradient.map(Math.abs)) || 1;
  draw("c-grad", r.gradient, s.width, s.height, (g) => {
    const t = Math.min(1, Math.abs(g) / peak) * 255;
    return g > 0 ? [255, 255 - t, 255 - t] : [255 - t, 255 - t, 255];
  });
  $("ea-out").textContent = `loss ${r.value.toFixed(4)} (ct ${r.ct.toFixed(4)}, fc ${r.fc.toFixed(4)})`;
}

function polyline(svg, points, w, h, colour) {
  const el = document.createElementNS("http://www.w3.org/2000/svg", "polyline");
  el.setAttribute("points", points.map(([x, y]) => `${x * w},${h - y * h}`).join(" "));
  el.setAttribute("fill", "none");
  el.setAttribute("stroke", colour);
  svg.appendChild(el);
}

function runMetrics() {
  const r = JSON.parse(metrics(...args()));
  const m = r.record;
  const rows = [["max-F", m.max_f], ["ave-F", m.ave_f], ["Fbw", m.fbw], ["MAE", m.mae], ["SM", m.s_measure], ["EM", m.e_measure]];
  $("metrics-out").innerHTML =
    "<table><tr>" + rows.map(([k]) => `<th>${k}</th>`).join("") + "</tr><tr>" +
    rows.map(([, v]) => `<td>${v.toFixed(3)}</td>`).join("") + "</tr></table>";
  const svg = $("plot");
  svg.innerHTML = "";
  const n = r.curve.length - 1;
  polyline(svg, r.curve.map((p, t) => [t / n, p.f]), 420, 240, "#c33");
  polyline(svg, r.curve.map((p) => [p.recall, p.precision]), 420, 240, "#36c");
  $("plot").setAttribute("aria-label", "red: F by threshold; blue: precision against recall");
}

function runTrain() {
  const s = state.scene;
  const started = performance.now();
  const r = JSON.parse(train($("loss").value, Number($("seed").value) >>> 0, Number($("steps").value)));
  state.pred = Float64Array.from(r.prediction);
  draw("c-pred", state.pred, s.width, s.height);
  const last = r.heldout[r.heldout.length - 1];
  const secs = ((performance.now() - started) / 1000).toFixed(1);
  $("train-out").textContent =
    `${r.loss}: held-out max-F ${last.max_f.toFixed(3)}, ave-F ${last.ave_f.toFixed(3)}, MAE ${last.mae.toFixed(3)} (${secs}s)`;
  const svg = $("trace");
  svg.innerHTML = "";
  const hi = Math.max(...r.loss_trace);
  const lo = Math.min(...r.loss_trace);
  const span = hi - lo || 1;
  const n = r.loss_trace.length - 1 || 1;
  polyline(svg, r.loss_trace.map((v, i) => [i / n, (v - lo) / span]), 420, 160, "#333");
  status("prediction = trained model");
}

await init();
$("load").onclick = guard(load);
$("run-ea").onclick = guard(runEdgeAware);
$("run-metrics").onclick = guard(runMetrics);
$("run-train").onclick = guard(runTrain);
guard(load)();
