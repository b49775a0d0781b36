import init, { kernel_curve, Workbench } from "./pkg/hyperscene_demo.js";

const CLASS_COLORS = ["#d64545", "#2d9a4b", "#2d5fd0", "#c78f1f", "#7a3fc7", "#1fa8a0"];
const N_CLASSES = 6;

let bench = null;
let queryObjects = [];
let selected = -1;

function $(id) {
  return document.getElementById(id);
}

/* ---------- panel 1: kernel explorer ---------- */

function drawKernel() {
  const w = Math.pow(10, parseFloat($("kernel-w").value));
  $("kernel-w-label").textContent = w.toFixed(2);
  const d = parseInt($("kernel-d").value, 10);
  const points = JSON.parse(kernel_curve(w, d, 42, 1.4, 60));
  const canvas = $("kernel-canvas");
  const ctx = canvas.getContext("2d");
  const left = 44, bottom = 34, top = 12, right = 10;
  const plotW = canvas.width - left - right;
  const plotH = canvas.height - top - bottom;
  const x = (dist) => left + (dist / 1.4) * plotW;
  const y = (sim) => top + (1 - (sim + 0.2) / 1.2) * plotH;

  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#ccd3dc";
  ctx.fillStyle = "#5a6676";
  ctx.font = "11px sans-serif";
  for (const sim of [0, 0.5, 1]) {
    ctx.beginPath();
    ctx.moveTo(left, y(sim));
    ctx.lineTo(canvas.width - right, y(sim));
    ctx.stroke();
    ctx.fillText(sim.toFixed(1), 12, y(sim) + 4);
  }
  for (const dist of [0, 0.5, 1]) {
    ctx.fillText(dist.toFixed(1), x(dist) - 8, canvas.height - 12);
  }
  ctx.fillText("similarity", 4, 10);
  ctx.fillText("displacement", canvas.width / 2 - 30, canvas.height - 2);

  ctx.strokeStyle = "#2d5fd0";
  ctx.lineWidth = 2;
  ctx.beginPath();
  points.forEach((p, i) => {
    if (i === 0) ctx.moveTo(x(p.dist), y(p.analytic));
    else ctx.lineTo(x(p.dist), y(p.analytic));
  });
  ctx.stroke();
  ctx.lineWidth = 1;
  ctx.fillStyle = "#d64545";
  for (const p of points) {
    ctx.beginPath();
    ctx.arc(x(p.dist), y(p.empirical), 2.6, 0, Math.PI * 2);
    ctx.fill();
  }
}

/* ---------- panel 2: retrieval workbench ---------- */

function drawScene(ctx, objects, size, highlight) {
  ctx.clearRect(0, 0, size, size);
  ctx.strokeStyle = "#ccd3dc";
  ctx.strokeRect(0, 0, size, size);
  objects.forEach((o, i) => {
    ctx.fillStyle = CLASS_COLORS[o.class % CLASS_COLORS.length];
    ctx.beginPath();
    ctx.arc(o.x * size, o.y * size, Math.max(4, size * 0.05 * Math.sqrt(o.eta || 1)), 0, Math.PI * 2);
    ctx.fill();
    if (highlight === i) {
      ctx.strokeStyle = "#1c2430";
      ctx.lineWidth = 2;
      ctx.stroke();
      ctx.lineWidth = 1;
    }
  });
}

function drawQuery() {
  const canvas = $("query-canvas");
  drawScene(canvas.getContext("2d"), queryObjects, canvas.width, selected);
}

function renderHits(hits) {
  const container = $("results");
  container.innerHTML = "";
  for (const hit of hits) {
    const cell = document.createElement("div");
    cell.className = "hit";
    const canvas = document.createElement("canvas");
    canvas.width = 86;
    canvas.height = 86;
    cell.appendChild(canvas);
    const label = document.createElement("div");
    label.textContent = `#${hit.image_id} · d=${hit.distance}`;
    cell.appendChild(label);
    container.appendChild(cell);
    drawScene(canvas.getContext("2d"), hit.objects, 86, -1);
  }
}

function refreshResults() {
  if (!bench || queryObjects.length === 0) {
    $("results").innerHTML = "";
    return;
  }
  const etaGlob = Math.pow(10, parseFloat($("eta-glob").value));
  $("eta-glob-label").textContent = etaGlob.toFixed(2);
  const query = { objects: queryObjects, eta_glob: etaGlob };
  try {
    const hits = JSON.parse(bench.retrieve(JSON.stringify(query), 12));
    renderHits(hits);
  } catch (err) {
    $("status").textContent = `query failed: ${err}`;
  }
}

function rebuild() {
  const w = parseFloat($("bench-w").value);
  const trained = $("train-hash").checked;
  $("status").textContent = "building corpus…";
  setTimeout(() => {
    bench = new Workbench(JSON.stringify({
      seed: 7,
      n_images: 120,
      n_classes: N_CLASSES,
      d: 500,
      l_bits: 32,
      w: w,
      train_epochs: trained ? 15 : 0,
    }));
    $("status").textContent =
      `corpus ready: 120 scenes, L = ${bench.l_bits()} bits, w = ${w}, ` +
      (trained ? "trained hyperplanes" : "random hyperplanes");
    refreshResults();
  }, 20);
}

/* ---------- panel 3: scoreboard ---------- */

function scoreTable(title, scores) {
  let html = `<table><tr><th>${title}</th><th>score</th></tr>`;
  html += `<tr><td>mAP@20</td><td>${scores.map_at_k.toFixed(4)}</td></tr>`;
  for (const p of scores.points) {
    html += `<tr><td>mAP@20 (r = ${p.r})</td><td>${p.score.toFixed(4)}</td></tr>`;
  }
  return html + "</table>";
}

function scoreCurrent() {
  if (!bench) return;
  const scores = JSON.parse(bench.spatial_scores(20, "0.1,0.2,0.3"));
  $("score-out").innerHTML = scoreTable(`current corpus (w = ${$("bench-w").value})`, scores);
}

function scoreCompare() {
  $("score-out").textContent = "scoring two corpora…";
  setTimeout(() => {
    const out = [];
    for (const w of [0.1, 10]) {
      const b = new Workbench(JSON.stringify({ seed: 7, w: w, train_epochs: 15 }));
      out.push(scoreTable(`w = ${w}`, JSON.parse(b.spatial_scores(20, "0.1,0.2,0.3"))));
      b.free();
    }
    $("score-out").innerHTML = `<div class="row">${out.join("")}</div>`;
  }, 20);
}

/* ---------- wiring ---------- */

async function main() {
  await init();

  const picker = $("class-picker");
  for (let c = 0; c < N_CLASSES; c++) {
    const option = document.createElement("option");
    option.value = c;
    option.textContent = `class ${c}`;
    option.style.color = CLASS_COLORS[c];
    picker.appendChild(option);
  }

  $("kernel-w").addEventListener("input", drawKernel);
  $("kernel-d").addEventListener("change", drawKernel);
  drawKernel();

  $("query-canvas").addEventListener("click", (event) => {
    const rect = event.target.getBoundingClientRect();
    const x = (event.clientX - rect.left) / rect.width;
    const y = (event.clientY - rect.top) / rect.height;
    // Select a nearby object if clicked, otherwise place a new one.
    const near = queryObjects.findIndex(
      (o) => Math.hypot(o.x - x, o.y - y) < 0.07
    );
    if (near >= 0) {
      selected = near;
    } else {
      queryObjects.push({ class: parseInt(picker.value, 10), x, y, eta: 1.0 });
      selected = queryObjects.length - 1;
    }
    $("eta").value = Math.log10(queryObjects[selected].eta);
    $("eta-label").textContent = queryObjects[selected].eta.toFixed(1);
    drawQuery();
    refreshResults();
  });

  $("eta").addEventListener("input", () => {
    if (selected < 0) return;
    const eta = Math.pow(10, parseFloat($("eta").value));
    queryObjects[selected].eta = eta;
    $("eta-label").textContent = eta.toFixed(1);
    drawQuery();
    refreshResults();
  });

  $("eta-glob").addEventListener("input", refreshResults);

  $("clear-query").addEventListener("click", () => {
    queryObjects = [];
    selected = -1;
    drawQuery();
    refreshResults();
  });

  $("rebuild").addEventListener("click", rebuild);
  $("score").addEventListener("click", scoreCurrent);
  $("score-compare").addEventListener("click", scoreCompare);

  drawQuery();
  rebuild();
}

main();
