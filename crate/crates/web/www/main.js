import init, { box_bound, spherical_triangle, relax_box } from "./pkg/tanbound_web.js";

const $ = (id) => document.getElementById(id);
const fmt = (x) => (Math.abs(x) < 1e-12 ? "0" : x.toPrecision(6));

function show(el, fn) {
  try {
    el.classList.remove("err");
    return fn();
  } catch (e) {
    el.classList.add("err");
    el.textContent = String(e.message ?? e);
  }
}

// --- bound -----------------------------------------------------------------

const omega = [0.125, -0.125, -0.125, 0.125, -0.125, 0.125, 0.125, -0.125];

function buildSliders() {
  const box = $("sliders");
  omega.forEach((w, a) => {
    const label = document.createElement("label");
    label.innerHTML = `Ω<sub>${a}</sub> <input type="range" min="-1" max="1" step="0.125" value="${w}"> <span></span>`;
    const input = label.querySelector("input");
    const span = label.querySelector("span");
    span.textContent = w;
    input.addEventListener("input", () => {
      omega[a] = Number(input.value);
      span.textContent = input.value;
      updateBound();
    });
    box.appendChild(label);
  });
  ["lx", "ly", "lz"].forEach((id) => $(id).addEventListener("input", updateBound));
}

function project([x, y, z], scale) {
  // cabinet projection
  return [40 + scale * (x + 0.45 * y), 280 - scale * (z + 0.35 * y)];
}

function drawBox(r) {
  const ctx = $("box-canvas").getContext("2d");
  ctx.clearRect(0, 0, 320, 320);
  const ext = Math.max(...r.vertices.flat());
  const scale = 180 / ext;
  const p = r.vertices.map((v) => project(v, scale));
  ctx.strokeStyle = "#999";
  for (let a = 0; a < 8; a++) {
    for (let b = a + 1; b < 8; b++) {
      const diff = [0, 1, 2].filter((k) => r.vertices[a][k] !== r.vertices[b][k]).length;
      if (diff === 1) {
        ctx.beginPath();
        ctx.moveTo(...p[a]);
        ctx.lineTo(...p[b]);
        ctx.stroke();
      }
    }
  }
  const maxMass = Math.max(1e-9, ...r.plan.map((arc) => arc.mass));
  ctx.strokeStyle = "#c33";
  for (const arc of r.plan) {
    ctx.lineWidth = 1 + 5 * (arc.mass / maxMass);
    ctx.beginPath();
    ctx.moveTo(...p[arc.from]);
    ctx.lineTo(...p[arc.to]);
    ctx.stroke();
  }
  ctx.lineWidth = 1;
  r.omega.forEach((w, a) => {
    ctx.fillStyle = w > 0 ? "#c33" : w < 0 ? "#36c" : "#777";
    ctx.beginPath();
    ctx.arc(...p[a], 3 + 10 * Math.sqrt(Math.abs(w)), 0, 2 * Math.PI);
    ctx.fill();
    ctx.fillStyle = "#000";
    ctx.fillText(a, p[a][0] + 8, p[a][1] - 8);
  });
}

function updateBound() {
  const out = $("bound-out");
  show(out, () => {
    const r = JSON.parse(box_bound(+$("lx").value, +$("ly").value, +$("lz").value, Float64Array.from(omega)));
    const lines = [
      `bound   ${fmt(r.bound)}  (= ${fmt(r.bound / (8 * Math.PI))} · 8π)`,
      `gap     ${fmt(r.gap)}`,
      r.shift !== 0 ? `mean ${fmt(r.shift)} removed so Σ Ω = 0` : "",
      "",
      "vertex  Ω        ξ",
      ...r.omega.map((w, a) => `${a}       ${fmt(w).padEnd(8)} ${fmt(r.xi[a])}`),
      "",
      "plan (from → to: mass)",
      ...r.plan.map((arc) => `${arc.from} → ${arc.to}: ${fmt(arc.mass)}`),
    ];
    out.textContent = lines.join("\n");
    drawBox(r);
  });
}

// --- spherical triangle ----------------------------------------------------

const corners = { a: [1, 0, 0], b: [0, 1, 0], c: [0, 0, 1], s: [1, 1, 1] };

function buildCorners() {
  const box = $("corners");
  for (const [name, v] of Object.entries(corners)) {
    const label = document.createElement("label");
    label.append(`${name} `);
    v.forEach((x, k) => {
      const input = document.createElement("input");
      input.type = "number";
      input.step = "0.1";
      input.value = x;
      input.addEventListener("input", () => {
        corners[name][k] = Number(input.value);
        updateTriangle();
      });
      label.append(input, " ");
    });
    box.appendChild(label);
  }
}

function updateTriangle() {
  const out = $("tri-out");
  show(out, () => {
    const abc = Float64Array.from([...corners.a, ...corners.b, ...corners.c]);
    const r = JSON.parse(spherical_triangle(abc, Float64Array.from(corners.s)));
    out.textContent = [
      `signed area  ${fmt(r.area)}`,
      `of sphere    ${fmt(r.fraction)}`,
      `σ(s)         ${r.sigma}   (${r.sigma === 0 ? "s outside" : "s inside"})`,
    ].join("\n");
  });
}

// --- relaxation ------------------------------------------------------------

function drawTrace(trace) {
  const ctx = $("trace").getContext("2d");
  const [w, h] = [360, 240];
  ctx.clearRect(0, 0, w, h);
  const es = trace.map((r) => r[1]);
  const [lo, hi] = [Math.min(...es), Math.max(...es)];
  const last = trace[trace.length - 1][0] || 1;
  ctx.strokeStyle = "#36c";
  ctx.beginPath();
  trace.forEach(([it, e], i) => {
    const x = 40 + (w - 50) * (it / last);
    const y = h - 25 - (h - 40) * ((e - lo) / (hi - lo || 1));
    i ? ctx.lineTo(x, y) : ctx.moveTo(x, y);
  });
  ctx.stroke();
  ctx.fillStyle = "#000";
  ctx.fillText(fmt(hi), 2, 15);
  ctx.fillText(fmt(lo), 2, h - 25);
  ctx.fillText(`iteration ${last}`, w - 100, h - 5);
  ctx.fillText("link energy", 40, 12);
}

function drawSlice(s) {
  const ctx = $("slice").getContext("2d");
  ctx.clearRect(0, 0, 320, 320);
  const scale = 280 / Math.max(...s.extent);
  const [dx, dy] = [s.extent[0] / (s.nx - 1), s.extent[1] / (s.ny - 1)];
  const len = 0.4 * Math.min(dx, dy) * scale;
  for (let j = 0; j < s.ny; j++) {
    for (let i = 0; i < s.nx; i++) {
      const [nx, ny, nz] = s.n[j * s.nx + i];
      if (nx === 0 && ny === 0 && nz === 0) continue;
      const cx = 20 + i * dx * scale;
      const cy = 300 - j * dy * scale;
      // colour by the out-of-plane component
      const t = Math.round(127 * (1 + nz));
      ctx.strokeStyle = `rgb(${t}, 60, ${255 - t})`;
      ctx.beginPath();
      ctx.moveTo(cx - len * nx, cy + len * ny);
      ctx.lineTo(cx + len * nx, cy - len * ny);
      ctx.stroke();
      ctx.fillStyle = ctx.strokeStyle;
      ctx.fillRect(cx + len * nx - 1.5, cy - len * ny - 1.5, 3, 3);
    }
  }
  ctx.fillStyle = "#000";
  ctx.fillText(`z = ${fmt(s.z)}`, 4, 12);
}

function runRelax() {
  const out = $("relax-out");
  out.textContent = "relaxing…";
  // let the message paint before the synchronous run
  setTimeout(() =>
    show(out, () => {
      const r = JSON.parse(
        relax_box(+$("lx").value, +$("ly").value, +$("lz").value, $("ansatz").value, +$("cells").value, +$("iters").value),
      );
      const sw = r.sandwich;
      out.textContent = [
        `stop            ${r.stop} after ${r.trace.length - 1} iterations`,
        `step halvings   ${r.halvings}`,
        `seed energy     ${fmt(sw.seed_energy)}`,
        `relaxed energy  ${fmt(sw.relaxed_energy)}`,
        `bound           ${fmt(sw.bound)}`,
        `sandwich        ${sw.passed ? "holds" : "fails"}`,
        sw.class_changes.length ? `class changes:\n  ${sw.class_changes.join("\n  ")}` : "class unchanged",
      ].join("\n");
      drawTrace(r.trace);
      drawSlice(r.slice);
    }),
  );
}

await init();
buildSliders();
buildCorners();
updateBound();
updateTriangle();
$("run").addEventListener("click", runRelax);
