import init, { Demo } from "./pkg/simbase_web.js";

const RES = 60;
const COLOURS = [[230, 85, 60], [60, 130, 220], [70, 170, 90]];
const $ = (id) => document.getElementById(id);

await init();
const demo = new Demo(42, 40);
const canvas = $("plane");
const ctx = canvas.getContext("2d");

const gamma = () => 10 ** Number($("gamma").value);
const lambda = () => 10 ** Number($("lambda").value);

function shade() {
  const img = ctx.createImageData(RES, RES);
  const view = $("view").value;
  if (view === "map") {
    const map = demo.decision_map($("method").value, gamma(), lambda(), RES);
    map.forEach((c, i) => paint(img, i, COLOURS[c], 0.35));
  } else {
    const field = demo.evidence_field(Number(view), gamma(), RES);
    field.forEach((v, i) => paint(img, i, COLOURS[Number(view)], v));
  }
  const off = new OffscreenCanvas(RES, RES);
  off.getContext("2d").putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
}

function paint(img, i, rgb, alpha) {
  for (let k = 0; k < 3; k++) img.data[4 * i + k] = 255 - alpha * (255 - rgb[k]);
  img.data[4 * i + 3] = 255;
}

function dots() {
  const pts = demo.points();
  const cls = demo.classes();
  for (let i = 0; i < cls.length; i++) {
    const [x, y] = toCanvas(pts[2 * i], pts[2 * i + 1]);
    ctx.beginPath();
    ctx.arc(x, y, 4, 0, 2 * Math.PI);
    ctx.fillStyle = `rgb(${COLOURS[cls[i]].join(",")})`;
    ctx.fill();
    ctx.strokeStyle = "#222";
    ctx.stroke();
  }
}

function coefficients() {
  const b = demo.coefficients(gamma(), lambda());
  const m = Math.round(Math.sqrt(b.length + 0.25) - 0.5);
  let html = "<tr><th></th><th>b0</th>" + [...Array(m).keys()].map((t) => `<th>e${t}</th>`).join("") + "</tr>";
  for (let k = 0; k < m; k++) {
    html += `<tr><th>class ${k}</th>`;
    for (let j = 0; j <= m; j++) {
      const v = b[k * (m + 1) + j];
      html += `<td class="${v === 0 ? "zero" : ""}">${v.toFixed(2)}</td>`;
    }
    html += "</tr>";
  }
  $("coef").innerHTML = html;
}

function render() {
  $("gamma-v").textContent = gamma().toPrecision(3);
  $("lambda-v").textContent = lambda().toExponential(0);
  try {
    shade();
    dots();
    $("acc").textContent = demo.training_accuracy($("method").value, gamma(), lambda()).toFixed(3);
    coefficients();
    $("status").textContent = "";
  } catch (e) {
    $("status").textContent = String(e);
  }
}

const toCanvas = (x, y) => [((x + 1) / 2) * canvas.width, ((1 - y) / 2) * canvas.height];
const fromCanvas = (px, py) => [(2 * px) / canvas.width - 1, 1 - (2 * py) / canvas.height];

canvas.addEventListener("click", (ev) => {
  if (ev.shiftKey) {
    demo.undo();
  } else {
    const r = canvas.getBoundingClientRect();
    const [x, y] = fromCanvas(ev.clientX - r.left, ev.clientY - r.top);
    demo.add_point(x, y, Number($("cls").value));
  }
  render();
});
for (const id of ["method", "gamma", "lambda", "view"]) $(id).addEventListener("input", render);

render();
