import init, { lr_curve, saliency_demo, confusion_metrics } from "./pkg/attnpool_demo.js";

const $ = (id) => document.getElementById(id);

function line(canvas, ys, color, yMax) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const top = yMax ?? Math.max(...ys, 1e-12);
  ctx.strokeStyle = color;
  ctx.beginPath();
  ys.forEach((y, i) => {
    const x = ys.length > 1 ? (i / (ys.length - 1)) * (w - 20) + 10 : w / 2;
    const py = h - 10 - (y / top) * (h - 20);
    i ? ctx.lineTo(x, py) : ctx.moveTo(x, py);
  });
  ctx.stroke();
}

function clear(canvas) {
  canvas.getContext("2d").clearRect(0, 0, canvas.width, canvas.height);
}

function plotLr() {
  const canvas = $("lr-canvas");
  clear(canvas);
  try {
    const lrs = JSON.parse(lr_curve(+$("lr-steps").value, +$("lr-peak").value, +$("lr-warm").value));
    line(canvas, lrs, "#1565c0");
    $("lr-msg").textContent = `peak ${Math.max(...lrs).toExponential(3)}, last ${lrs.at(-1).toExponential(3)}`;
    $("lr-msg").className = "";
  } catch (e) {
    $("lr-msg").textContent = e.message;
    $("lr-msg").className = "err";
  }
}

function train() {
  const loss = $("sal-loss"), attn = $("sal-attn");
  clear(loss);
  clear(attn);
  $("sal-msg").textContent = "training...";
  setTimeout(() => {
    try {
      const run = JSON.parse(saliency_demo($("sal-pool").value, BigInt($("sal-seed").value), +$("sal-epochs").value, +$("sal-sigma").value));
      line(loss, run.losses, "#c62828");
      line(loss, run.accuracies, "#2e7d32", 1);
      const ctx = attn.getContext("2d");
      const n = run.attention.length, bw = (attn.width - 20) / n, top = Math.max(...run.attention);
      run.attention.forEach((a, t) => {
        ctx.fillStyle = run.salient.includes(t) ? "#ef6c00" : "#90a4ae";
        const bh = (a / top) * (attn.height - 20);
        ctx.fillRect(10 + t * bw, attn.height - 10 - bh, bw - 1, bh);
      });
      $("sal-msg").textContent =
        `final loss ${run.losses.at(-1).toFixed(3)}, held-out accuracy ${(100 * run.held_out_accuracy).toFixed(1)}%, ` +
        `shown utterance: label ${run.label}, predicted ${run.predicted}; salient frames in orange`;
      $("sal-msg").className = "";
    } catch (e) {
      $("sal-msg").textContent = e.message;
      $("sal-msg").className = "err";
    }
  }, 10);
}

function metrics() {
  try {
    const m = JSON.parse(confusion_metrics($("cm-text").value));
    const pct = (x) => (100 * x).toFixed(2);
    $("cm-out").textContent =
      `WA ${pct(m.wa)}  UA ${pct(m.ua)}  macro F1 ${pct(m.macro_f1)}\n` +
      m.recall.map((r, i) => `class ${i}: recall ${pct(r)} precision ${pct(m.precision[i])} F1 ${pct(m.f1[i])}`).join("\n");
  } catch (e) {
    $("cm-out").textContent = e.message;
  }
}

await init();
$("lr-go").onclick = plotLr;
$("sal-go").onclick = train;
$("cm-go").onclick = metrics;
plotLr();
metrics();
