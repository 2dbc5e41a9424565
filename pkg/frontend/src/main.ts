// Browser entry point: wires the client to the DOM and paints the scene.

import { ConsoleClient } from "./client.js";
import { render, RenderModel } from "./render.js";
import type { ConsoleState } from "./state.js";

const COLORS: Record<string, string> = {
  table: "#8a6d3b",
  base: "#444",
  arm: "#2c6fbb",
  ee: "#2c6fbb",
  cap: "#d9534f",
  marker: "#5cb85c",
  "wrist-open": "#f0ad4e",
  "wrist-closed": "#c9302c",
  "wrist-neutral": "#999",
  hud: "#222",
};

function paint(canvas: HTMLCanvasElement, model: RenderModel): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  for (const p of model.scene) {
    ctx.strokeStyle = ctx.fillStyle = COLORS[p.style] ?? "#000";
    if (p.kind === "line") {
      ctx.beginPath();
      ctx.moveTo(p.x, p.y);
      ctx.lineTo(p.x2 ?? p.x, p.y2 ?? p.y);
      ctx.lineWidth = p.style === "arm" ? 3 : 2;
      ctx.stroke();
    } else if (p.kind === "circle") {
      ctx.beginPath();
      ctx.arc(p.x, p.y, p.r ?? 3, 0, 2 * Math.PI);
      ctx.fill();
    } else if (p.kind === "rect") {
      ctx.fillRect(p.x, p.y, p.w ?? 2, p.h ?? 2);
    } else if (p.kind === "text" && p.text) {
      ctx.font = "12px monospace";
      ctx.fillText(p.text, p.x, p.y);
    }
  }
}

function gaugeHtml(model: RenderModel): string {
  const bars = model.gauges
    .map((g) => {
      const pct = Math.min(100, (100 * g.value) / g.max);
      const cls = g.violated ? "bar violated" : "bar";
      return `<div class="gauge"><span>${g.label}</span><div class="${cls}" style="width:${pct.toFixed(1)}%"></div><em>${g.text}${g.violated ? " SLIP RISK" : ""}</em></div>`;
    })
    .join("");
  const h = model.heightGauge;
  const hpct = Math.min(100, (100 * h.value) / h.max);
  return (
    bars +
    `<div class="gauge"><span>${h.label}</span><div class="bar height" style="width:${hpct.toFixed(1)}%"></div><em>${h.text}</em></div>`
  );
}

function main(): void {
  const canvas = document.getElementById("scene") as HTMLCanvasElement;
  const banner = document.getElementById("banner")!;
  const status = document.getElementById("status")!;
  const gauges = document.getElementById("gauges")!;
  const timeline = document.getElementById("timeline")!;
  const hint = document.getElementById("hint")!;

  const port = new URLSearchParams(location.search).get("port") ?? "8765";
  const client = new ConsoleClient({
    url: `ws://127.0.0.1:${port}`,
    onChange: (state: ConsoleState) => {
      const model = render(state);
      banner.textContent = model.banner;
      banner.className = model.bannerClass;
      status.textContent = model.connection;
      status.className = `conn-${model.connection}`;
      gauges.innerHTML = gaugeHtml(model);
      timeline.innerHTML = model.timeline
        .slice(-30)
        .map((t) => `<li>${t}</li>`)
        .join("");
      hint.textContent = model.error ? `error: ${model.error}` : model.hint ?? "";
      document.querySelectorAll<HTMLButtonElement>("button[data-gesture]").forEach((b) => {
        b.disabled = !model.buttonsEnabled;
      });
      paint(canvas, model);
    },
  });

  document.querySelectorAll<HTMLButtonElement>("button[data-gesture]").forEach((b) => {
    b.addEventListener("click", () => client.sendGesture(b.dataset.gesture as never));
  });
  document.getElementById("pause")!.addEventListener("click", () => client.pause(true));
  document.getElementById("resume")!.addEventListener("click", () => client.pause(false));
  document.getElementById("step")!.addEventListener("click", () => client.step());
  for (const name of ["mu", "safety_factor", "pull_force"] as const) {
    const input = document.getElementById(`param-${name}`) as HTMLInputElement;
    input.addEventListener("change", () => client.setParam(name, Number(input.value)));
  }

  client.connect();
}

main();
