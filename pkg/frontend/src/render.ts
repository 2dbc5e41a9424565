// Pure rendering: ConsoleState -> RenderModel. The DOM/canvas layer only
// paints what this module computes, so the same state fixture always
// yields the same render output byte for byte.

import type { ConsoleState } from "./state.js";

export interface GaugeModel {
  label: string;
  value: number;
  max: number;
  text: string;
  violated: boolean;
}

export interface DrawPrimitive {
  kind: "line" | "circle" | "rect" | "text";
  x: number;
  y: number;
  x2?: number;
  y2?: number;
  r?: number;
  w?: number;
  h?: number;
  text?: string;
  style: string;
}

export interface RenderModel {
  banner: string;
  bannerClass: string;
  connection: string;
  gauges: GaugeModel[];
  heightGauge: { label: string; value: number; max: number; text: string };
  timeline: string[];
  scene: DrawPrimitive[];
  buttonsEnabled: boolean;
  error: string | null;
  hint: string | null;
  paramPanel: { mu: number; safety_factor: number; pull_force: number };
}

// side view: world x (m) maps to canvas x, world z maps to inverted y
const VIEW = { x0: -0.2, x1: 1.4, z0: -0.1, z1: 1.1, width: 640, height: 480 };

export function worldToCanvas(x: number, z: number): { x: number; y: number } {
  return {
    x: ((x - VIEW.x0) / (VIEW.x1 - VIEW.x0)) * VIEW.width,
    y: VIEW.height - ((z - VIEW.z0) / (VIEW.z1 - VIEW.z0)) * VIEW.height,
  };
}

function round3(v: number): number {
  return Math.round(v * 1000) / 1000;
}

export function render(state: ConsoleState): RenderModel {
  const snap = state.snapshot;
  const connected = state.connection === "connected";
  const banner = snap ? snap.phase : "waiting";
  const scene: DrawPrimitive[] = [];

  if (snap) {
    // table line
    const t0 = worldToCanvas(0.3, 0.0);
    const t1 = worldToCanvas(0.9, 0.0);
    scene.push({ kind: "line", x: t0.x, y: t0.y, x2: t1.x, y2: t1.y, style: "table" });
    // robot base and a schematic base->EE link
    const base = worldToCanvas(0.0, 0.0);
    scene.push({ kind: "rect", x: base.x - 8, y: base.y - 8, w: 16, h: 16, style: "base" });
    const ee = worldToCanvas(snap.ee.position[0], snap.ee.position[2]);
    scene.push({ kind: "line", x: base.x, y: base.y - 8, x2: ee.x, y2: ee.y, style: "arm" });
    scene.push({ kind: "circle", x: ee.x, y: ee.y, r: 6, style: "ee" });
    // objects
    const cap = worldToCanvas(snap.objects.cap[0], snap.objects.cap[2]);
    scene.push({ kind: "circle", x: cap.x, y: cap.y, r: 4, style: "cap" });
    const marker = worldToCanvas(snap.objects.marker[0], snap.objects.marker[2]);
    scene.push({ kind: "rect", x: marker.x - 2, y: marker.y - 12, w: 4, h: 24, style: "marker" });
    // human wrist
    const wrist = snap.skeleton.joints["right_wrist"];
    if (wrist) {
      const w = worldToCanvas(wrist[0], wrist[2]);
      scene.push({ kind: "circle", x: w.x, y: w.y, r: 5, style: `wrist-${snap.skeleton.hand_state}` });
    }
    scene.push({ kind: "text", x: 10, y: 20, text: `t=${snap.time.toFixed(2)}s tick=${snap.tick}`, style: "hud" });
  }

  const tangentialMag = snap
    ? Math.hypot(snap.tactile.tangential[0], snap.tactile.tangential[1])
    : 0;
  const coneViolated = snap ? tangentialMag > snap.tactile.cone_bound : false;

  const gauges: GaugeModel[] = [
    {
      label: "normal force",
      value: snap ? snap.tactile.normal : 0,
      max: 40,
      text: `${round3(snap ? snap.tactile.normal : 0)} N`,
      violated: false,
    },
    {
      label: "tangential vs cone",
      value: tangentialMag,
      max: 20,
      text: `${round3(tangentialMag)} N / bound ${round3(snap ? snap.tactile.cone_bound : 0)} N`,
      violated: coneViolated,
    },
    {
      label: "grip command",
      value: snap ? snap.grip : 0,
      max: 40,
      text: `${round3(snap ? snap.grip : 0)} N`,
      violated: false,
    },
  ];

  return {
    banner,
    bannerClass: snap && snap.paused ? "phase paused" : "phase",
    connection: state.connection,
    gauges,
    heightGauge: {
      label: "cap height",
      value: snap ? snap.objects.cap[2] : 0,
      max: 1.0,
      text: `${round3(snap ? snap.objects.cap[2] : 0)} m`,
    },
    timeline: state.timeline.map((e) => `[t=${e.time.toFixed(2)} #${e.tick}] ${e.label}`),
    scene,
    buttonsEnabled: connected && !(snap?.paused ?? false),
    error: state.lastError,
    hint: state.hint,
    paramPanel: { ...state.params },
  };
}

/** Stable string form of a render, for golden comparisons in tests. */
export function renderToStrings(model: RenderModel): string[] {
  const out: string[] = [
    `banner:${model.banner}`,
    `class:${model.bannerClass}`,
    `conn:${model.connection}`,
    `buttons:${model.buttonsEnabled}`,
  ];
  for (const g of model.gauges) {
    out.push(`gauge:${g.label}:${g.text}:${g.violated ? "VIOLATED" : "ok"}`);
  }
  out.push(`height:${model.heightGauge.text}`);
  for (const p of model.scene) {
    out.push(
      `draw:${p.kind}:${p.style}:${Math.round(p.x)},${Math.round(p.y)}` +
        (p.x2 !== undefined ? `:${Math.round(p.x2)},${Math.round(p.y2 ?? 0)}` : "") +
        (p.text ? `:${p.text}` : "")
    );
  }
  out.push(...model.timeline.map((t) => `timeline:${t}`));
  return out;
}
