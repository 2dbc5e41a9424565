import type { SnapshotData } from "../src/schema.js";

export function makeSnapshot(overrides: Partial<SnapshotData> = {}): SnapshotData {
  const base: SnapshotData = {
    tick: 100,
    time: 1.0,
    phase: "Idle",
    q: [0, 0.5, 0, -1.6, 0, 1.0, 0],
    ee: { position: [0.4, 0.0, 0.5], orientation: [1, 0, 0, 0] },
    objects: { cap: [0.55, 0.0, 0.3725], marker: [0.55, 0.0, 0.3] },
    skeleton: {
      hand_state: "neutral",
      joints: { right_wrist: [0.75, -0.25, 0.25], left_wrist: [0.6, -0.5, 0.2] },
    },
    tactile: { normal: 0, tangential: [0, 0], cone_bound: 0, mu: 0.5, safety_factor: 1.5 },
    grip: 0,
    events: [],
    paused: false,
    marker_detached: false,
  };
  return { ...base, ...overrides };
}

export const malformedCommands: unknown[] = [
  {},
  { type: "gesture" },
  { type: "gesture", payload: {} },
  { type: "gesture", payload: { kind: "wave" } },
  { type: "gesture", payload: { kind: 42 } },
  { type: "set_param", payload: { name: "port", value: 1 } },
  { type: "set_param", payload: { name: "mu" } },
  { type: "set_param", payload: { name: "mu", value: "0.5" } },
  { type: "set_param", payload: { name: "mu", value: -1 } },
  { type: "set_param", payload: { name: "mu", value: 0 } },
  { type: "teleport" },
  { type: "step", payload: { extra: true } },
  { payload: { kind: "open_palm" } },
  "gesture",
  42,
  null,
  { type: "pause", payload: { paused: "yes" } },
];
