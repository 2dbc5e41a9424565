// Console state and its reducers. Pure data in, pure data out: the
// socket layer feeds messages, the render layer reads the result.

import type { ServerMessage, SnapshotData, GestureKind } from "./schema.js";

export type ConnectionStatus = "connecting" | "connected" | "disconnected";

export interface TimelineEntry {
  time: number;
  tick: number;
  label: string;
}

export interface ConsoleState {
  connection: ConnectionStatus;
  snapshot: SnapshotData | null;
  lastPhase: string | null;
  timeline: TimelineEntry[];
  pendingAcks: number;
  lastError: string | null;
  hint: string | null;
  params: { mu: number; safety_factor: number; pull_force: number };
}

export function initialState(): ConsoleState {
  return {
    connection: "connecting",
    snapshot: null,
    lastPhase: null,
    timeline: [],
    pendingAcks: 0,
    lastError: null,
    hint: null,
    params: { mu: 0.5, safety_factor: 1.5, pull_force: 8.0 },
  };
}

const TIMELINE_LIMIT = 200;

function pushTimeline(state: ConsoleState, entry: TimelineEntry): void {
  state.timeline.push(entry);
  if (state.timeline.length > TIMELINE_LIMIT) {
    state.timeline.splice(0, state.timeline.length - TIMELINE_LIMIT);
  }
}

/** Apply one validated server message. Mutates and returns the state. */
export function applyMessage(state: ConsoleState, msg: ServerMessage): ConsoleState {
  switch (msg.type) {
    case "hello":
      state.connection = "connected";
      state.lastError = null;
      break;
    case "snapshot": {
      const snap = msg.data;
      // phase transitions are recorded even when frames are coalesced
      if (state.lastPhase !== null && snap.phase !== state.lastPhase) {
        pushTimeline(state, { time: snap.time, tick: snap.tick, label: `phase ${snap.phase}` });
      }
      if (snap.marker_detached && !(state.snapshot?.marker_detached ?? false)) {
        pushTimeline(state, { time: snap.time, tick: snap.tick, label: "marker detached" });
      }
      state.lastPhase = snap.phase;
      state.snapshot = snap;
      state.params.mu = snap.tactile.mu;
      state.params.safety_factor = snap.tactile.safety_factor;
      break;
    }
    case "ack":
      state.pendingAcks = Math.max(0, state.pendingAcks - 1);
      pushTimeline(state, {
        time: state.snapshot?.time ?? 0,
        tick: msg.tick,
        label: `ack ${msg.command}`,
      });
      break;
    case "error":
      state.pendingAcks = Math.max(0, state.pendingAcks - 1);
      state.lastError = msg.message;
      break;
  }
  return state;
}

export function markDisconnected(state: ConsoleState): ConsoleState {
  state.connection = "disconnected";
  return state;
}

export function markConnecting(state: ConsoleState): ConsoleState {
  state.connection = "connecting";
  return state;
}

/** Local guard for gesture buttons: disabled while disconnected or paused. */
export function gestureAllowed(state: ConsoleState, _kind: GestureKind): { ok: boolean; hint?: string } {
  if (state.connection !== "connected") {
    return { ok: false, hint: "not connected" };
  }
  if (state.snapshot?.paused) {
    return { ok: false, hint: "simulation is paused; resume before sending gestures" };
  }
  return { ok: true };
}

/** Suppresses repeat sends of the same gesture within the debounce window. */
export class GestureDebouncer {
  private last = new Map<string, number>();

  constructor(private windowMs = 500) {}

  accept(kind: string, nowMs: number): boolean {
    const prev = this.last.get(kind);
    if (prev !== undefined && nowMs - prev < this.windowMs) {
      return false;
    }
    this.last.set(kind, nowMs);
    return true;
  }
}
