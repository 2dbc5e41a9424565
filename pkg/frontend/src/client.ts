// WebSocket client: validated sends, reconnect with backoff, and the
// local gesture debounce mirroring the backend's 0.5 s rule.

import {
  Command,
  GestureKind,
  ParamName,
  parseServerMessage,
  serializeCommand,
} from "./schema.js";
import {
  ConsoleState,
  GestureDebouncer,
  applyMessage,
  gestureAllowed,
  initialState,
  markConnecting,
  markDisconnected,
} from "./state.js";

type WebSocketLike = {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
};

export interface ConsoleClientOptions {
  url: string;
  makeSocket?: (url: string) => WebSocketLike;
  onChange?: (state: ConsoleState) => void;
  now?: () => number;
  reconnectMs?: number;
  maxReconnectMs?: number;
}

export class ConsoleClient {
  readonly state: ConsoleState = initialState();
  private socket: WebSocketLike | null = null;
  private debouncer = new GestureDebouncer();
  private backoff: number;
  private closed = false;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(private opts: ConsoleClientOptions) {
    this.backoff = opts.reconnectMs ?? 500;
  }

  private notify(): void {
    this.opts.onChange?.(this.state);
  }

  connect(): void {
    this.closed = false;
    markConnecting(this.state);
    this.notify();
    const make = this.opts.makeSocket ?? ((url: string) => new WebSocket(url) as unknown as WebSocketLike);
    const ws = make(this.opts.url);
    this.socket = ws;
    ws.onopen = () => {
      this.backoff = this.opts.reconnectMs ?? 500;
    };
    ws.onmessage = (ev) => {
      const msg = parseServerMessage(String(ev.data));
      if (msg !== null) {
        applyMessage(this.state, msg);
        this.notify();
      }
    };
    ws.onerror = () => undefined;
    ws.onclose = () => {
      this.socket = null;
      markDisconnected(this.state);
      this.notify();
      if (!this.closed) {
        const delay = this.backoff;
        this.backoff = Math.min(this.backoff * 2, this.opts.maxReconnectMs ?? 8000);
        this.timer = setTimeout(() => this.connect(), delay);
      }
    };
  }

  close(): void {
    this.closed = true;
    if (this.timer !== null) {
      clearTimeout(this.timer);
    }
    this.socket?.close();
  }

  private sendCommand(cmd: Command): boolean {
    if (this.socket === null || this.state.connection !== "connected") {
      this.state.hint = "not connected";
      this.notify();
      return false;
    }
    this.socket.send(serializeCommand(cmd));
    this.state.pendingAcks += 1;
    this.notify();
    return true;
  }

  /** Gesture button handler: local guard + 0.5 s debounce, then send. */
  sendGesture(kind: GestureKind): boolean {
    const allowed = gestureAllowed(this.state, kind);
    if (!allowed.ok) {
      this.state.hint = allowed.hint ?? "gesture not allowed";
      this.notify();
      return false;
    }
    const now = this.opts.now?.() ?? Date.now();
    if (!this.debouncer.accept(kind, now)) {
      this.state.hint = `debounced: ${kind} already sent`;
      this.notify();
      return false;
    }
    this.state.hint = null;
    return this.sendCommand({ type: "gesture", payload: { kind } });
  }

  pause(paused = true): boolean {
    return this.sendCommand({ type: "pause", payload: { paused } });
  }

  step(): boolean {
    return this.sendCommand({ type: "step" });
  }

  setParam(name: ParamName, value: number): boolean {
    return this.sendCommand({ type: "set_param", payload: { name, value } });
  }
}
