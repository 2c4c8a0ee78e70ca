// Client-side session state machine. Interaction is lock-step: one action
// goes out, input stays disabled until its state reply lands, so the saved
// recording is exactly the episode the human experienced. The transport is
// injected, which keeps this file free of WebSocket/browser specifics.

import { keyToAction } from "./keymap.js";
import {
  Pair,
  SavedMsg,
  StateMsg,
  parseServerMessage,
} from "./protocol.js";

export interface Transport {
  send(text: string): void;
  close(): void;
}

export interface TransportHandlers {
  onOpen(): void;
  onMessage(text: string): void;
  onClose(): void;
}

export type TransportFactory = (handlers: TransportHandlers) => Transport;

export type Phase =
  | "disconnected"
  | "connecting"
  | "awaiting" // a message is out, the reply hasn't landed
  | "ready"
  | "done";

export interface SessionOptions {
  task?: string;
  seed?: number;
}

export class ClientSession {
  phase: Phase = "disconnected";
  state: StateMsg | null = null;
  banner = "";
  statusLine = "disconnected — connect to play";
  lastSaved: SavedMsg | null = null;

  // invariant bookkeeping (see tests): one rendered frame per state message,
  // actions on the wire == key presses accepted, in order
  statesReceived = 0;
  framesRendered = 0;
  actionsSent: (number | Pair)[] = [];
  keysAccepted: string[] = [];

  onRender: (state: StateMsg) => void = () => {};
  onUpdate: () => void = () => {};

  private transport: Transport | null = null;
  private inFlight = false;

  constructor(
    private makeTransport: TransportFactory,
    private opts: SessionOptions = {},
  ) {}

  /** Open the transport and reset as soon as it is up. Reconnecting after a
   * drop goes through here too: always a fresh episode, never a resume. */
  connect(): void {
    if (this.transport) {
      this.transport.close();
      this.transport = null;
    }
    this.phase = "connecting";
    this.banner = "";
    this.refreshStatus();
    this.transport = this.makeTransport({
      onOpen: () => {
        this.reset();
      },
      onMessage: (text) => this.receive(text),
      onClose: () => {
        this.transport = null;
        this.phase = "disconnected";
        this.inFlight = false;
        this.banner = "connection lost — reconnect to start a fresh episode";
        this.refreshStatus();
        this.onUpdate();
      },
    });
  }

  get connected(): boolean {
    return this.transport !== null && this.phase !== "connecting";
  }

  /** Close the transport; the close callback moves us to "disconnected". */
  disconnect(): void {
    this.transport?.close();
  }

  /** Start a fresh episode. Allowed whenever the transport is up. */
  reset(): boolean {
    if (!this.transport) return false;
    const msg: Record<string, unknown> = { type: "reset" };
    if (this.opts.task !== undefined) msg.task = this.opts.task;
    if (this.opts.seed !== undefined) msg.seed = this.opts.seed;
    this.transport.send(JSON.stringify(msg));
    this.phase = "awaiting";
    this.banner = "";
    this.lastSaved = null;
    this.refreshStatus();
    return true;
  }

  /** Keyboard entry point. Returns true iff the key became an action
   * message. Drops everything while a reply is pending or the episode is
   * over; unmapped keys are ignored silently. */
  handleKey(key: string): boolean {
    const action = keyToAction(key);
    if (action === null) return false;
    if (this.phase === "done") {
      this.banner = "episode finished — save the recording or reset";
      this.refreshStatus();
      this.onUpdate();
      return false;
    }
    if (this.phase !== "ready" || this.inFlight) return false;
    if (!this.sendAction(action)) return false;
    this.keysAccepted.push(key);
    return true;
  }

  /** Shared by the keymap path and the reacher sliders. */
  sendAction(action: number | Pair): boolean {
    if (!this.transport || this.phase !== "ready" || this.inFlight) {
      return false;
    }
    this.transport.send(JSON.stringify({ type: "action", action }));
    this.actionsSent.push(action);
    this.inFlight = true;
    this.phase = "awaiting";
    this.refreshStatus();
    return true;
  }

  /** Ship the finished episode to disk. Only meaningful once done. */
  save(pathHint?: string): boolean {
    if (!this.transport || this.phase !== "done") return false;
    const msg: Record<string, unknown> = { type: "save" };
    if (pathHint) msg.path = pathHint;
    this.transport.send(JSON.stringify(msg));
    return true;
  }

  get canSave(): boolean {
    return this.phase === "done";
  }

  private receive(text: string): void {
    const msg = parseServerMessage(text);
    if (msg === null) {
      this.banner = "unreadable frame from server";
      this.onUpdate();
      return;
    }
    this.inFlight = false;
    if (msg.type === "state") {
      this.statesReceived += 1;
      this.state = msg;
      this.phase = msg.done ? "done" : "ready";
      this.onRender(msg);
      this.framesRendered += 1;
    } else if (msg.type === "saved") {
      this.lastSaved = msg;
      this.banner =
        `saved ${msg.path} — return ${msg.episode_return.toFixed(2)} ` +
        `over ${msg.length} steps`;
    } else {
      this.banner = msg.message; // server errors are shown verbatim
      if (this.phase === "awaiting") {
        // the message that failed never changed the episode
        this.phase = this.state === null ? "awaiting" : this.state.done ? "done" : "ready";
      }
    }
    this.refreshStatus();
    this.onUpdate();
  }

  private refreshStatus(): void {
    switch (this.phase) {
      case "disconnected":
        this.statusLine = "disconnected — connect to play";
        break;
      case "connecting":
        this.statusLine = "connecting…";
        break;
      case "awaiting":
        this.statusLine = "waiting for the server…";
        break;
      case "ready": {
        const s = this.state!;
        this.statusLine =
          `step ${s.step} · return ${s.episode_return.toFixed(2)} · playing`;
        break;
      }
      case "done": {
        const s = this.state!;
        this.statusLine =
          `episode finished after ${s.step} steps ` +
          `(${s.success ? "success" : "no reward"}) — save or reset`;
        break;
      }
    }
  }
}
