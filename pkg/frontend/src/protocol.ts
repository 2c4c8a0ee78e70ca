// Wire types for the recorder session: the client sends reset/action/save,
// the server answers every message with exactly one state/saved/error.

export type Pair = [number, number];

export interface ResetMsg {
  type: "reset";
  task?: string;
  seed?: number;
}

export interface ActionMsg {
  type: "action";
  action: number | Pair;
}

export interface SaveMsg {
  type: "save";
  path?: string;
}

export type ClientMessage = ResetMsg | ActionMsg | SaveMsg;

export interface GridCells {
  kind: "grid";
  size: number;
  agent: Pair;
  orientation: number; // 0=N 1=E 2=S 3=W; row 0 is the south edge
  boxes: Pair[];
  walls: Pair[];
  gaps_unfilled: Pair[];
  gaps_filled: Pair[];
  goal: Pair;
}

export interface ReacherCells {
  kind: "reacher";
  q: Pair;
  velocity: Pair;
  tip: Pair;
  target: Pair;
  distance: number;
}

export type Cells = GridCells | ReacherCells;

export interface StateMsg {
  type: "state";
  task: string;
  seed: number;
  step: number;
  reward: number;
  done: boolean;
  success: boolean;
  episode_return: number;
  render: string; // ascii debug aid; the client renders from `cells`
  cells: Cells;
}

export interface SavedMsg {
  type: "saved";
  path: string;
  episode_return: number;
  length: number;
  success: boolean;
}

export interface ErrorMsg {
  type: "error";
  message: string;
}

export type ServerMessage = StateMsg | SavedMsg | ErrorMsg;

/** Parse one frame off the wire; null for anything that is not a protocol
 * message (the server never sends such frames — treat as a bug banner). */
export function parseServerMessage(text: string): ServerMessage | null {
  let value: unknown;
  try {
    value = JSON.parse(text);
  } catch {
    return null;
  }
  if (typeof value !== "object" || value === null) return null;
  const type = (value as { type?: unknown }).type;
  if (type === "state" || type === "saved" || type === "error") {
    return value as ServerMessage;
  }
  return null;
}
