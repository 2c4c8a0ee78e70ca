// Keyboard layout for the grid tasks. Action ids follow the server's
// /tasks catalog order: forward, back, left, right, rotate-left,
// rotate-right, push, no-op, interact.

export const ACTION = {
  forward: 0,
  back: 1,
  left: 2,
  right: 3,
  rotateLeft: 4,
  rotateRight: 5,
  push: 6,
  noop: 7,
  interact: 8,
} as const;

export const ACTION_NAMES = [
  "forward",
  "back",
  "left",
  "right",
  "rotate-left",
  "rotate-right",
  "push",
  "no-op",
  "interact",
] as const;

const KEYMAP = new Map<string, number>([
  ["ArrowUp", ACTION.forward],
  ["ArrowDown", ACTION.back],
  ["ArrowLeft", ACTION.rotateLeft],
  ["ArrowRight", ACTION.rotateRight],
  ["a", ACTION.left], // sidestep without turning
  ["d", ACTION.right],
  [" ", ACTION.push],
  [".", ACTION.noop],
  ["e", ACTION.interact],
]);

/** Map a KeyboardEvent.key to an action id, or null for unmapped keys. */
export function keyToAction(key: string): number | null {
  const id = KEYMAP.get(key);
  return id === undefined ? null : id;
}

/** Inverse lookup, used by scripted drivers: action id -> key. */
export function actionToKey(action: number): string | null {
  for (const [key, id] of KEYMAP) {
    if (id === action) return key;
  }
  return null;
}
