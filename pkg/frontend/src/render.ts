// Pure view models, no DOM. The grid renderer rebuilds the picture from the
// structured cells payload (never from the server's ascii string), which the
// tests exploit: both derivations must agree cell for cell.

import { GridCells, Pair, ReacherCells } from "./protocol.js";

export const ORIENTATION_GLYPHS = "^>v<";

/** Rows of glyphs, north (highest row index) on top:
 * agent ^>v<, box B, wall #, unfilled gap O, filled gap =, goal G, floor .
 */
export function gridRows(cells: GridCells): string[] {
  const n = cells.size;
  const grid: string[][] = [];
  for (let r = 0; r < n; r++) {
    grid.push(new Array<string>(n).fill("."));
  }
  const put = ([r, c]: Pair, glyph: string) => {
    const row = grid[r];
    if (row && c >= 0 && c < n) row[c] = glyph;
  };
  put(cells.goal, "G");
  for (const w of cells.walls) put(w, "#");
  for (const g of cells.gaps_unfilled) put(g, "O");
  for (const g of cells.gaps_filled) put(g, "=");
  for (const b of cells.boxes) put(b, "B");
  put(cells.agent, ORIENTATION_GLYPHS[cells.orientation] ?? "?");
  const rows: string[] = [];
  for (let r = n - 1; r >= 0; r--) {
    rows.push(grid[r]!.join(""));
  }
  return rows;
}

export interface ArmScene {
  shoulder: Pair;
  elbow: Pair;
  tip: Pair;
  target: Pair;
  rewardRadius: number; // reward turns on inside this circle around the target
  reach: number; // world half-extent; the scene fits in [-reach, reach]^2
}

/** Geometry of the two-link arm in world coordinates. Link lengths are 1, so
 * everything lives inside a disc of radius 2 around the shoulder. */
export function armScene(cells: ReacherCells): ArmScene {
  const [q0, q1] = cells.q;
  const elbow: Pair = [Math.cos(q0), Math.sin(q0)];
  const tip: Pair = [elbow[0] + Math.cos(q0 + q1), elbow[1] + Math.sin(q0 + q1)];
  return {
    shoulder: [0, 0],
    elbow,
    tip,
    target: cells.target,
    rewardRadius: 1.0,
    reach: 2.2,
  };
}

/** Map a world point into pixel space: y up in the world, y down on canvas. */
export function toPixels(point: Pair, reach: number, sizePx: number): Pair {
  const scale = sizePx / (2 * reach);
  return [
    (point[0] + reach) * scale,
    (reach - point[1]) * scale,
  ];
}
