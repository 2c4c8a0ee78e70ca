"""Scripted solvers, used as reachability oracles in tests and to produce
demonstration episodes.

The grid solver plans from the current (post-reset) state: pick gap cells to
fill, push boxes there along L-shaped routes (horizontal leg first, then
north), walking between pre-push cells with BFS, then walk to the goal. The
reacher solver is a closed-loop Jacobian-transpose controller.
"""

from __future__ import annotations

import math
from collections import deque

import numpy as np

from .grid import (
    A_BACK, A_FORWARD, A_LEFT, A_PUSH, A_RIGHT, A_ROT_L, A_ROT_R,
    DIRS, GOAL, GRID_SIZE, GridBoxWorld,
)
from .reacher import SparsePointReacher, tip_position


class SolverError(RuntimeError):
    """The planner could not produce a route (unexpected for catalog tasks)."""


# --- grid ---------------------------------------------------------------------

class _Board:
    """Mutable planning copy of the grid state."""

    def __init__(self, env: GridBoxWorld):
        self.walls = env.layout.walls
        self.gaps = set(env.layout.gaps)
        self.filled = set(env.filled)
        self.boxes = set(env.boxes)
        self.agent = env.agent
        self.orientation = env.orientation

    def traversable(self, cell):
        if not (0 <= cell[0] < GRID_SIZE and 0 <= cell[1] < GRID_SIZE):
            return False
        if cell in self.walls or cell in self.boxes:
            return False
        if cell in self.gaps and cell not in self.filled:
            return False
        return True


def _bfs_path(board: _Board, start, goal):
    """Shortest cell path avoiding walls, boxes and unfilled gaps."""
    if start == goal:
        return [start]
    prev = {start: None}
    queue = deque([start])
    while queue:
        cell = queue.popleft()
        for dr, dc in DIRS:
            nxt = (cell[0] + dr, cell[1] + dc)
            if nxt in prev or not board.traversable(nxt):
                continue
            prev[nxt] = cell
            if nxt == goal:
                path = [nxt]
                while prev[path[-1]] is not None:
                    path.append(prev[path[-1]])
                return path[::-1]
            queue.append(nxt)
    return None


def _strafe_action(orientation: int, direction: int) -> int:
    """Move one cell toward `direction` without turning."""
    return {0: A_FORWARD, 1: A_RIGHT, 2: A_BACK, 3: A_LEFT}[
        (direction - orientation) % 4]


def _turn_actions(orientation: int, target: int) -> list[int]:
    diff = (target - orientation) % 4
    if diff == 1:
        return [A_ROT_R]
    if diff == 2:
        return [A_ROT_R, A_ROT_R]
    if diff == 3:
        return [A_ROT_L]
    return []


def _walk_to(board: _Board, target, actions: list[int]) -> None:
    path = _bfs_path(board, board.agent, target)
    if path is None:
        raise SolverError(f"no path from {board.agent} to {target}")
    for a, b in zip(path, path[1:]):
        direction = DIRS.index((b[0] - a[0], b[1] - a[1]))
        actions.append(_strafe_action(board.orientation, direction))
        board.agent = b


def _push_box(board: _Board, box, direction: int, count: int,
              actions: list[int]) -> tuple:
    """Walk behind `box`, face `direction`, push `count` times. Returns the
    box's final cell (or None if it fell into a gap)."""
    dr, dc = DIRS[direction]
    stand = (box[0] - dr, box[1] - dc)
    _walk_to(board, stand, actions)
    turns = _turn_actions(board.orientation, direction)
    actions.extend(turns)
    board.orientation = direction
    for _ in range(count):
        dest = (box[0] + dr, box[1] + dc)
        actions.append(A_PUSH)
        board.boxes.remove(box)
        if dest in board.gaps and dest not in board.filled:
            board.filled.add(dest)
            board.agent = box
            return None
        board.boxes.add(dest)
        board.agent = box
        box = dest
    return box


def _pushes_to_fill(box, fill_cell) -> list[tuple]:
    """L-shaped route: (direction, count) legs moving `box` until it drops
    into fill_cell (east/west leg along the box's row, then north)."""
    legs = []
    dc = fill_cell[1] - box[1]
    if dc:
        legs.append((1 if dc > 0 else 3, abs(dc)))
    dr = fill_cell[0] - box[0]
    if dr <= 0:
        raise SolverError(f"fill cell {fill_cell} not north of box {box}")
    legs.append((0, dr))
    return legs


def _plan_fill(board: _Board, box, fill_cell, actions: list[int]) -> None:
    for direction, count in _pushes_to_fill(box, fill_cell):
        box = _push_box(board, box, direction, count, actions)
    if box is not None:
        raise SolverError(f"box did not fall while targeting {fill_cell}")


def _gap_columns(board: _Board) -> dict[int, list[tuple]]:
    cols: dict[int, list[tuple]] = {}
    for cell in board.gaps:
        cols.setdefault(cell[1], []).append(cell)
    for col in cols:
        cols[col].sort()  # south-most first: must be filled in this order
    return cols


def solve_grid(env: GridBoxWorld) -> list[int]:
    """Action sequence that finishes the current episode with a success.
    Plans on a copy; the caller replays the actions through env.step."""
    board = _Board(env)
    cols = _gap_columns(board)
    need = {col: [c for c in cells if c not in board.filled]
            for col, cells in cols.items()}

    best = None
    for col in sorted(need):
        cells = need[col]
        if len(cells) > len(board.boxes):
            continue
        # assign nearest boxes to this column, southmost gap cell first;
        # secondary sort key keeps ties deterministic across runs
        boxes = sorted(board.boxes,
                       key=lambda b: (abs(b[1] - col) + abs(cells[0][0] - b[0]), b))
        cost = sum(abs(b[1] - col) + (cells[0][0] - b[0])
                   for b in boxes[:len(cells)])
        if best is None or cost < best[0]:
            best = (cost, col, cells, boxes[:len(cells)])
    if best is None:
        raise SolverError("no gap column is fillable with the available boxes")
    _, col, cells, boxes = best

    actions: list[int] = []
    for fill_cell, box in zip(cells, boxes):
        _plan_fill(board, box, fill_cell, actions)
    _walk_to(board, GOAL, actions)
    if len(actions) > env.step_limit:
        raise SolverError(f"plan needs {len(actions)} steps > limit {env.step_limit}")
    return actions


# --- reacher ------------------------------------------------------------------

def reacher_controller(env: SparsePointReacher) -> np.ndarray:
    """One control step: Jacobian-transpose pull of the tip toward the
    target, with velocity damping; clipped to the torque box."""
    q, w, target = env.q, env.w, env.target
    tip = tip_position(q)
    u = target - tip
    s1, c1 = math.sin(q[0]), math.cos(q[0])
    s12, c12 = math.sin(q[0] + q[1]), math.cos(q[0] + q[1])
    j1 = np.array([-s1 - s12, c1 + c12])
    j2 = np.array([-s12, c12])
    tau = np.array([j1 @ u, j2 @ u]) * 2.0 - 0.6 * w
    if np.abs(tau).max() < 0.05:
        tau = np.array([0.3, 0.6])  # nudge out of a singular stall
    return np.clip(tau, -1.0, 1.0)


def solve_reacher(env: SparsePointReacher, max_steps: int | None = None):
    """Run the controller to the first success. Returns (actions, rewards,
    success flag); the env is stepped in place."""
    actions, rewards = [], []
    limit = max_steps if max_steps is not None else env.step_limit
    for _ in range(limit):
        a = reacher_controller(env)
        result = env.step(a)
        actions.append(a)
        rewards.append(result.reward)
        if result.done:
            return actions, rewards, result.success
    return actions, rewards, False
