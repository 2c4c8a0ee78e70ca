"""Grid box-pushing tasks: cross a gap by pushing boxes into it.

A 9x9 grid. The south zone (low rows) holds the agent and boxes; a barrier
of walls and gap cells separates it from the goal on the north side. Pushing
a box into an unfilled gap cell makes the box fall in and fill it, turning
the cell into traversable floor. The only reward is 1.0 on reaching the goal.

Variants:
  onebox.easy  one gap cell, one box at a fixed site
  onebox.hard  one gap cell, two boxes on a random 2-subset of four sites
  twobox.easy  one 2-deep gap column (both cells must be filled), two boxes
               on a random 2-subset of the four sites, full-width agent spawn
  twobox.hard  like twobox.easy but boxes at two fixed sites and a dividing
               wall splitting the gap opening, so one column must be filled
               twice on a single side

Actions (9 discrete ids): forward, back, left, right move one cell relative
to the facing direction without turning; rotate-left/right turn in place;
push shoves the box directly ahead; no-op and interact do nothing (interact
exists to keep the 9-action interface of pick-up style worlds).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GRID_SIZE = 9
STEP_LIMIT = 120

ACTIONS = ("forward", "back", "left", "right", "rotate-left", "rotate-right",
           "push", "no-op", "interact")
A_FORWARD, A_BACK, A_LEFT, A_RIGHT, A_ROT_L, A_ROT_R, A_PUSH, A_NOOP, A_INTERACT = range(9)

# orientation 0=N (row+1), 1=E (col+1), 2=S, 3=W; render shows row 8 on top
DIRS = ((1, 0), (0, 1), (-1, 0), (0, -1))
ORI_CHARS = "^>v<"

# box spawn sites for the randomized variants, all south of the barrier
BOX_SITES = {"A": (1, 2), "B": (1, 6), "C": (3, 2), "D": (3, 6)}

GOAL = (8, 4)

OBS_PLANES = 6  # agent, boxes, unfilled gaps, filled gaps, walls, goal
RAW_OBS_DIM = OBS_PLANES * GRID_SIZE * GRID_SIZE + 4  # + orientation one-hot


@dataclass
class StepResult:
    obs: np.ndarray
    reward: float
    done: bool
    success: bool


@dataclass(frozen=True)
class _Layout:
    walls: frozenset
    gaps: frozenset
    fixed_boxes: tuple | None  # None -> sample 2 sites from BOX_SITES
    spawn_rows: tuple
    spawn_cols: tuple


def _barrier_row(row, open_cols):
    walls = {(row, c) for c in range(GRID_SIZE) if c not in open_cols}
    gaps = {(row, c) for c in open_cols}
    return walls, gaps


def _make_layout(variant: str) -> _Layout:
    if variant == "onebox.easy":
        # The fixed site sits off the gap column on purpose: reaching the
        # goal needs an L-shaped push route (east along row 1, then north up
        # column 4), and a single careless push can jam the box against a
        # wall for the rest of the episode.
        walls, gaps = _barrier_row(4, {4})
        return _Layout(frozenset(walls), frozenset(gaps),
                       fixed_boxes=((1, 1),),
                       spawn_rows=(0, 1, 2, 3), spawn_cols=tuple(range(9)))
    if variant == "onebox.hard":
        walls, gaps = _barrier_row(4, {4})
        return _Layout(frozenset(walls), frozenset(gaps),
                       fixed_boxes=None,
                       spawn_rows=(0, 1, 2, 3), spawn_cols=tuple(range(9)))
    if variant == "twobox.easy":
        # a single 2-deep gap column: both boxes must go through (4,4) then
        # (5,4), so the second box has to be pushed onto the filled cell and
        # then once more into the pit behind it
        w4, g4 = _barrier_row(4, {4})
        w5, g5 = _barrier_row(5, {4})
        return _Layout(frozenset(w4 | w5), frozenset(g4 | g5),
                       fixed_boxes=None,
                       spawn_rows=(0, 1, 2, 3), spawn_cols=tuple(range(9)))
    if variant == "twobox.hard":
        w4, g4 = _barrier_row(4, {3, 5})
        w5, g5 = _barrier_row(5, {3, 5})
        walls = w4 | w5 | {(4, 4), (5, 4)}  # dividing wall in the opening
        return _Layout(frozenset(walls), frozenset(g4 | g5),
                       fixed_boxes=(BOX_SITES["A"], BOX_SITES["B"]),
                       spawn_rows=(1, 2), spawn_cols=(3, 4))
    raise ValueError(f"unknown grid variant {variant!r}")


class GridBoxWorld:
    """One agent, boxes, gap cells, one goal. See module docstring."""

    def __init__(self, variant: str, seed: int = 0, frame_stack: int = 1,
                 step_limit: int = STEP_LIMIT):
        self.variant = variant
        self.layout = _make_layout(variant)
        self.step_limit = step_limit
        if frame_stack < 1:
            raise ValueError("frame_stack must be >= 1")
        self.frame_stack = frame_stack
        self._rng = np.random.default_rng(seed)
        self._live = False

    # -- interface metadata ------------------------------------------------
    @property
    def num_actions(self) -> int:
        return len(ACTIONS)

    @property
    def obs_dim(self) -> int:
        return RAW_OBS_DIM * self.frame_stack

    @property
    def raw_obs_dim(self) -> int:
        return RAW_OBS_DIM

    action_space_kind = "discrete"

    # -- lifecycle -----------------------------------------------------------
    def reset(self, seed: int | None = None) -> np.ndarray:
        """Place boxes per variant, spawn the agent on a free south cell with
        a random orientation. Deterministic given the seed (or, with no seed,
        the internal stream)."""
        rng = np.random.default_rng(seed) if seed is not None else self._rng
        if self.layout.fixed_boxes is not None:
            self.boxes = set(self.layout.fixed_boxes)
        else:
            names = sorted(BOX_SITES)
            picked = rng.choice(len(names), size=2, replace=False)
            self.boxes = {BOX_SITES[names[i]] for i in picked}
        self.filled: set = set()
        spawn_cells = [
            (r, c)
            for r in self.layout.spawn_rows
            for c in self.layout.spawn_cols
            if (r, c) not in self.boxes
            and (r, c) not in self.layout.walls
            and (r, c) not in self.layout.gaps
        ]
        if not spawn_cells:
            raise RuntimeError(f"no free spawn cell in variant {self.variant!r}")
        self.agent = spawn_cells[int(rng.integers(len(spawn_cells)))]
        self.orientation = int(rng.integers(4))
        self.step_count = 0
        self._live = True
        frame = self.encode_obs()
        self._frames = [frame] * self.frame_stack
        return self._stacked()

    def _stacked(self) -> np.ndarray:
        if self.frame_stack == 1:
            return self._frames[-1]
        return np.concatenate(self._frames)

    # -- mechanics ---------------------------------------------------------
    def _in_bounds(self, cell) -> bool:
        return 0 <= cell[0] < GRID_SIZE and 0 <= cell[1] < GRID_SIZE

    def _traversable(self, cell) -> bool:
        """Can the agent stand here? Filled gaps are floor; unfilled are not."""
        if not self._in_bounds(cell) or cell in self.layout.walls or cell in self.boxes:
            return False
        if cell in self.layout.gaps and cell not in self.filled:
            return False
        return True

    def _box_can_enter(self, cell) -> bool:
        return (self._in_bounds(cell) and cell not in self.layout.walls
                and cell not in self.boxes)

    def step(self, action: int) -> StepResult:
        if not self._live:
            raise RuntimeError("step() after episode end; call reset() first")
        if not (0 <= action < len(ACTIONS)):
            raise ValueError(f"action id {action} outside [0, {len(ACTIONS)})")

        if action in (A_FORWARD, A_BACK, A_LEFT, A_RIGHT):
            offset = {A_FORWARD: 0, A_RIGHT: 1, A_BACK: 2, A_LEFT: 3}[action]
            dr, dc = DIRS[(self.orientation + offset) % 4]
            target = (self.agent[0] + dr, self.agent[1] + dc)
            if self._traversable(target):
                self.agent = target
        elif action == A_ROT_L:
            self.orientation = (self.orientation - 1) % 4
        elif action == A_ROT_R:
            self.orientation = (self.orientation + 1) % 4
        elif action == A_PUSH:
            dr, dc = DIRS[self.orientation]
            box = (self.agent[0] + dr, self.agent[1] + dc)
            if box in self.boxes:
                dest = (box[0] + dr, box[1] + dc)
                if dest in self.layout.gaps and dest not in self.filled:
                    self.boxes.remove(box)
                    self.filled.add(dest)  # box falls in and becomes floor
                    self.agent = box
                elif self._box_can_enter(dest) and (
                        dest not in self.layout.gaps or dest in self.filled):
                    self.boxes.remove(box)
                    self.boxes.add(dest)
                    self.agent = box
        # no-op and interact change nothing

        self.step_count += 1
        success = self.agent == GOAL
        reward = 1.0 if success else 0.0
        done = success or self.step_count >= self.step_limit
        if done:
            self._live = False
        frame = self.encode_obs()
        self._frames = self._frames[1:] + [frame] if self.frame_stack > 1 else [frame]
        return StepResult(self._stacked(), reward, done, success)

    # -- observation -----------------------------------------------------------
    def encode_obs(self) -> np.ndarray:
        """Six one-hot 9x9 planes (agent, boxes, unfilled gaps, filled gaps,
        walls, goal) flattened, then the orientation one-hot."""
        planes = np.zeros((OBS_PLANES, GRID_SIZE, GRID_SIZE))
        planes[0][self.agent] = 1.0
        for b in self.boxes:
            planes[1][b] = 1.0
        for g in self.layout.gaps:
            if g in self.filled:
                planes[3][g] = 1.0
            else:
                planes[2][g] = 1.0
        for w in self.layout.walls:
            planes[4][w] = 1.0
        planes[5][GOAL] = 1.0
        ori = np.zeros(4)
        ori[self.orientation] = 1.0
        return np.concatenate([planes.reshape(-1), ori])

    def render(self) -> str:
        """ASCII picture, north (row 8) on top."""
        rows = []
        for r in range(GRID_SIZE - 1, -1, -1):
            chars = []
            for c in range(GRID_SIZE):
                cell = (r, c)
                if cell == self.agent:
                    chars.append(ORI_CHARS[self.orientation])
                elif cell in self.boxes:
                    chars.append("B")
                elif cell in self.layout.walls:
                    chars.append("#")
                elif cell in self.layout.gaps:
                    chars.append("=" if cell in self.filled else "O")
                elif cell == GOAL:
                    chars.append("G")
                else:
                    chars.append(".")
            rows.append("".join(chars))
        return "\n".join(rows)
