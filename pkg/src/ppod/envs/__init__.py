"""Sparse-reward environment suite: grid box-pushing variants and a
continuous point reacher. Every task pays out through a single success
event, so episode returns are 0 or positive."""

from __future__ import annotations

from .grid import ACTIONS, GridBoxWorld, StepResult
from .reacher import SparsePointReacher

GRID_TASKS = (
    "grid.onebox.easy",
    "grid.onebox.hard",
    "grid.twobox.easy",
    "grid.twobox.hard",
)
TASKS = GRID_TASKS + ("reacher.sparse",)


def make_env(task_id: str, seed: int = 0, frame_stack: int = 1):
    """Build a fresh environment instance for a catalog task id."""
    if task_id in GRID_TASKS:
        variant = task_id[len("grid."):]
        return GridBoxWorld(variant, seed=seed, frame_stack=frame_stack)
    if task_id == "reacher.sparse":
        return SparsePointReacher(seed=seed, frame_stack=frame_stack)
    raise ValueError(f"unknown task id {task_id!r}; known: {', '.join(TASKS)}")


def action_space_of(env) -> dict:
    """Header-style description of the env's action space."""
    if env.action_space_kind == "discrete":
        return {"kind": "discrete", "n": env.num_actions}
    return {"kind": "box", "dims": env.num_actions}


def is_success(trajectory) -> bool:
    """A complete episode counts as successful iff its return is positive."""
    return trajectory.episode_return > 0.0


__all__ = [
    "ACTIONS", "GRID_TASKS", "TASKS", "GridBoxWorld", "SparsePointReacher",
    "StepResult", "action_space_of", "is_success", "make_env",
]
