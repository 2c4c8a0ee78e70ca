"""Demonstration files: JSON-lines, one episode per file.

Line 1 is a header object::

    {"format_version": 1, "env_id": ..., "action_space": {...},
     "obs_dims": ..., "seed": ...}

Every following line is one step::

    {"obs": [...], "action": ..., "reward": ..., "done": ...}

Observations are stored as raw single frames (no frame stacking); the
loader reassembles stacked observations on demand so one recording can
feed policies with any stacking depth.  Floats survive the round trip
exactly because ``json`` serializes them via ``repr``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .replay import Origin, Trajectory

DEMO_FORMAT_VERSION = 1


class DemoError(ValueError):
    """A demo file (or trajectory being saved) violates the format.

    ``line_no`` is the 1-based line of the first offending record when
    the problem is tied to a specific line, else None.
    """

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


@dataclass
class DemoFile:
    """One recorded episode plus the header metadata."""

    env_id: str
    action_space: dict
    obs_dims: int
    seed: int
    observations: np.ndarray  # (L, obs_dims) raw frames, float64
    actions: np.ndarray       # (L,) int64 or (L, dims) float64
    rewards: np.ndarray       # (L,) float64
    dones: np.ndarray         # (L,) bool

    def __len__(self):
        return self.observations.shape[0]

    @property
    def episode_return(self) -> float:
        return float(self.rewards.sum())

    def stacked_observations(self, frame_stack: int = 1) -> np.ndarray:
        """Observations as the env would emit them with ``frame_stack``.

        The first frame is repeated to pad the early steps, matching the
        env semantics (repeat-first, then slide).
        """
        if frame_stack < 1:
            raise ValueError("frame_stack must be >= 1")
        if frame_stack == 1:
            return self.observations.copy()
        raw = self.observations
        cols = []
        for offset in range(frame_stack - 1, -1, -1):
            idx = np.maximum(np.arange(len(self)) - offset, 0)
            cols.append(raw[idx])
        return np.concatenate(cols, axis=1)

    def to_trajectory(self, frame_stack: int = 1, traj_id: int = 0) -> Trajectory:
        """Convert into a replay-buffer trajectory (human-demo origin)."""
        return Trajectory(
            observations=self.stacked_observations(frame_stack),
            actions=self.actions.copy(),
            rewards=self.rewards.copy(),
            origin=Origin.HUMAN_DEMO,
            id=traj_id,
        )


def _check_action_space(space) -> dict:
    if not isinstance(space, dict) or "kind" not in space:
        raise DemoError("action_space must be a dict with a 'kind' field")
    kind = space["kind"]
    if kind == "discrete":
        n = space.get("n")
        if not isinstance(n, int) or n < 1:
            raise DemoError("discrete action_space needs a positive integer 'n'")
        return {"kind": "discrete", "n": n}
    if kind == "box":
        dims = space.get("dims")
        if not isinstance(dims, int) or dims < 1:
            raise DemoError("box action_space needs a positive integer 'dims'")
        return {"kind": "box", "dims": dims}
    raise DemoError(f"unknown action_space kind {kind!r}")


def save_demo(demo: DemoFile, path) -> None:
    """Write one episode to ``path``; ``load_demo`` inverts this exactly."""
    if len(demo) == 0:
        raise DemoError("refusing to save an empty trajectory")
    space = _check_action_space(demo.action_space)
    obs = np.asarray(demo.observations, dtype=np.float64)
    rewards = np.asarray(demo.rewards, dtype=np.float64)
    dones = np.asarray(demo.dones, dtype=bool)
    if obs.ndim != 2 or obs.shape[1] != demo.obs_dims:
        raise DemoError(
            f"observations have shape {obs.shape}, expected (*, {demo.obs_dims})"
        )
    if not (len(rewards) == len(dones) == len(demo.actions) == obs.shape[0]):
        raise DemoError("observation/action/reward/done lengths differ")
    if not np.isfinite(obs).all() or not np.isfinite(rewards).all():
        raise DemoError("non-finite values in trajectory")
    if (rewards < 0).any():
        raise DemoError("negative reward in trajectory")
    if dones[:-1].any() or not dones[-1]:
        raise DemoError("exactly the final step must have done=true")

    header = {
        "format_version": DEMO_FORMAT_VERSION,
        "env_id": demo.env_id,
        "action_space": space,
        "obs_dims": int(demo.obs_dims),
        "seed": int(demo.seed),
    }
    lines = [json.dumps(header)]
    for t in range(len(demo)):
        if space["kind"] == "discrete":
            action = int(demo.actions[t])
            if not 0 <= action < space["n"]:
                raise DemoError(f"action {action} outside [0, {space['n']})")
        else:
            action = [float(v) for v in np.atleast_1d(demo.actions[t])]
            if len(action) != space["dims"]:
                raise DemoError(
                    f"action has {len(action)} dims, expected {space['dims']}"
                )
        lines.append(json.dumps({
            "obs": [float(v) for v in obs[t]],
            "action": action,
            "reward": float(rewards[t]),
            "done": bool(dones[t]),
        }))
    tmp = str(path) + ".tmp"
    with open(tmp, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def _parse_header(line: str) -> dict:
    try:
        header = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DemoError(f"header is not valid JSON ({exc.msg})", line_no=1)
    if not isinstance(header, dict):
        raise DemoError("header must be a JSON object", line_no=1)
    version = header.get("format_version")
    if version != DEMO_FORMAT_VERSION:
        raise DemoError(
            f"unsupported demo format_version {version!r} "
            f"(this build reads version {DEMO_FORMAT_VERSION})",
            line_no=1,
        )
    for key in ("env_id", "action_space", "obs_dims", "seed"):
        if key not in header:
            raise DemoError(f"header missing field {key!r}", line_no=1)
    if not isinstance(header["obs_dims"], int) or header["obs_dims"] < 1:
        raise DemoError("obs_dims must be a positive integer", line_no=1)
    if not isinstance(header["seed"], int):
        raise DemoError("seed must be an integer", line_no=1)
    try:
        header["action_space"] = _check_action_space(header["action_space"])
    except DemoError as exc:
        raise DemoError(str(exc), line_no=1)
    return header


def _parse_step(line: str, line_no: int, header: dict):
    try:
        step = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DemoError(f"not valid JSON ({exc.msg})", line_no=line_no)
    if not isinstance(step, dict):
        raise DemoError("step must be a JSON object", line_no=line_no)
    for key in ("obs", "action", "reward", "done"):
        if key not in step:
            raise DemoError(f"step missing field {key!r}", line_no=line_no)

    obs = step["obs"]
    if not isinstance(obs, list) or len(obs) != header["obs_dims"]:
        got = len(obs) if isinstance(obs, list) else type(obs).__name__
        raise DemoError(
            f"obs has length {got}, header says obs_dims={header['obs_dims']}",
            line_no=line_no,
        )
    try:
        obs = [float(v) for v in obs]
    except (TypeError, ValueError):
        raise DemoError("obs entries must be numbers", line_no=line_no)

    space = header["action_space"]
    action = step["action"]
    if space["kind"] == "discrete":
        if not isinstance(action, int) or isinstance(action, bool):
            raise DemoError("discrete action must be an integer", line_no=line_no)
        if not 0 <= action < space["n"]:
            raise DemoError(
                f"action {action} outside [0, {space['n']})", line_no=line_no
            )
    else:
        if not isinstance(action, list) or len(action) != space["dims"]:
            raise DemoError(
                f"box action must be a list of {space['dims']} numbers",
                line_no=line_no,
            )
        try:
            action = [float(v) for v in action]
        except (TypeError, ValueError):
            raise DemoError("action entries must be numbers", line_no=line_no)

    reward = step["reward"]
    if isinstance(reward, bool) or not isinstance(reward, (int, float)):
        raise DemoError("reward must be a number", line_no=line_no)
    reward = float(reward)
    if not np.isfinite(reward):
        raise DemoError("reward must be finite", line_no=line_no)
    if reward < 0:
        raise DemoError(f"negative reward {reward}", line_no=line_no)

    done = step["done"]
    if not isinstance(done, bool):
        raise DemoError("done must be a boolean", line_no=line_no)
    return obs, action, reward, done


def load_demo(path, expect_env_id=None) -> DemoFile:
    """Read and validate a demo file.

    Raises DemoError naming the first malformed line.  ``expect_env_id``
    additionally pins the header to a target task.
    """
    with open(path) as fh:
        raw_lines = fh.read().splitlines()
    # allow (and ignore) trailing blank lines, but not blanks mid-file
    while raw_lines and raw_lines[-1].strip() == "":
        raw_lines.pop()
    if not raw_lines:
        raise DemoError("file is empty", line_no=1)

    header = _parse_header(raw_lines[0])
    if expect_env_id is not None and header["env_id"] != expect_env_id:
        raise DemoError(
            f"demo was recorded on {header['env_id']!r}, "
            f"expected {expect_env_id!r}",
            line_no=1,
        )
    if len(raw_lines) < 2:
        raise DemoError("no steps after header", line_no=2)

    obs_rows, actions, rewards, dones = [], [], [], []
    for i, line in enumerate(raw_lines[1:], start=2):
        if line.strip() == "":
            raise DemoError("blank line inside file", line_no=i)
        obs, action, reward, done = _parse_step(line, i, header)
        if dones and dones[-1]:
            # previous line was terminal yet the file continues
            raise DemoError("step after terminal step", line_no=i)
        obs_rows.append(obs)
        actions.append(action)
        rewards.append(reward)
        dones.append(done)
    if not dones[-1]:
        raise DemoError(
            "file ends without a terminal step (truncated recording)",
            line_no=len(raw_lines),
        )

    space = header["action_space"]
    if space["kind"] == "discrete":
        action_arr = np.array(actions, dtype=np.int64)
    else:
        action_arr = np.array(actions, dtype=np.float64)
    return DemoFile(
        env_id=header["env_id"],
        action_space=space,
        obs_dims=header["obs_dims"],
        seed=header["seed"],
        observations=np.array(obs_rows, dtype=np.float64),
        actions=action_arr,
        rewards=np.array(rewards, dtype=np.float64),
        dones=np.array(dones, dtype=bool),
    )


def load_demos(paths, env_id, frame_stack=1):
    """Load several demo files for ``env_id`` as replay trajectories.

    Trajectory ids are assigned -1, -2, ... so they never collide with
    the nonnegative ids given to self-collected episodes.
    """
    trajectories = []
    for k, p in enumerate(paths):
        demo = load_demo(p, expect_env_id=env_id)
        trajectories.append(demo.to_trajectory(frame_stack, traj_id=-(k + 1)))
    return trajectories


def demo_from_actions(task_id, seed, actions) -> DemoFile:
    """Execute ``actions`` on a freshly seeded env and package the episode.

    The action list must run the episode exactly to completion: stopping
    early or continuing past `done` is refused, so every DemoFile built
    here is a complete episode.
    """
    from .envs import action_space_of, make_env

    env = make_env(task_id, seed=seed, frame_stack=1)
    obs = env.reset(seed=seed)
    space = action_space_of(env)
    obs_rows, acts, rewards, dones = [], [], [], []
    done = False
    for a in actions:
        if done:
            raise DemoError("actions continue past the end of the episode")
        obs_rows.append(np.asarray(obs, dtype=np.float64))
        result = env.step(a)
        acts.append(a)
        rewards.append(result.reward)
        dones.append(result.done)
        obs, done = result.obs, result.done
    if not done:
        raise DemoError("episode did not finish; refusing to record a truncation")
    if space["kind"] == "discrete":
        action_arr = np.array(acts, dtype=np.int64)
    else:
        action_arr = np.array(acts, dtype=np.float64)
    return DemoFile(
        env_id=task_id,
        action_space=space,
        obs_dims=obs_rows[0].shape[0],
        seed=seed,
        observations=np.array(obs_rows, dtype=np.float64),
        actions=action_arr,
        rewards=np.array(rewards, dtype=np.float64),
        dones=np.array(dones, dtype=bool),
    )


@dataclass
class ReplayCheck:
    """Outcome of re-running a demo's actions through a fresh env."""

    steps: int
    rewards_match: bool
    obs_match: bool
    dones_match: bool
    first_mismatch: int | None  # 0-based step, None when everything agrees

    @property
    def ok(self) -> bool:
        return self.rewards_match and self.obs_match and self.dones_match


def replay_demo(demo: DemoFile, env=None) -> ReplayCheck:
    """Step a fresh env through the demo's actions and compare records.

    The env is rebuilt from the header (task id + seed, frame_stack=1 so
    raw frames compare directly).  Matching is exact: the recording and
    the env build must agree bit for bit.
    """
    from .envs import make_env

    if env is None:
        env = make_env(demo.env_id, seed=demo.seed, frame_stack=1)
    obs = env.reset(seed=demo.seed)

    first_bad = None
    rewards_ok = obs_ok = dones_ok = True

    def note(step):
        nonlocal first_bad
        if first_bad is None:
            first_bad = step

    if not np.array_equal(obs, demo.observations[0]):
        obs_ok = False
        note(0)
    n = len(demo)
    for t in range(n):
        result = env.step(demo.actions[t])
        if result.reward != demo.rewards[t]:
            rewards_ok = False
            note(t)
        if bool(result.done) != bool(demo.dones[t]):
            dones_ok = False
            note(t)
            break  # env and demo disagree about episode end; stop stepping
        if t + 1 < n and not np.array_equal(result.obs, demo.observations[t + 1]):
            obs_ok = False
            note(t + 1)
    return ReplayCheck(
        steps=n,
        rewards_match=rewards_ok,
        obs_match=obs_ok,
        dones_match=dones_ok,
        first_mismatch=first_bad,
    )
