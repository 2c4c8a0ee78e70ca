"""Two-link planar reacher with a thresholded sparse reward.

Unit link lengths, explicit Euler integration at dt=0.05 with viscous
damping, torques clipped to [-1, 1]. Reward is T - d when the tip comes
within distance T of the target (T=1 by default) and 0 otherwise; the
episode ends on the first rewarded step or after step_limit steps.

Targets spawn on an annulus (radius 0.4-1.8) and are re-drawn until the
starting pose is outside the reward threshold, so every episode requires
actually moving the arm.
"""

from __future__ import annotations

import math

import numpy as np

from .grid import StepResult

DT = 0.05
STEP_LIMIT = 150
THRESHOLD = 1.0
# deliberately weak motors: a random policy finds the reward disc in <10% of
# episodes, so the task keeps its hard-exploration character, while the
# scripted controller still reaches every target inside the step limit
TORQUE_GAIN = 2.0
DAMPING = 1.0
MAX_SPEED = 2.0
TARGET_RADIUS = (0.4, 1.8)
OBS_DIM = 10
_SPAWN_RETRIES = 100


def tip_position(q: np.ndarray) -> np.ndarray:
    """Forward kinematics for the two unit links."""
    return np.array([
        math.cos(q[0]) + math.cos(q[0] + q[1]),
        math.sin(q[0]) + math.sin(q[0] + q[1]),
    ])


def sparse_reward(tip: np.ndarray, target: np.ndarray,
                  threshold: float = THRESHOLD) -> float:
    """r = threshold - d when d <= threshold, else 0 (so r is 0 exactly at
    the boundary and never negative)."""
    d = float(np.hypot(tip[0] - target[0], tip[1] - target[1]))
    return threshold - d if d <= threshold else 0.0


class SparsePointReacher:
    def __init__(self, seed: int = 0, step_limit: int = STEP_LIMIT,
                 threshold: float = THRESHOLD, frame_stack: int = 1):
        self._rng = np.random.default_rng(seed)
        self.step_limit = step_limit
        self.threshold = threshold
        if frame_stack < 1:
            raise ValueError("frame_stack must be >= 1")
        self.frame_stack = frame_stack
        self._live = False

    @property
    def num_actions(self) -> int:  # action vector width
        return 2

    @property
    def obs_dim(self) -> int:
        return OBS_DIM * self.frame_stack

    @property
    def raw_obs_dim(self) -> int:
        return OBS_DIM

    action_space_kind = "box"

    def reset(self, seed: int | None = None) -> np.ndarray:
        rng = np.random.default_rng(seed) if seed is not None else self._rng
        for _ in range(_SPAWN_RETRIES):
            self.q = rng.uniform(-math.pi, math.pi, size=2)
            self.w = np.zeros(2)
            radius = rng.uniform(*TARGET_RADIUS)
            angle = rng.uniform(-math.pi, math.pi)
            self.target = radius * np.array([math.cos(angle), math.sin(angle)])
            d0 = float(np.linalg.norm(tip_position(self.q) - self.target))
            if d0 > self.threshold * 1.25:
                break
        else:
            raise RuntimeError("could not draw a start pose outside the reward zone")
        self.step_count = 0
        self._live = True
        frame = self.encode_obs()
        self._frames = [frame] * self.frame_stack
        return self._stacked()

    def _stacked(self) -> np.ndarray:
        if self.frame_stack == 1:
            return self._frames[-1]
        return np.concatenate(self._frames)

    def step(self, action: np.ndarray) -> StepResult:
        if not self._live:
            raise RuntimeError("step() after episode end; call reset() first")
        a = np.clip(np.asarray(action, dtype=np.float64).reshape(2), -1.0, 1.0)
        self.w = self.w + DT * (TORQUE_GAIN * a - DAMPING * self.w)
        self.w = np.clip(self.w, -MAX_SPEED, MAX_SPEED)
        self.q = self.q + DT * self.w
        self.q = (self.q + math.pi) % (2 * math.pi) - math.pi

        reward = sparse_reward(tip_position(self.q), self.target, self.threshold)
        self.step_count += 1
        success = reward > 0.0
        done = success or self.step_count >= self.step_limit
        if done:
            self._live = False
        frame = self.encode_obs()
        self._frames = self._frames[1:] + [frame] if self.frame_stack > 1 else [frame]
        return StepResult(self._stacked(), reward, done, success)

    def encode_obs(self) -> np.ndarray:
        """[sin/cos of both joints, scaled velocities, scaled target xy,
        scaled tip-to-target vector] — every entry in [-1, 1]."""
        tip = tip_position(self.q)
        to_target = self.target - tip
        return np.array([
            math.sin(self.q[0]), math.cos(self.q[0]),
            math.sin(self.q[1]), math.cos(self.q[1]),
            self.w[0] / MAX_SPEED, self.w[1] / MAX_SPEED,
            self.target[0] / 2.0, self.target[1] / 2.0,
            to_target[0] / 4.0, to_target[1] / 4.0,
        ])

    def render(self) -> str:
        tip = tip_position(self.q)
        d = float(np.linalg.norm(tip - self.target))
        return (f"q=({self.q[0]:+.3f},{self.q[1]:+.3f}) "
                f"tip=({tip[0]:+.3f},{tip[1]:+.3f}) "
                f"target=({self.target[0]:+.3f},{self.target[1]:+.3f}) d={d:.3f}")
