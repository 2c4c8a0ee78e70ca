"""Trajectory buffers and the replay schedule.

Two buffers feed the trainer alongside live environment interaction:

* a reward buffer holding positive-return episodes (seeded with human
  demonstrations, FIFO once full, demonstrations pinned against eviction);
* a value buffer holding zero-return episodes, sampled by max-value priority
  p_i = max_t V(s_t) raised to the power alpha after shifting by the buffer
  minimum.

Rollout sources are drawn per episode: reward buffer with probability rho,
value buffer with probability phi, live environment otherwise. Each time a
new success grows the reward buffer while the value buffer still has
capacity, the schedule anneals: rho += phi_0/dv_cap_0, phi -= the same, the
value-buffer capacity shrinks by one, and the freed slot goes to the reward
buffer — so rho+phi and dv_cap+dr_size stay constant until phi hits zero.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .nn import Array

EPS_PRIORITY = 1e-6


class Origin(enum.Enum):
    HUMAN_DEMO = "human_demo"
    SELF_SUCCESS = "self_success"
    SELF_UNSUCCESSFUL = "self_unsuccessful"


class Source(enum.Enum):
    REWARD = "reward_buffer"
    VALUE = "value_buffer"
    ENV = "env"


@dataclass
class Trajectory:
    """One stored episode: per-step observations, actions and rewards, all the
    same length (observations[t] is the state action[t] was taken in)."""

    observations: Array  # (L, obs_dim)
    actions: Array  # (L,) or (L, act_dim)
    rewards: Array  # (L,)
    origin: Origin
    id: int
    priority: float = 0.0

    def __post_init__(self):
        self.observations = np.asarray(self.observations, dtype=np.float64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        self.actions = np.asarray(self.actions)
        L = len(self.rewards)
        if L < 1 or len(self.observations) != L or len(self.actions) != L:
            raise ValueError(
                f"trajectory sequences must share a length >= 1; got obs "
                f"{len(self.observations)}, actions {len(self.actions)}, rewards {L}"
            )
        if not np.isfinite(self.priority):
            raise ValueError("priority must be finite")

    def __len__(self) -> int:
        return len(self.rewards)

    @property
    def episode_return(self) -> float:
        return float(self.rewards.sum())


class RewardBuffer:
    """Positive-return episodes plus pinned human demonstrations; FIFO among
    the non-demonstration items once at capacity."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("reward buffer capacity must be >= 1")
        self.capacity = capacity
        self.items: list[Trajectory] = []

    def __len__(self) -> int:
        return len(self.items)

    @property
    def full(self) -> bool:
        return len(self.items) >= self.capacity

    def append(self, traj: Trajectory) -> Trajectory | None:
        """Add a trajectory, FIFO-evicting the oldest non-demonstration item
        if full. Returns the evicted trajectory, if any."""
        evicted = None
        if self.full:
            for i, item in enumerate(self.items):
                if item.origin is not Origin.HUMAN_DEMO:
                    evicted = self.items.pop(i)
                    break
            else:
                raise RuntimeError(
                    "reward buffer full of pinned demonstrations; cannot insert"
                )
        self.items.append(traj)
        return evicted


class ValueBuffer:
    """Zero-return episodes, sampled by shifted max-value priority.

    use_shift=False switches to raw p_i^alpha (the literal formula); the
    default shifts by the buffer minimum and adds EPS_PRIORITY so priorities
    stay nonnegative and ties stay sampleable.
    """

    def __init__(self, capacity: int, alpha: float = 10.0, use_shift: bool = True):
        if capacity < 0:
            raise ValueError("value buffer capacity must be >= 0")
        self.capacity = capacity
        self.alpha = alpha
        self.use_shift = use_shift
        self.items: list[Trajectory] = []

    def __len__(self) -> int:
        return len(self.items)

    def min_priority(self) -> float:
        return min(t.priority for t in self.items)

    def sampling_probabilities(self) -> Array:
        if not self.items:
            raise ValueError("value buffer is empty")
        p = np.array([t.priority for t in self.items], dtype=np.float64)
        if self.use_shift:
            base = p - p.min() + EPS_PRIORITY
        else:
            base = p
        weights = base ** self.alpha
        total = weights.sum()
        if not np.isfinite(total) or total <= 0.0:
            raise FloatingPointError(
                f"degenerate sampling weights (sum {total}); "
                "raw priorities may need the shifted form"
            )
        return weights / total

    def shrink_to(self, capacity: int) -> list[Trajectory]:
        """Drop lowest-priority items until len <= capacity; returns them."""
        self.capacity = capacity
        dropped = []
        while len(self.items) > capacity:
            i = int(np.argmin([t.priority for t in self.items]))
            dropped.append(self.items.pop(i))
        return dropped


@dataclass
class ReplayScheduler:
    """Current and initial mixing probabilities plus Eq.-style bookkeeping:
    dv_cap + dr_size stays constant across anneals."""

    rho: float
    phi: float
    rho_0: float
    phi_0: float
    dv_cap_0: int
    dv_cap: int
    dr_size: int
    dv_size: int = 0

    @classmethod
    def create(cls, rho: float, phi: float, dv_cap_0: int, dr_size: int = 0) -> "ReplayScheduler":
        if not (0.0 <= rho <= 1.0 and 0.0 <= phi <= 1.0):
            raise ValueError(f"rho and phi must lie in [0, 1]; got {rho}, {phi}")
        if rho + phi > 1.0:
            raise ValueError(f"rho + phi must not exceed 1; got {rho + phi}")
        if dv_cap_0 < 0:
            raise ValueError("initial value-buffer capacity must be >= 0")
        return cls(rho=rho, phi=phi, rho_0=rho, phi_0=phi,
                   dv_cap_0=dv_cap_0, dv_cap=dv_cap_0, dr_size=dr_size)


def select_source(sched: ReplayScheduler, rng: np.random.Generator) -> Source:
    """Draw one source: reward buffer w.p. rho, value buffer w.p. phi, env
    otherwise. An empty buffer's mass is redirected to the env. Consumes
    exactly one uniform."""
    rho_eff = sched.rho if sched.dr_size > 0 else 0.0
    phi_eff = sched.phi if sched.dv_size > 0 else 0.0
    u = rng.random()
    if u < rho_eff:
        return Source.REWARD
    if u < rho_eff + phi_eff:
        return Source.VALUE
    return Source.ENV


def sample_reward_traj(buf: RewardBuffer, rng: np.random.Generator) -> Trajectory:
    """Uniform over the buffer. Consumes exactly one uniform."""
    if not buf.items:
        raise ValueError("reward buffer is empty; select_source must prevent this")
    return buf.items[int(rng.integers(len(buf.items)))]


def sample_value_traj(buf: ValueBuffer, rng: np.random.Generator) -> Trajectory:
    """Priority-weighted draw using the buffer's shifted-power distribution.
    Consumes exactly one uniform."""
    if not buf.items:
        raise ValueError("value buffer is empty; select_source must prevent this")
    probs = buf.sampling_probabilities()
    idx = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
    return buf.items[min(idx, len(buf.items) - 1)]


def refresh_priority(traj: Trajectory, value_fn) -> float:
    """priority = max_t value_fn over the stored observations. value_fn maps
    an (L, obs_dim) matrix to L values. Called once at insertion and again
    whenever the trajectory is picked for replay."""
    values = np.asarray(value_fn(traj.observations), dtype=np.float64).reshape(-1)
    if values.shape[0] != len(traj):
        raise ValueError(
            f"value_fn returned {values.shape[0]} values for {len(traj)} observations"
        )
    traj.priority = float(values.max())
    return traj.priority


def anneal(sched: ReplayScheduler) -> ReplayScheduler:
    """One schedule step after a success grew the reward buffer: move phi
    mass to rho in increments of phi_0/dv_cap_0, hand one value-buffer slot
    to the reward buffer. phi floors at 0, rho caps at rho_0 + phi_0."""
    if sched.dv_cap <= 0:
        return sched
    delta = sched.phi_0 / sched.dv_cap_0 if sched.dv_cap_0 > 0 else 0.0
    sched.rho = min(sched.rho + delta, sched.rho_0 + sched.phi_0)
    sched.phi = max(sched.phi - delta, 0.0)
    sched.dv_cap -= 1
    sched.dr_size += 1
    return sched


@dataclass
class InsertReport:
    inserted: bool
    buffer: Source | None
    annealed: bool = False
    evicted_id: int | None = None
    reason: str = ""


def insert_episode(
    traj: Trajectory,
    dr: RewardBuffer,
    dv: ValueBuffer,
    sched: ReplayScheduler,
    value_fn=None,
) -> InsertReport:
    """Route one finished LIVE episode into a buffer (replayed episodes are
    never re-inserted).

    Positive return -> reward buffer; while the buffer is still growing the
    schedule anneals once per insertion, shrinking the value buffer's
    capacity (lowest-priority item dropped if over the new cap). Zero return
    -> value-buffer candidate, kept only while below capacity or when beating
    the current minimum priority. Negative returns are rejected.
    """
    ret = traj.episode_return
    if ret < 0.0:
        return InsertReport(False, None, reason="negative episode return")

    if ret > 0.0:
        grew = not dr.full
        evicted = dr.append(traj)
        sched.dr_size = len(dr.items)
        annealed = False
        if grew and sched.dv_cap > 0:
            anneal(sched)
            sched.dr_size = len(dr.items)  # anneal bookkeeping must match reality
            dv.shrink_to(sched.dv_cap)
            sched.dv_size = len(dv.items)
            annealed = True
        return InsertReport(True, Source.REWARD, annealed=annealed,
                            evicted_id=evicted.id if evicted else None)

    # zero-return episode: value-buffer candidate
    if traj.origin is not Origin.SELF_UNSUCCESSFUL:
        return InsertReport(False, None, reason="zero-return trajectory must "
                                                 f"be self-collected, got {traj.origin.value}")
    if value_fn is not None:
        refresh_priority(traj, value_fn)
    cap = sched.dv_cap
    if cap <= 0:
        return InsertReport(False, None, reason="value buffer capacity is zero")
    if len(dv.items) < cap:
        dv.items.append(traj)
        sched.dv_size = len(dv.items)
        return InsertReport(True, Source.VALUE)
    if traj.priority > dv.min_priority():
        i = int(np.argmin([t.priority for t in dv.items]))
        evicted = dv.items.pop(i)
        dv.items.append(traj)
        sched.dv_size = len(dv.items)
        return InsertReport(True, Source.VALUE, evicted_id=evicted.id)
    return InsertReport(False, None, reason="priority below buffer minimum")


@dataclass
class ReplaySlice:
    """A verbatim stretch of a stored trajectory, shaped for rollout storage:
    is_replay is implied true and behavior log-probs are identically zero."""

    obs: Array
    actions: Array
    rewards: Array
    dones: Array
    start: int
    next_start: int
    exhausted: bool  # the trajectory's final step is included


def replay_into_rollout(traj: Trajectory, start: int, length: int) -> ReplaySlice:
    """Emit up to `length` stored transitions beginning at `start`. The final
    stored step carries done=True; a slice that stops earlier leaves the
    trajectory resumable at next_start."""
    L = len(traj)
    if not (0 <= start < L):
        raise ValueError(f"start {start} outside trajectory of length {L}")
    if length < 1:
        raise ValueError("length must be >= 1")
    stop = min(start + length, L)
    n = stop - start
    dones = np.zeros(n, dtype=bool)
    exhausted = stop == L
    if exhausted:
        dones[-1] = True
    return ReplaySlice(
        obs=traj.observations[start:stop],
        actions=traj.actions[start:stop],
        rewards=traj.rewards[start:stop],
        dones=dones,
        start=start,
        next_start=stop,
        exhausted=exhausted,
    )
