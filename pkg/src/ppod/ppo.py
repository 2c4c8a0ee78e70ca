"""PPO core: GAE, clipped surrogate with source-dependent importance
denominators, value loss, entropy bonus, and the K-epoch minibatch update.

Replayed transitions (demonstrations or prioritized self-trajectories) carry
behavior_log_prob = 0: the replay source assigns probability one to the
stored action, so the importance ratio degenerates to the new policy's own
probability mass/density at that action. Importance weighting applies only to
the action (surrogate) term — the value loss is a plain squared error against
the GAE return targets, never reweighted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn, policy
from .nn import Array, Grads, ParameterSet


@dataclass
class TrainConfig:
    """PPO hyperparameters. K epochs of M minibatches over N actors × T steps."""

    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.15
    c1: float = 0.1  # value-loss coefficient
    c2: float = 0.02  # entropy coefficient
    lr: float = 2.5e-4
    epochs: int = 4  # K
    minibatches: int = 8  # M
    num_actors: int = 8  # N
    horizon: int = 256  # T
    max_grad_norm: float = 0.5
    adam_eps: float = 1e-5
    normalize_advantages: bool = True
    # Alternative reading of the replay rule: restrict the value loss to
    # replayed transitions instead of refreshing priorities. Off by default.
    value_loss_replay_only: bool = False
    activation: str = "tanh"

    def validate(self) -> None:
        if not (0.0 < self.gamma <= 1.0):
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        if not (0.0 <= self.lam <= 1.0):
            raise ValueError(f"lam must be in [0, 1], got {self.lam}")
        if not (0.0 < self.clip_eps < 1.0):
            raise ValueError(f"clip_eps must be in (0, 1), got {self.clip_eps}")
        for name in ("epochs", "minibatches", "num_actors", "horizon"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


@dataclass
class RolloutBatch:
    """N·T transitions laid out actor-major: index = actor·T + t.

    Each actor's T steps form one segment; episodes may span segment
    boundaries (an unfinished tail is bootstrapped, see compute_gae).
    """

    obs: Array  # (L, obs_dim)
    actions: Array  # (L,) int64 or (L, act_dim) float64
    rewards: Array  # (L,)
    dones: Array  # (L,) bool
    behavior_log_probs: Array  # (L,)
    is_replay: Array  # (L,) bool
    values: Array  # (L,) value estimates at collection time
    num_actors: int
    horizon: int
    advantages: Array | None = None
    return_targets: Array | None = None

    def __len__(self) -> int:
        return self.obs.shape[0]

    def validate(self) -> None:
        L = len(self)
        if L != self.num_actors * self.horizon:
            raise ValueError(
                f"batch length {L} != num_actors*horizon = "
                f"{self.num_actors * self.horizon}"
            )
        for name in ("rewards", "dones", "behavior_log_probs", "is_replay", "values"):
            arr = getattr(self, name)
            if arr.shape[0] != L:
                raise ValueError(f"field {name} has length {arr.shape[0]}, expected {L}")
        if np.any(self.behavior_log_probs[self.is_replay] != 0.0):
            raise ValueError("replayed transitions must carry behavior_log_prob = 0")
        if self.advantages is not None and not np.all(np.isfinite(self.advantages)):
            raise ValueError("advantages must be finite")


def compute_gae(batch: RolloutBatch, bootstrap_values: Array | None,
                gamma: float, lam: float) -> RolloutBatch:
    """Fill advantages and return_targets in place (and return the batch).

    Standard truncated GAE per actor segment:
        δ_t = r_t + γ·V(s_{t+1})·(1−done_t) − V(s_t)
        A_t = δ_t + γλ·(1−done_t)·A_{t+1}
    bootstrap_values[i] is V of the state following actor i's last transition
    and is required whenever that transition is not terminal. Return targets
    are advantage + value_at_collection.
    """
    N, T = batch.num_actors, batch.horizon
    rewards = batch.rewards.reshape(N, T)
    dones = batch.dones.reshape(N, T).astype(np.float64)
    values = batch.values.reshape(N, T)
    unfinished = dones[:, -1] == 0.0
    if bootstrap_values is None:
        if np.any(unfinished):
            raise ValueError(
                "bootstrap values required: segment(s) "
                f"{np.nonzero(unfinished)[0].tolist()} end mid-episode"
            )
        bootstrap_values = np.zeros(N)
    bootstrap_values = np.asarray(bootstrap_values, dtype=np.float64)
    if bootstrap_values.shape != (N,):
        raise ValueError(f"bootstrap_values must have shape ({N},)")

    adv = np.zeros((N, T))
    carry = np.zeros(N)
    for t in range(T - 1, -1, -1):
        next_values = bootstrap_values if t == T - 1 else values[:, t + 1]
        nonterminal = 1.0 - dones[:, t]
        delta = rewards[:, t] + gamma * next_values * nonterminal - values[:, t]
        carry = delta + gamma * lam * nonterminal * carry
        adv[:, t] = carry
    batch.advantages = adv.reshape(-1)
    batch.return_targets = batch.advantages + batch.values
    return batch


def importance_ratio(new_log_probs: Array, behavior_log_probs: Array,
                     is_replay: Array) -> Array:
    """exp(new − behavior) for env samples; exp(new − 0) for replayed ones,
    since the replay source is a point mass on the stored action."""
    denom = np.where(is_replay, 0.0, behavior_log_probs)
    return np.exp(new_log_probs - denom)


def clipped_surrogate(ratio: Array, advantage: Array, eps: float) -> Array:
    """Per-transition pessimistic objective min(r·A, g(ε, A))."""
    g = np.where(advantage >= 0.0, (1.0 + eps) * advantage, (1.0 - eps) * advantage)
    return np.minimum(ratio * advantage, g)


def value_loss(values_new: Array, return_targets: Array) -> float:
    """Plain mean squared error — no clipping, no importance weighting."""
    if values_new.shape != return_targets.shape:
        raise ValueError("values and targets differ in length")
    diff = values_new - return_targets
    return float(np.mean(diff * diff))


def normalize_advantages(advantages: Array) -> Array:
    """Batch-standardize to mean 0, std 1. Degenerate (near-constant) batches
    are only centered, so all-zero advantages stay exactly zero."""
    std = advantages.std()
    centered = advantages - advantages.mean()
    return centered / std if std > 1e-8 else centered


@dataclass
class LossReport:
    surrogate: float
    value_loss: float
    entropy: float
    total: float
    clip_fraction: float

    @classmethod
    def combine(cls, reports: list["LossReport"]) -> "LossReport":
        n = len(reports)
        return cls(
            surrogate=sum(r.surrogate for r in reports) / n,
            value_loss=sum(r.value_loss for r in reports) / n,
            entropy=sum(r.entropy for r in reports) / n,
            total=sum(r.total for r in reports) / n,
            clip_fraction=sum(r.clip_fraction for r in reports) / n,
        )


class UpdateAborted(RuntimeError):
    """A minibatch produced a non-finite loss; carries where it happened."""

    def __init__(self, epoch: int, minibatch: int, detail: str = ""):
        self.epoch = epoch
        self.minibatch = minibatch
        super().__init__(
            f"non-finite loss at epoch {epoch}, minibatch {minibatch}"
            + (f": {detail}" if detail else "")
        )


def minibatch_loss_and_grads(
    params: ParameterSet,
    obs: Array,
    actions: Array,
    advantages: Array,
    return_targets: Array,
    behavior_log_probs: Array,
    is_replay: Array,
    cfg: TrainConfig,
) -> tuple[LossReport, Grads | None]:
    """Loss report and exact parameter gradients for one minibatch.

    total = −surrogate + c1·value_loss − c2·entropy, all terms means over the
    minibatch. The surrogate gradient flows only through unclipped elements.
    Gradients come back None when the loss is non-finite.
    """
    B = obs.shape[0]
    lp, ent, values_new, fc = policy.evaluate_actions_cached(
        params, obs, actions, cfg.activation
    )
    ratios = importance_ratio(lp, behavior_log_probs, is_replay)
    surr_elems = clipped_surrogate(ratios, advantages, cfg.clip_eps)
    surrogate = float(np.mean(surr_elems))
    if cfg.value_loss_replay_only:
        vmask = np.asarray(is_replay, dtype=bool)
        vloss = (value_loss(values_new[vmask], return_targets[vmask])
                 if vmask.any() else 0.0)
    else:
        vmask = np.ones(B, dtype=bool)
        vloss = value_loss(values_new, return_targets)
    entropy = float(np.mean(ent))
    total = -surrogate + cfg.c1 * vloss - cfg.c2 * entropy
    clip_fraction = float(np.mean(np.abs(ratios - 1.0) > cfg.clip_eps))
    report = LossReport(surrogate, vloss, entropy, total, clip_fraction)
    if not np.isfinite(total):
        return report, None  # no backward pass through garbage

    # d total / d log_prob_i: active only on the unclipped branch of the min.
    unclipped = ratios * advantages <= np.where(
        advantages >= 0.0, (1.0 + cfg.clip_eps) * advantages,
        (1.0 - cfg.clip_eps) * advantages,
    )
    d_lp = np.where(unclipped, -(advantages * ratios) / B, 0.0)
    d_ent = np.full(B, -cfg.c2 / B)
    n_val = max(int(vmask.sum()), 1)
    d_val = np.where(vmask, cfg.c1 * 2.0 * (values_new - return_targets) / n_val, 0.0)
    grads = policy.policy_backward(params, fc, actions, d_lp, d_ent, d_val)
    return report, grads


def ppo_update(
    params: ParameterSet,
    adam: nn.AdamState,
    batch: RolloutBatch,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> tuple[ParameterSet, list[LossReport]]:
    """K epochs of M minibatches over a seeded permutation of the batch.

    Mutates params/adam in place; returns them plus one averaged LossReport
    per epoch. Gradients are clipped to cfg.max_grad_norm before each Adam
    step. Raises UpdateAborted (params left as-is at that point) if any
    minibatch loss goes non-finite.
    """
    cfg.validate()
    batch.validate()
    if batch.advantages is None or batch.return_targets is None:
        raise ValueError("advantages not computed; run compute_gae first")
    L = len(batch)
    if cfg.minibatches > L:
        raise ValueError(f"M={cfg.minibatches} minibatches > {L} transitions")

    advantages = batch.advantages
    if cfg.normalize_advantages and L > 1:
        advantages = normalize_advantages(advantages)

    epoch_reports: list[LossReport] = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(L)
        reports = []
        for mb_index, idx in enumerate(np.array_split(perm, cfg.minibatches)):
            report, grads = minibatch_loss_and_grads(
                params,
                batch.obs[idx],
                batch.actions[idx],
                advantages[idx],
                batch.return_targets[idx],
                batch.behavior_log_probs[idx],
                batch.is_replay[idx],
                cfg,
            )
            if grads is None or not np.isfinite(report.total):
                raise UpdateAborted(epoch, mb_index)
            nn.clip_grad_norm(grads, cfg.max_grad_norm)
            nn.adam_step(params, grads, adam, cfg.lr)
            reports.append(report)
        epoch_reports.append(LossReport.combine(reports))
    return params, epoch_reports
