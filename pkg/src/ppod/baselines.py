"""Behavioral cloning, standalone and mixed into the PPO learner.

Cloning touches only the policy pathway (trunk + action head): the value
head and the log-std parameters are left untouched down to the optimizer
moments, so a cloning step is invisible to the critic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .nn import Array, Grads, ParameterSet
from .policy import _backward_trunk, _log_softmax, forward_policy, is_continuous
from .ppo import (
    LossReport,
    RolloutBatch,
    TrainConfig,
    UpdateAborted,
    minibatch_loss_and_grads,
    normalize_advantages,
)


@dataclass
class DemoDataset:
    """Flat (obs, action) pairs pooled from demonstration trajectories."""

    observations: Array  # (P, obs_dim)
    actions: Array       # (P,) int64 or (P, action_dim) float64
    kind: str            # "discrete" | "box"

    def __post_init__(self):
        if self.observations.shape[0] == 0:
            raise ValueError("demo dataset is empty")
        if self.actions.shape[0] != self.observations.shape[0]:
            raise ValueError("observation/action counts differ")
        if self.kind not in ("discrete", "box"):
            raise ValueError(f"unknown action kind {self.kind!r}")

    def __len__(self) -> int:
        return self.observations.shape[0]

    @classmethod
    def from_trajectories(cls, trajectories) -> "DemoDataset":
        if not trajectories:
            raise ValueError("no trajectories given")
        widths = {t.observations.shape[1] for t in trajectories}
        if len(widths) != 1:
            raise ValueError(f"mixed observation widths: {sorted(widths)}")
        kinds = {
            "discrete" if np.issubdtype(t.actions.dtype, np.integer) else "box"
            for t in trajectories
        }
        if len(kinds) != 1:
            raise ValueError("mixed action kinds across trajectories")
        return cls(
            observations=np.concatenate([t.observations for t in trajectories]),
            actions=np.concatenate([t.actions for t in trajectories]),
            kind=kinds.pop(),
        )


def kind_of_policy(params: ParameterSet) -> str:
    return "box" if is_continuous(params) else "discrete"


def policy_layer_names(params: ParameterSet) -> set:
    """The layers a cloning step is allowed to move: trunk and action head."""
    return {n for n in params.names() if n.startswith("body.")} | {"pi"}


def _check_kind(params: ParameterSet, kind: str) -> None:
    have = kind_of_policy(params)
    if kind != have:
        raise ValueError(
            f"demo actions are {kind!r} but the policy head is {have!r}"
        )


def bc_loss_and_grads(
    params: ParameterSet, obs: Array, actions: Array, activation: str = "tanh"
) -> tuple[float, Grads]:
    """Cloning loss and its gradient w.r.t. trunk + action head.

    Discrete: mean negative log-probability of the demo actions.
    Continuous: mean squared error between the policy mean and the demo
    actions (the exploration scale is not trained by cloning).
    Gradients for untouched layers are present but zero.
    """
    fc = forward_policy(params, obs, activation)
    batch = fc.head.shape[0]
    if is_continuous(params):
        actions = np.asarray(actions, dtype=np.float64)
        if actions.shape != fc.head.shape:
            raise ValueError(
                f"actions have shape {actions.shape}, expected {fc.head.shape}"
            )
        diff = fc.head - actions
        loss = float(np.mean(diff * diff))
        d_head = 2.0 * diff / diff.size
    else:
        actions = np.asarray(actions)
        log_probs = _log_softmax(fc.head)
        picked = log_probs[np.arange(batch), actions]
        loss = float(-picked.mean())
        probs = np.exp(log_probs)
        d_head = probs.copy()
        d_head[np.arange(batch), actions] -= 1.0
        d_head /= batch

    grads: Grads = {}
    w_pi, _ = params["pi"]
    grads["pi"] = (fc.features.T @ d_head, d_head.sum(axis=0))
    _backward_trunk(params, fc.trunk, d_head @ w_pi.T, grads, activation)
    for name, (w, b) in params:
        if name not in grads:
            grads[name] = (np.zeros_like(w), np.zeros_like(b))
    return loss, grads


def bc_loss(
    params: ParameterSet,
    obs: Array,
    actions: Array,
    kind: str,
    activation: str = "tanh",
) -> float:
    if obs.shape[0] == 0:
        raise ValueError("empty batch")
    _check_kind(params, kind)
    loss, _ = bc_loss_and_grads(params, obs, actions, activation)
    return loss


def bc_train(
    params: ParameterSet,
    data: DemoDataset,
    steps: int,
    lr: float,
    batch_size: int = 64,
    rng: np.random.Generator | None = None,
    activation: str = "tanh",
    adam: nn.AdamState | None = None,
) -> tuple[ParameterSet, list]:
    """Adam on the cloning loss over shuffled minibatches.

    Returns (params, per-step loss trace).  steps=0 is a no-op.  Value
    head and log-std never move.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    _check_kind(params, data.kind)
    if steps == 0:
        return params, []
    if rng is None:
        rng = np.random.default_rng(0)
    if adam is None:
        adam = nn.AdamState.for_params(params)
    names = policy_layer_names(params)
    size = min(batch_size, len(data))

    losses = []
    pool: list = []
    for _ in range(steps):
        if len(pool) < size:
            pool = list(rng.permutation(len(data))) + pool
        idx = np.array([pool.pop() for _ in range(size)])
        loss, grads = bc_loss_and_grads(
            params, data.observations[idx], data.actions[idx], activation
        )
        nn.adam_step(params, grads, adam, lr, only=names)
        losses.append(loss)
    return params, losses


def ppo_bc_update(
    params: ParameterSet,
    adam: nn.AdamState,
    batch: RolloutBatch,
    demos: DemoDataset,
    rho: float,
    cfg: TrainConfig,
    rng: np.random.Generator,
    bc_rng: np.random.Generator,
    literal_case: bool = False,
) -> tuple[ParameterSet, list[LossReport], list]:
    """PPO epochs where minibatch slots flip to cloning with probability rho.

    Mirrors the plain PPO update exactly — same permutation stream, same
    minibatch splits, same optimizer calls — so at rho=0 the parameter
    trace is bit-identical to it.  The slot coin and demo sampling come
    from the separate ``bc_rng`` so they cannot perturb that stream.

    A cloning slot draws a demo minibatch of the same size as the PPO
    minibatch it replaces and moves only trunk + action head.  With
    ``literal_case`` the loss assignment flips: the coin's demo branch
    runs the PPO loss (on env data, the only data that has advantages)
    and the env branch clones the batch's own actions instead.

    Returns (params, per-epoch PPO loss reports, cloning loss trace).
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    cfg.validate()
    batch.validate()
    if batch.advantages is None or batch.return_targets is None:
        raise ValueError("advantages not computed; run compute_gae first")
    _check_kind(params, demos.kind)
    L = len(batch)
    if cfg.minibatches > L:
        raise ValueError(f"M={cfg.minibatches} minibatches > {L} transitions")

    advantages = batch.advantages
    if cfg.normalize_advantages and L > 1:
        advantages = normalize_advantages(advantages)

    bc_names = policy_layer_names(params)
    epoch_reports: list[LossReport] = []
    bc_losses: list = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(L)
        reports = []
        for mb_index, idx in enumerate(np.array_split(perm, cfg.minibatches)):
            demo_branch = bc_rng.random() < rho
            if demo_branch != literal_case:
                # cloning slot
                if literal_case:
                    obs_mb = batch.obs[idx]
                    act_mb = batch.actions[idx]
                else:
                    pick = bc_rng.integers(0, len(demos), size=len(idx))
                    obs_mb = demos.observations[pick]
                    act_mb = demos.actions[pick]
                loss, grads = bc_loss_and_grads(
                    params, obs_mb, act_mb, cfg.activation
                )
                if not np.isfinite(loss):
                    raise UpdateAborted(epoch, mb_index, "cloning loss")
                nn.clip_grad_norm(grads, cfg.max_grad_norm)
                nn.adam_step(params, grads, adam, cfg.lr, only=bc_names)
                bc_losses.append(loss)
            else:
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
        if reports:
            epoch_reports.append(LossReport.combine(reports))
    return params, epoch_reports, bc_losses
