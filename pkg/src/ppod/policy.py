"""Actor-critic heads over the dense-network core.

One ParameterSet holds a shared trunk ("body.0", "body.1", ...) plus a policy
head "pi" and a value head "vf". Discrete tasks get a categorical head
(logits); continuous tasks get a diagonal Gaussian whose mean comes from "pi"
and whose log standard deviation is a state-independent vector stored as the
bias of a pseudo-layer "log_std" (its weight row stays zero and is never
updated). log_std is clamped to [-5, 2]; log-probabilities are floored at
LOG_PROB_FLOOR so arbitrarily unlikely replayed actions stay finite.

All functions are pure in the parameters; sampling draws only from the
generator passed in (one uniform per discrete action, one normal vector per
continuous action), so per-actor streams stay aligned regardless of batching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import nn
from .nn import Array, Grads, NumericError, ParameterSet

LOG_PROB_FLOOR = -30.0
LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass
class PolicyOutput:
    """Distribution parameters and value estimate for one observation."""

    dist_kind: str  # "categorical" | "gaussian"
    logits: Array | None
    mean: Array | None
    log_std: Array | None
    value: float


@dataclass
class ActionRecord:
    """What an actor logs at sampling time: the action, its log density/mass
    under the emitting distribution, and the value estimate."""

    action: object
    log_prob: float
    value: float


def build_policy_params(
    obs_dim: int,
    action_dim: int,
    continuous: bool,
    rng: np.random.Generator,
    hidden: tuple[int, ...] = (64, 64),
) -> ParameterSet:
    """Trunk + heads. Hidden layers use gain sqrt(2); the policy head starts
    near-uniform (gain 0.01) and the value head at gain 1."""
    params = ParameterSet()
    widths = [obs_dim, *hidden]
    for i in range(len(hidden)):
        w, b = nn.init_linear(widths[i], widths[i + 1], math.sqrt(2.0), rng)
        params.add(f"body.{i}", w, b)
    w, b = nn.init_linear(hidden[-1], action_dim, 0.01, rng)
    params.add("pi", w, b)
    w, b = nn.init_linear(hidden[-1], 1, 1.0, rng)
    params.add("vf", w, b)
    if continuous:
        params.add("log_std", np.zeros((1, action_dim)), np.zeros(action_dim))
    return params


def is_continuous(params: ParameterSet) -> bool:
    return "log_std" in params


def obs_dim_of(params: ParameterSet) -> int:
    return params["body.0"][0].shape[0]


def action_dim_of(params: ParameterSet) -> int:
    return params["pi"][0].shape[1]


def _body_names(params: ParameterSet) -> list[str]:
    return [n for n in params.names() if n.startswith("body.")]


def effective_log_std(params: ParameterSet) -> Array:
    # only the bias carries the parameter; the weight row is layer-shaped
    # padding and must stay out of the function, or finite differences
    # would see a sensitivity the backward pass (rightly) reports as zero
    _, b = params["log_std"]
    return np.clip(b, LOG_STD_MIN, LOG_STD_MAX)


def _forward_trunk(params: ParameterSet, obs: Array, activation: str):
    """Activation after every trunk layer; returns (features, cache)."""
    h = np.asarray(obs, dtype=np.float64)
    if h.ndim == 1:
        h = h.reshape(1, -1)
    cache = []
    for name in _body_names(params):
        w, b = params[name]
        if h.shape[1] != w.shape[0]:
            raise nn.DimensionError(
                f"layer {name!r} expects input width {w.shape[0]}, got {h.shape[1]}"
            )
        pre = h @ w + b
        post = np.tanh(pre) if activation == "tanh" else np.maximum(pre, 0.0)
        cache.append((h, pre, post, name))
        h = post
    return h, cache


def _backward_trunk(params: ParameterSet, cache, d_h: Array, grads: Grads, activation: str) -> None:
    for h_in, pre, post, name in reversed(cache):
        if activation == "tanh":
            d_pre = d_h * (1.0 - post * post)
        else:
            d_pre = d_h * (pre > 0.0)
        grads[name] = (h_in.T @ d_pre, d_pre.sum(axis=0))
        d_h = d_pre @ params[name][0].T


@dataclass
class ForwardCache:
    """Everything the PPO backward pass needs from one evaluate call."""

    trunk: list
    features: Array  # (B, H)
    head: Array  # logits or mean, (B, A)
    log_std: Array | None  # (A,) clamped, or None
    values: Array  # (B,)
    activation: str


def forward_policy(params: ParameterSet, obs: Array, activation: str = "tanh") -> ForwardCache:
    feats, trunk_cache = _forward_trunk(params, obs, activation)
    w_pi, b_pi = params["pi"]
    w_vf, b_vf = params["vf"]
    head = feats @ w_pi + b_pi
    values = (feats @ w_vf + b_vf)[:, 0]
    log_std = effective_log_std(params) if is_continuous(params) else None
    return ForwardCache(trunk_cache, feats, head, log_std, values, activation)


def _log_softmax(logits: Array) -> Array:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def categorical_entropy(logits: Array) -> Array:
    logp = _log_softmax(logits)
    p = np.exp(logp)
    return -np.sum(p * logp, axis=1)


def gaussian_entropy(log_std: Array) -> float:
    return float(np.sum(log_std + 0.5 + _HALF_LOG_2PI))


def gaussian_log_prob(actions: Array, mean: Array, log_std: Array) -> Array:
    sigma = np.exp(log_std)
    z = (actions - mean) / sigma
    return np.sum(-0.5 * z * z - log_std - _HALF_LOG_2PI, axis=1)


def policy_output(params: ParameterSet, obs: Array, activation: str = "tanh") -> PolicyOutput:
    fc = forward_policy(params, np.asarray(obs).reshape(1, -1), activation)
    if is_continuous(params):
        return PolicyOutput("gaussian", None, fc.head[0], fc.log_std, float(fc.values[0]))
    return PolicyOutput("categorical", fc.head[0], None, None, float(fc.values[0]))


def act(params: ParameterSet, obs: Array, rng: np.random.Generator,
        activation: str = "tanh") -> ActionRecord:
    """Sample one action; log_prob and value are recorded at sampling time."""
    actions, log_probs, values = act_batch(
        params, np.asarray(obs).reshape(1, -1), [rng], activation
    )
    action = int(actions[0]) if not is_continuous(params) else actions[0]
    return ActionRecord(action, float(log_probs[0]), float(values[0]))


def act_batch(params: ParameterSet, obs: Array, rngs: list[np.random.Generator],
              activation: str = "tanh") -> tuple[Array, Array, Array]:
    """One forward pass for a batch of actors, one independent draw per row.

    Row i consumes exactly one uniform (discrete) or one normal vector
    (continuous) from rngs[i], so the stream an actor sees does not depend on
    who else is in the batch.
    """
    obs = np.asarray(obs, dtype=np.float64)
    if obs.ndim != 2 or len(rngs) != obs.shape[0]:
        raise nn.DimensionError(
            f"act_batch needs (B, obs_dim) observations and B generators; "
            f"got {obs.shape} and {len(rngs)}"
        )
    fc = forward_policy(params, obs, activation)
    if not (np.all(np.isfinite(fc.head)) and np.all(np.isfinite(fc.values))):
        raise NumericError("non-finite network output in act")
    if is_continuous(params):
        sigma = np.exp(fc.log_std)
        z = np.stack([rng.standard_normal(fc.head.shape[1]) for rng in rngs])
        actions = fc.head + sigma * z
        log_probs = gaussian_log_prob(actions, fc.head, fc.log_std)
    else:
        logp = _log_softmax(fc.head)
        cdf = np.cumsum(np.exp(logp), axis=1)
        us = np.array([rng.random() for rng in rngs])
        actions = np.minimum(
            (cdf < us[:, None]).sum(axis=1), fc.head.shape[1] - 1
        ).astype(np.int64)
        log_probs = logp[np.arange(len(rngs)), actions]
    return actions, np.maximum(log_probs, LOG_PROB_FLOOR), fc.values


def greedy_action(params: ParameterSet, obs: Array, activation: str = "tanh"):
    """Mode of the policy: argmax logits, or the Gaussian mean."""
    fc = forward_policy(params, np.asarray(obs).reshape(1, -1), activation)
    if is_continuous(params):
        return fc.head[0]
    return int(np.argmax(fc.head[0]))


def value_of(params: ParameterSet, obs: Array, activation: str = "tanh") -> Array:
    """V(s) for one observation (scalar) or a batch (vector)."""
    single = np.asarray(obs).ndim == 1
    fc = forward_policy(params, np.asarray(obs).reshape(1, -1) if single else obs, activation)
    return float(fc.values[0]) if single else fc.values


def evaluate_actions(
    params: ParameterSet,
    obs_batch: Array,
    action_batch: Array,
    activation: str = "tanh",
) -> tuple[Array, Array, Array]:
    """(log_probs, entropies, values) of given actions under current params."""
    lp, ent, values, _ = evaluate_actions_cached(params, obs_batch, action_batch, activation)
    return lp, ent, values


def evaluate_actions_cached(
    params: ParameterSet,
    obs_batch: Array,
    action_batch: Array,
    activation: str = "tanh",
) -> tuple[Array, Array, Array, ForwardCache]:
    obs_batch = np.asarray(obs_batch, dtype=np.float64)
    fc = forward_policy(params, obs_batch, activation)
    n = obs_batch.shape[0]
    if is_continuous(params):
        actions = np.asarray(action_batch, dtype=np.float64).reshape(n, -1)
        if actions.shape[1] != fc.head.shape[1]:
            raise nn.DimensionError(
                f"action width {actions.shape[1]} != policy head width {fc.head.shape[1]}"
            )
        log_probs = gaussian_log_prob(actions, fc.head, fc.log_std)
        entropies = np.full(n, gaussian_entropy(fc.log_std))
    else:
        actions = np.asarray(action_batch, dtype=np.int64).reshape(-1)
        if actions.shape[0] != n:
            raise ValueError("obs and action batches differ in length")
        if actions.min(initial=0) < 0 or actions.max(initial=0) >= fc.head.shape[1]:
            raise IndexError(
                f"action id out of range [0, {fc.head.shape[1]}) in batch"
            )
        logp = _log_softmax(fc.head)
        log_probs = logp[np.arange(n), actions]
        entropies = -np.sum(np.exp(logp) * logp, axis=1)
    return np.maximum(log_probs, LOG_PROB_FLOOR), entropies, fc.values, fc


def policy_backward(
    params: ParameterSet,
    fc: ForwardCache,
    action_batch: Array,
    d_log_prob: Array,
    d_entropy: Array,
    d_value: Array,
) -> Grads:
    """Gradients of sum_i(d_log_prob_i·logπ(a_i|s_i) + d_entropy_i·H_i +
    d_value_i·V_i) with respect to every parameter.

    Rows whose log-probability sits at the floor get zero d_log_prob (the
    floor is flat); clamped log_std entries likewise pass no gradient.
    """
    n = fc.head.shape[0]
    d_log_prob = np.asarray(d_log_prob, dtype=np.float64).reshape(n)
    d_entropy = np.asarray(d_entropy, dtype=np.float64).reshape(n)
    d_value = np.asarray(d_value, dtype=np.float64).reshape(n)
    grads: Grads = {}

    if is_continuous(params):
        actions = np.asarray(action_batch, dtype=np.float64).reshape(n, -1)
        sigma = np.exp(fc.log_std)
        diff = (actions - fc.head) / sigma
        raw_lp = np.sum(-0.5 * diff * diff - fc.log_std - _HALF_LOG_2PI, axis=1)
        dlp = np.where(raw_lp > LOG_PROB_FLOOR, d_log_prob, 0.0)
        d_head = dlp[:, None] * (diff / sigma)
        d_log_std_vec = (dlp[:, None] * (diff * diff - 1.0)).sum(axis=0) + d_entropy.sum()
        w_ls, b_ls = params["log_std"]
        inside = (b_ls > LOG_STD_MIN) & (b_ls < LOG_STD_MAX)
        d_log_std_vec = np.where(inside, d_log_std_vec, 0.0)
        grads["log_std"] = (np.zeros_like(w_ls), d_log_std_vec)
    else:
        actions = np.asarray(action_batch, dtype=np.int64).reshape(n)
        logp = _log_softmax(fc.head)
        p = np.exp(logp)
        raw_lp = logp[np.arange(n), actions]
        dlp = np.where(raw_lp > LOG_PROB_FLOOR, d_log_prob, 0.0)
        onehot = np.zeros_like(p)
        onehot[np.arange(n), actions] = 1.0
        ent = -np.sum(p * logp, axis=1)
        d_head = dlp[:, None] * (onehot - p) - d_entropy[:, None] * p * (logp + ent[:, None])

    w_pi, _ = params["pi"]
    w_vf, _ = params["vf"]
    d_vf_out = d_value[:, None]
    grads["pi"] = (fc.features.T @ d_head, d_head.sum(axis=0))
    grads["vf"] = (fc.features.T @ d_vf_out, d_vf_out.sum(axis=0))
    d_feats = d_head @ w_pi.T + d_vf_out @ w_vf.T
    _backward_trunk(params, fc.trunk, d_feats, grads, fc.activation)
    return {name: grads[name] for name in params.names() if name in grads}
