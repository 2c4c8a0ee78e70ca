"""Dense-network math for small MLPs: forward passes, exact reverse-mode
gradients, Adam updates, gradient checking, and JSON parameter checkpoints.

All tensors are float64 numpy arrays in row-major order. Networks here are
deliberately tiny (a few dense layers), so everything favors determinism and
verifiability over throughput: identical inputs give bit-identical outputs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

Array = np.ndarray

CHECKPOINT_FORMAT_VERSION = 1

ACTIVATIONS = ("tanh", "relu")


class DimensionError(ValueError):
    """Shape mismatch between an input and a layer, or between two layers."""


class NumericError(FloatingPointError):
    """A non-finite value appeared where the contract requires finite data."""


def _check_finite(name: str, arr: Array) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite entries in {name!r}")


def _activate(pre: Array, activation: str) -> Array:
    if activation == "tanh":
        return np.tanh(pre)
    if activation == "relu":
        return np.maximum(pre, 0.0)
    raise ValueError(f"unknown activation {activation!r}")


def _activate_grad(pre: Array, post: Array, activation: str) -> Array:
    # derivative expressed from the cached pre/post activation values
    if activation == "tanh":
        return 1.0 - post * post
    if activation == "relu":
        return (pre > 0.0).astype(np.float64)
    raise ValueError(f"unknown activation {activation!r}")


class ParameterSet:
    """Ordered map from layer name to a (weight, bias) pair.

    Weights have shape (fan_in, fan_out), biases (fan_out,). Iteration order
    is insertion order and is part of the contract (checkpoints, Adam state
    and gradient dicts all mirror it).
    """

    def __init__(self) -> None:
        self._entries: dict[str, tuple[Array, Array]] = {}

    def add(self, name: str, weight: Array, bias: Array) -> None:
        if name in self._entries:
            raise ValueError(f"duplicate layer name {name!r}")
        weight = np.asarray(weight, dtype=np.float64)
        bias = np.asarray(bias, dtype=np.float64)
        if weight.ndim != 2 or bias.ndim != 1 or weight.shape[1] != bias.shape[0]:
            raise DimensionError(
                f"layer {name!r}: weight {weight.shape} incompatible with bias {bias.shape}"
            )
        _check_finite(name, weight)
        _check_finite(name, bias)
        self._entries[name] = (weight, bias)

    def names(self) -> list[str]:
        return list(self._entries)

    def __getitem__(self, name: str) -> tuple[Array, Array]:
        return self._entries[name]

    def __setitem__(self, name: str, pair: tuple[Array, Array]) -> None:
        self._entries[name] = pair

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __iter__(self):
        return iter(self._entries.items())

    def __len__(self) -> int:
        return len(self._entries)

    def copy(self) -> "ParameterSet":
        out = ParameterSet()
        for name, (w, b) in self:
            out.add(name, w.copy(), b.copy())
        return out

    def num_params(self) -> int:
        return sum(w.size + b.size for _, (w, b) in self)

    def allclose(self, other: "ParameterSet", atol: float = 0.0) -> bool:
        if self.names() != other.names():
            return False
        for name, (w, b) in self:
            ow, ob = other[name]
            if not (np.allclose(w, ow, atol=atol, rtol=0.0) and np.allclose(b, ob, atol=atol, rtol=0.0)):
                return False
        return True


# Gradients are carried as a plain dict mirroring ParameterSet: name -> (dW, db).
Grads = dict[str, tuple[Array, Array]]


def zero_grads(params: ParameterSet) -> Grads:
    return {name: (np.zeros_like(w), np.zeros_like(b)) for name, (w, b) in params}


def add_grads(acc: Grads, extra: Grads, scale: float = 1.0) -> None:
    for name, (dw, db) in extra.items():
        aw, ab = acc[name]
        aw += scale * dw
        ab += scale * db


def grad_global_norm(grads: Grads) -> float:
    total = 0.0
    for dw, db in grads.values():
        total += float(np.sum(dw * dw)) + float(np.sum(db * db))
    return math.sqrt(total)


def clip_grad_norm(grads: Grads, max_norm: float) -> float:
    """Scale gradients in place so their global L2 norm is at most max_norm."""
    norm = grad_global_norm(grads)
    if max_norm > 0.0 and norm > max_norm:
        scale = max_norm / norm
        for dw, db in grads.values():
            dw *= scale
            db *= scale
    return norm


def init_linear(fan_in: int, fan_out: int, gain: float, rng: np.random.Generator) -> tuple[Array, Array]:
    """Scaled-uniform init: entries U(-a, a) with a = gain * sqrt(3 / fan_in),
    which matches the variance of an orthogonal init with the same gain.
    Biases start at zero."""
    a = gain * math.sqrt(3.0 / fan_in)
    w = rng.uniform(-a, a, size=(fan_in, fan_out))
    b = np.zeros(fan_out)
    return w, b


def build_mlp_params(
    dims: list[int],
    rng: np.random.Generator,
    hidden_gain: float = math.sqrt(2.0),
    out_gain: float = 1.0,
    prefix: str = "layer",
) -> ParameterSet:
    """ParameterSet for a plain MLP with widths dims[0] -> ... -> dims[-1]."""
    if len(dims) < 2:
        raise ValueError("need at least an input and an output width")
    params = ParameterSet()
    for i in range(len(dims) - 1):
        gain = out_gain if i == len(dims) - 2 else hidden_gain
        w, b = init_linear(dims[i], dims[i + 1], gain, rng)
        params.add(f"{prefix}.{i}", w, b)
    return params


def forward_mlp(params: ParameterSet, x: Array, activation: str = "tanh") -> Array:
    """Evaluate the MLP: activation after every layer except the last.

    Accepts a single input vector (d,) or a batch (B, d). Pure function of
    (params, x); raises DimensionError naming the offending layer.
    """
    out, _ = _forward_cached(params, x, activation)
    return out


def _forward_cached(params: ParameterSet, x: Array, activation: str):
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    h = x.reshape(1, -1) if squeeze else x
    names = params.names()
    cache = []  # (input, pre, post) per layer
    for i, name in enumerate(names):
        w, b = params[name]
        if h.shape[1] != w.shape[0]:
            raise DimensionError(
                f"layer {name!r} expects input width {w.shape[0]}, got {h.shape[1]}"
            )
        pre = h @ w + b
        post = _activate(pre, activation) if i < len(names) - 1 else pre
        cache.append((h, pre, post))
        h = post
    return (h[0] if squeeze else h), cache


def backward_mlp(
    params: ParameterSet,
    x: Array,
    upstream_grad: Array,
    activation: str = "tanh",
) -> tuple[Grads, Array]:
    """Exact gradients of <upstream_grad, forward_mlp(params, x)>.

    Returns (parameter gradients, gradient with respect to x).
    """
    out, cache = _forward_cached(params, x, activation)
    g = np.asarray(upstream_grad, dtype=np.float64)
    squeeze = g.ndim == 1
    if g.shape != np.shape(out):
        raise DimensionError(
            f"upstream gradient shape {g.shape} does not match output shape {np.shape(out)}"
        )
    d = g.reshape(1, -1) if squeeze else g
    names = params.names()
    grads: Grads = {}
    for i in range(len(names) - 1, -1, -1):
        h, pre, post = cache[i]
        if i < len(names) - 1:
            d = d * _activate_grad(pre, post, activation)
        w, _ = params[names[i]]
        grads[names[i]] = (h.T @ d, d.sum(axis=0))
        d = d @ w.T
    dx = d[0] if squeeze else d
    return {name: grads[name] for name in names}, dx


@dataclass
class AdamState:
    """First/second moment estimates mirroring a ParameterSet, plus the step
    counter. v entries stay nonnegative by construction."""

    m: Grads
    v: Grads
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-5

    @classmethod
    def for_params(cls, params: ParameterSet, beta1: float = 0.9, beta2: float = 0.999,
                   eps: float = 1e-5) -> "AdamState":
        return cls(m=zero_grads(params), v=zero_grads(params), t=0,
                   beta1=beta1, beta2=beta2, eps=eps)


def adam_step(
    params: ParameterSet,
    grads: Grads,
    state: AdamState,
    lr: float,
    only: set[str] | None = None,
) -> tuple[ParameterSet, AdamState]:
    """One Adam update, in place on params and state.

    With lr=0 the parameters are untouched bit for bit while moments and t
    still advance. `only` restricts the update (moments included) to the
    named layers; others are left exactly as they were.
    """
    if lr < 0.0:
        raise ValueError("learning rate must be >= 0")
    for name, (dw, db) in grads.items():
        if not (np.all(np.isfinite(dw)) and np.all(np.isfinite(db))):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for name, (w, b) in params:
        if only is not None and name not in only:
            continue
        dw, db = grads[name]
        mw, mb = state.m[name]
        vw, vb = state.v[name]
        mw *= b1
        mw += (1.0 - b1) * dw
        mb *= b1
        mb += (1.0 - b1) * db
        vw *= b2
        vw += (1.0 - b2) * dw * dw
        vb *= b2
        vb += (1.0 - b2) * db * db
        if lr != 0.0:
            w -= lr * (mw / bc1) / (np.sqrt(vw / bc2) + state.eps)
            b -= lr * (mb / bc1) / (np.sqrt(vb / bc2) + state.eps)
    return params, state


@dataclass
class GradCheckReport:
    """Per-parameter max relative error between reverse-mode and central
    finite differences."""

    per_param: dict[str, float] = field(default_factory=dict)
    max_rel_error: float = 0.0
    tolerance: float = 1e-4

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def grad_check(
    params: ParameterSet,
    loss_and_grad_fn,
    tolerance: float = 1e-4,
    h: float = 1e-5,
) -> GradCheckReport:
    """Compare reverse-mode gradients against central finite differences.

    loss_and_grad_fn(params) must return (scalar loss, Grads); only the loss
    value is used on the finite-difference side, keeping the two routes
    independent. Relative error is |g - fd| / max(|g| + |fd|, 1e-6).
    """
    _, grads = loss_and_grad_fn(params)
    report = GradCheckReport(tolerance=tolerance)
    for name, (w, b) in params:
        dw, db = grads[name]
        worst = 0.0
        for arr, g in ((w, dw), (b, db)):
            flat = arr.reshape(-1)
            gflat = np.asarray(g, dtype=np.float64).reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up, _ = loss_and_grad_fn(params)
                flat[i] = orig - h
                down, _ = loss_and_grad_fn(params)
                flat[i] = orig
                fd = (up - down) / (2.0 * h)
                rel = abs(gflat[i] - fd) / max(abs(gflat[i]) + abs(fd), 1e-6)
                worst = max(worst, rel)
        report.per_param[name] = worst
        report.max_rel_error = max(report.max_rel_error, worst)
    return report


def save_params(params: ParameterSet, path: str, extra: dict | None = None) -> None:
    """Write the checkpoint JSON: format_version, layer_names, shapes and
    flat row-major float data per layer. Round-trips within 1e-15 per entry
    (Python's float repr is exact for float64)."""
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "layer_names": params.names(),
        "shapes": [[list(w.shape), list(b.shape)] for _, (w, b) in params],
        "flat_data": [[w.reshape(-1).tolist(), b.tolist()] for _, (w, b) in params],
    }
    if extra:
        for key, value in extra.items():
            if key in doc:
                raise ValueError(f"extra key {key!r} collides with checkpoint field")
            doc[key] = value
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_params(path: str) -> tuple[ParameterSet, dict]:
    """Read a checkpoint written by save_params. Returns the parameters and
    any extra top-level keys. Rejects unknown format versions."""
    with open(path) as fh:
        doc = json.load(fh)
    version = doc.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version: {version!r}")
    params = ParameterSet()
    for name, (wshape, bshape), (wdata, bdata) in zip(
        doc["layer_names"], doc["shapes"], doc["flat_data"]
    ):
        w = np.asarray(wdata, dtype=np.float64).reshape(wshape)
        b = np.asarray(bdata, dtype=np.float64).reshape(bshape)
        params.add(name, w, b)
    extra = {
        k: v
        for k, v in doc.items()
        if k not in ("format_version", "layer_names", "shapes", "flat_data")
    }
    return params, extra
