"""Dense networks on flat parameter vectors.

All math is float64. A network's parameters live in a single 1-D array;
per layer the weight matrix is stored row-major, immediately followed by
the bias. Keeping parameters flat makes optimizer state, soft updates and
hypernetwork-generated weights trivial to handle uniformly.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from . import _kernels

ACTIVATIONS = ("relu", "tanh", "linear")


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str = "linear"

    def __post_init__(self):
        if self.in_dim <= 0 or self.out_dim <= 0:
            raise ValueError(f"layer dims must be positive, got {self.in_dim}x{self.out_dim}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def n_params(self) -> int:
        return self.out_dim * (self.in_dim + 1)


@dataclass(frozen=True)
class MlpSpec:
    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        if not self.layers:
            raise ValueError("MlpSpec needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ValueError(f"layer dim mismatch: {a.out_dim} -> {b.in_dim}")

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def n_params(self) -> int:
        return sum(l.n_params for l in self.layers)


def mlp_spec(dims: list[int], hidden_activation: str = "relu",
             out_activation: str = "linear") -> MlpSpec:
    """Chain of dims, e.g. [64, 256, 8] -> two layers."""
    if len(dims) < 2:
        raise ValueError("need at least input and output dims")
    layers = []
    for i, (a, b) in enumerate(zip(dims, dims[1:])):
        act = out_activation if i == len(dims) - 2 else hidden_activation
        layers.append(LayerSpec(a, b, act))
    return MlpSpec(tuple(layers))


@lru_cache(maxsize=None)
def layer_slices(spec: MlpSpec) -> tuple[tuple[slice, slice], ...]:
    """(weight, bias) slices into the flat vector, one pair per layer."""
    out, off = [], 0
    for l in spec.layers:
        w = slice(off, off + l.out_dim * l.in_dim)
        b = slice(w.stop, w.stop + l.out_dim)
        out.append((w, b))
        off = b.stop
    return tuple(out)


def layer_views(spec: MlpSpec, params: np.ndarray):
    """List of (W[out,in], b[out]) views into params. No copies."""
    views = []
    for l, (ws, bs) in zip(spec.layers, layer_slices(spec)):
        views.append((params[ws].reshape(l.out_dim, l.in_dim), params[bs]))
    return views


def init_params(spec: MlpSpec, rng: np.random.Generator) -> np.ndarray:
    """Fan-in scaled uniform weights, zero biases."""
    params = np.zeros(spec.n_params)
    for l, (ws, _) in zip(spec.layers, layer_slices(spec)):
        bound = 1.0 / np.sqrt(l.in_dim)
        params[ws] = rng.uniform(-bound, bound, l.out_dim * l.in_dim)
    return params


def _act(a: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(a, 0.0)
    if kind == "tanh":
        return np.tanh(a)
    return a


def _act_grad(pre: np.ndarray, post: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (pre > 0.0).astype(np.float64)
    if kind == "tanh":
        return 1.0 - post * post
    return np.ones_like(pre)


def mlp_forward(spec: MlpSpec, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    if x.shape != (spec.in_dim,):
        raise ValueError(f"expected input shape ({spec.in_dim},), got {x.shape}")
    h = x
    for l, (w, b) in zip(spec.layers, layer_views(spec, params)):
        h = _act(w @ h + b, l.activation)
    return h


def mlp_backward(spec: MlpSpec, params: np.ndarray, x: np.ndarray,
                 upstream: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of sum(upstream * mlp_forward(x)) wrt params and input."""
    if upstream.shape != (spec.out_dim,):
        raise ValueError(f"expected upstream shape ({spec.out_dim},), got {upstream.shape}")
    views = layer_views(spec, params)
    hs, pres, posts = [x], [], []
    h = x
    for l, (w, b) in zip(spec.layers, views):
        a = w @ h + b
        h = _act(a, l.activation)
        pres.append(a)
        posts.append(h)
        hs.append(h)
    grad = np.zeros(spec.n_params)
    gviews = layer_views(spec, grad)
    g = upstream
    for i in reversed(range(len(spec.layers))):
        l = spec.layers[i]
        g = g * _act_grad(pres[i], posts[i], l.activation)
        gw, gb = gviews[i]
        gw += np.outer(g, hs[i])
        gb += g
        g = views[i][0].T @ g
    return grad, g


# --- batched variants -------------------------------------------------------
#
# Shared-parameter batch ops are plain GEMMs; the per-sample variants take a
# [B, n_params] matrix (one parameter vector per row) as produced by a
# hypernetwork and einsum over the batch. Single-vector ops above stay the
# reference implementations.

def forward_batch(spec: MlpSpec, params: np.ndarray, x: np.ndarray,
                  cache: list | None = None) -> np.ndarray:
    """x: [B, in_dim], shared params. Optionally records (h, pre, post) per layer."""
    h = x
    for l, (w, b) in zip(spec.layers, layer_views(spec, params)):
        a = h @ w.T + b
        out = _act(a, l.activation)
        if cache is not None:
            cache.append((h, a, out))
        h = out
    return h


def backward_batch(spec: MlpSpec, params: np.ndarray, cache: list,
                   upstream: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batch-summed parameter gradient and per-sample input gradient."""
    grad = np.zeros(spec.n_params)
    gviews = layer_views(spec, grad)
    views = layer_views(spec, params)
    g = upstream
    for i in reversed(range(len(spec.layers))):
        h, a, out = cache[i]
        g = g * _act_grad(a, out, spec.layers[i].activation)
        gw, gb = gviews[i]
        gw += g.T @ h
        gb += g.sum(axis=0)
        g = g @ views[i][0]
    return grad, g


def batch_views(spec: MlpSpec, params_b: np.ndarray):
    """Per-layer (W[B,out,in], b[B,out]) views into a [B, n_params] matrix."""
    n = params_b.shape[0]
    views = []
    for l, (ws, bs) in zip(spec.layers, layer_slices(spec)):
        views.append((params_b[:, ws].reshape(n, l.out_dim, l.in_dim), params_b[:, bs]))
    return views


def forward_each(spec: MlpSpec, params_b: np.ndarray, x: np.ndarray,
                 cache: list | None = None) -> np.ndarray:
    """Row i of x through row i of params_b."""
    h = x
    for l, (w, b) in zip(spec.layers, batch_views(spec, params_b)):
        a = np.einsum("boi,bi->bo", w, h, optimize=True) + b
        out = _act(a, l.activation)
        if cache is not None:
            cache.append((h, a, out))
        h = out
    return h


def backward_each(spec: MlpSpec, params_b: np.ndarray, cache: list,
                  upstream: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample parameter gradients [B, n_params] and input gradients."""
    n = params_b.shape[0]
    grad = np.zeros((n, spec.n_params))
    gviews = batch_views(spec, grad)
    views = batch_views(spec, params_b)
    g = upstream
    for i in reversed(range(len(spec.layers))):
        h, a, out = cache[i]
        g = g * _act_grad(a, out, spec.layers[i].activation)
        gw, gb = gviews[i]
        gw += np.einsum("bo,bi->boi", g, h, optimize=True)
        gb += g
        g = np.einsum("boi,bo->bi", views[i][0], g, optimize=True)
    return grad, g


# --- Adam -------------------------------------------------------------------

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: np.ndarray, lr: float = 3e-4, **kw) -> "AdamState":
        return cls(m=np.zeros_like(params), v=np.zeros_like(params), lr=lr, **kw)


def adam_step(params: np.ndarray, grad: np.ndarray,
              state: AdamState) -> tuple[np.ndarray, AdamState]:
    """One Adam update with bias correction. Pure: returns fresh arrays."""
    if params.shape != grad.shape:
        raise ValueError(f"param/grad shape mismatch: {params.shape} vs {grad.shape}")
    finite = np.isfinite(grad)
    if not finite.all():
        idx = int(np.argmin(finite))
        raise ValueError(f"non-finite gradient at parameter index {idx}: {grad[idx]}")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * (grad * grad)
    mhat = m / (1.0 - state.beta1 ** t)
    vhat = v / (1.0 - state.beta2 ** t)
    new_params = params - state.lr * mhat / (np.sqrt(vhat) + state.eps)
    return new_params, replace(state, m=m, v=v, t=t)


def adam_step_inplace(params: np.ndarray, grad: np.ndarray,
                      state: AdamState) -> AdamState:
    """Fused in-place Adam update; same arithmetic as adam_step.

    Mutates params and the state's moment arrays; returns the state with the
    advanced step counter.
    """
    if params.shape != grad.shape:
        raise ValueError(f"param/grad shape mismatch: {params.shape} vs {grad.shape}")
    _kernels.grad_check_finite(grad)
    t = state.t + 1
    _kernels.adam_inplace(params, state.m, state.v, grad,
                          state.lr, state.beta1, state.beta2, state.eps,
                          1.0 - state.beta1 ** t, 1.0 - state.beta2 ** t)
    return replace(state, t=t)


def polyak_inplace(target: np.ndarray, source: np.ndarray, rho: float) -> None:
    """target <- rho * source + (1 - rho) * target."""
    _kernels.lerp_inplace(target, source, rho)
