"""Hypernetworks: map a context vector to the full parameter vector of a
target dense network.

Architecture: a small relu trunk embeds the context, then one linear head
per target layer emits that layer's weights and bias. All heads together
form a single [target_n_params, embed_dim] matrix plus bias, laid out so
head output chunks coincide with the target's flat parameter layout.
Gradients flow through generated parameters back to both the hypernetwork
parameters and the context.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nets

CONTEXT_KINDS = ("param_only", "state_and_param")


@dataclass(frozen=True)
class ContextVector:
    kind: str
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in CONTEXT_KINDS:
            raise ValueError(f"unknown context kind {self.kind!r}")
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("context values must be a non-empty 1-D vector")
        if not np.isfinite(v).all():
            raise ValueError("context values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class HyperSpec:
    context_dim: int
    embed_dims: tuple[int, ...]
    target: nets.MlpSpec

    def __post_init__(self):
        if self.context_dim <= 0:
            raise ValueError("context_dim must be positive")
        if any(d <= 0 for d in self.embed_dims):
            raise ValueError("embed dims must be positive")

    @property
    def embed_dim(self) -> int:
        """Width the heads read; the raw context when there is no trunk."""
        return self.embed_dims[-1] if self.embed_dims else self.context_dim

    @property
    def trunk(self) -> nets.MlpSpec | None:
        if not self.embed_dims:
            return None
        return nets.mlp_spec([self.context_dim, *self.embed_dims],
                             hidden_activation="relu", out_activation="relu")

    @property
    def head_layout(self) -> tuple[tuple[slice, slice], ...]:
        """Per target layer: (weight rows, bias rows) of the head output.

        The chunks tile [0, target.n_params) exactly once, in layer order.
        """
        return nets.layer_slices(self.target)

    @property
    def n_params(self) -> int:
        trunk_n = self.trunk.n_params if self.trunk is not None else 0
        p = self.target.n_params
        return trunk_n + p * self.embed_dim + p


def default_hyper_spec(context_dim: int, target: nets.MlpSpec) -> HyperSpec:
    return HyperSpec(context_dim=context_dim, embed_dims=(64, 64), target=target)


def _split(spec: HyperSpec, hparams: np.ndarray):
    """(trunk_params, head_w [P, embed], head_b [P]) views."""
    if hparams.shape != (spec.n_params,):
        raise ValueError(f"expected hyper params shape ({spec.n_params},), got {hparams.shape}")
    trunk_n = spec.trunk.n_params if spec.trunk is not None else 0
    p = spec.target.n_params
    trunk = hparams[:trunk_n]
    head_w = hparams[trunk_n:trunk_n + p * spec.embed_dim].reshape(p, spec.embed_dim)
    head_b = hparams[trunk_n + p * spec.embed_dim:]
    return trunk, head_w, head_b


def hyper_init(spec: HyperSpec, rng: np.random.Generator) -> np.ndarray:
    """Trunk fan-in uniform; head weights uniform within 1/sqrt(embed * target
    fan-in); head biases for target-weight rows drawn like a fresh fan-in
    init of the target layer, zero for target-bias rows.

    With a zero context this reduces exactly to nets.init_params of the
    target; with nonzero embeddings the generated weight scale stays within
    the same fan-in regime.
    """
    hparams = np.zeros(spec.n_params)
    trunk, head_w, head_b = _split(spec, hparams)
    if spec.trunk is not None:
        trunk[:] = nets.init_params(spec.trunk, rng)
    for layer, (wrows, brows) in zip(spec.target.layers, spec.head_layout):
        scale = 1.0 / np.sqrt(spec.embed_dim * layer.in_dim)
        head_w[wrows] = rng.uniform(-scale, scale, (wrows.stop - wrows.start, spec.embed_dim))
        head_w[brows] = rng.uniform(-scale, scale, (brows.stop - brows.start, spec.embed_dim))
        bound = 1.0 / np.sqrt(layer.in_dim)
        head_b[wrows] = rng.uniform(-bound, bound, wrows.stop - wrows.start)
        # target biases start at zero, matching nets.init_params
    return hparams


def _embed(spec: HyperSpec, trunk_params: np.ndarray, z: np.ndarray) -> np.ndarray:
    if spec.trunk is None:
        return z
    return nets.mlp_forward(spec.trunk, trunk_params, z)


def hyper_forward(spec: HyperSpec, hparams: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Generate the target network's flat parameter vector for context z."""
    if z.shape != (spec.context_dim,):
        raise ValueError(f"expected context shape ({spec.context_dim},), got {z.shape}")
    trunk, head_w, head_b = _split(spec, hparams)
    e = _embed(spec, trunk, z)
    return head_w @ e + head_b


def hyper_backward(spec: HyperSpec, hparams: np.ndarray, z: np.ndarray,
                   grad_target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pull a gradient wrt generated parameters back to (grad_hparams, grad_z)."""
    if grad_target.shape != (spec.target.n_params,):
        raise ValueError("grad_target shape mismatch")
    trunk, head_w, head_b = _split(spec, hparams)
    e = _embed(spec, trunk, z)

    grad = np.zeros(spec.n_params)
    gtrunk, ghead_w, ghead_b = _split(spec, grad)
    ghead_w += np.outer(grad_target, e)
    ghead_b += grad_target
    grad_e = head_w.T @ grad_target
    if spec.trunk is None:
        return grad, grad_e
    gt, gz = nets.mlp_backward(spec.trunk, trunk, z, grad_e)
    gtrunk += gt
    return grad, gz


# --- batched generation -----------------------------------------------------

def hyper_forward_batch(spec: HyperSpec, hparams: np.ndarray, zs: np.ndarray,
                        cache: list | None = None) -> np.ndarray:
    """Generate one target parameter vector per context row. zs: [B, context_dim]."""
    trunk, head_w, head_b = _split(spec, hparams)
    if spec.trunk is None:
        es = zs
    else:
        tc = [] if cache is not None else None
        es = nets.forward_batch(spec.trunk, trunk, zs, cache=tc)
        if cache is not None:
            cache.append(tc)
    if cache is not None:
        cache.append(es)
    return es @ head_w.T + head_b


def hyper_backward_batch(spec: HyperSpec, hparams: np.ndarray, zs: np.ndarray,
                         cache: list, grad_targets: np.ndarray
                         ) -> tuple[np.ndarray, np.ndarray]:
    """Batch-summed hyper gradient and per-row context gradient.

    cache must come from hyper_forward_batch over the same zs.
    """
    trunk, head_w, head_b = _split(spec, hparams)
    es = cache[-1]
    grad = np.zeros(spec.n_params)
    gtrunk, ghead_w, ghead_b = _split(spec, grad)
    ghead_w += grad_targets.T @ es
    ghead_b += grad_targets.sum(axis=0)
    grad_es = grad_targets @ head_w
    if spec.trunk is None:
        return grad, grad_es
    gt, gzs = nets.backward_batch(spec.trunk, trunk, cache[0], grad_es)
    gtrunk += gt
    return grad, gzs


def group_contexts(zs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unique context rows and the inverse index mapping rows back.

    Batches routinely repeat contexts (a handful of PDE parameters across
    hundreds of transitions); generating per unique row is an exact
    optimization, not an approximation.
    """
    uniq, inverse = np.unique(zs, axis=0, return_inverse=True)
    return uniq, inverse.ravel()
