"""Convolutional state encoder with hand-written gradients.

Standard layout for compressing a velocity field before the dense policy
and value networks: four 3x3 conv layers (the first with stride 2, all with
"same" zero padding), batch norm after the second and fourth, then two
fully connected layers. Parameters live in one flat vector like the dense
nets; batch-norm running statistics are separate mutable state updated only
when the caller adopts them during a gradient step.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import ceil

import numpy as np


@dataclass(frozen=True)
class EncoderSpec:
    input_hw: int = 21
    in_channels: int = 2
    conv_channels: int = 32
    n_conv: int = 4
    kernel: int = 3
    first_stride: int = 2
    bn_after: tuple[int, ...] = (1, 3)   # conv layer indices, 0-based
    fc_hidden: int = 128
    out_dim: int = 20
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5

    def __post_init__(self):
        if any(i >= self.n_conv for i in self.bn_after):
            raise ValueError("bn_after index out of range")

    @property
    def conv_hw(self) -> int:
        """Spatial size after the stride-2 first layer ("same" padding)."""
        return ceil(self.input_hw / self.first_stride)

    @property
    def flat_dim(self) -> int:
        return self.conv_hw * self.conv_hw * self.conv_channels

    def conv_in_channels(self, i: int) -> int:
        return self.in_channels if i == 0 else self.conv_channels


@lru_cache(maxsize=None)
def _layout(spec: EncoderSpec):
    """Parameter slices: per conv (W, b), per BN (gamma, beta), per fc (W, b)."""
    slices = {}
    off = 0

    def take(n):
        nonlocal off
        s = slice(off, off + n)
        off += n
        return s

    k = spec.kernel
    for i in range(spec.n_conv):
        ic = spec.conv_in_channels(i)
        slices[f"conv{i}_w"] = take(spec.conv_channels * k * k * ic)
        slices[f"conv{i}_b"] = take(spec.conv_channels)
        if i in spec.bn_after:
            slices[f"bn{i}_gamma"] = take(spec.conv_channels)
            slices[f"bn{i}_beta"] = take(spec.conv_channels)
    slices["fc0_w"] = take(spec.fc_hidden * spec.flat_dim)
    slices["fc0_b"] = take(spec.fc_hidden)
    slices["fc1_w"] = take(spec.out_dim * spec.fc_hidden)
    slices["fc1_b"] = take(spec.out_dim)
    return slices, off


def n_params(spec: EncoderSpec) -> int:
    return _layout(spec)[1]


def encoder_init(spec: EncoderSpec, rng: np.random.Generator
                 ) -> tuple[np.ndarray, dict]:
    """Fan-in uniform conv/fc weights, zero biases, identity batch norm."""
    slices, total = _layout(spec)
    params = np.zeros(total)
    k = spec.kernel
    for i in range(spec.n_conv):
        ic = spec.conv_in_channels(i)
        bound = 1.0 / np.sqrt(k * k * ic)
        params[slices[f"conv{i}_w"]] = rng.uniform(
            -bound, bound, spec.conv_channels * k * k * ic)
        if i in spec.bn_after:
            params[slices[f"bn{i}_gamma"]] = 1.0
    bound = 1.0 / np.sqrt(spec.flat_dim)
    params[slices["fc0_w"]] = rng.uniform(-bound, bound, spec.fc_hidden * spec.flat_dim)
    bound = 1.0 / np.sqrt(spec.fc_hidden)
    params[slices["fc1_w"]] = rng.uniform(-bound, bound, spec.out_dim * spec.fc_hidden)
    stats = {}
    for i in spec.bn_after:
        stats[f"bn{i}_mean"] = np.zeros(spec.conv_channels)
        stats[f"bn{i}_var"] = np.ones(spec.conv_channels)
    return params, stats


def _same_pad(n: int, k: int, s: int) -> tuple[int, int, int]:
    out = ceil(n / s)
    total = max((out - 1) * s + k - n, 0)
    return out, total // 2, total - total // 2


def _im2col(x: np.ndarray, k: int, s: int) -> tuple[np.ndarray, int]:
    """x: [B, H, W, C] -> patches [B, OH, OW, k*k*C] with "same" padding."""
    b, h, w, c = x.shape
    oh, p0, p1 = _same_pad(h, k, s)
    ow = oh
    xp = np.pad(x, ((0, 0), (p0, p1), (p0, p1), (0, 0)))
    patches = np.empty((b, oh, ow, k * k * c))
    for di in range(k):
        for dj in range(k):
            block = xp[:, di:di + (oh - 1) * s + 1:s, dj:dj + (ow - 1) * s + 1:s, :]
            patches[..., (di * k + dj) * c:(di * k + dj + 1) * c] = block
    return patches, oh


def _col2im(grad_patches: np.ndarray, x_shape, k: int, s: int) -> np.ndarray:
    """Adjoint of _im2col: scatter-add patch gradients back onto the input."""
    b, h, w, c = x_shape
    oh, p0, p1 = _same_pad(h, k, s)
    ow = oh
    gxp = np.zeros((b, h + p0 + p1, w + p0 + p1, c))
    for di in range(k):
        for dj in range(k):
            gxp[:, di:di + (oh - 1) * s + 1:s, dj:dj + (ow - 1) * s + 1:s, :] += \
                grad_patches[..., (di * k + dj) * c:(di * k + dj + 1) * c]
    return gxp[:, p0:p0 + h, p0:p0 + w, :]


def _forward(spec: EncoderSpec, params: np.ndarray, stats: dict, x: np.ndarray,
             training: bool, cache: list | None):
    slices, _ = _layout(spec)
    k = spec.kernel
    h = x
    batch_stats = {}
    for i in range(spec.n_conv):
        ic = spec.conv_in_channels(i)
        s = spec.first_stride if i == 0 else 1
        w = params[slices[f"conv{i}_w"]].reshape(spec.conv_channels, k * k * ic)
        bias = params[slices[f"conv{i}_b"]]
        patches, oh = _im2col(h, k, s)
        pre = patches @ w.T + bias
        entry = {"kind": "conv", "i": i, "x_shape": h.shape, "patches": patches,
                 "stride": s}
        if i in spec.bn_after:
            gamma = params[slices[f"bn{i}_gamma"]]
            beta = params[slices[f"bn{i}_beta"]]
            if training:
                mean = pre.mean(axis=(0, 1, 2))
                var = pre.var(axis=(0, 1, 2))
                batch_stats[i] = (mean, var)
            else:
                mean = stats[f"bn{i}_mean"]
                var = stats[f"bn{i}_var"]
            inv = 1.0 / np.sqrt(var + spec.bn_eps)
            xhat = (pre - mean) * inv
            post_bn = gamma * xhat + beta
            entry.update(bn=(xhat, inv, gamma))
        else:
            post_bn = pre
        out = np.maximum(post_bn, 0.0)
        entry["relu_in"] = post_bn
        if cache is not None:
            cache.append(entry)
        h = out
    flat = h.reshape(h.shape[0], -1)
    w0 = params[slices["fc0_w"]].reshape(spec.fc_hidden, spec.flat_dim)
    pre0 = flat @ w0.T + params[slices["fc0_b"]]
    h0 = np.maximum(pre0, 0.0)
    w1 = params[slices["fc1_w"]].reshape(spec.out_dim, spec.fc_hidden)
    out = h0 @ w1.T + params[slices["fc1_b"]]
    if cache is not None:
        cache.append({"kind": "fc", "flat": flat, "pre0": pre0, "h0": h0,
                      "conv_out_shape": h.shape})
    return out, batch_stats


def encode(spec: EncoderSpec, params: np.ndarray, stats: dict,
           x: np.ndarray) -> np.ndarray:
    """Inference-mode encoding using running statistics. Pure."""
    single = x.ndim == 3
    xb = x[None] if single else x
    out, _ = _forward(spec, params, stats, xb, training=False, cache=None)
    return out[0] if single else out


def encode_train(spec: EncoderSpec, params: np.ndarray, stats: dict,
                 x: np.ndarray, cache: list) -> tuple[np.ndarray, dict]:
    """Training-mode encoding over a batch (batch-norm uses batch statistics).

    Returns (features, refreshed_stats); the running statistics passed in are
    not mutated, the caller adopts the refreshed dict when it applies the
    accompanying gradient step.
    """
    out, batch_stats = _forward(spec, params, stats, x, training=True, cache=cache)
    new_stats = {}
    m = spec.bn_momentum
    for i in spec.bn_after:
        mean, var = batch_stats[i]
        new_stats[f"bn{i}_mean"] = m * stats[f"bn{i}_mean"] + (1 - m) * mean
        new_stats[f"bn{i}_var"] = m * stats[f"bn{i}_var"] + (1 - m) * var
    return out, new_stats


def encode_backward(spec: EncoderSpec, params: np.ndarray, cache: list,
                    upstream: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients wrt parameters and input for a cached encode_train pass."""
    slices, total = _layout(spec)
    grad = np.zeros(total)
    fc = cache[-1]
    w1 = params[slices["fc1_w"]].reshape(spec.out_dim, spec.fc_hidden)
    grad[slices["fc1_w"]] = (upstream.T @ fc["h0"]).ravel()
    grad[slices["fc1_b"]] = upstream.sum(axis=0)
    g = upstream @ w1
    g = g * (fc["pre0"] > 0)
    w0 = params[slices["fc0_w"]].reshape(spec.fc_hidden, spec.flat_dim)
    grad[slices["fc0_w"]] = (g.T @ fc["flat"]).ravel()
    grad[slices["fc0_b"]] = g.sum(axis=0)
    g = (g @ w0).reshape(fc["conv_out_shape"])

    k = spec.kernel
    for entry in reversed(cache[:-1]):
        i = entry["i"]
        g = g * (entry["relu_in"] > 0)
        if "bn" in entry:
            # batch-stat backprop: cache always comes from encode_train
            xhat, inv, gamma = entry["bn"]
            axes = (0, 1, 2)
            n = g.shape[0] * g.shape[1] * g.shape[2]
            grad[slices[f"bn{i}_gamma"]] = np.sum(g * xhat, axis=axes)
            grad[slices[f"bn{i}_beta"]] = np.sum(g, axis=axes)
            gx = gamma * g
            g = (inv / n) * (n * gx - np.sum(gx, axis=axes)
                             - xhat * np.sum(gx * xhat, axis=axes))
        ic = spec.conv_in_channels(i)
        w = params[slices[f"conv{i}_w"]].reshape(spec.conv_channels, k * k * ic)
        gm = g.reshape(-1, spec.conv_channels)
        pm = entry["patches"].reshape(-1, k * k * ic)
        grad[slices[f"conv{i}_w"]] = (gm.T @ pm).ravel()
        grad[slices[f"conv{i}_b"]] = gm.sum(axis=0)
        grad_patches = (gm @ w).reshape(entry["patches"].shape)
        g = _col2im(grad_patches, entry["x_shape"], k, entry["stride"])
    return grad, g
