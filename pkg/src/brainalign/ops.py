"""Dense tensor primitives for the small CNN.

Everything operates on float64 numpy arrays (NCHW layout for images and
feature maps) and every forward operation has a matching hand-written
backward pass. Backwards are exact gradients of the forwards; the test
suite checks them against central finite differences.

Convolution is cross-correlation (no kernel flip), the usual deep
learning convention. Max pooling breaks ties in favour of the first
element in row-major window order and truncates a trailing odd row or
column. Batch norm uses epsilon 1e-5 and running-stat momentum 0.1.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError

log = logging.getLogger(__name__)

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def as_tensor(x) -> np.ndarray:
    """Coerce to a C-contiguous float64 array, the common currency here."""
    return np.ascontiguousarray(x, dtype=np.float64)


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConvSpec:
    """Geometry of one 2D convolution."""

    in_channels: int
    out_channels: int
    kernel_size: int
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.kernel_size < 1:
            raise ConfigurationError(f"kernel_size must be >= 1, got {self.kernel_size}")
        if self.stride < 1:
            raise ConfigurationError(f"stride must be >= 1, got {self.stride}")
        if self.padding < 0:
            raise ConfigurationError(f"padding must be >= 0, got {self.padding}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ConfigurationError(
                f"channel counts must be >= 1, got in={self.in_channels} out={self.out_channels}"
            )

    def out_size(self, in_size: int) -> int:
        out = (in_size + 2 * self.padding - self.kernel_size) // self.stride + 1
        if out < 1:
            raise ConfigurationError(
                f"convolution output size collapses to {out} for input {in_size} under {self}"
            )
        return out

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        return (self.out_channels, self.in_channels, self.kernel_size, self.kernel_size)


def _check_conv_shapes(x, w, spec: ConvSpec):
    if x.ndim != 4 or w.ndim != 4:
        raise ConfigurationError(
            f"conv2d expects 4D input and weights, got input {x.shape} weights {w.shape}"
        )
    if w.shape != spec.weight_shape:
        raise ConfigurationError(
            f"conv2d weights {w.shape} do not match spec shape {spec.weight_shape}"
        )
    if x.shape[1] != spec.in_channels:
        raise ConfigurationError(
            f"conv2d input {x.shape} has {x.shape[1]} channels, spec expects {spec.in_channels}"
        )


def _pad_input(x, padding):
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def conv2d_forward(x, w, b, spec: ConvSpec) -> np.ndarray:
    """Cross-correlate `x` [B,C,H,W] with `w` [O,C,k,k] plus bias `b` [O].

    Accumulates one kernel offset at a time via tensordot so large inputs
    never materialise an im2col buffer.
    """
    _check_conv_shapes(x, w, spec)
    B, _, H, W = x.shape
    k, s = spec.kernel_size, spec.stride
    Ho, Wo = spec.out_size(H), spec.out_size(W)
    xp = _pad_input(x, spec.padding)
    out = np.zeros((B, Ho, Wo, spec.out_channels))
    for ki in range(k):
        for kj in range(k):
            patch = xp[:, :, ki : ki + s * Ho : s, kj : kj + s * Wo : s]
            # [B,C,Ho,Wo] x [O,C] summed over C -> [B,Ho,Wo,O]
            out += np.tensordot(patch, w[:, :, ki, kj], axes=([1], [1]))
    out += np.asarray(b).reshape(1, 1, 1, -1)
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def conv2d_input_grad(grad_out, w, spec: ConvSpec, in_hw) -> np.ndarray:
    """Gradient of conv2d_forward w.r.t. its input; equally, a transposed
    convolution of `grad_out` by `w` onto an `in_hw`-sized grid."""
    if w.shape != spec.weight_shape:
        raise ConfigurationError(
            f"conv2d weights {w.shape} do not match spec shape {spec.weight_shape}"
        )
    B, O, Ho, Wo = grad_out.shape
    if O != spec.out_channels:
        raise ConfigurationError(
            f"grad_out {grad_out.shape} has {O} channels, spec expects {spec.out_channels}"
        )
    H, W = in_hw
    k, s, p = spec.kernel_size, spec.stride, spec.padding
    gxp = np.zeros((B, spec.in_channels, H + 2 * p, W + 2 * p))
    for ki in range(k):
        for kj in range(k):
            # [B,O,Ho,Wo] x [O,C] summed over O -> [B,Ho,Wo,C]
            contrib = np.tensordot(grad_out, w[:, :, ki, kj], axes=([1], [0]))
            gxp[:, :, ki : ki + s * Ho : s, kj : kj + s * Wo : s] += contrib.transpose(0, 3, 1, 2)
    if p:
        return np.ascontiguousarray(gxp[:, :, p:-p, p:-p])
    return gxp


def conv2d_weight_grad(grad_out, x, spec: ConvSpec) -> np.ndarray:
    """Gradient of conv2d_forward w.r.t. the weights."""
    _check_conv_shapes(x, np.empty(spec.weight_shape), spec)
    B, O, Ho, Wo = grad_out.shape
    k, s = spec.kernel_size, spec.stride
    xp = _pad_input(x, spec.padding)
    gw = np.empty(spec.weight_shape)
    for ki in range(k):
        for kj in range(k):
            patch = xp[:, :, ki : ki + s * Ho : s, kj : kj + s * Wo : s]
            gw[:, :, ki, kj] = np.tensordot(grad_out, patch, axes=([0, 2, 3], [0, 2, 3]))
    return gw


def conv2d_backward(grad_out, cached_input, w, spec: ConvSpec):
    """All three gradients of conv2d_forward: (grad_input, grad_weights, grad_bias)."""
    if grad_out.shape[0] != cached_input.shape[0]:
        raise ConfigurationError(
            f"grad_out batch {grad_out.shape} does not match input {cached_input.shape}"
        )
    grad_b = grad_out.sum(axis=(0, 2, 3))
    grad_w = conv2d_weight_grad(grad_out, cached_input, spec)
    grad_x = conv2d_input_grad(grad_out, w, spec, cached_input.shape[2:])
    return grad_x, grad_w, grad_b


# ---------------------------------------------------------------------------
# 2x2 max pooling
# ---------------------------------------------------------------------------

class PoolIndices(NamedTuple):
    """Argmax bookkeeping from maxpool2x2_forward, consumed by the backward."""

    argmax: np.ndarray           # [B,C,Ho,Wo] int, position 0..3 in row-major window order
    in_shape: tuple[int, ...]    # original input shape (before odd-edge truncation)


def _pool_windows(x):
    B, C, H, W = x.shape
    Ho, Wo = H // 2, W // 2
    trimmed = x[:, :, : 2 * Ho, : 2 * Wo]
    win = trimmed.reshape(B, C, Ho, 2, Wo, 2).transpose(0, 1, 2, 4, 3, 5)
    return win.reshape(B, C, Ho, Wo, 4), Ho, Wo


def maxpool2x2_forward(x):
    """Max over non-overlapping 2x2 windows. Odd trailing rows/cols are dropped.

    Returns (output, PoolIndices). np.argmax picks the first maximum, which
    is exactly the row-major tie-break this package guarantees.
    """
    if x.ndim != 4:
        raise ConfigurationError(f"maxpool2x2 expects a 4D tensor, got {x.shape}")
    win, Ho, Wo = _pool_windows(x)
    idx = np.argmax(win, axis=-1)
    out = np.max(win, axis=-1)
    return out, PoolIndices(argmax=idx, in_shape=x.shape)


def maxpool2x2_backward(grad_out, indices: PoolIndices):
    """Route each window's gradient to its argmax position; zeros elsewhere."""
    B, C, H, W = indices.in_shape
    Ho, Wo = H // 2, W // 2
    if grad_out.shape != (B, C, Ho, Wo):
        raise ConfigurationError(
            f"maxpool backward grad {grad_out.shape} does not match pooled shape {(B, C, Ho, Wo)}"
        )
    scattered = np.zeros((B, C, Ho, Wo, 4))
    np.put_along_axis(scattered, indices.argmax[..., None], grad_out[..., None], axis=-1)
    grad_trim = (
        scattered.reshape(B, C, Ho, Wo, 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(B, C, 2 * Ho, 2 * Wo)
    )
    if (H, W) == (2 * Ho, 2 * Wo):
        return grad_trim
    grad_x = np.zeros(indices.in_shape)
    grad_x[:, :, : 2 * Ho, : 2 * Wo] = grad_trim
    return grad_x


# ---------------------------------------------------------------------------
# Batch normalisation
# ---------------------------------------------------------------------------

@dataclass
class RunningStats:
    """Per-channel running mean/variance, mutated by train-mode forwards."""

    mean: np.ndarray
    var: np.ndarray
    batches_seen: int = 0
    _warned_fresh_eval: bool = field(default=False, repr=False, compare=False)

    @classmethod
    def fresh(cls, channels: int) -> "RunningStats":
        return cls(mean=np.zeros(channels), var=np.ones(channels), batches_seen=0)

    def copy(self) -> "RunningStats":
        return RunningStats(self.mean.copy(), self.var.copy(), self.batches_seen)


class BnCache(NamedTuple):
    xhat: np.ndarray
    inv_std: np.ndarray   # [C]
    gamma: np.ndarray


def batchnorm_forward(x, gamma, beta, stats: RunningStats, mode: str,
                      eps: float = BN_EPS, momentum: float = BN_MOMENTUM):
    """Per-channel batch norm over a [B,C,H,W] tensor.

    Train mode normalises by batch statistics and updates `stats` in place
    (momentum 0.1, unbiased variance for the running estimate, matching the
    common framework default). Eval mode normalises by the running stats.

    Returns (output, BnCache) in train mode and (output, None) in eval mode.
    """
    if x.ndim != 4:
        raise ConfigurationError(f"batchnorm expects a 4D tensor, got {x.shape}")
    C = x.shape[1]
    if gamma.shape != (C,) or beta.shape != (C,):
        raise ConfigurationError(
            f"batchnorm params gamma {gamma.shape} / beta {beta.shape} do not match {C} channels"
        )
    if mode == "train":
        n = x.shape[0] * x.shape[2] * x.shape[3]
        mu = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = (x - mu.reshape(1, C, 1, 1)) * inv_std.reshape(1, C, 1, 1)
        var_unbiased = var * (n / (n - 1)) if n > 1 else var
        stats.mean += momentum * (mu - stats.mean)
        stats.var += momentum * (var_unbiased - stats.var)
        stats.batches_seen += 1
        out = gamma.reshape(1, C, 1, 1) * xhat + beta.reshape(1, C, 1, 1)
        return out, BnCache(xhat=xhat, inv_std=inv_std, gamma=gamma)
    if mode == "eval":
        if stats.batches_seen == 0 and not stats._warned_fresh_eval:
            log.warning("batchnorm eval before any train step: using init stats (mean 0, var 1)")
            stats._warned_fresh_eval = True
        inv_std = 1.0 / np.sqrt(stats.var + eps)
        xhat = (x - stats.mean.reshape(1, C, 1, 1)) * inv_std.reshape(1, C, 1, 1)
        out = gamma.reshape(1, C, 1, 1) * xhat + beta.reshape(1, C, 1, 1)
        return out, None
    raise ConfigurationError(f"batchnorm mode must be 'train' or 'eval', got {mode!r}")


def batchnorm_backward(grad_out, cache: BnCache):
    """Gradients of train-mode batchnorm: (grad_input, grad_gamma, grad_beta)."""
    xhat, inv_std, gamma = cache
    C = xhat.shape[1]
    n = xhat.shape[0] * xhat.shape[2] * xhat.shape[3]
    grad_beta = grad_out.sum(axis=(0, 2, 3))
    grad_gamma = (grad_out * xhat).sum(axis=(0, 2, 3))
    dxhat = grad_out * gamma.reshape(1, C, 1, 1)
    mean_dxhat = dxhat.mean(axis=(0, 2, 3)).reshape(1, C, 1, 1)
    mean_dxhat_xhat = (dxhat * xhat).mean(axis=(0, 2, 3)).reshape(1, C, 1, 1)
    grad_x = inv_std.reshape(1, C, 1, 1) * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat)
    return grad_x, grad_gamma, grad_beta


# ---------------------------------------------------------------------------
# ReLU / affine / global average pool / softmax cross-entropy
# ---------------------------------------------------------------------------

def relu_forward(x):
    return np.maximum(x, 0.0)


def relu_backward(grad_out, cached_input):
    return grad_out * (cached_input > 0)


def affine_forward(x, w, b):
    """x [B,in] @ w [in,out] + b [out]."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ConfigurationError(f"affine: input {x.shape} incompatible with weights {w.shape}")
    return x @ w + b


def affine_backward(grad_out, cached_input, w):
    grad_x = grad_out @ w.T
    grad_w = cached_input.T @ grad_out
    grad_b = grad_out.sum(axis=0)
    return grad_x, grad_w, grad_b


def global_avg_pool(x):
    """Spatial mean of a [B,C,H,W] map -> [B,C]."""
    return x.mean(axis=(2, 3))


def global_avg_pool_backward(grad_out, in_shape):
    B, C, H, W = in_shape
    return np.broadcast_to(grad_out[:, :, None, None], in_shape) / (H * W)


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_xent(logits, labels):
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits.

    grad = (softmax - onehot) / B.
    """
    labels = np.asarray(labels)
    B, K = logits.shape
    if labels.shape != (B,):
        raise ConfigurationError(f"labels {labels.shape} do not match logits batch {B}")
    if labels.min() < 0 or labels.max() >= K:
        bad = labels[(labels < 0) | (labels >= K)][0]
        raise ConfigurationError(f"label {bad} out of range [0, {K})")
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(log_norm - z[np.arange(B), labels]))
    grad = softmax(logits)
    grad[np.arange(B), labels] -= 1.0
    grad /= B
    return loss, grad
