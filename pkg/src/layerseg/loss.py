"""Combined segmentation loss: per-pixel cross entropy plus a row-smoothness
penalty, with analytic gradients.

The total loss for a probability map p and binary target t is

    total = mean(bce) + s * smoothness

where the cross entropy is averaged over all X*Z pixels while the smoothness
term is an un-normalized double sum; that asymmetry is deliberate and is the
reason useful smoothness weights range up to the thousands.

The smoothness penalty treats each row (fixed depth z) independently:

    S = sum_z sum_x | (conv(p_z) + 1) / (p_z + 1) - 1 |

with conv a width-5 uniform averaging kernel (weights 1/5, unit sum) applied
along x with edge-replicate padding. Replicate padding is what makes constant
rows cost exactly zero out to the boundary. Internally the ratio is computed
as (conv(p_z) - p_z) / (p_z + 1), which is algebraically identical (the
kernel sums to one) but cancellation-free: constant rows give an exact 0.0
at double precision, and the denominator is always >= 1 for probability
inputs, so the penalty is finite and nonnegative by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import DomainError
from .fields import as_field2d, check_same_shape

DEFAULT_KERNEL_RADIUS = 2


@dataclass(frozen=True)
class AveragingKernel:
    """Symmetric unit-sum averaging kernel for the row convolution."""

    radius: int = DEFAULT_KERNEL_RADIUS
    weights: tuple[float, ...] = (0.2, 0.2, 0.2, 0.2, 0.2)

    def __post_init__(self):
        w = self.weights
        if len(w) != 2 * self.radius + 1:
            raise ValueError("kernel needs 2*radius + 1 weights")
        if math.fsum(w) != 1.0:
            raise ValueError("kernel weights must sum to exactly 1")
        if any(w[i] != w[-1 - i] for i in range(len(w))):
            raise ValueError("kernel must be symmetric about its center")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=np.float64)


DEFAULT_KERNEL = AveragingKernel()


@dataclass(frozen=True)
class LossConfig:
    """Loss hyperparameters: smoothness weight s and the BCE probability clamp."""

    smoothness_weight: float = 0.0
    probability_clamp: float = 1e-7

    def __post_init__(self):
        if self.smoothness_weight < 0:
            raise ValueError("smoothness weight must be nonnegative")
        if not 0.0 < self.probability_clamp < 0.5:
            raise ValueError("probability clamp must lie in (0, 0.5)")


@dataclass(frozen=True)
class LossBreakdown:
    """Loss components; total == bce_mean + s * smoothness by construction."""

    bce_mean: float
    smoothness: float
    total: float


def bce_map(pred, target, clamp: float = 1e-7) -> np.ndarray:
    """Per-pixel binary cross entropy with probabilities clamped away from {0, 1}.

    Returns -[t*ln(p^) + (1-t)*ln(1-p^)] with p^ = clip(p, clamp, 1-clamp);
    every value is finite and >= 0.
    """
    pred = as_field2d(pred)
    target = as_field2d(target)
    check_same_shape(pred, target)
    p = np.clip(pred, clamp, 1.0 - clamp)
    return -(target * np.log(p) + (1.0 - target) * np.log1p(-p))


def conv_row(row, kernel: AveragingKernel = DEFAULT_KERNEL) -> np.ndarray:
    """Same-length row convolution with edge-replicate padding.

    Computed as row + sum_d w_d * (row[clamp(x+d)] - row[x]), so constant
    rows are returned exactly unchanged.
    """
    arr = np.ascontiguousarray(row, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError("conv_row expects a 1D row of length >= 1")
    diff = backend.row_conv_diff(arr[None, :], kernel.as_array())
    return arr + diff[0]


def smooth_ratio_map(pred, kernel: AveragingKernel = DEFAULT_KERNEL) -> np.ndarray:
    """Elementwise (conv(p)+1)/(p+1) - 1, evaluated cancellation-free."""
    pred = as_field2d(pred)
    if pred.min() < 0.0:
        raise DomainError("smoothness penalty requires nonnegative values")
    diff = backend.row_conv_diff(pred, kernel.as_array())
    return diff / (pred + 1.0)


def smoothness_penalty(pred, kernel: AveragingKernel = DEFAULT_KERNEL) -> float:
    """Row-smoothness penalty: sum of |smooth_ratio_map|.

    Exactly 0.0 for fields whose rows are each constant; strictly positive
    otherwise.
    """
    return float(np.abs(smooth_ratio_map(pred, kernel)).sum())


def total_loss(pred, target, cfg: LossConfig,
               kernel: AveragingKernel = DEFAULT_KERNEL) -> LossBreakdown:
    """Combined loss breakdown for a probability map against a binary target."""
    bce_mean = float(bce_map(pred, target, cfg.probability_clamp).mean())
    smooth = smoothness_penalty(pred, kernel)
    return LossBreakdown(
        bce_mean=bce_mean,
        smoothness=smooth,
        total=bce_mean + cfg.smoothness_weight * smooth,
    )


def bce_gradient(pred, target, clamp: float = 1e-7) -> np.ndarray:
    """Gradient of the *mean* BCE w.r.t. each probability.

    Clamp-aware: zero wherever the probability sits outside [clamp, 1-clamp],
    because the clamped value is locally constant there.
    """
    pred = as_field2d(pred)
    target = as_field2d(target)
    check_same_shape(pred, target)
    inside = (pred >= clamp) & (pred <= 1.0 - clamp)
    p = np.clip(pred, clamp, 1.0 - clamp)
    grad = np.where(inside, (p - target) / (p * (1.0 - p)), 0.0)
    return grad / pred.size


def smoothness_gradient(pred, kernel: AveragingKernel = DEFAULT_KERNEL) -> np.ndarray:
    """Gradient of smoothness_penalty w.r.t. each probability.

    Differentiates through the absolute value (subgradient 0 at kinks), the
    Hadamard division, and the row convolution; the convolution transpose
    respects the replicate padding (boundary taps accumulate onto edge
    columns).
    """
    pred = as_field2d(pred)
    r = smooth_ratio_map(pred, kernel)
    sgn = np.sign(r)
    denom = pred + 1.0
    adj = backend.row_conv_diff_adjoint(sgn / denom, kernel.as_array())
    return adj - np.abs(r) / denom


def loss_gradient(pred, target, cfg: LossConfig,
                  kernel: AveragingKernel = DEFAULT_KERNEL) -> np.ndarray:
    """Gradient of total_loss w.r.t. the probability map, per pixel."""
    grad = bce_gradient(pred, target, cfg.probability_clamp)
    if cfg.smoothness_weight != 0.0:
        grad = grad + cfg.smoothness_weight * smoothness_gradient(pred, kernel)
    return grad


def sigmoid(x) -> np.ndarray:
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def logit_gradient(logits, target, cfg: LossConfig,
                   kernel: AveragingKernel = DEFAULT_KERNEL) -> np.ndarray:
    """Gradient of total_loss w.r.t. pre-sigmoid logits (chain rule)."""
    logits = as_field2d(logits)
    p = sigmoid(logits)
    return loss_gradient(p, target, cfg, kernel) * p * (1.0 - p)
