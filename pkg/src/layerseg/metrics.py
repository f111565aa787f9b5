"""Segmentation quality metrics.

Covers overlap scores (dice / IoU / precision / recall), per-column surface
extraction from layer masks, the arithmetic-mean-deviation roughness of a
surface profile, surface-normal angle histograms, and a paired two-sided
Wilcoxon signed-rank test (exact for small n, normal approximation with tie
correction otherwise).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateTestError, ShapeMismatchError, UndefinedMetricError

ROUGHNESS_WINDOW_RADIUS = 2  # 5-pixel moving window
EXACT_WILCOXON_MAX_N = 25


@dataclass(frozen=True)
class OverlapScores:
    dice: float
    iou: float
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int
    tn: int


@dataclass
class SurfaceProfile:
    """Per-column boundary depth z(x) with a validity flag per column.

    Columns with no foreground are invalid: excluded from every statistic
    but still counted (n_invalid).
    """

    depths: np.ndarray  # float64, shape (X,); NaN where invalid
    valid: np.ndarray   # bool, shape (X,)

    def __post_init__(self):
        self.depths = np.asarray(self.depths, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.depths.shape != self.valid.shape or self.depths.ndim != 1:
            raise ShapeMismatchError("profile depths and validity must be equal-length 1D")

    @property
    def n_invalid(self) -> int:
        return int((~self.valid).sum())


@dataclass(frozen=True)
class NormalHistogram:
    """Counts of surface-segment normal angles over [-90, +90] degrees."""

    bin_edges: np.ndarray  # (n_bins + 1,)
    counts: np.ndarray     # (n_bins,) ints

    def total(self) -> int:
        return int(self.counts.sum())

    def fraction_above(self, angle_deg: float) -> float:
        """Fraction of segments with |angle| > angle_deg (bin-resolution)."""
        centers = 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])
        outside = np.abs(centers) > angle_deg
        total = self.counts.sum()
        return float(self.counts[outside].sum() / total) if total else 0.0


def overlap_scores(pred, gt) -> OverlapScores:
    """Pixel-overlap scores between binary masks of any matching shape.

    Raises UndefinedMetricError when the ground truth is all background
    (dice and recall would be 0/0); an empty *prediction* is allowed and
    yields precision 0 by convention.
    """
    pred = np.asarray(pred).astype(bool)
    gt = np.asarray(gt).astype(bool)
    if pred.shape != gt.shape:
        raise ShapeMismatchError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    if not gt.any():
        raise UndefinedMetricError("ground truth has no foreground; dice/recall undefined")
    tp = int(np.count_nonzero(pred & gt))
    fp = int(np.count_nonzero(pred & ~gt))
    fn = int(np.count_nonzero(~pred & gt))
    tn = int(np.count_nonzero(~pred & ~gt))
    dice = 2.0 * tp / (2.0 * tp + fp + fn)
    iou = tp / (tp + fp + fn)
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn)
    return OverlapScores(dice=dice, iou=iou, precision=precision, recall=recall,
                         tp=tp, fp=fp, fn=fn, tn=tn)


def extract_surfaces(mask) -> tuple[SurfaceProfile, SurfaceProfile]:
    """Top and bottom boundary profiles of a layer mask.

    Per column, top is the smallest z with foreground and bottom the largest;
    interior holes do not affect either. Columns without foreground are
    flagged invalid.
    """
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ShapeMismatchError(f"expected (Z, X) mask, got {mask.shape}")
    fg = mask != 0
    Z = fg.shape[0]
    valid = fg.any(axis=0)
    top = np.where(valid, fg.argmax(axis=0), np.nan).astype(np.float64)
    bottom = np.where(valid, Z - 1 - fg[::-1].argmax(axis=0), np.nan).astype(np.float64)
    return (SurfaceProfile(depths=top, valid=valid.copy()),
            SurfaceProfile(depths=bottom, valid=valid.copy()))


def local_mean_deviations(profile: SurfaceProfile) -> np.ndarray:
    """|z(x) - local mean| for each valid column.

    The local mean runs over the window [x-2, x+2] clipped to the profile
    (the window shrinks at the edges) and skips invalid columns; x itself is
    always in the window, so the mean is well defined at every valid column.
    """
    z = profile.depths
    valid = profile.valid
    X = z.shape[0]
    if not valid.any():
        raise UndefinedMetricError("profile has no valid columns")
    vals = np.where(valid, z, 0.0)
    cnts = valid.astype(np.float64)
    cum_v = np.concatenate([[0.0], np.cumsum(vals)])
    cum_c = np.concatenate([[0.0], np.cumsum(cnts)])
    idx = np.arange(X)
    lo = np.maximum(idx - ROUGHNESS_WINDOW_RADIUS, 0)
    hi = np.minimum(idx + ROUGHNESS_WINDOW_RADIUS, X - 1)
    win_sum = cum_v[hi + 1] - cum_v[lo]
    win_cnt = cum_c[hi + 1] - cum_c[lo]
    mean = win_sum[valid] / win_cnt[valid]
    return np.abs(z[valid] - mean)


def roughness(profile: SurfaceProfile) -> float:
    """Arithmetic mean deviation of a profile from its 5-pixel local mean."""
    return float(local_mean_deviations(profile).mean())


def pooled_roughness(profiles: list[SurfaceProfile]) -> float:
    """Roughness pooled over many profiles: the per-column deviations of all
    profiles are concatenated and averaged together (slices and surfaces
    contribute proportionally to their valid column counts)."""
    devs = [local_mean_deviations(p) for p in profiles if p.valid.any()]
    if not devs:
        raise UndefinedMetricError("no profile has valid columns")
    return float(np.concatenate(devs).mean())


def surface_normal_angles(profile: SurfaceProfile,
                          dx_um: float = 1.0, dz_um: float = 1.0) -> np.ndarray:
    """Normal-deviation angle (degrees) of each valid adjacent-column segment.

    For columns x, x+1 both valid, the angle is atan(dz_phys / dx_phys) of
    the segment, i.e. how far the segment's normal tilts from vertical; a
    flat profile gives 0 everywhere. Spacings convert pixel steps to
    physical units.
    """
    z = profile.depths
    pair = profile.valid[:-1] & profile.valid[1:]
    if not pair.any():
        raise UndefinedMetricError("profile has fewer than 2 adjacent valid columns")
    dz = (z[1:] - z[:-1])[pair] * dz_um
    return np.degrees(np.arctan2(dz, dx_um))


def normal_histogram(profile: SurfaceProfile, bin_width_deg: float,
                     dx_um: float = 1.0, dz_um: float = 1.0) -> NormalHistogram:
    """Histogram of surface-normal angles over [-90, +90] degrees."""
    angles = surface_normal_angles(profile, dx_um, dz_um)
    return bin_normal_angles(angles, bin_width_deg)


def bin_normal_angles(angles, bin_width_deg: float) -> NormalHistogram:
    """Bin precomputed angles; the bin width must divide 180 degrees evenly."""
    n_bins = round(180.0 / bin_width_deg)
    if n_bins < 1 or abs(n_bins * bin_width_deg - 180.0) > 1e-9:
        raise ValueError(f"bin width {bin_width_deg} does not divide 180 evenly")
    edges = np.linspace(-90.0, 90.0, n_bins + 1)
    counts, _ = np.histogram(np.asarray(angles, dtype=np.float64), bins=edges)
    return NormalHistogram(bin_edges=edges, counts=counts)


def _exact_wilcoxon_p(doubled_ranks: np.ndarray, w_min: float) -> float:
    # Distribution of W+ over all 2^n sign assignments via polynomial
    # convolution on twice-the-rank integers (average ranks are half-integers,
    # so doubling makes them exact).
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for dr in doubled_ranks:
        shifted = np.zeros_like(counts)
        shifted[dr:] = counts[:counts.size - dr]
        counts = counts + shifted
    w2 = int(round(2.0 * w_min))
    n_le = counts[: w2 + 1].sum()
    return min(1.0, 2.0 * n_le / 2.0 ** len(doubled_ranks))


def wilcoxon_signed_rank(a, b) -> tuple[float, float]:
    """Two-sided paired Wilcoxon signed-rank test.

    Zero differences are discarded; ties in |difference| get average ranks.
    Returns (W, p) with W = min(W+, W-). The p-value is exact (all 2^n sign
    assignments) for n <= 25 nonzero differences and uses the normal
    approximation with tie correction beyond that.

    Raises DegenerateTestError when every difference is zero and ValueError
    when fewer than 5 nonzero differences remain.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeMismatchError("paired samples must be equal-length 1D")
    d = a - b
    d = d[d != 0.0]
    n = d.size
    if n == 0:
        raise DegenerateTestError("all paired differences are zero")
    if n < 5:
        raise ValueError(f"need >= 5 nonzero differences, got {n}")
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w = min(w_plus, w_minus)
    if n <= EXACT_WILCOXON_MAX_N:
        doubled = np.rint(2.0 * ranks).astype(np.int64)
        p = _exact_wilcoxon_p(doubled, w)
    else:
        mu = n * (n + 1) / 4.0
        var = n * (n + 1) * (2 * n + 1) / 24.0
        _, tie_counts = np.unique(ranks, return_counts=True)
        var -= (tie_counts.astype(np.float64) ** 3 - tie_counts).sum() / 48.0
        z = (w - mu) / math.sqrt(var)
        p = min(1.0, math.erfc(-z / math.sqrt(2.0)))
    return w, p
