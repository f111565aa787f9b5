"""Deterministic training: Adam updates in seeded slice order, per-epoch
loss/metric history, early stopping on validation total loss, and the
direct logit-field probe that optimizes per-pixel logits with no network.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import TrainingDiverged, UndefinedMetricError
from .fields import threshold
from .loss import LossConfig, logit_gradient, sigmoid, total_loss
from .metrics import extract_surfaces, local_mean_deviations, overlap_scores
from .model import ConvModel
from .phantom import LabeledSlice
from .rng import CounterRng, stream_seed

_TAG_ORDER = 301


@dataclass(frozen=True)
class TrainConfig:
    smoothness_weight: float = 0.0
    learning_rate: float = 1e-3
    epochs: int = 24
    patience: int = 10
    probability_clamp: float = 1e-7
    threshold: float = 0.5
    hidden_channels: tuple[int, ...] = (8, 8)

    def loss_config(self) -> LossConfig:
        return LossConfig(smoothness_weight=self.smoothness_weight,
                          probability_clamp=self.probability_clamp)


@dataclass
class EpochStats:
    train_bce: float
    train_smoothness: float
    train_total: float
    val_bce: float
    val_smoothness: float
    val_total: float
    val_dice: float
    val_ra: float


@dataclass
class TrainRecord:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False

    def as_dict(self) -> dict:
        return {
            "best_epoch": self.best_epoch,
            "stopped_early": self.stopped_early,
            "epochs": [vars(e) for e in self.epochs],
        }


class Adam:
    """Adam with bias correction; beta1=0.9, beta2=0.999, eps=1e-8."""

    def __init__(self, n_params: int, lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.step_count += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.step_count)
        v_hat = self.v / (1.0 - self.beta2 ** self.step_count)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _slice_quality(pred_mask, gt_mask):
    """(dice, deviations) for one slice; deviations pooled over both surfaces."""
    dice = overlap_scores(pred_mask, gt_mask).dice
    devs = []
    top, bottom = extract_surfaces(pred_mask)
    for profile in (top, bottom):
        if profile.valid.any():
            devs.append(local_mean_deviations(profile))
    return dice, devs


def evaluate(model: ConvModel, slices: list[LabeledSlice], cfg: TrainConfig):
    """Mean loss breakdown, mean dice, and pooled roughness over slices."""
    loss_cfg = cfg.loss_config()
    bce, smooth, total = [], [], []
    dices = []
    devs = []
    for s in slices:
        pred = model.forward(s.image)
        b = total_loss(pred, s.epidermis_gt, loss_cfg)
        bce.append(b.bce_mean)
        smooth.append(b.smoothness)
        total.append(b.total)
        mask = threshold(pred, cfg.threshold)
        if mask.any():
            d, dv = _slice_quality(mask, s.epidermis_gt)
            dices.append(d)
            devs.extend(dv)
        else:
            dices.append(0.0)
    ra = float(np.concatenate(devs).mean()) if devs else float("nan")
    return (float(np.mean(bce)), float(np.mean(smooth)), float(np.mean(total)),
            float(np.mean(dices)), ra)


def train(model: ConvModel, train_slices: list[LabeledSlice],
          val_slices: list[LabeledSlice], cfg: TrainConfig,
          seed: int = 0) -> tuple[ConvModel, TrainRecord]:
    """Train in place; returns the model restored to its best-val snapshot.

    One Adam step per slice, slice order reshuffled each epoch from the
    deterministic generator; aborts with TrainingDiverged if the loss or the
    parameters stop being finite (the instability regime of large smoothness
    weights).
    """
    if not train_slices or not val_slices:
        raise ValueError("train and validation sets must be nonempty")
    loss_cfg = cfg.loss_config()
    opt = Adam(model.param_count, lr=cfg.learning_rate)
    record = TrainRecord()
    best_val = np.inf
    best_params = model.params_vector()
    since_best = 0
    for epoch in range(cfg.epochs):
        order_rng = CounterRng(stream_seed(seed, _TAG_ORDER, epoch))
        order = order_rng.permutation(len(train_slices))
        params = model.params_vector()
        t_bce, t_smooth, t_total = [], [], []
        for idx in order:
            s = train_slices[idx]
            grad, breakdown = model.backward(s.image, s.epidermis_gt, loss_cfg)
            if not np.isfinite(breakdown.total):
                raise TrainingDiverged(epoch, cfg.smoothness_weight,
                                       "non-finite training loss")
            params = opt.step(params, grad)
            if not np.all(np.isfinite(params)):
                raise TrainingDiverged(epoch, cfg.smoothness_weight,
                                       "non-finite parameters after update")
            model.set_params_vector(params)
            t_bce.append(breakdown.bce_mean)
            t_smooth.append(breakdown.smoothness)
            t_total.append(breakdown.total)
        v_bce, v_smooth, v_total, v_dice, v_ra = evaluate(model, val_slices, cfg)
        if not np.isfinite(v_total):
            raise TrainingDiverged(epoch, cfg.smoothness_weight,
                                   "non-finite validation loss")
        record.epochs.append(EpochStats(
            train_bce=float(np.mean(t_bce)),
            train_smoothness=float(np.mean(t_smooth)),
            train_total=float(np.mean(t_total)),
            val_bce=v_bce, val_smoothness=v_smooth, val_total=v_total,
            val_dice=v_dice, val_ra=v_ra,
        ))
        if v_total < best_val:
            best_val = v_total
            best_params = params.copy()
            record.best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                record.stopped_early = True
                break
    model.set_params_vector(best_params)
    return model, record


def optimize_logit_field(target, cfg: LossConfig, steps: int = 400,
                         lr: float = 0.05) -> np.ndarray:
    """Minimize the total loss over a free per-pixel logit field.

    A pure probe of the loss geometry: no network, no image. Starts from
    zero logits (probability one half everywhere) and runs Adam on the
    analytic logit gradient. Returns the final probability map.
    """
    target = np.asarray(target)
    logits = np.zeros(target.shape, dtype=np.float64)
    opt = Adam(logits.size, lr=lr)
    flat = logits.ravel()
    for _ in range(steps):
        grad = logit_gradient(flat.reshape(target.shape), target, cfg)
        flat = opt.step(flat, grad.ravel())
    return sigmoid(flat.reshape(target.shape))
