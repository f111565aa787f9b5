"""Minimal convolutional segmenter with hand-derived reverse-mode gradients.

The model maps a single-channel (Z, X) image through a few 3x3 conv layers
(edge-replicate same-padding, matching the loss convention) with rectifier
nonlinearities and a sigmoid head, so the output is a same-shape probability
map in (0, 1). Initialization is He-style fan-in scaling from the package's
deterministic generator: the same (hidden_channels, seed) always yields the
same parameters.
"""

from __future__ import annotations

import json

import numpy as np

from . import backend
from .errors import VolumeFormatError
from .fields import as_field2d
from .loss import LossConfig, logit_gradient, sigmoid, total_loss
from .rng import CounterRng, stream_seed

_TAG_INIT = 201

CHECKPOINT_FORMAT = "layerseg-checkpoint-v1"


class ConvModel:
    """Stack of 3x3 conv layers: 1 -> hidden_channels... -> 1, sigmoid head."""

    def __init__(self, hidden_channels: tuple[int, ...] = (8, 8), seed: int = 0):
        self.hidden_channels = tuple(int(c) for c in hidden_channels)
        self.seed = int(seed)
        chans = [1, *self.hidden_channels, 1]
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for li, (ci, co) in enumerate(zip(chans[:-1], chans[1:])):
            rng = CounterRng(stream_seed(seed, _TAG_INIT, li))
            std = np.sqrt(2.0 / (ci * 9))
            w = rng.normal(co * ci * 9, std=std).reshape(co, ci, 3, 3)
            self.weights.append(w)
            self.biases.append(np.zeros(co))

    # -- parameter vector view -------------------------------------------

    @property
    def param_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def params_vector(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    def set_params_vector(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != self.param_count:
            raise ValueError(f"expected {self.param_count} parameters, got {vec.size}")
        pos = 0
        for w, b in zip(self.weights, self.biases):
            w[...] = vec[pos:pos + w.size].reshape(w.shape)
            pos += w.size
            b[...] = vec[pos:pos + b.size]
            pos += b.size

    # -- forward / backward ----------------------------------------------

    def _forward_cache(self, image: np.ndarray):
        act = image[None, :, :]
        pre_acts = []
        acts = [act]
        for li in range(len(self.weights) - 1):
            z = backend.conv2d_forward(act, self.weights[li], self.biases[li])
            act = np.maximum(z, 0.0)
            pre_acts.append(z)
            acts.append(act)
        logits = backend.conv2d_forward(act, self.weights[-1], self.biases[-1])[0]
        return logits, pre_acts, acts

    def forward(self, image) -> np.ndarray:
        """Probability map for a (Z, X) image; deterministic."""
        image = as_field2d(image)
        logits, _, _ = self._forward_cache(image)
        return sigmoid(logits)

    def logits(self, image) -> np.ndarray:
        image = as_field2d(image)
        return self._forward_cache(image)[0]

    def backward(self, image, target, cfg: LossConfig):
        """Loss and gradient of the total loss w.r.t. every parameter.

        Returns (grad_vector, LossBreakdown) for one (image, target) slice.
        """
        image = as_field2d(image)
        logits, pre_acts, acts = self._forward_cache(image)
        pred = sigmoid(logits)
        breakdown = total_loss(pred, target, cfg)
        gout = logit_gradient(logits, target, cfg)[None, :, :]
        grads_w: list[np.ndarray] = [None] * len(self.weights)
        grads_b: list[np.ndarray] = [None] * len(self.biases)
        for li in range(len(self.weights) - 1, -1, -1):
            ginp, gw, gb = backend.conv2d_backward(acts[li], self.weights[li], gout)
            grads_w[li] = gw
            grads_b[li] = gb
            if li > 0:
                gout = ginp * (pre_acts[li - 1] > 0.0)
        parts = []
        for gw, gb in zip(grads_w, grads_b):
            parts.append(gw.ravel())
            parts.append(gb.ravel())
        return np.concatenate(parts), breakdown

    # -- checkpointing -----------------------------------------------------

    def save(self, path, epoch: int = 0) -> None:
        """Write a checkpoint: one JSON header line + f64le parameter payload."""
        header = {
            "format": CHECKPOINT_FORMAT,
            "hidden_channels": list(self.hidden_channels),
            "seed": self.seed,
            "epoch": int(epoch),
            "param_count": self.param_count,
            "dtype": "f64le",
        }
        payload = np.ascontiguousarray(self.params_vector(), dtype="<f8")
        with open(path, "wb") as fh:
            fh.write(json.dumps(header, sort_keys=True).encode("ascii"))
            fh.write(b"\n")
            fh.write(payload.tobytes())

    @classmethod
    def load(cls, path) -> tuple["ConvModel", int]:
        """Read a checkpoint; returns (model, epoch). Bit-exact round trip."""
        with open(path, "rb") as fh:
            header_line = fh.readline()
            payload = fh.read()
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise VolumeFormatError(f"bad checkpoint header in {path}") from exc
        if header.get("format") != CHECKPOINT_FORMAT:
            raise VolumeFormatError(f"unknown checkpoint format in {path}")
        model = cls(hidden_channels=tuple(header["hidden_channels"]),
                    seed=header["seed"])
        vec = np.frombuffer(payload, dtype="<f8")
        if vec.size != header["param_count"] or vec.size != model.param_count:
            raise VolumeFormatError("checkpoint payload size mismatch")
        model.set_params_vector(vec)
        return model, int(header["epoch"])
