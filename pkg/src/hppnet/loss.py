"""Weighted binary cross-entropy heads plus onset-masked velocity error."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as tn
from .tensor import Tensor

EPS = 1e-7
ONSET_WEIGHT = 2.0


class LossShapeError(tn.DimensionError):
    pass


@dataclass(frozen=True)
class LossBreakdown:
    onset: float
    frame: float
    offset: float
    velocity: float

    @property
    def total(self) -> float:
        return self.onset + self.frame + self.offset + self.velocity

    def as_dict(self) -> dict:
        return {"onset": self.onset, "frame": self.frame, "offset": self.offset,
                "velocity": self.velocity, "total": self.total}


def bce(y: float, y_hat: float, w: float = 1.0) -> float:
    """Scalar reference form: -w*y*log(p) - (1-y)*log(1-p), p clamped."""
    p = min(max(y_hat, EPS), 1.0 - EPS)
    return -w * y * math.log(p) - (1.0 - y) * math.log(1.0 - p)


def bce_sum(y: np.ndarray, y_hat: Tensor, w: float = 1.0) -> Tensor:
    """Summed weighted BCE of a probability tensor against fixed targets."""
    p = tn.clamp(y_hat, EPS, 1.0 - EPS)
    y = np.asarray(y, dtype=p.data.dtype)
    pos = tn.mul(tn.log(p), -w * y)
    neg = tn.mul(tn.log(tn.add(tn.neg(p), 1.0)), -(1.0 - y))
    return tn.sum(tn.add(pos, neg))


def velocity_sum(n: np.ndarray, v: np.ndarray, v_hat: Tensor) -> Tensor:
    diff = tn.add(v_hat, -np.asarray(v, dtype=v_hat.data.dtype))
    return tn.sum(tn.mul(tn.square(diff), np.asarray(n, dtype=v_hat.data.dtype)))


def total_loss(pred: dict[str, Tensor], targets) -> tuple[Tensor, LossBreakdown]:
    """Sum over frames and keys per clip, mean over the batch.

    ``pred`` holds [B, T, 88] (or [T, 88]) probability tensors; ``targets`` is
    one PianoRollTargets whose arrays share that shape.
    """
    for name, arr in (("onset", targets.n), ("frame", targets.f), ("offset", targets.o),
                      ("velocity", targets.v)):
        if pred[name].shape != np.shape(arr):
            raise LossShapeError(f"{name}: prediction {pred[name].shape} vs target {np.shape(arr)}")
    batch = pred["onset"].shape[0] if pred["onset"].ndim == 3 else 1
    scale = 1.0 / batch
    parts = {
        "onset": bce_sum(targets.n, pred["onset"], ONSET_WEIGHT),
        "frame": bce_sum(targets.f, pred["frame"]),
        "offset": bce_sum(targets.o, pred["offset"]),
        "velocity": velocity_sum(targets.n, targets.v, pred["velocity"]),
    }
    parts = {k: tn.mul(v, scale) for k, v in parts.items()}
    total = tn.add(tn.add(parts["onset"], parts["frame"]), tn.add(parts["offset"], parts["velocity"]))
    return total, LossBreakdown(**{k: float(v.data) for k, v in parts.items()})
