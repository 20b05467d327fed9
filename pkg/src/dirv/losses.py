"""Training losses with analytic gradients.

All classification losses work on logits.  Probabilities are never formed
explicitly inside a log: ``-log p = softplus(-x)`` and ``-log(1 - p) =
softplus(x)``, which keeps every value finite for finite logits.

Gradient of the focal term with respect to the logit ``x``::

    positive:  -alpha * (1-p)^g * (g * p * softplus(-x) + (1-p))
    negative:  (1-alpha) * p^g * (g * (1-p) * softplus(x) + p)
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import expit

from .assignment import IGNORED, POSITIVE
from .errors import ConfigError, ContractViolation, NumericError


class LossVariant(str, enum.Enum):
    IGNORANCE = "ignorance"
    FOCAL = "focal"
    FOREGROUND = "foreground"


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.25
    gamma: float = 2.0
    smooth_l1_beta: float = 0.1
    variant: LossVariant = LossVariant.IGNORANCE

    def __post_init__(self) -> None:
        object.__setattr__(self, "variant", LossVariant(self.variant))
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.gamma >= 0.0:
            raise ConfigError(f"gamma must be >= 0, got {self.gamma}")
        if not self.smooth_l1_beta > 0.0:
            raise ConfigError(f"smooth_l1_beta must be > 0, got {self.smooth_l1_beta}")


@dataclass(frozen=True)
class ClassTargets:
    """Per-cell labels (POSITIVE / NEGATIVE / IGNORED) and per-anchor foreground flags."""

    labels: np.ndarray
    foreground: np.ndarray

    @classmethod
    def from_assignment(cls, assignment) -> "ClassTargets":
        return cls(assignment.labels, assignment.foreground)

    def check(self, logits: np.ndarray) -> None:
        if logits.shape != self.labels.shape:
            raise ContractViolation(f"logits shape {logits.shape} != targets shape {self.labels.shape}")
        if self.foreground.shape != (self.labels.shape[0],):
            raise ContractViolation("foreground flags must have one entry per anchor")
        if np.any((self.labels == IGNORED) & ~self.foreground[:, None]):
            raise ContractViolation("IGNORED labels are only valid on foreground anchors")

    @property
    def num_positive(self) -> int:
        return int(np.count_nonzero(self.labels == POSITIVE))


class LossParts(NamedTuple):
    reg_human: float
    reg_object: float
    cls_interaction: float
    cls_instance: float


def _softplus(x):
    return np.logaddexp(0.0, x)


def _check_finite(x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise NumericError("logits contain non-finite values")


def _focal_cells(x: np.ndarray, positive: np.ndarray, alpha: float, gamma: float):
    """Elementwise focal loss and d/dlogit for positive/negative cells."""
    p = expit(x)
    q = expit(-x)  # 1 - p without cancellation
    sp_neg = _softplus(-x)  # -log p
    sp_pos = _softplus(x)  # -log(1 - p)
    qg = q**gamma
    pg = p**gamma
    loss = np.where(positive, alpha * qg * sp_neg, (1.0 - alpha) * pg * sp_pos)
    grad = np.where(
        positive,
        -alpha * qg * (gamma * p * sp_neg + q),
        (1.0 - alpha) * pg * (gamma * q * sp_pos + p),
    )
    return loss, grad


def focal_term(logit: float, positive: bool, cfg: LossConfig) -> tuple[float, float]:
    """Focal loss of one cell and its derivative with respect to the logit."""
    if not math.isfinite(logit):
        raise NumericError(f"non-finite logit {logit}")
    loss, grad = _focal_cells(np.float64(logit), np.bool_(positive), cfg.alpha, cfg.gamma)
    return float(loss), float(grad)


def _masked_focal(logits, positive, active, norm, cfg):
    logits = np.asarray(logits, dtype=np.float64)
    _check_finite(logits)
    loss, grad = _focal_cells(logits, positive, cfg.alpha, cfg.gamma)
    # np.where, not multiplication: inactive cells contribute an exact zero
    loss = np.where(active, loss, 0.0)
    grad = np.where(active, grad, 0.0)
    return float(loss.sum()) / norm, grad / norm


def _norm(targets: ClassTargets) -> float:
    return float(max(1, targets.num_positive))


def ignorance_loss(logits: np.ndarray, targets: ClassTargets,
                   cfg: LossConfig) -> tuple[float, np.ndarray]:
    """Focal loss over foreground anchors only, skipping IGNORED cells.

    Normalised by the number of POSITIVE cells (at least 1).
    """
    logits = np.asarray(logits, dtype=np.float64)
    targets.check(logits)
    active = targets.foreground[:, None] & (targets.labels != IGNORED)
    return _masked_focal(logits, targets.labels == POSITIVE, active, _norm(targets), cfg)


def focal_loss_all(logits: np.ndarray, targets: ClassTargets,
                   cfg: LossConfig) -> tuple[float, np.ndarray]:
    """Vanilla focal loss: every anchor counts, IGNORED cells become NEGATIVE."""
    logits = np.asarray(logits, dtype=np.float64)
    targets.check(logits)
    active = np.ones(logits.shape, dtype=bool)
    positive = targets.foreground[:, None] & (targets.labels == POSITIVE)
    return _masked_focal(logits, positive, active, _norm(targets), cfg)


def foreground_loss(logits: np.ndarray, targets: ClassTargets,
                    cfg: LossConfig) -> tuple[float, np.ndarray]:
    """Focal loss on foreground anchors with every overlapping verb positive.

    Uses the same normaliser as :func:`ignorance_loss` so the two differ only
    by the IGNORED cells' positive terms.
    """
    logits = np.asarray(logits, dtype=np.float64)
    targets.check(logits)
    active = np.broadcast_to(targets.foreground[:, None], logits.shape)
    positive = (targets.labels == POSITIVE) | (targets.labels == IGNORED)
    return _masked_focal(logits, positive, active, _norm(targets), cfg)


def interaction_loss(logits: np.ndarray, targets: ClassTargets,
                     cfg: LossConfig) -> tuple[float, np.ndarray]:
    fn = {
        LossVariant.IGNORANCE: ignorance_loss,
        LossVariant.FOCAL: focal_loss_all,
        LossVariant.FOREGROUND: foreground_loss,
    }[cfg.variant]
    return fn(logits, targets, cfg)


def smooth_l1(pred: np.ndarray, target: np.ndarray, beta: float = 0.1) -> tuple[float, np.ndarray]:
    """Smooth-L1 summed over coordinates and averaged over rows (matched anchors)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ContractViolation(f"prediction shape {pred.shape} != target shape {target.shape}")
    if beta <= 0:
        raise ConfigError("beta must be positive")
    d = pred - target
    ad = np.abs(d)
    small = ad < beta
    loss = np.where(small, 0.5 * d * d / beta, ad - 0.5 * beta)
    grad = np.where(small, d / beta, np.sign(d))
    rows = max(1, pred.shape[0]) if pred.ndim > 1 else 1
    return float(loss.sum()) / rows, grad / rows


def instance_action_bce(logits: np.ndarray, targets: np.ndarray,
                        mask: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy over the participating cells in ``mask``."""
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if logits.shape != targets.shape or logits.shape != mask.shape:
        raise ContractViolation(
            f"shape mismatch: logits {logits.shape}, targets {targets.shape}, mask {mask.shape}")
    _check_finite(logits)
    n = int(np.count_nonzero(mask))
    if n == 0:
        return 0.0, np.zeros_like(logits)
    loss = np.where(mask, _softplus(logits) - targets * logits, 0.0)
    grad = np.where(mask, expit(logits) - targets, 0.0)
    return float(loss.sum()) / n, grad / n


def total_loss(parts: LossParts | tuple[float, float, float, float]) -> float:
    """Plain, unweighted sum of the four branch losses."""
    reg_h, reg_o, cls_inter, cls_inst = parts
    return reg_h + reg_o + cls_inter + cls_inst
