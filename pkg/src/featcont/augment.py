"""Mixup / CutMix batch augmentation with continuation-annealed strength.

Here the focused data is the *augmented* stream and the full data is the
original one, so the continuation runs the other way round: with probability
g(alpha) a batch passes through untouched, otherwise it is augmented with an
interpolation strength annealed toward the identity,

    lam' = (1 - alpha) * lam + alpha,

where lam ~ U(0, 1) is redrawn per batch and lam = 1 means no augmentation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Iterator

import numpy as np
from scipy import stats

from .rng import (
    TAG_AUG_GATE,
    TAG_AUG_LAMBDA,
    TAG_AUG_PATCH,
    TAG_AUG_PERM,
    KeyedRng,
)
from .schedule import identity_rate


@dataclass
class MixedBatch:
    """Images plus per-item label pairs; the loss puts weight lam on y_a
    and (1 - lam) on y_b."""

    images: np.ndarray  # (B, C, H, W) float64
    y_a: np.ndarray  # (B,) int
    y_b: np.ndarray  # (B,) int
    lam: np.ndarray  # (B,) float64 in [0, 1]

    def targets(self):
        return (self.y_a, self.y_b, self.lam)


def anneal_lambda(lam: float, alpha: float) -> float:
    """Interpolation strength pulled toward 1 (identity) as alpha grows."""
    return (1.0 - alpha) * lam + alpha


def mixup(images: np.ndarray, labels: np.ndarray, perm: np.ndarray, lam: float) -> MixedBatch:
    """Convex image combination against a permuted partner batch."""
    x = np.asarray(images, dtype=np.float64)
    mixed = lam * x + (1.0 - lam) * x[perm]
    labels = np.asarray(labels, dtype=np.int64)
    return MixedBatch(mixed, labels.copy(), labels[perm], np.full(len(labels), float(lam)))


def cut_bounds(cx: int, cy: int, lam: float, height: int, width: int):
    """Clipped patch rectangle for a target area of (1 - lam) * H * W.

    Returns (y_lo, y_hi, x_lo, x_hi, lam_eff); lam_eff is the exact unmixed
    pixel fraction after clipping.
    """
    ratio = np.sqrt(1.0 - lam)
    cut_h = int(height * ratio)
    cut_w = int(width * ratio)
    y_lo = max(cy - cut_h // 2, 0)
    y_hi = min(cy + cut_h // 2, height)
    x_lo = max(cx - cut_w // 2, 0)
    x_hi = min(cx + cut_w // 2, width)
    lam_eff = 1.0 - (y_hi - y_lo) * (x_hi - x_lo) / (height * width)
    return y_lo, y_hi, x_lo, x_hi, lam_eff


def cutmix(images: np.ndarray, labels: np.ndarray, perm: np.ndarray, lam: float, rng: KeyedRng) -> MixedBatch:
    """Copy one rectangle from the permuted partner into every image."""
    x = np.asarray(images, dtype=np.float64).copy()
    h, w = x.shape[2], x.shape[3]
    cy = rng.below(h)
    cx = rng.below(w)
    y_lo, y_hi, x_lo, x_hi, lam_eff = cut_bounds(cx, cy, lam, h, w)
    x[:, :, y_lo:y_hi, x_lo:x_hi] = np.asarray(images, dtype=np.float64)[perm][:, :, y_lo:y_hi, x_lo:x_hi]
    labels = np.asarray(labels, dtype=np.int64)
    return MixedBatch(x, labels.copy(), labels[perm], np.full(len(labels), float(lam_eff)))


def draw_lambda(rng: KeyedRng, dist: str = "uniform", beta_param: float = 1.0) -> float:
    """Raw interpolation strength: U(0, 1) by default, Beta(a, a) on request."""
    u = rng.uniform_open()
    if dist == "uniform":
        return u
    if dist == "beta":
        return float(stats.beta.ppf(u, beta_param, beta_param))
    raise ValueError(f"unknown lambda distribution {dist!r}")


def augmented_epoch(
    batches: Iterable[tuple[np.ndarray, np.ndarray]],
    alpha: float,
    mode: str,
    seed: int,
    epoch: int,
    rate: Callable[[float], float] = identity_rate,
    lambda_dist: str = "uniform",
    beta_param: float = 1.0,
) -> Iterator[MixedBatch]:
    """Batch-resolution continuation over an epoch of (images, labels).

    Per batch: with probability g(alpha) the original comes through with
    hard labels (as the degenerate pair (y, y, 1)); otherwise the batch is
    augmented with strength anneal_lambda(lam, alpha).
    """
    if mode not in ("mixup", "cutmix"):
        raise ValueError(f"unknown augmentation mode {mode!r}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    w = rate(alpha)
    for b, (images, labels) in enumerate(batches):
        if KeyedRng(seed, epoch, TAG_AUG_GATE, b).uniform() < w:
            labels = np.asarray(labels, dtype=np.int64)
            yield MixedBatch(
                np.asarray(images, dtype=np.float64),
                labels.copy(),
                labels.copy(),
                np.ones(len(labels)),
            )
            continue
        lam = draw_lambda(KeyedRng(seed, epoch, TAG_AUG_LAMBDA, b), lambda_dist, beta_param)
        lam_prime = anneal_lambda(lam, alpha)
        perm = np.asarray(KeyedRng(seed, epoch, TAG_AUG_PERM, b).shuffled(len(labels)), dtype=np.int64)
        if mode == "mixup":
            yield mixup(images, labels, perm, lam_prime)
        else:
            yield cutmix(images, labels, perm, lam_prime, KeyedRng(seed, epoch, TAG_AUG_PATCH, b))
