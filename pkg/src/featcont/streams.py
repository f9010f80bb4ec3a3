"""Deterministic epoch streams over a paired dataset.

A paired dataset holds, for every item, a focused variant x0 (grayscale
digit, background-free shape, ...) and the full variant x1, sharing one
label.  Four strategies turn a pair plus the continuation weight into the
image a training batch actually sees:

* ``mixing``        per item, use x1 with probability g(alpha), else x0
* ``batch-mixing``  one draw per batch decides the source for all its items
* ``blending``      every item is (1 - g(alpha)) * x0 + g(alpha) * x1
* ``opacity-blend`` per item, blend with a weight drawn uniformly from
  [0, alpha]

All randomness is keyed by (seed, epoch, purpose, item/batch index), so
streams regenerate identically and items never consume each other's draws.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .rng import TAG_BATCH_MIX, TAG_MIX, TAG_OPACITY, TAG_SHUFFLE, KeyedRng
from .schedule import identity_rate

STRATEGIES = ("mixing", "batch-mixing", "blending", "opacity-blend")

D0 = 0  # focused source
D1 = 1  # full source


@dataclass
class PairedDataset:
    """Bijectively paired focused/full images with shared labels."""

    x0: np.ndarray  # (N, C, H, W) floats in [0, 1]
    x1: np.ndarray  # same shape as x0
    labels: np.ndarray  # (N,) int

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.x0.shape != self.x1.shape:
            raise ValueError(f"pair shape mismatch: x0 {self.x0.shape} vs x1 {self.x1.shape}")
        if len(self.labels) != len(self.x0):
            raise ValueError(f"{len(self.x0)} image pairs but {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int):
        return self.x0[i], self.x1[i], int(self.labels[i])


@dataclass(frozen=True)
class StreamConfig:
    strategy: str
    alpha: float
    seed: int
    batch_size: int
    rate: Callable[[float], float] = identity_rate

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


def blend(x0: np.ndarray, x1: np.ndarray, w: float) -> np.ndarray:
    """Per-pixel convex combination (1 - w) * x0 + w * x1, in float64.

    w = 0 returns x0's values exactly; w = 1 returns x1's exactly.
    """
    if x0.shape != x1.shape:
        raise ValueError(f"blend shape mismatch: {x0.shape} vs {x1.shape}")
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"blend weight must be in [0, 1], got {w}")
    a = np.asarray(x0, dtype=np.float64)
    b = np.asarray(x1, dtype=np.float64)
    return (1.0 - w) * a + w * b


def mix_draw(rng: KeyedRng, w: float) -> int:
    """D1 with probability w, else D0; one uniform consumed."""
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"mix probability must be in [0, 1], got {w}")
    return D1 if rng.uniform() < w else D0


def shuffled_indices(n: int, seed: int, epoch: int) -> np.ndarray:
    """The epoch's visiting order: a keyed Fisher-Yates permutation."""
    return np.asarray(KeyedRng(seed, epoch, TAG_SHUFFLE).shuffled(n), dtype=np.int64)


def _blend_rows(x0b: np.ndarray, x1b: np.ndarray, w: np.ndarray) -> np.ndarray:
    wcol = w.reshape((-1,) + (1,) * (x0b.ndim - 1))
    return (1.0 - wcol) * x0b.astype(np.float64) + wcol * x1b.astype(np.float64)


def epoch_stream(
    data: PairedDataset, cfg: StreamConfig, epoch: int
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield (images, labels) batches for one epoch under a strategy.

    Images come out as float64 copies; labels are the pair labels, untouched
    by every strategy.
    """
    n = len(data)
    if n == 0:
        raise ValueError("dataset is empty")
    perm = shuffled_indices(n, cfg.seed, epoch)
    w = cfg.rate(cfg.alpha)

    for batch_index, start in enumerate(range(0, n, cfg.batch_size)):
        idx = perm[start : start + cfg.batch_size]
        x0b = data.x0[idx]
        x1b = data.x1[idx]
        if cfg.strategy == "mixing":
            src = np.array([mix_draw(KeyedRng(cfg.seed, epoch, TAG_MIX, int(i)), w) for i in idx])
            images = np.where((src == D1).reshape(-1, 1, 1, 1), x1b, x0b).astype(np.float64)
        elif cfg.strategy == "batch-mixing":
            src = mix_draw(KeyedRng(cfg.seed, epoch, TAG_BATCH_MIX, batch_index), w)
            images = (x1b if src == D1 else x0b).astype(np.float64)
        elif cfg.strategy == "blending":
            images = _blend_rows(x0b, x1b, np.full(len(idx), w))
        else:  # opacity-blend: weight uniform in [0, alpha], fresh per item per epoch
            betas = np.array(
                [cfg.alpha * KeyedRng(cfg.seed, epoch, TAG_OPACITY, int(i)).uniform() for i in idx]
            )
            images = _blend_rows(x0b, x1b, betas)
        yield images, data.labels[idx].copy()
