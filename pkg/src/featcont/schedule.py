"""Per-epoch policies for the continuation parameter alpha.

Alpha walks from 0 (train purely on the focused data) to 1 (train purely on
the full data).  Four policies are supported:

* ``Linear``            alpha = epoch / total_epochs
* ``Constant(c)``       alpha = c for every epoch
* ``Step(k1, k2)``      alpha = 0 before epoch k1 * total_epochs, k2 after
* ``PiecewiseLinear``   0 -> k2 over the first k1 fraction of epochs, then
                        k2 -> 1 over the rest

A monotone rate function g maps alpha to the weight actually used as a mixing
probability or blend factor; only the identity ships, but the hook is kept so
non-linear ramps can be plugged in.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union


@dataclass(frozen=True)
class Linear:
    pass


@dataclass(frozen=True)
class Constant:
    value: float

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"constant alpha must be in [0, 1], got {self.value}")


@dataclass(frozen=True)
class Step:
    k1: float
    k2: float

    def __post_init__(self):
        if not 0.0 <= self.k1 <= 1.0 or not 0.0 <= self.k2 <= 1.0:
            raise ValueError(f"step parameters must be in [0, 1], got ({self.k1}, {self.k2})")


@dataclass(frozen=True)
class PiecewiseLinear:
    k1: float
    k2: float

    def __post_init__(self):
        if not 0.0 < self.k1 < 1.0:
            raise ValueError(f"piecewise k1 must be in (0, 1), got {self.k1}")
        if not 0.0 <= self.k2 <= 1.0:
            raise ValueError(f"piecewise k2 must be in [0, 1], got {self.k2}")


AlphaSchedule = Union[Linear, Constant, Step, PiecewiseLinear]

RateFunction = Callable[[float], float]


def identity_rate(alpha: float) -> float:
    return alpha


def _clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else (1.0 if x > 1.0 else x)


def alpha_at(schedule: AlphaSchedule, epoch: int, total_epochs: int) -> float:
    """Alpha for a given epoch index (0-based), clamped to [0, 1].

    ``epoch == total_epochs`` is a valid query: the ramping policies reach
    exactly 1.0 there.  Training loops use epochs 0 .. total_epochs - 1 and
    step alpha at each epoch boundary.
    """
    if total_epochs < 1:
        raise ValueError(f"total_epochs must be >= 1, got {total_epochs}")
    if not 0 <= epoch <= total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {total_epochs}]")

    frac = epoch / total_epochs
    if isinstance(schedule, Linear):
        alpha = frac
    elif isinstance(schedule, Constant):
        alpha = schedule.value
    elif isinstance(schedule, Step):
        alpha = 0.0 if epoch < schedule.k1 * total_epochs else schedule.k2
    elif isinstance(schedule, PiecewiseLinear):
        k1, k2 = schedule.k1, schedule.k2
        # ratios are kept <= 1 so extreme knees cannot overflow
        if epoch <= k1 * total_epochs:
            alpha = k2 * (frac / k1) if frac else 0.0
        else:
            alpha = k2 + (1.0 - k2) * ((frac - k1) / (1.0 - k1))
    else:
        raise TypeError(f"unknown schedule {schedule!r}")
    return _clamp01(alpha)


def rate(g: RateFunction, alpha: float) -> float:
    """Apply the rate function; the result is clamped into [0, 1]."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    return _clamp01(g(alpha))


def parse_schedule(text: str) -> AlphaSchedule:
    """Parse a schedule from its config-file spelling.

    ``linear`` | ``constant:C`` | ``step:K1,K2`` | ``piecewise:K1,K2``
    """
    name, _, args = text.strip().partition(":")
    name = name.strip().lower()
    try:
        if name == "linear":
            if args:
                raise ValueError("linear takes no parameters")
            return Linear()
        if name == "constant":
            return Constant(float(args))
        if name in ("step", "piecewise"):
            parts = [float(p) for p in args.split(",")]
            if len(parts) != 2:
                raise ValueError(f"{name} needs two parameters k1,k2")
            cls = Step if name == "step" else PiecewiseLinear
            return cls(parts[0], parts[1])
    except ValueError as exc:
        raise ValueError(f"bad schedule {text!r}: {exc}") from None
    raise ValueError(f"unknown schedule {text!r} (want linear | constant:c | step:k1,k2 | piecewise:k1,k2)")


def format_schedule(schedule: AlphaSchedule) -> str:
    """Inverse of parse_schedule."""
    if isinstance(schedule, Linear):
        return "linear"
    if isinstance(schedule, Constant):
        return f"constant:{schedule.value!r}"
    if isinstance(schedule, Step):
        return f"step:{schedule.k1!r},{schedule.k2!r}"
    if isinstance(schedule, PiecewiseLinear):
        return f"piecewise:{schedule.k1!r},{schedule.k2!r}"
    raise TypeError(f"unknown schedule {schedule!r}")
