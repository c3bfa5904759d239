"""Loss functions for the shortfall risk measure.

A loss ``l`` must satisfy ``l(0) = 0`` and be strictly increasing with a
derivative bounded away from zero on ``[-M, M]``.  Three kinds are
supported: the identity (shortfall reduces to the mean), ``exp(t) - 1`` and
continuous piecewise-linear losses anchored at the origin.
"""

import math
from dataclasses import dataclass

import numpy as np

from .empirical_stats import bounded_mean

IDENTITY = "identity"
EXP_MINUS_ONE = "exp_minus_one"
PIECEWISE_LINEAR = "piecewise_linear"
KINDS = (IDENTITY, EXP_MINUS_ONE, PIECEWISE_LINEAR)


def _exp(x):
    return np.exp(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class LossConstants:
    """Constants of a loss restricted to ``[-M, M]``.

    ``lipschitz`` is sup l', ``derivative_floor`` is inf l' and ``magnitude``
    is max(|l(-M)|, l(M)).
    """

    lipschitz: float
    derivative_floor: float
    magnitude: float


@dataclass(frozen=True)
class LossFunction:
    kind: str
    breakpoints: tuple = ()
    slopes: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in self.breakpoints))
        object.__setattr__(self, "slopes", tuple(float(s) for s in self.slopes))
        if self.kind == PIECEWISE_LINEAR:
            bps, slopes = self.breakpoints, self.slopes
            if len(slopes) != len(bps) + 1:
                raise ValueError("piecewise-linear loss needs len(slopes) == len(breakpoints) + 1")
            if any(b2 <= b1 for b1, b2 in zip(bps, bps[1:])):
                raise ValueError("breakpoints must be strictly increasing")
            if any(not math.isfinite(s) or s <= 0 for s in slopes):
                raise ValueError("piecewise-linear slopes must be finite and > 0")
            if any(not math.isfinite(b) for b in bps):
                raise ValueError("breakpoints must be finite")
        elif self.breakpoints or self.slopes:
            raise ValueError(f"{self.kind} loss takes no breakpoints or slopes")

    @classmethod
    def identity(cls):
        return cls(IDENTITY)

    @classmethod
    def exp_minus_one(cls):
        return cls(EXP_MINUS_ONE)

    @classmethod
    def piecewise_linear(cls, breakpoints, slopes):
        return cls(PIECEWISE_LINEAR, tuple(breakpoints), tuple(slopes))

    # piecewise-linear helpers: values of the unanchored integral at each breakpoint
    def _pl_knots(self):
        bps = np.asarray(self.breakpoints, dtype=float)
        slopes = np.asarray(self.slopes, dtype=float)
        knots = np.zeros(len(bps))
        if len(bps) > 1:
            knots[1:] = np.cumsum(slopes[1:-1] * np.diff(bps))
        return bps, slopes, knots

    def _pl_raw(self, t):
        bps, slopes, knots = self._pl_knots()
        if len(bps) == 0:
            return slopes[0] * t
        seg = np.searchsorted(bps, t, side="right")
        base = np.maximum(seg - 1, 0)
        return knots[base] + slopes[seg] * (t - bps[base])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == IDENTITY:
            out = t.copy()
        elif self.kind == EXP_MINUS_ONE:
            out = np.expm1(t)
        else:
            out = self._pl_raw(t) - self._pl_raw(np.float64(0.0))
        return out if out.ndim else float(out)

    def derivative(self, t):
        """l'(t); right derivative at piecewise-linear breakpoints."""
        t = np.asarray(t, dtype=float)
        if self.kind == IDENTITY:
            out = np.ones_like(t)
        elif self.kind == EXP_MINUS_ONE:
            out = np.exp(t)
        else:
            seg = np.searchsorted(np.asarray(self.breakpoints), t, side="right")
            out = np.asarray(self.slopes)[seg]
        return out if np.ndim(out) else float(out)

    def constants(self, M):
        if not M > 0:
            raise ValueError("support bound M must be positive")
        if self.kind == IDENTITY:
            return LossConstants(1.0, 1.0, float(M))
        if self.kind == EXP_MINUS_ONE:
            return LossConstants(math.exp(M), math.exp(-M), math.expm1(M))
        bps = np.asarray(self.breakpoints)
        lo = np.searchsorted(bps, -M, side="right")
        hi = np.searchsorted(bps, M, side="left")
        active = self.slopes[lo:hi + 1]
        magnitude = max(abs(self(-M)), self(M))
        return LossConstants(max(active), min(active), float(magnitude))

    def empirical_root(self, buf):
        """Exact root of the empirical shortfall equation, or None if there is no closed form."""
        if self.kind == IDENTITY:
            return bounded_mean(buf.total, buf.count, buf.min, buf.max)
        if self.kind == EXP_MINUS_ONE:
            # the root lies in [min, max]; clamp away rounding
            root = math.log(buf.transformed_total(_exp) / buf.count)
            return min(max(root, buf.min), buf.max)
        return None

    def empirical_objective(self, buf):
        """Return ``kappa -> mean of l(x - kappa)`` over the buffer.

        Identity and exponential losses reduce to running sums kept by the
        buffer, so each evaluation is O(1).
        """
        n = buf.count
        if self.kind == IDENTITY:
            mean = buf.total / n
            return lambda kappa: mean - kappa
        if self.kind == EXP_MINUS_ONE:
            mean_exp = buf.transformed_total(_exp) / n
            return lambda kappa: math.exp(-kappa) * mean_exp - 1.0
        values = buf.sorted_values()
        return lambda kappa: float(np.mean(self(values - kappa)))
