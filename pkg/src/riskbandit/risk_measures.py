"""Risk specifications, empirical risk estimators and confidence radii.

Four measures are supported: CVaR at level alpha, mean-deviation
``mean + gamma * ||X - mean||_p``, shortfall risk under a loss function, and
the plain mean.  Every estimator is a function of a :class:`SampleBuffer`
and works equally for one arm's history or for the pooled sequence of a
policy.
"""

import dataclasses
import heapq
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .empirical_stats import (
    SampleBuffer,
    _as_buffer,
    _require,
    add_exact,
    bounded_mean,
    centered_p_moment,
    exact_sum,
    split_deviation,
    empirical_quantile,
    quantile_rank,
    sample_mean,
)
from .errors import MissingConstant, NonConvergence
from .losses import LossFunction

SHORTFALL_TOL = 1e-13
MAX_BISECTION_ITER = 200
MD_RADIUS_VARIANTS = ("sum", "as_written")


@dataclass(frozen=True)
class CVaR:
    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"CVaR level alpha must lie in [0, 1), got {self.alpha}")


@dataclass(frozen=True)
class MeanDeviation:
    gamma: float
    p: float = 1.0

    def __post_init__(self):
        if not self.gamma >= 0.0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if not (self.p >= 1.0 and math.isfinite(self.p)):
            raise ValueError(f"p must be a finite real >= 1, got {self.p}")


@dataclass(frozen=True)
class Shortfall:
    loss: LossFunction


@dataclass(frozen=True)
class Mean:
    pass


Measure = Union[CVaR, MeanDeviation, Shortfall, Mean]


@dataclass(frozen=True)
class BoundInputs:
    """Constants consumed by the confidence radius.

    Only the fields the chosen measure needs must be set: ``M`` for CVaR,
    mean-deviation and mean; ``m_alpha`` for CVaR; ``M_l`` and ``M_G`` for
    shortfall.
    """

    M: Optional[float] = None
    delta: float = 0.1
    m_alpha: Optional[float] = None
    M_l: Optional[float] = None
    M_G: Optional[float] = None

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        for name in ("M", "m_alpha", "M_l", "M_G"):
            value = getattr(self, name)
            if value is not None and not (value > 0 and math.isfinite(value)):
                raise ValueError(f"bound constant {name} must be finite and > 0, got {value}")


@dataclass(frozen=True)
class RiskSpec:
    measure: Measure
    bounds: BoundInputs = BoundInputs()
    md_radius_variant: str = "sum"

    def __post_init__(self):
        if not isinstance(self.measure, (CVaR, MeanDeviation, Shortfall, Mean)):
            raise TypeError(f"unsupported measure {self.measure!r}")
        if self.md_radius_variant not in MD_RADIUS_VARIANTS:
            raise ValueError(f"md_radius_variant must be one of {MD_RADIUS_VARIANTS}")

    @property
    def kind(self):
        return {CVaR: "cvar", MeanDeviation: "md", Shortfall: "shortfall", Mean: "mean"}[
            type(self.measure)
        ]

    @property
    def delta(self):
        return self.bounds.delta

    def with_bounds(self, **changes):
        return dataclasses.replace(self, bounds=dataclasses.replace(self.bounds, **changes))


def empirical_cvar(buf, alpha):
    """Plug-in CVaR: the empirical alpha-quantile plus the scaled mean excess over it."""
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    buf = _as_buffer(buf)
    _require(buf)
    if alpha == 0.0:
        # with the quantile at the minimum the formula collapses to the mean
        return sample_mean(buf)
    n = buf.count
    s = buf.sorted_values()
    i = quantile_rank(alpha, n)
    return _cvar_from_split(alpha, n, float(s[i - 1]), n - i, exact_sum(s[i:]))


def _cvar_from_split(alpha, n, eta, n_above, sum_above):
    # eta is the order statistic at the quantile rank; sum_above the exact sum of the rest
    return eta + (sum_above - n_above * eta) / ((1.0 - alpha) * n)


def empirical_md(buf, gamma, p):
    buf = _as_buffer(buf)
    mean = sample_mean(buf)
    if gamma == 0.0:
        return mean
    spread = centered_p_moment(buf, mean, p)
    return mean + gamma * spread ** (1.0 / p)


def empirical_shortfall(buf, loss, tol=SHORTFALL_TOL):
    """Root of ``kappa -> mean l(x - kappa)``.

    Identity and exponential losses have closed-form roots (the sample mean
    and the log of the mean of exp(x)).  Other losses are solved by bisection
    on [min, max]: the objective is decreasing in kappa, nonnegative at the
    smallest sample and nonpositive at the largest, so the bracket always
    holds the root, and the midpoint of the final bracket is returned.
    """
    if not tol >= 0:
        raise ValueError("tol must be >= 0")
    buf = _as_buffer(buf)
    _require(buf)
    closed = loss.empirical_root(buf)
    if closed is not None:
        return closed
    s = buf.sorted_values()
    return bisect_decreasing(loss.empirical_objective(buf), float(s[0]), float(s[-1]), tol)


def bisect_decreasing(objective, lo, hi, tol, max_iter=MAX_BISECTION_ITER):
    """Bisection for ``inf{x in [lo, hi] : objective(x) <= 0}``.

    ``objective`` must be nonincreasing with ``objective(lo) >= 0`` and
    ``objective(hi) <= 0``.  Stops when the bracket is narrower than ``tol``
    or cannot be split further in floating point.
    """
    if lo == hi:
        return lo
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol or mid <= lo or mid >= hi:
            return mid
        if objective(mid) <= 0.0:
            hi = mid
        else:
            lo = mid
    raise NonConvergence(f"bisection did not reach tol={tol} in {max_iter} iterations")


def empirical_risk(buf, spec):
    m = spec.measure
    if isinstance(m, CVaR):
        return empirical_cvar(buf, m.alpha)
    if isinstance(m, MeanDeviation):
        return empirical_md(buf, m.gamma, m.p)
    if isinstance(m, Shortfall):
        return empirical_shortfall(buf, m.loss)
    return sample_mean(buf)


class _RunningMean:
    def __init__(self):
        self.count = 0
        self._sum = []
        self._min, self._max = math.inf, -math.inf

    def push(self, x):
        add_exact(self._sum, x)
        self.count += 1
        self._min = min(self._min, x)
        self._max = max(self._max, x)

    def value(self):
        return bounded_mean(math.fsum(self._sum), self.count, self._min, self._max)


class _RunningCVaR:
    """Lower max-heap holds the quantile-rank smallest values, upper min-heap the rest."""

    def __init__(self, alpha):
        self.alpha = alpha
        self.count = 0
        self._low = []
        self._high = []
        self._high_sum = []

    def push(self, x):
        low, high = self._low, self._high
        self.count += 1
        if low and x <= -low[0]:
            heapq.heappush(low, -x)
        else:
            heapq.heappush(high, x)
            add_exact(self._high_sum, x)
        rank = quantile_rank(self.alpha, self.count)
        while len(low) > rank:
            y = -heapq.heappop(low)
            heapq.heappush(high, y)
            add_exact(self._high_sum, y)
        while len(low) < rank:
            y = heapq.heappop(high)
            add_exact(self._high_sum, -y)
            heapq.heappush(low, -y)

    def value(self):
        return _cvar_from_split(
            self.alpha, self.count, -self._low[0], len(self._high), math.fsum(self._high_sum)
        )


class _RunningMeanDeviation:
    """p = 1 only: values split at the running mean, with exact sums of both sides."""

    def __init__(self, gamma):
        self.gamma = gamma
        self.count = 0
        self._sum = []
        self._low, self._low_sum = [], []
        self._high, self._high_sum = [], []
        self._min, self._max = math.inf, -math.inf

    def push(self, x):
        self.count += 1
        add_exact(self._sum, x)
        self._min = min(self._min, x)
        self._max = max(self._max, x)
        heapq.heappush(self._high, x)
        add_exact(self._high_sum, x)

    def value(self):
        mean = bounded_mean(math.fsum(self._sum), self.count, self._min, self._max)
        low, high = self._low, self._high
        while low and -low[0] > mean:
            y = -heapq.heappop(low)
            add_exact(self._low_sum, -y)
            heapq.heappush(high, y)
            add_exact(self._high_sum, y)
        while high and high[0] <= mean:
            y = heapq.heappop(high)
            add_exact(self._high_sum, -y)
            heapq.heappush(low, -y)
            add_exact(self._low_sum, y)
        if self.gamma == 0.0:
            return mean
        dev = split_deviation(
            mean, len(low), math.fsum(self._low_sum), len(high), math.fsum(self._high_sum)
        )
        return mean + self.gamma * (dev / self.count)


class _RunningExpShortfall:
    def __init__(self):
        self.count = 0
        self._exp_sum = []
        self._min, self._max = math.inf, -math.inf

    def push(self, x):
        self.count += 1
        add_exact(self._exp_sum, float(np.exp(x)))
        self._min = min(self._min, x)
        self._max = max(self._max, x)

    def value(self):
        root = math.log(math.fsum(self._exp_sum) / self.count)
        return min(max(root, self._min), self._max)


class _Recompute:
    def __init__(self, spec):
        self.spec = spec
        self.buf = SampleBuffer()

    @property
    def count(self):
        return self.buf.count

    def push(self, x):
        self.buf.append(x)

    def value(self):
        return empirical_risk(self.buf, self.spec)


def running_estimator(spec):
    """Incremental estimator of ``empirical_risk`` for a growing sample.

    ``push(x)`` adds an observation and ``value()`` returns the same number
    :func:`empirical_risk` gives on the samples pushed so far.  CVaR,
    mean-deviation with p = 1, the mean, and identity / exponential shortfall
    update in O(log n); anything else recomputes from a buffer.
    """
    m = spec.measure
    if isinstance(m, Mean) or (isinstance(m, Shortfall) and m.loss.kind == "identity"):
        return _RunningMean()
    if isinstance(m, CVaR):
        return _RunningCVaR(m.alpha) if m.alpha > 0.0 else _RunningMean()
    if isinstance(m, MeanDeviation) and (m.p == 1.0 or m.gamma == 0.0):
        return _RunningMeanDeviation(m.gamma)
    if isinstance(m, Shortfall) and m.loss.kind == "exp_minus_one":
        return _RunningExpShortfall()
    return _Recompute(spec)


def _need(bounds, name):
    value = getattr(bounds, name)
    if value is None:
        raise MissingConstant(f"confidence radius needs bound constant {name!r}")
    return value


def radius_function(spec, K):
    """Return ``(n, t_k) -> confidence_radius(spec, n, t_k, K)`` with constants pre-bound.

    Used by the policy's inner loop; performs no argument validation.
    """
    b = spec.bounds
    delta = b.delta
    m = spec.measure
    if isinstance(m, CVaR):
        M, m_alpha = _need(b, "M"), _need(b, "m_alpha")
        inv = 1.0 / (1.0 - m.alpha)
        tail = inv * M
        quantile_part = 2.0 * (1.0 + inv) * m_alpha
        scale = 2.0 * K / delta

        def radius(n, t_k):
            coef = tail * (1.0 - 3.0 * delta / n) + quantile_part
            return coef * math.sqrt(math.log(scale * n * n) / (2.0 * t_k))

        return radius
    scale = 4.0 * K / delta
    if isinstance(m, MeanDeviation):
        M, p = _need(b, "M"), m.p
        sign = -1.0 if spec.md_radius_variant == "as_written" else 1.0

        def radius(n, t_k):
            log_term = math.log(scale * n * n)
            first = M * math.sqrt(log_term / t_k)
            second = M * ((p + 1.0) * math.sqrt(log_term / (2.0 * t_k))) ** (1.0 / p)
            return first + sign * second

        return radius
    if isinstance(m, Shortfall):
        coef = 2.0 * _need(b, "M_l") * _need(b, "M_G")
    else:
        coef = _need(b, "M")

    def radius(n, t_k):
        return coef * math.sqrt(math.log(scale * n * n) / (2.0 * t_k))

    return radius


def confidence_radius(spec, n, t_k, K):
    """Width subtracted from an arm's empirical risk to form its index.

    ``n`` is the current clock, ``t_k`` the arm's pull count and ``K`` the
    number of arms.  Strictly decreasing in ``t_k`` (for the default
    mean-deviation variant).
    """
    if n < 1 or not 1 <= t_k <= n or K < 1:
        raise ValueError(f"need n >= 1, 1 <= t_k <= n, K >= 1; got n={n}, t_k={t_k}, K={K}")
    return radius_function(spec, K)(n, t_k)


__all__ = [
    "BoundInputs",
    "CVaR",
    "Mean",
    "MeanDeviation",
    "Measure",
    "RiskSpec",
    "SampleBuffer",
    "Shortfall",
    "confidence_radius",
    "empirical_cvar",
    "empirical_md",
    "empirical_quantile",
    "empirical_risk",
    "empirical_shortfall",
    "running_estimator",
]
