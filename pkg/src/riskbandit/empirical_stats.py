"""Observation buffers and the order-statistic / moment primitives on them."""

import math
import numpy as np

from .errors import CostOutOfRange, EmptyBuffer


def add_exact(partials, x):
    """Add ``x`` to an exact sum held as non-overlapping partials.

    Shewchuk's algorithm, the one behind ``math.fsum``;
    ``math.fsum(partials)`` is then the correctly rounded total.
    """
    i = 0
    for y in partials:
        if abs(x) < abs(y):
            x, y = y, x
        hi = x + y
        lo = y - (hi - x)
        if lo:
            partials[i] = lo
            i += 1
        x = hi
    partials[i:] = [x]


def _add_all(partials, xs):
    for x in np.asarray(xs, dtype=float).ravel().tolist():
        add_exact(partials, x)


class SampleBuffer:
    """Append-only sequence of observed costs from one arm (or one policy).

    Sums are kept exactly, so ``total`` is the correctly rounded sum and does
    not depend on insertion order.  A sorted copy is built on first request
    and then kept sorted by insertion; bulk ``extend`` marks it dirty and it
    is rebuilt lazily.

    If ``bound`` is given, every value must lie in ``[0, bound]``.
    """

    def __init__(self, values=(), bound=None):
        self.bound = bound
        self._values = np.empty(16)
        self._count = 0
        self._sorted = None
        self._partials = []
        self._transforms = {}
        self.min = math.inf
        self.max = -math.inf
        self.extend(values)

    @property
    def count(self):
        return self._count

    def __len__(self):
        return self._count

    def __repr__(self):
        return f"SampleBuffer(count={self._count}, bound={self.bound})"

    @property
    def values(self):
        view = self._values[:self._count]
        view.flags.writeable = False
        return view

    @property
    def total(self):
        return math.fsum(self._partials)

    def _check(self, x):
        if not math.isfinite(x):
            raise CostOutOfRange(f"non-finite observation {x}")
        if self.bound is not None and not 0.0 <= x <= self.bound:
            raise CostOutOfRange(f"observation {x} outside [0, {self.bound}]")

    def _grow(self, needed):
        cap = len(self._values)
        if needed <= cap:
            return
        while cap < needed:
            cap *= 2
        self._values = np.resize(self._values, cap)
        if self._sorted is not None:
            self._sorted = np.resize(self._sorted, cap)

    def append(self, x):
        x = float(x)
        self._check(x)
        n = self._count
        self._grow(n + 1)
        self._values[n] = x
        if self._sorted is not None:
            s = self._sorted
            pos = int(np.searchsorted(s[:n], x, side="right"))
            s[pos + 1:n + 1] = s[pos:n]
            s[pos] = x
        add_exact(self._partials, x)
        if x < self.min:
            self.min = x
        if x > self.max:
            self.max = x
        for fn, partials in self._transforms.items():
            add_exact(partials, float(fn(x)))
        self._count = n + 1

    def extend(self, xs):
        xs = np.asarray(xs, dtype=float).ravel()
        if xs.size == 0:
            return
        for x in xs:
            self._check(float(x))
        n = self._count
        self._grow(n + xs.size)
        self._values[n:n + xs.size] = xs
        self._count = n + xs.size
        self._sorted = None
        self.min = min(self.min, float(xs.min()))
        self.max = max(self.max, float(xs.max()))
        _add_all(self._partials, xs)
        for fn, partials in self._transforms.items():
            _add_all(partials, fn(xs))

    def sorted_values(self):
        if self._sorted is None:
            self._sorted = np.resize(np.sort(self._values[:self._count]), len(self._values))
        view = self._sorted[:self._count]
        view.flags.writeable = False
        return view

    def transformed_total(self, fn):
        """Exact running sum of ``fn(x)`` over the buffer.

        ``fn`` must accept both scalars and arrays.  The first call registers
        it; later appends update the sum in O(1).
        """
        partials = self._transforms.get(fn)
        if partials is None:
            partials = []
            _add_all(partials, fn(self.values))
            self._transforms[fn] = partials
        return math.fsum(partials)

    def copy(self):
        return SampleBuffer(self.values, bound=self.bound)


def _require(buf):
    if buf.count == 0:
        raise EmptyBuffer("statistic of an empty buffer")


def _as_buffer(buf):
    return buf if isinstance(buf, SampleBuffer) else SampleBuffer(buf)


def quantile_rank(alpha, n):
    """Smallest i in 1..n with i/n >= alpha, for alpha in (0, 1]."""
    num, den = float(alpha).as_integer_ratio()
    i = -((-num * n) // den)
    return min(max(i, 1), n)


def empirical_cdf(buf, x):
    buf = _as_buffer(buf)
    _require(buf)
    return int(np.searchsorted(buf.sorted_values(), x, side="right")) / buf.count


def empirical_quantile(buf, alpha):
    """Generalized inverse of the empirical CDF; the minimum sample at 0."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    buf = _as_buffer(buf)
    _require(buf)
    s = buf.sorted_values()
    if alpha == 0.0:
        return float(s[0])
    return float(s[quantile_rank(alpha, buf.count) - 1])


def bounded_mean(total, n, lo, hi):
    """``total / n`` clamped to the sample range ``[lo, hi]`` to absorb rounding."""
    return min(max(total / n, lo), hi)


def sample_mean(buf):
    buf = _as_buffer(buf)
    _require(buf)
    return bounded_mean(buf.total, buf.count, buf.min, buf.max)


def centered_p_moment(buf, center, p):
    """Average of |x - center|**p over the buffer (no p-th root taken)."""
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p}")
    buf = _as_buffer(buf)
    _require(buf)
    s = buf.sorted_values()
    if p == 1:
        return _abs_deviation_sum(s, center) / buf.count
    dev = s - center
    np.abs(dev, out=dev)
    if p == 2:
        np.multiply(dev, dev, out=dev)
    elif p != 1:
        np.power(dev, p, out=dev)
    return float(np.add.reduce(dev)) / buf.count


def exact_sum(values):
    return math.fsum(np.asarray(values, dtype=float).tolist())


def split_deviation(center, n_low, sum_low, n_high, sum_high):
    """Sum of |x - center| given exact sums of the parts at or below and above ``center``."""
    return (center * n_low - sum_low) + (sum_high - center * n_high)


def _abs_deviation_sum(sorted_values, center):
    c = int(np.searchsorted(sorted_values, center, side="right"))
    return split_deviation(
        center,
        c,
        exact_sum(sorted_values[:c]),
        len(sorted_values) - c,
        exact_sum(sorted_values[c:]),
    )
