"""Synthetic bounded-cost arms with exact distribution functions and risk oracles.

Every arm puts all of its mass in ``[0, M]`` where ``M`` is the arm's
``support_bound``.  Sampling is by inverse transform, ``quantile(U)`` with
``U`` uniform on [0, 1), so a seeded generator fully determines the draws.
"""

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import integrate, special

from .errors import AssumptionViolated, NonUniqueOptimum
from .losses import LossConstants, LossFunction
from .risk_measures import (
    CVaR,
    Mean,
    MeanDeviation,
    RiskSpec,
    Shortfall,
    bisect_decreasing,
)

ORACLE_TOL = 1e-10
ORACLE_MAX_ITER = 200
TIE_TOL = 1e-12


def _beta_ppf_small(a, b, alpha):
    """Beta quantile for tiny levels by Newton steps on log I_x(a, b).

    Starts from the small-x asymptote I_x ~ x**a / (a B(a, b)).
    """
    log_alpha = math.log(alpha)
    log_x = (log_alpha + math.log(a) + special.betaln(a, b)) / a
    for _ in range(50):
        x = math.exp(log_x)
        cdf_x = special.betainc(a, b, x)
        if not cdf_x > 0.0:
            break
        log_pdf = (a - 1.0) * log_x + (b - 1.0) * math.log1p(-x) - special.betaln(a, b)
        # d log I / d log x = x pdf(x) / I(x)
        step = (math.log(cdf_x) - log_alpha) / math.exp(log_x + log_pdf - math.log(cdf_x))
        log_x -= step
        if abs(step) < 1e-14:
            break
    return math.exp(log_x)


def _beta_ppf(a, b, alpha):
    """Beta quantile; scipy's betaincinv returns nan at some tiny levels, handled separately."""
    q = special.betaincinv(a, b, alpha)
    shape = np.shape(q)
    out = np.array(q, dtype=float, ndmin=1)
    levels = np.broadcast_to(np.array(alpha, dtype=float, ndmin=1), out.shape)
    for i in np.flatnonzero(np.isnan(out) & (levels > 0.0)):
        out.flat[i] = _beta_ppf_small(a, b, float(levels.flat[i]))
    # betaincinv can be ~1e-11 off; polish interior points with Newton steps on I_x - alpha
    inner = (out > 0.0) & (out < 1.0)
    for _ in range(2):
        x = out[inner]
        log_pdf = (a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x) - special.betaln(a, b)
        step = (special.betainc(a, b, x) - levels[inner]) / np.exp(log_pdf)
        new = x - step
        ok = np.isfinite(new) & (new > 0.0) & (new < 1.0) & (np.abs(step) < 1e-6 * np.maximum(x, 1e-300) + 1e-9)
        x[ok] = new[ok]
        out[inner] = x
    return out.reshape(shape)


@dataclass(frozen=True)
class Deterministic:
    c: float


@dataclass(frozen=True)
class Uniform:
    a: float
    b: float


@dataclass(frozen=True)
class ScaledBeta:
    shape1: float
    shape2: float
    scale: float = 1.0


@dataclass(frozen=True)
class ScaledBernoulli:
    p: float
    scale: float = 1.0


Family = Union[Deterministic, Uniform, ScaledBeta, ScaledBernoulli]


@dataclass(frozen=True)
class ArmModel:
    family: Family
    support_bound: float = 1.0

    def __post_init__(self):
        f, M = self.family, self.support_bound
        if not (M > 0 and math.isfinite(M)):
            raise ValueError(f"support bound must be finite and > 0, got {M}")
        if isinstance(f, Deterministic):
            ok = 0.0 <= f.c <= M
        elif isinstance(f, Uniform):
            ok = 0.0 <= f.a < f.b <= M
        elif isinstance(f, ScaledBeta):
            ok = f.shape1 > 0 and f.shape2 > 0 and 0 < f.scale <= M
        elif isinstance(f, ScaledBernoulli):
            ok = 0.0 <= f.p <= 1.0 and 0 < f.scale <= M
        else:
            raise TypeError(f"unsupported arm family {f!r}")
        if not ok:
            raise ValueError(f"invalid parameters {f!r} for support bound {M}")

    @property
    def is_continuous(self):
        return isinstance(self.family, (Uniform, ScaledBeta))

    @property
    def support(self):
        """Smallest closed interval holding all of the mass."""
        f = self.family
        if isinstance(f, Deterministic):
            return f.c, f.c
        if isinstance(f, Uniform):
            return f.a, f.b
        if isinstance(f, ScaledBeta):
            return 0.0, f.scale
        if f.p == 0.0:
            return 0.0, 0.0
        if f.p == 1.0:
            return f.scale, f.scale
        return 0.0, f.scale

    @property
    def mean(self):
        f = self.family
        if isinstance(f, Deterministic):
            return f.c
        if isinstance(f, Uniform):
            return 0.5 * (f.a + f.b)
        if isinstance(f, ScaledBeta):
            return f.scale * f.shape1 / (f.shape1 + f.shape2)
        return f.p * f.scale

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        f = self.family
        if isinstance(f, Deterministic):
            out = (x >= f.c).astype(float)
        elif isinstance(f, Uniform):
            out = np.clip((x - f.a) / (f.b - f.a), 0.0, 1.0)
        elif isinstance(f, ScaledBeta):
            out = special.betainc(f.shape1, f.shape2, np.clip(x / f.scale, 0.0, 1.0))
        else:
            out = np.where(x < 0.0, 0.0, np.where(x < f.scale, 1.0 - f.p, 1.0))
        return out if out.ndim else float(out)

    def pdf(self, x):
        """Density of a continuous arm; zero outside the support."""
        f = self.family
        x = np.asarray(x, dtype=float)
        if isinstance(f, Uniform):
            out = np.where((x >= f.a) & (x <= f.b), 1.0 / (f.b - f.a), 0.0)
        elif isinstance(f, ScaledBeta):
            y = x / f.scale
            inside = (y >= 0.0) & (y <= 1.0)
            with np.errstate(divide="ignore", invalid="ignore"):
                dens = np.exp(
                    (f.shape1 - 1.0) * np.log(y)
                    + (f.shape2 - 1.0) * np.log1p(-y)
                    - special.betaln(f.shape1, f.shape2)
                ) / f.scale
            out = np.where(inside, np.nan_to_num(dens, nan=0.0, posinf=np.inf), 0.0)
        else:
            raise AssumptionViolated(f"{type(f).__name__} arm has no density")
        return out if out.ndim else float(out)

    def quantile(self, alpha):
        """inf{x : F(x) >= alpha}; the infimum of the support at alpha = 0."""
        alpha = np.asarray(alpha, dtype=float)
        if np.any((alpha < 0.0) | (alpha > 1.0)):
            raise ValueError("quantile level must lie in [0, 1]")
        f = self.family
        lo, _ = self.support
        if isinstance(f, Deterministic):
            out = np.full_like(alpha, f.c)
        elif isinstance(f, Uniform):
            out = f.a + (f.b - f.a) * alpha
        elif isinstance(f, ScaledBeta):
            out = f.scale * _beta_ppf(f.shape1, f.shape2, alpha)
        else:
            out = np.where(alpha <= 1.0 - f.p, 0.0, f.scale)
            out = np.where(alpha == 0.0, lo, out)
        out = np.clip(out, 0.0, self.support_bound)
        return out if out.ndim else float(out)

    def expect(self, g, points=None):
        """E[g(X)] by exact summation (discrete arms) or adaptive quadrature."""
        f = self.family
        if isinstance(f, Deterministic):
            return float(g(f.c))
        if isinstance(f, ScaledBernoulli):
            return float((1.0 - f.p) * g(0.0) + f.p * g(f.scale))
        lo, hi = self.support
        inner = sorted(p for p in (points or ()) if lo < p < hi)
        value, _ = integrate.quad(
            lambda x: g(x) * self.pdf(x),
            lo,
            hi,
            points=inner or None,
            epsabs=1e-13,
            epsrel=1e-12,
            limit=200,
        )
        return float(value)


def sample(model, rng, size=None):
    """Draw i.i.d. costs by inverse transform of ``rng.random(size)``."""
    return model.quantile(rng.random(size))


def cdf(model, x):
    return model.cdf(x)


def quantile(model, alpha):
    return model.quantile(alpha)


def _centered_abs_moment(model, p):
    f, mu = model.family, model.mean
    if isinstance(f, Deterministic):
        return 0.0
    if isinstance(f, Uniform):
        return (0.5 * (f.b - f.a)) ** p / (p + 1.0)
    return model.expect(lambda x: abs(x - mu) ** p, points=[mu])


def _cvar(model, alpha):
    if not model.is_continuous:
        raise AssumptionViolated(
            f"CVaR oracle needs a continuous CDF; {type(model.family).__name__} arm is discrete"
        )
    if alpha == 0.0:
        return model.mean
    f = model.family
    if isinstance(f, Uniform):
        return f.a + (f.b - f.a) * (1.0 + alpha) / 2.0
    # E[Y 1{Y >= q}] for Y ~ Beta(a, b) equals a/(a+b) * (1 - I_q(a+1, b)).
    q = _beta_ppf(f.shape1, f.shape2, alpha)
    upper = 1.0 - special.betainc(f.shape1 + 1.0, f.shape2, q)
    return f.scale * f.shape1 / (f.shape1 + f.shape2) * upper / (1.0 - alpha)


def _loss_points(loss, kappa):
    return [kappa + b for b in loss.breakpoints]


def _shortfall(model, loss):
    lo, hi = model.support

    def objective(kappa):
        return model.expect(lambda x: loss(x - kappa), points=_loss_points(loss, kappa))

    return bisect_decreasing(objective, lo, hi, ORACLE_TOL, ORACLE_MAX_ITER)


def true_risk(model, spec):
    """Exact (closed form) or high-precision numeric risk of one arm."""
    m = spec.measure if isinstance(spec, RiskSpec) else spec
    if isinstance(m, CVaR):
        return float(_cvar(model, m.alpha))
    if isinstance(m, MeanDeviation):
        mean = model.mean
        if m.gamma == 0.0:
            return mean
        return float(mean + m.gamma * _centered_abs_moment(model, m.p) ** (1.0 / m.p))
    if isinstance(m, Shortfall):
        if m.loss.kind == "identity":
            return model.mean
        return float(_shortfall(model, m.loss))
    if isinstance(m, Mean):
        return model.mean
    raise TypeError(f"unsupported measure {m!r}")


def density_floor_inv(model, alpha):
    """1 / f(F^{-1}(alpha)) for a continuous arm."""
    if not model.is_continuous:
        raise AssumptionViolated("density bound needs a continuous arm")
    dens = model.pdf(model.quantile(alpha))
    if not (dens > 0 and math.isfinite(dens)):
        raise AssumptionViolated(
            f"density at the {alpha}-quantile is {dens}; its reciprocal is not a finite positive bound"
        )
    return 1.0 / dens


def shortfall_slope(model, loss, kappa):
    """|G'(kappa)| = E[l'(X - kappa)] for G(kappa) = E[l(X - kappa)]."""
    return model.expect(lambda x: loss.derivative(x - kappa), points=_loss_points(loss, kappa))


@dataclass(frozen=True)
class OracleConstants:
    """Ground truth for one arm within an arm set.

    ``density_floor_inv`` (CVaR) and ``shortfall_sensitivity`` (shortfall) are
    suprema over the whole arm set; they are None for other measures.
    """

    true_risk: float
    gap: float
    density_floor_inv: Optional[float] = None
    shortfall_sensitivity: Optional[float] = None


def oracle_constants(models, spec):
    """Oracle constants for one arm or for every arm of a set.

    A single :class:`ArmModel` yields one :class:`OracleConstants` (gap 0);
    a sequence yields a list, with gaps taken against the minimal risk.
    """
    single = isinstance(models, ArmModel)
    arms = [models] if single else list(models)
    m = spec.measure if isinstance(spec, RiskSpec) else spec
    risks = [true_risk(arm, m) for arm in arms]
    best = min(risks)
    m_alpha = None
    if isinstance(m, CVaR):
        m_alpha = max(density_floor_inv(arm, m.alpha) for arm in arms)
    m_g = None
    if isinstance(m, Shortfall):
        slopes = [shortfall_slope(arm, m.loss, r) for arm, r in zip(arms, risks)]
        if min(slopes) <= 0:
            raise AssumptionViolated("shortfall equation has a vanishing slope at the root")
        m_g = max(1.0 / s for s in slopes)
    out = [OracleConstants(r, r - best, m_alpha, m_g) for r in risks]
    return out[0] if single else out


def optimal_arm(models, spec, tol=TIE_TOL):
    """Index of the unique arm of minimal true risk."""
    risks = [c.true_risk for c in oracle_constants(list(models), spec)]
    order = sorted(range(len(risks)), key=risks.__getitem__)
    if len(order) > 1 and risks[order[1]] - risks[order[0]] <= tol:
        raise NonUniqueOptimum(
            f"arms {order[0]} and {order[1]} tie in true risk ({risks[order[0]]:.12g})"
        )
    return order[0]


def loss_constants(loss, M):
    return loss.constants(M)


def fill_bounds(spec, models):
    """Fill any missing bound constants of ``spec`` from the arm oracles."""
    arms = list(models)
    b = spec.bounds
    changes = {}
    if b.M is None:
        changes["M"] = max(arm.support_bound for arm in arms)
    M = changes.get("M", b.M)
    m = spec.measure
    if isinstance(m, CVaR) and b.m_alpha is None:
        changes["m_alpha"] = max(density_floor_inv(arm, m.alpha) for arm in arms)
    if isinstance(m, Shortfall):
        if b.M_l is None:
            changes["M_l"] = m.loss.constants(M).magnitude
        if b.M_G is None:
            changes["M_G"] = oracle_constants(arms, m)[0].shortfall_sensitivity
    return spec.with_bounds(**changes) if changes else spec


__all__ = [
    "ArmModel",
    "Deterministic",
    "LossConstants",
    "LossFunction",
    "OracleConstants",
    "ScaledBernoulli",
    "ScaledBeta",
    "Uniform",
    "cdf",
    "density_floor_inv",
    "fill_bounds",
    "loss_constants",
    "optimal_arm",
    "oracle_constants",
    "quantile",
    "sample",
    "shortfall_slope",
    "true_risk",
]
