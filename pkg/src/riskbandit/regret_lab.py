"""Monte Carlo pseudo-regret experiments and theoretical regret bounds.

The pseudo regret of a policy at horizon ``n`` is the expected empirical
risk of the pooled cost sequence it observed minus the true risk of the
optimal arm.  Replications are independent; replication ``r`` is seeded with
``replication_seed(base_seed, r)`` and results are reduced in replication
order, so the output does not depend on the number of worker processes.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import List

import numpy as np

from . import ralcb_policy
from .arm_models import ArmModel, Uniform, fill_bounds, optimal_arm, oracle_constants
from .empirical_stats import SampleBuffer
from .errors import DegenerateGap, NonPositiveRegret
from .losses import LossFunction
from .risk_measures import CVaR, Mean, MeanDeviation, RiskSpec, Shortfall, empirical_risk
from .rng import replication_seed, spawn_generators

POLICIES = ("ralcb", "uniform", "oracle")

# Two Uniform arms on [0, 1] whose risk gaps are large enough that every
# bound is finite from n = 1000 on, while the policy still spends a sizeable
# share of its first few thousand pulls exploring.
CANONICAL_ARMS = (ArmModel(Uniform(0.0, 0.3)), ArmModel(Uniform(0.95, 1.0)))
CANONICAL_DELTA = 0.9
CANONICAL_GRID = (1000, 4000, 16000)


def canonical_specs():
    """Risk specs of the canonical experiment, keyed by kind."""
    return {
        "cvar": RiskSpec(CVaR(0.5)),
        "md": RiskSpec(MeanDeviation(1.0, 1.0)),
        "shortfall": RiskSpec(Shortfall(LossFunction.exp_minus_one())),
        "mean": RiskSpec(Mean()),
    }


@dataclass
class EpisodeTrace:
    """Arms chosen (0-based) and costs observed at t = 1..n of one run."""

    arms: np.ndarray
    costs: np.ndarray
    seed: int
    K: int

    def __len__(self):
        return len(self.arms)

    @property
    def steps(self):
        return [(t + 1, int(a), float(c)) for t, (a, c) in enumerate(zip(self.arms, self.costs))]


@dataclass
class RegretCurve:
    grid: np.ndarray
    regret_mean: np.ndarray
    regret_se: np.ndarray
    bound: np.ndarray
    replications: int
    mean_pulls: np.ndarray = None

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=int)
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        for name in ("regret_mean", "regret_se", "bound"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != self.grid.shape:
                raise ValueError(f"{name} must match the grid length")
            setattr(self, name, arr)
        if np.any(self.regret_se < 0):
            raise ValueError("standard errors must be >= 0")


@dataclass
class Simulation:
    """Raw per-replication output of :func:`simulate`."""

    grid: np.ndarray
    regret: np.ndarray  # (R, len(grid))
    pulls: np.ndarray  # (R, len(grid), K)
    traces: List[EpisodeTrace] = field(default_factory=list)


def cost_table(arms, n, seed):
    """Per-arm cost streams, shape (K, n): row k holds arm k's successive draws."""
    gens = spawn_generators(seed, len(arms) + 1)
    return np.stack([arm.quantile(g.random(n)) for arm, g in zip(arms, gens)])


def _policy_generator(seed, K):
    return spawn_generators(seed, K + 1)[K]


def run_episode(arms, spec, delta, n, seed, policy="ralcb"):
    """Run one policy for ``n`` steps.

    ``policy`` is ``"ralcb"`` (the index policy), ``"uniform"`` (uniformly
    random arm each step) or ``"oracle"`` (always the optimal arm).  The
    j-th pull of arm k always returns entry j of that arm's cost stream, so
    different policies with the same seed see the same realizations.
    """
    arms = list(arms)
    K = len(arms)
    if K < 2:
        raise ValueError("need at least 2 arms")
    if n < K:
        raise ValueError(f"horizon n={n} shorter than the K={K} initial pulls")
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    table = cost_table(arms, n, seed)
    if policy == "uniform":
        choice = _policy_generator(seed, K).integers(K, size=n)
    elif policy == "oracle":
        choice = np.full(n, optimal_arm(arms, spec))
    else:
        return _run_ralcb(arms, fill_bounds(spec, arms), delta, n, seed, table)
    counts = np.zeros(K, dtype=int)
    costs = np.empty(n)
    for t, k in enumerate(choice):
        costs[t] = table[k, counts[k]]
        counts[k] += 1
    return EpisodeTrace(choice.astype(int), costs, seed, K)


def _run_ralcb(arms, spec, delta, n, seed, table):
    K = len(arms)
    state = ralcb_policy.init(K, spec, delta)
    chosen = np.empty(n, dtype=int)
    costs = np.empty(n)
    rows = [row.tolist() for row in table]
    select, update = ralcb_policy.select_arm, ralcb_policy.update
    for t in range(n):
        k = select(state)
        cost = rows[k][state.pulls[k]]
        update(state, k, cost)
        chosen[t] = k
        costs[t] = cost
    return EpisodeTrace(chosen, costs, seed, K)


def pull_counts(trace, K=None):
    K = trace.K if K is None else K
    return np.bincount(np.asarray(trace.arms, dtype=int), minlength=K)[:K]


def policy_risk(trace, spec, n=None):
    """Empirical risk of the pooled costs of the first ``n`` steps."""
    costs = trace.costs if n is None else trace.costs[:n]
    return empirical_risk(SampleBuffer(costs), spec)


def _replicate(r, arms, spec, delta, grid, base_seed, policy, optimum):
    seed = replication_seed(base_seed, r)
    trace = run_episode(arms, spec, delta, int(grid[-1]), seed, policy)
    regret = [policy_risk(trace, spec, n) - optimum for n in grid]
    pulls = [np.bincount(trace.arms[:n], minlength=len(arms)) for n in grid]
    return trace, regret, pulls


def simulate(arms, spec, delta, grid, R, base_seed, policy="ralcb", workers=1, keep_traces=False):
    """Run ``R`` seeded replications to the largest horizon of ``grid``.

    Shorter horizons are read off as prefixes of the same runs, which is
    exact because the policy never looks at the final horizon.
    """
    arms = list(arms)
    grid = np.asarray(sorted(set(int(n) for n in grid)), dtype=int)
    if R < 1:
        raise ValueError("need at least one replication")
    spec = fill_bounds(spec, arms)
    k_star = optimal_arm(arms, spec)
    optimum = oracle_constants(arms, spec)[k_star].true_risk
    task = partial(
        _replicate,
        arms=arms,
        spec=spec,
        delta=delta,
        grid=grid,
        base_seed=base_seed,
        policy=policy,
        optimum=optimum,
    )
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(task, range(R), chunksize=max(1, R // (4 * workers))))
    else:
        results = [task(r) for r in range(R)]
    return Simulation(
        grid=grid,
        regret=np.array([res[1] for res in results], dtype=float),
        pulls=np.array([res[2] for res in results], dtype=int),
        traces=[res[0] for res in results] if keep_traces else [],
    )


def _mean_se(samples):
    samples = np.asarray(samples, dtype=float)
    mean = samples.mean(axis=0)
    if samples.shape[0] < 2:
        return mean, np.zeros_like(mean)
    return mean, samples.std(axis=0, ddof=1) / math.sqrt(samples.shape[0])


def pseudo_regret(arms, spec, delta, n, R, base_seed, policy="ralcb", workers=1):
    """Monte Carlo estimate ``(mean, standard error)`` of the pseudo regret at ``n``."""
    if R < 2:
        raise ValueError("need R >= 2 replications for a standard error")
    sim = simulate(arms, spec, delta, [n], R, base_seed, policy, workers)
    mean, se = _mean_se(sim.regret[:, 0])
    return float(mean), float(se)


def pull_count_regret(arms, sim):
    """Per-replication risk-neutral regret (1/n) sum_k T_k(n) (mu_k - mu_*), shape (R, G)."""
    means = np.array([arm.mean for arm in arms])
    excess = means - means.min()
    return (sim.pulls * excess).sum(axis=2) / sim.grid


def curve_from_simulation(arms, spec, delta, sim):
    mean, se = _mean_se(sim.regret)
    bound = np.array([_bound_or_nan(arms, spec, delta, int(n)) for n in sim.grid])
    return RegretCurve(sim.grid, mean, se, bound, sim.regret.shape[0], sim.pulls.mean(axis=0))


def regret_curve(arms, spec, delta, grid, R, base_seed, policy="ralcb", workers=1):
    sim = simulate(arms, spec, delta, grid, R, base_seed, policy, workers)
    return curve_from_simulation(list(arms), spec, delta, sim)


# ---------------------------------------------------------------------------
# theoretical bounds


def _check_gaps(gaps):
    gaps = [float(g) for g in gaps]
    if not gaps or any(not g > 0 for g in gaps):
        raise ValueError("gaps must list the positive gaps of the sub-optimal arms")
    return gaps


def cvar_pull_budget(n, K, delta, alpha, M, m_alpha, gap):
    """Expected-pull budget of one sub-optimal arm under CVaR (grows like log n)."""
    inv = 1.0 / (1.0 - alpha)
    denom = gap - inv * 4.0 * delta / (n * n * K) * M
    if denom <= 0:
        raise DegenerateGap(f"gap {gap} too small for n={n}: denominator {denom} <= 0")
    ratio = (2.0 * (1.0 + inv) * m_alpha + inv * M) / denom
    return 2.0 * math.log(2.0 * n * n * K / delta) * ratio * ratio + 3.0 * delta


def bound_cvar(n, K, delta, alpha, M, m_alpha, gaps):
    """Regret bound for RA-LCB under CVaR.

    ``gaps`` are the risk gaps of the sub-optimal arms.  The unspecified
    O(log n / n) factor of the leading term is the total sub-optimal pull
    budget divided by n.
    """
    if n <= K:
        raise ValueError("bound holds for n > K")
    gaps = _check_gaps(gaps)
    inv = 1.0 / (1.0 - alpha)
    budgets = [cvar_pull_budget(n, K, delta, alpha, M, m_alpha, g) for g in gaps]
    leading = max(alpha, 1.0 - alpha) * (sum(budgets) / n) * m_alpha + 2.0 * m_alpha * math.sqrt(
        math.log(4.0 * n / delta) / (2.0 * n)
    )
    spread = inv / n * sum(b * (M + g) for b, g in zip(budgets, gaps))
    tail = 4.0 * delta / n * ((inv + 1.0) * M + inv * max(gaps))
    return (1.0 - 4.0 * delta / n) * (leading + spread) + tail


def md_pull_constant(gap, M, p):
    c = 1.0 + (1.0 + p) ** (1.0 / p)
    smallest = min(1.0, gap / (2.0 * M * c), gap ** p / ((2.0 * M * c) ** p))
    return smallest ** -2


def md_pull_budget(n, K, delta, M, p, gaps):
    gaps = _check_gaps(gaps)
    log_term = math.log(4.0 * n * n * K / delta)
    return (
        sum((1.0 - delta / n) * md_pull_constant(g, M, p) * log_term for g in gaps)
        + (K - 1) * delta
    )


def bound_md(n, K, delta, M, p, gamma, gaps, mean_gaps=None):
    """Regret bound for RA-LCB under mean-deviation.

    ``gaps`` are the mean-deviation risk gaps of the sub-optimal arms and
    ``mean_gaps`` their mean gaps |mu_k - mu_*| (defaults to ``gaps``); the
    largest mean gap is used in the leading coefficient.
    """
    if n <= K:
        raise ValueError("bound holds for n > K")
    budget = md_pull_budget(n, K, delta, M, p, gaps)
    if budget >= n:
        raise DegenerateGap(f"sub-optimal pull budget {budget:.6g} exceeds n={n}")
    mean_gap = max(_check_gaps(gaps) if mean_gaps is None else [abs(g) for g in mean_gaps])
    log_term = math.log(4.0 * n * n * K / delta)
    return (mean_gap + 2.0 * gamma * p * M ** p) * budget / n + M * (
        delta / n + (1.0 - delta / n) * math.sqrt(log_term / (2.0 * (n - budget)))
    )


def shortfall_pull_budget(n, K, delta, M_l, M_G, gap):
    return 8.0 * M_l * M_G / gap * math.log(4.0 * n * n * K / delta)


def shortfall_optimal_pulls(n, K, delta, M_l, M_G, gaps):
    """Deterministic stand-in for T_{k*}(n): n minus the sub-optimal budgets, at least 1."""
    spent = sum(shortfall_pull_budget(n, K, delta, M_l, M_G, g) for g in _check_gaps(gaps))
    return max(1, n - math.ceil(spent))


def bound_shortfall(n, K, delta, M, M_l, M_G, m_l, gaps, t_star):
    if n <= K:
        raise ValueError("bound holds for n > K")
    if t_star < 1:
        raise ValueError("t_star must be >= 1")
    gaps = _check_gaps(gaps)
    log_term = math.log(4.0 * n * n * K / delta)
    mixing = sum(8.0 * M_l * M_l * M_G / (n * m_l * g) * log_term for g in gaps)
    estimation = 2.0 * M_l * M_G * math.sqrt(log_term / (2.0 * t_star))
    return (1.0 - delta / n) * (mixing + estimation) + delta / n * M


def theoretical_bound(arms, spec, delta, n):
    """Evaluate the regret bound matching ``spec``'s measure; NaN for the mean."""
    arms = list(arms)
    spec = fill_bounds(spec, arms)
    consts = oracle_constants(arms, spec)
    k_star = optimal_arm(arms, spec)
    gaps = [c.gap for k, c in enumerate(consts) if k != k_star]
    K, b, m = len(arms), spec.bounds, spec.measure
    if isinstance(m, CVaR):
        return bound_cvar(n, K, delta, m.alpha, b.M, b.m_alpha, gaps)
    if isinstance(m, MeanDeviation):
        mu_star = arms[k_star].mean
        mean_gaps = [abs(arm.mean - mu_star) for k, arm in enumerate(arms) if k != k_star]
        return bound_md(n, K, delta, b.M, m.p, m.gamma, gaps, mean_gaps)
    if isinstance(m, Shortfall):
        m_l = m.loss.constants(b.M).derivative_floor
        t_star = shortfall_optimal_pulls(n, K, delta, b.M_l, b.M_G, gaps)
        return bound_shortfall(n, K, delta, b.M, b.M_l, b.M_G, m_l, gaps, t_star)
    return float("nan")


def _bound_or_nan(arms, spec, delta, n):
    try:
        return theoretical_bound(arms, spec, delta, n)
    except DegenerateGap:
        return float("nan")


def loglog_slope(grid, values):
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(grid) < 3:
        raise ValueError("need at least 3 grid points")
    if np.any(values <= 0):
        raise NonPositiveRegret("log-log fit needs strictly positive regret")
    return float(np.polyfit(np.log(grid), np.log(values), 1)[0])


def decay_exponent(curve):
    """Least-squares slope of log(regret_mean) against log(n)."""
    return loglog_slope(curve.grid, curve.regret_mean)
