import math

import numpy as np
import pytest

from riskbandit import ralcb_policy as rp
from riskbandit.arm_models import ArmModel, Deterministic, Uniform, fill_bounds
from riskbandit.errors import DegenerateGap, NonPositiveRegret, NonUniqueOptimum
from riskbandit.losses import LossFunction
from riskbandit.regret_lab import (
    EpisodeTrace,
    RegretCurve,
    bound_cvar,
    bound_md,
    bound_shortfall,
    cost_table,
    decay_exponent,
    md_pull_constant,
    pseudo_regret,
    pull_count_regret,
    pull_counts,
    regret_curve,
    run_episode,
    shortfall_optimal_pulls,
    simulate,
    theoretical_bound,
)
from riskbandit.risk_measures import BoundInputs, CVaR, Mean, MeanDeviation, RiskSpec, Shortfall

DET = [ArmModel(Deterministic(0.2)), ArmModel(Deterministic(0.5))]
UNI = [ArmModel(Uniform(0.0, 0.3)), ArmModel(Uniform(0.6, 1.0))]
MEAN = RiskSpec(Mean())


class TestRunEpisode:
    def test_round_robin_start(self):
        tr = run_episode(UNI, MEAN, 0.1, 2, seed=1)
        assert [(t, a) for t, a, _ in tr.steps] == [(1, 0), (2, 1)]

    def test_deterministic_in_seed(self):
        a = run_episode(UNI, RiskSpec(CVaR(0.5)), 0.1, 300, seed=5)
        b = run_episode(UNI, RiskSpec(CVaR(0.5)), 0.1, 300, seed=5)
        assert np.array_equal(a.arms, b.arms) and np.array_equal(a.costs, b.costs)

    def test_prefix_property(self):
        short = run_episode(UNI, MEAN, 0.1, 200, seed=3)
        long = run_episode(UNI, MEAN, 0.1, 500, seed=3)
        assert np.array_equal(short.arms, long.arms[:200])
        assert np.array_equal(short.costs, long.costs[:200])

    def test_costs_follow_per_arm_streams(self):
        tr = run_episode(UNI, MEAN, 0.1, 300, seed=8)
        table = cost_table(UNI, 300, 8)
        for k in range(2):
            mine = tr.costs[tr.arms == k]
            assert np.array_equal(mine, table[k, : len(mine)])

    def test_deterministic_arms_against_reference_loop(self):
        # straightforward re-implementation: mean minus sqrt(log(4 n^2 K / delta) / (2 T_k))
        n, K, delta = 100, 2, 0.1
        costs, pulls, sums, chosen = [0.2, 0.5], [0, 0], [0.0, 0.0], []
        for t in range(n):
            if t < K:
                k = t
            else:
                idx = [sums[j] / pulls[j] - math.sqrt(math.log(4 * t * t * K / delta) / (2 * pulls[j])) for j in range(K)]
                k = int(np.argmin(idx))
            chosen.append(k)
            pulls[k] += 1
            sums[k] += costs[k]
        tr = run_episode(DET, MEAN, delta, n, seed=0)
        assert tr.arms.tolist() == chosen
        assert pull_counts(tr)[1] < 25

    def test_policies(self):
        oracle = run_episode(UNI, MEAN, 0.1, 50, seed=2, policy="oracle")
        assert np.all(oracle.arms == 0)
        uniform = run_episode(UNI, MEAN, 0.1, 500, seed=2, policy="uniform")
        assert 150 < pull_counts(uniform)[1] < 350
        with pytest.raises(ValueError):
            run_episode(UNI, MEAN, 0.1, 50, seed=2, policy="greedy")

    def test_horizon_shorter_than_initialisation(self):
        with pytest.raises(ValueError):
            run_episode(UNI, MEAN, 0.1, 1, seed=0)

    def test_policy_state_reference(self):
        # the episode runner is the policy loop with costs read from the streams
        spec = fill_bounds(RiskSpec(MeanDeviation(1.0, 1.0)), UNI)
        tr = run_episode(UNI, spec, 0.2, 400, seed=6)
        table = cost_table(UNI, 400, 6)
        s = rp.init(2, spec, 0.2)
        for t in range(400):
            k = rp.select_arm(s)
            assert k == tr.arms[t]
            rp.update(s, k, table[k, s.pulls[k]])


def test_pull_counts():
    tr = EpisodeTrace(np.array([0, 1, 0, 0]), np.zeros(4), 0, 2)
    assert pull_counts(tr).tolist() == [3, 1]
    empty = EpisodeTrace(np.array([], dtype=int), np.array([]), 0, 2)
    assert pull_counts(empty).tolist() == [0, 0]


class TestPseudoRegret:
    def test_oracle_policy_regret_vanishes(self):
        mean, se = pseudo_regret(UNI, RiskSpec(CVaR(0.5)), 0.1, 2000, 20, 1, policy="oracle")
        assert abs(mean) <= 3 * se + 1e-3

    def test_uniform_policy_on_deterministic_arms(self):
        # pooled mean tends to 0.35, optimum 0.2
        mean, _ = pseudo_regret(DET, MEAN, 0.1, 4000, 10, 1, policy="uniform")
        assert mean == pytest.approx(0.15, abs=0.01)

    def test_tie(self):
        arms = [ArmModel(Uniform(0, 0.5)), ArmModel(Uniform(0, 0.5))]
        with pytest.raises(NonUniqueOptimum):
            pseudo_regret(arms, MEAN, 0.1, 10, 2, 0)

    def test_needs_two_replications(self):
        with pytest.raises(ValueError):
            pseudo_regret(UNI, MEAN, 0.1, 10, 1, 0)

    def test_independent_of_worker_count(self):
        a = simulate(UNI, RiskSpec(CVaR(0.5)), 0.1, [50, 100], 6, 9, workers=1)
        b = simulate(UNI, RiskSpec(CVaR(0.5)), 0.1, [50, 100], 6, 9, workers=3)
        assert np.array_equal(a.regret, b.regret) and np.array_equal(a.pulls, b.pulls)

    def test_pull_count_regret_on_deterministic_arms(self):
        sim = simulate(DET, MEAN, 0.1, [100], 3, 0)
        # costs are deterministic, so both regret notions agree exactly
        assert np.allclose(pull_count_regret(DET, sim), sim.regret, atol=1e-15)


class TestCurve:
    def test_validation(self):
        with pytest.raises(ValueError):
            RegretCurve([10, 5], [1, 1], [0, 0], [1, 1], 2)
        with pytest.raises(ValueError):
            RegretCurve([1, 2], [1, 1], [-1, 0], [1, 1], 2)
        with pytest.raises(ValueError):
            RegretCurve([1, 2], [1], [0, 0], [1, 1], 2)

    @pytest.mark.parametrize("power", [-0.5, -1.0, 0.0])
    def test_decay_exponent_exact_fits(self, power):
        grid = np.array([100, 400, 1600, 6400])
        curve = RegretCurve(grid, 3.0 * grid**power, np.zeros(4), np.ones(4), 1)
        assert decay_exponent(curve) == pytest.approx(power, abs=1e-12)

    def test_decay_exponent_preconditions(self):
        with pytest.raises(ValueError):
            decay_exponent(RegretCurve([1, 2], [1, 1], [0, 0], [1, 1], 1))
        with pytest.raises(NonPositiveRegret):
            decay_exponent(RegretCurve([1, 2, 3], [1, 0, 1], [0, 0, 0], [1, 1, 1], 1))

    def test_regret_curve_shapes(self):
        c = regret_curve(UNI, MEAN, 0.1, [20, 40, 80], 4, 0)
        assert c.grid.tolist() == [20, 40, 80] and c.replications == 4
        assert c.mean_pulls.shape == (3, 2)
        assert np.all(np.isnan(c.bound))


class TestBounds:
    # reference values from an independent 30-digit evaluation of the formulas
    def test_cvar(self):
        b3 = bound_cvar(1000, 2, 0.1, 0.5, 1.0, 1.0, [0.25])
        b4 = bound_cvar(10000, 2, 0.1, 0.5, 1.0, 1.0, [0.25])
        assert b3 == pytest.approx(107.652117950361101, rel=1e-12)
        assert b4 == pytest.approx(13.6345909849358878, rel=1e-12)
        assert 0 < b4 < b3

    def test_cvar_degenerate(self):
        with pytest.raises(DegenerateGap):
            bound_cvar(3, 2, 0.9, 0.5, 1.0, 1.0, [0.01])

    def test_md(self):
        assert bound_md(40000, 2, 0.1, 1.0, 1.0, 1.0, [0.25]) == pytest.approx(0.851141577029700915, rel=1e-12)
        assert bound_md(160000, 2, 0.1, 1.0, 1.0, 1.0, [0.25]) < bound_md(40000, 2, 0.1, 1.0, 1.0, 1.0, [0.25])

    def test_md_budget_exceeding_horizon(self):
        # the sub-optimal pull budget (about 13134) exceeds n, so the square root is undefined
        with pytest.raises(DegenerateGap):
            bound_md(10000, 2, 0.1, 1.0, 1.0, 1.0, [0.25])

    def test_md_clamp(self):
        assert md_pull_constant(10.0, 1.0, 1.0) == 1.0
        assert md_pull_constant(0.6, 1.0, 1.0) == pytest.approx(100.0)

    def test_shortfall(self):
        t_star = shortfall_optimal_pulls(10000, 2, 0.1, 1.0, 1.0, [0.25])
        assert t_star == 10000 - math.ceil(8 * math.log(4e8 * 2 / 0.1) / 0.25)
        got = bound_shortfall(10000, 2, 0.1, 1.0, 1.0, 1.0, 1.0, [0.25], t_star)
        assert got == pytest.approx(0.143117648596997833, rel=1e-12)

    def test_shortfall_structure(self):
        a = bound_shortfall(10, 2, 0.1, 1.0, 1.0, 1.0, 1.0, [0.25], 5)
        b = bound_shortfall(10, 2, 0.1, 1.0, 1.0, 1.0, 1.0, [0.25], 10)
        log_term = math.log(4 * 100 * 2 / 0.1)
        dominant = 2 * math.sqrt(log_term / 10)
        assert a - b == pytest.approx((1 - 0.01) * dominant * (1 - 1 / math.sqrt(2)))
        # the delta / n term alone: 0.1 / 10 * M
        zero_gap_free = bound_shortfall(10, 2, 0.1, 1.0, 1.0, 1.0, 1.0, [1e300], 10**300)
        assert zero_gap_free == pytest.approx(0.01, abs=1e-12)

    def test_theoretical_bound_dispatch(self):
        cvar = theoretical_bound(UNI, RiskSpec(CVaR(0.5)), 0.1, 10000)
        assert cvar > 0
        assert math.isnan(theoretical_bound(UNI, MEAN, 0.1, 1000))

    def test_invalid_gaps(self):
        with pytest.raises(ValueError):
            bound_cvar(1000, 2, 0.1, 0.5, 1.0, 1.0, [0.0])
