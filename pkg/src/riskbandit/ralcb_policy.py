"""Risk-averse lower-confidence-bound (RA-LCB) index policy.

Each arm is pulled once in turn; afterwards the arm with the smallest index

    empirical risk of its history - confidence_radius(spec, n, T_k(n), K)

is pulled, where ``n`` is the number of pulls made so far.  Ties go to the
lowest arm index.  Arms are numbered from 0.
"""

from .empirical_stats import SampleBuffer
from .errors import BadConfig, CostOutOfRange, NotInitialized
from .risk_measures import RiskSpec, radius_function, running_estimator


class PolicyState:
    """Histories, pull counts and clock of one RA-LCB run.

    The spec's confidence level is replaced by ``delta`` so that the radius
    and the state always agree.  Each arm carries an incremental estimator
    whose value equals the empirical risk of its history.
    """

    def __init__(self, K, spec, delta):
        if not isinstance(K, int) or K < 2:
            raise BadConfig(f"a bandit needs at least 2 arms, got K={K}")
        if not 0.0 < delta < 1.0:
            raise BadConfig(f"delta must lie in (0, 1), got {delta}")
        if not isinstance(spec, RiskSpec):
            raise BadConfig(f"spec must be a RiskSpec, got {type(spec).__name__}")
        self.K = K
        self.delta = float(delta)
        self.spec = spec.with_bounds(delta=self.delta)
        bound = self.spec.bounds.M
        self.histories = [SampleBuffer(bound=bound) for _ in range(K)]
        self.pulls = [0] * K
        self.clock = 0
        self._risk = [None] * K
        self._estimators = [running_estimator(self.spec) for _ in range(K)]
        self._radius = radius_function(self.spec, K)

    def __repr__(self):
        return f"PolicyState(K={self.K}, clock={self.clock}, pulls={self.pulls})"

    def empirical_risk(self, k):
        if self._risk[k] is None:
            self._risk[k] = self._estimators[k].value()
        return self._risk[k]


def init(K, spec, delta):
    return PolicyState(K, spec, delta)


def index(state, k):
    t_k = state.pulls[k]
    if t_k == 0:
        raise NotInitialized(f"arm {k} has not been pulled yet")
    return state.empirical_risk(k) - state._radius(state.clock, t_k)


def indices(state):
    return [index(state, k) for k in range(state.K)]


def select_arm(state):
    if state.clock < state.K:
        return state.clock
    best, best_value = 0, index(state, 0)
    for k in range(1, state.K):
        value = index(state, k)
        if value < best_value:
            best, best_value = k, value
    return best


def update(state, arm, cost):
    """Record one pull of ``arm`` with observed ``cost``; mutates and returns ``state``."""
    if not 0 <= arm < state.K:
        raise IndexError(f"arm {arm} out of range for K={state.K}")
    M = state.spec.bounds.M
    if M is not None and not 0.0 <= cost <= M:
        raise CostOutOfRange(f"cost {cost} outside [0, {M}]")
    state.histories[arm].append(cost)
    state._estimators[arm].push(float(cost))
    state.pulls[arm] += 1
    state.clock += 1
    state._risk[arm] = None
    return state
