import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from augddpg import experiments as ex
from augddpg.portfolio import gini_bonus


def test_episodes_to_fraction_examples():
    assert ex.episodes_to_fraction([0, 5, 9, 10]) == 3
    assert ex.episodes_to_fraction([0, 10, 10, 10]) == 2
    assert ex.episodes_to_fraction([-10, -5, -1.5, -1]) == 3
    assert ex.episodes_to_fraction([3, 3, 3]) == 1
    with pytest.raises(ValueError):
        ex.episodes_to_fraction([])


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30))
def test_episodes_to_fraction_matches_scan(rewards):
    r0, rf = rewards[0], rewards[-1]
    target = r0 + 0.9 * (rf - r0)
    ok = [(x >= target) if rf >= r0 else (x <= target) for x in rewards]
    assert ex.episodes_to_fraction(rewards) == ok.index(True) + 1


def test_setting_ranges():
    train, test = ex.Setting().ranges()
    assert train == (65, 240) and test == (240, 300)


def best_constant_weights(frame, start, end, step=0.1):
    """Hindsight-optimal constant-rebalanced weights on a coarse simplex grid."""
    y = np.vstack([np.ones(end - start), frame.close[:, start:end] / frame.close[:, start - 1:end - 1]])
    n = y.shape[0]
    k = int(round(1 / step))
    best, best_w = -np.inf, None
    for c in itertools.product(range(k + 1), repeat=n - 1):
        if sum(c) > k:
            continue
        w = np.array((k - sum(c),) + c, dtype=np.float64) / k
        g = np.sum(np.log(w @ y))
        if g > best:
            best, best_w = g, w
    return best_w


def test_best_constant_portfolio_holds_the_drift_asset():
    s = ex.Setting()
    frame = s.frame()
    for lo, hi in s.ranges():
        w = best_constant_weights(frame, lo, hi)
        assert w[ex.DRIFT_ASSET + 1] > 0.6
    assert gini_bonus(np.eye(6)[1]) == 0.0
