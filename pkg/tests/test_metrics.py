from __future__ import annotations

import itertools
import math
from functools import lru_cache

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import wasserstein_distance

from socialsim.engine import build_providers, run
from socialsim.errors import AllComponentsSkipped, EmptyInput, HorizonMismatch, LengthMismatch, TooFewRuns
from socialsim.metrics import (
    W1Band,
    dtw,
    evaluate,
    mape,
    mape_details,
    w1_band,
    wasserstein1,
    zscore_reproducibility,
)
from socialsim.model import EngagementVector

from .conftest import bundled


def dtw_oracle(a, b):
    """Minimum cost over every monotone warping path, enumerated explicitly."""
    n, m = len(a), len(b)

    @lru_cache(maxsize=None)
    def paths(i, j):
        if (i, j) == (n - 1, m - 1):
            return [((i, j),)]
        out = []
        for di, dj in ((1, 1), (1, 0), (0, 1)):
            if i + di < n and j + dj < m:
                out.extend(((i, j),) + p for p in paths(i + di, j + dj))
        return out

    return min(sum(abs(a[i] - b[j]) for i, j in p) for p in paths(0, 0))


# --- W1 ---------------------------------------------------------------------------


def test_w1_identity_and_example():
    assert wasserstein1([0.3, 0.1, 0.9], [0.9, 0.3, 0.1]) == 0.0
    assert wasserstein1([0, 1], [0.5, 0.5]) == pytest.approx(0.5)


def test_w1_empty():
    with pytest.raises(EmptyInput):
        wasserstein1([], [1.0])


def test_bands():
    assert w1_band(0.1159) is W1Band.HIGH_FIDELITY
    assert w1_band(0.15) is W1Band.MODERATE
    assert w1_band(0.35) is W1Band.MODERATE
    assert w1_band(0.36) is W1Band.MISMATCH


samples = st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=15)


@settings(max_examples=300, deadline=None)
@given(samples, samples)
def test_w1_matches_reference_implementation(a, b):
    assert wasserstein1(a, b) == pytest.approx(wasserstein_distance(a, b), abs=1e-9)


@settings(max_examples=500, deadline=None)
@given(samples, samples, samples)
def test_w1_metric_axioms(a, b, c):
    ab, ba = wasserstein1(a, b), wasserstein1(b, a)
    assert ab >= 0 and abs(ab - ba) <= 1e-9
    assert ab <= wasserstein1(a, c) + wasserstein1(c, b) + 1e-9


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 12).flatmap(lambda n: st.tuples(*[st.lists(st.floats(-50, 50), min_size=n, max_size=n)] * 2)))
def test_w1_sorted_difference_closed_form(pair):
    a, b = pair
    closed = sum(abs(x - y) for x, y in zip(sorted(a), sorted(b))) / len(a)
    assert abs(wasserstein1(a, b) - closed) <= 1e-12


# --- MAPE -------------------------------------------------------------------------


def ev(*xs):
    return EngagementVector(*xs)


def test_mape_examples():
    y = [ev(100, 50, 20, 10)]
    assert mape(y, y) == 0.0
    assert mape([ev(110, 55, 22, 11)], y) == pytest.approx(10.0)
    two = mape([ev(110, 55, 22, 11), ev(120, 60, 24, 12)], [ev(100, 50, 20, 10), ev(100, 50, 20, 10)])
    assert two == pytest.approx(15.0)


def test_mape_skips_zero_actuals():
    d = mape_details([ev(5, 55, 0, 0)], [ev(0, 50, 0, 0)])
    assert d.skipped == 3 and d.used == 1 and d.percent == pytest.approx(10.0)


def test_mape_errors():
    with pytest.raises(LengthMismatch):
        mape([ev(1, 1, 1, 1)], [])
    with pytest.raises(AllComponentsSkipped):
        mape([ev(1, 1, 1, 1)], [ev(0, 0, 0, 0)])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(*[st.floats(1, 1e6)] * 4), min_size=1, max_size=6), st.floats(-0.9, 2.0))
def test_mape_scale_covariance(rows, delta):
    actual = [ev(*r) for r in rows]
    pred = [ev(*(v * (1 + delta) for v in r)) for r in rows]
    assert mape(pred, actual) == pytest.approx(100 * abs(delta), rel=1e-9, abs=1e-9)


# --- DTW --------------------------------------------------------------------------


def test_dtw_examples():
    assert dtw([1, 2, 3], [1, 2, 3]) == 0
    assert dtw([1, 2, 3], [2, 3, 4]) == 2
    assert dtw([5], [5, 5, 5]) == 0


def test_dtw_empty():
    with pytest.raises(EmptyInput):
        dtw([], [1])


def test_dtw_exhaustive_small_alphabet():
    series = [s for n in range(1, 4) for s in itertools.product(range(4), repeat=n)]
    for a in series:
        for b in series:
            assert dtw(a, b) == dtw_oracle(a, b)


@pytest.mark.parametrize("n,m", [(4, 4), (5, 5), (5, 3), (4, 5)])
def test_dtw_exhaustive_longer(n, m):
    import random

    rnd = random.Random(n * 10 + m)
    for _ in range(60):
        a = tuple(rnd.randrange(4) for _ in range(n))
        b = tuple(rnd.randrange(4) for _ in range(m))
        assert dtw(a, b) == dtw_oracle(a, b)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 10).flatmap(lambda n: st.tuples(*[st.lists(st.floats(-1e3, 1e3), min_size=n, max_size=n)] * 2)))
def test_dtw_bounded_by_diagonal(pair):
    a, b = pair
    assert dtw(a, b) <= sum(abs(x - y) for x, y in zip(a, b)) + 1e-9


# --- z-score ----------------------------------------------------------------------


def test_zscore_examples():
    assert zscore_reproducibility([10, 10, 10]) == 0
    assert zscore_reproducibility([9, 10, 11]) == pytest.approx(math.sqrt(1.5), abs=1e-9)
    assert zscore_reproducibility([9, 10, 11]) == pytest.approx(1.2247, abs=1e-4)


def test_zscore_needs_two_runs():
    with pytest.raises(TooFewRuns):
        zscore_reproducibility([1.0])


# --- evaluate ---------------------------------------------------------------------


def test_evaluate_self_is_zero():
    traj = [ev(100, 10, 5, 2), ev(50, 5, 3, 1)]
    r = evaluate(traj, traj, [traj, traj])
    assert (r.w1, r.mape_percent, r.dtw, r.zscore_max_abs) == (0, 0, 0, 0)
    assert r.w1_band is W1Band.HIGH_FIDELITY


def test_evaluate_horizon_mismatch():
    with pytest.raises(HorizonMismatch):
        evaluate([ev(1, 1, 1, 1)], [ev(1, 1, 1, 1), ev(1, 1, 1, 1)])


def test_evaluate_normalizes_for_w1():
    sim = [ev(200, 20, 10, 4)]
    ref = [ev(100, 10, 5, 2)]
    r = evaluate(sim, ref)
    assert 0 < r.w1 <= 1
    assert r.dtw == 100 and r.mape_percent == pytest.approx(100.0)
    assert "zscore_max_abs" not in r.to_dict()


def test_report_finite_on_demo():
    cfg = bundled("demo.yaml")
    sim = run(cfg, build_providers(cfg, "rules"))
    ref = run(cfg, build_providers(cfg, "scripted"))
    r = evaluate(sim, ref, [sim, ref])
    d = r.to_dict()
    assert all(math.isfinite(v) for k, v in d.items() if isinstance(v, float))
    assert d["zscore_max_abs"] >= 0
