import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from covact.metrics import aggregate, decide, error_rates, roc_sweep


def test_decide_examples():
    a = np.array([0, 1, 1, 0], dtype=float)
    assert decide(a, 0.5).decisions.tolist() == [0, 1, 1, 0]
    assert not decide(a, 1.0).decisions.any()
    assert decide([0.2, 0.7], 0.5).decisions.tolist() == [0, 1]
    assert decide([0.0, 1e-300], 0.0).decisions.tolist() == [0, 1]


def test_decide_rejects_bad_threshold():
    with pytest.raises(ValueError):
        decide([0.5], 1.5)


def test_error_rate_examples():
    t = np.array([1, 0, 1, 0, 0])
    r = error_rates(decide(t, 0.5), t)
    assert (r.pm, r.pfa) == (0.0, 0.0)
    r = error_rates(1 - t, t)
    assert (r.pm, r.pfa) == (1.0, 1.0)


def test_hand_counted_case():
    truth = np.zeros(10, dtype=int)
    truth[[0, 1]] = 1
    dec = np.zeros(10, dtype=int)
    dec[[0, 5, 7]] = 1  # misses device 1, flags 2 of 8 inactives
    r = error_rates(dec, truth)
    assert r.pm == 0.5 and r.pfa == 0.25


def test_undefined_rates_are_nan():
    r = error_rates(np.zeros(4), np.zeros(4))
    assert not r.pm_defined and r.pfa_defined and r.pfa == 0.0


def test_length_mismatch():
    with pytest.raises(ValueError):
        error_rates(np.zeros(3), np.zeros(4))


def test_sweep_extremes():
    a = np.array([0.1, 0.4, 0.8, 0.95])
    truth = np.array([0, 1, 1, 0])
    rows = roc_sweep(a, truth, [0.0, 1.0])
    assert rows[0] == (0.0, 0.0, 1.0)
    assert rows[1] == (1.0, 1.0, 0.0)


def test_binary_sweep_single_knee():
    a = np.array([1.0, 0.0, 1.0, 0.0])
    truth = np.array([1, 0, 0, 0])
    rows = roc_sweep(a, truth, np.linspace(0, 1, 11))
    assert {(pm, pfa) for _, pm, pfa in rows[:-1]} == {(0.0, 1 / 3)}
    assert rows[-1][1:] == (1.0, 0.0)


def test_sweep_requires_ascending():
    with pytest.raises(ValueError):
        roc_sweep([0.1], [1], [0.5, 0.2])


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_sweep_monotone_and_permutation_equivariant(seed):
    r = np.random.default_rng(seed)
    n = 40
    a = np.where(r.uniform(size=n) < 0.4, r.integers(0, 2, n), r.uniform(size=n))
    truth = r.integers(0, 2, n)
    truth[:2] = [0, 1]
    ths = np.linspace(0, 1, 21)
    rows = roc_sweep(a, truth, ths)
    pm = [x[1] for x in rows]
    pfa = [x[2] for x in rows]
    assert all(y >= x for x, y in zip(pm, pm[1:]))
    assert all(y <= x for x, y in zip(pfa, pfa[1:]))
    p = r.permutation(n)
    assert roc_sweep(a[p], truth[p], ths) == rows


def test_aggregate_mean_matches_oracle():
    r = np.random.default_rng(3)
    ths = np.linspace(0, 1, 21)
    sweeps, truths = [], []
    for _ in range(20):
        truth = (r.uniform(size=50) < 0.2).astype(int)
        truth[0] = 1
        truth[1] = 0
        a = np.clip(truth + r.normal(scale=0.3, size=50), 0, 1)
        sweeps.append(roc_sweep(a, truth, ths))
        truths.append(truth)
    agg = aggregate(sweeps)
    for k, th in enumerate(ths):
        pm = sum(s[k][1] for s in sweeps) / 20
        pfa = sum(s[k][2] for s in sweeps) / 20
        assert agg[k][0] == th
        assert agg[k][1] == pytest.approx(pm, abs=1e-15) and agg[k][2] == pytest.approx(pfa, abs=1e-15)
    pooled = aggregate(sweeps, pooled=True, truths=truths)
    n_act = sum(t.sum() for t in truths)
    k = 10
    misses = sum(round(s[k][1] * t.sum()) for s, t in zip(sweeps, truths))
    assert pooled[k][1] == pytest.approx(misses / n_act)


def test_aggregate_skips_undefined_rates():
    s1 = [(0.5, math.nan, 0.25)]
    s2 = [(0.5, 0.5, 0.75)]
    assert aggregate([s1, s2]) == [(0.5, 0.5, 0.5)]
    assert aggregate([]) == []
    with pytest.raises(ValueError):
        aggregate([s1, [(0.4, 0.0, 0.0)]])
    with pytest.raises(ValueError):
        aggregate([s1], pooled=True)
