import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hopfavg.errors import ContractViolation, TrajectoryTooShort
from hopfavg.reduced_sde import run_reduced_ensemble
from hopfavg.sdde_sim import Ensemble
from hopfavg.stats import (
    aggregate_lyapunov,
    cdf_csv,
    compare_ensembles,
    ecdf,
    exit_time_cdf,
    exit_times_of,
    ks_distance,
    lyapunov_estimate,
    sliding_sup,
    summary_text,
)

samples = st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=60)


def _rec(terminal, exit_time=None, status="finished"):
    return SimpleNamespace(terminal=terminal, exit_time=exit_time, status=status)


# ---------------------------------------------------------------- ECDF and KS


def test_ks_examples():
    assert ks_distance([0.3, 1.2, 5.0], [0.3, 1.2, 5.0]) == 0.0
    assert ks_distance([0.0], [1.0]) == 1.0
    assert ks_distance([0.0, 1.0], [0.5]) == 0.5


@settings(max_examples=60, deadline=None)
@given(samples)
def test_ecdf_limits(x):
    f = ecdf(x)
    assert f(math.inf) == 1.0
    assert f(-math.inf) == 0.0
    assert np.all(np.diff(f.cdf) >= 0)


@settings(max_examples=60, deadline=None)
@given(samples, samples)
def test_ks_symmetry_and_range(a, b):
    d = ks_distance(a, b)
    assert d == ks_distance(b, a)
    assert 0.0 <= d <= 1.0
    assert ks_distance(a, list(a)) == 0.0


@settings(max_examples=40, deadline=None)
@given(samples, samples)
def test_ks_is_exact_at_jumps(a, b):
    fa, fb = ecdf(a), ecdf(b)
    dense = np.concatenate([np.union1d(a, b), np.linspace(-101, 101, 401)])
    assert ks_distance(a, b) >= np.max(np.abs(fa(dense) - fb(dense))) - 1e-15


def test_empty_and_nan_samples_rejected():
    with pytest.raises(ContractViolation):
        ecdf([])
    with pytest.raises(ContractViolation):
        ks_distance([1.0, math.nan], [1.0])


def test_censored_entries_hold_missing_mass():
    f = ecdf([0.1, math.inf, 0.4, math.inf])
    assert f.mass == 0.5
    assert f(10.0) == 0.5
    assert ks_distance([0.1, math.inf], [0.1, 0.2]) == 0.5


def test_independent_reduced_ensembles_are_close(additive_model):
    a = run_reduced_ensemble(additive_model, 0.72, 2.0, n_samples=4000, base_seed=0)
    b = run_reduced_ensemble(additive_model, 0.72, 2.0, n_samples=4000, base_seed=4000)
    rep = compare_ensembles(a, b, 2.0)
    assert rep.ks_terminal < 0.05
    assert rep.ks_exit < 0.05


# ---------------------------------------------------------------- exit-time laws


def test_exit_cdf_all_exit_at_zero():
    f = exit_time_cdf([_rec(2.0, 0.0) for _ in range(5)], 2.0)
    assert f.grid[0] == 0.0
    assert np.all(f.cdf == 1.0)
    assert f.mass == 1.0


def test_exit_cdf_none_exit():
    f = exit_time_cdf([_rec(0.5) for _ in range(5)], 2.0)
    assert np.all(f.cdf == 0.0)
    assert f.mass == 0.0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.one_of(st.none(), st.floats(0, 3)), min_size=1, max_size=40))
def test_censored_mass_bounded(times):
    recs = [_rec(1.0, t) for t in times]
    f = exit_time_cdf(recs, 2.0)
    assert f.mass <= 1.0
    all_exit = all(t is not None and t <= 2.0 for t in times)
    assert (f.mass == 1.0) == all_exit


def test_blowups_are_dropped():
    recs = [_rec(1.0, 0.5), _rec(math.nan, None, "blowup"), _rec(1.0)]
    t = exit_times_of(recs, 1.0)
    assert t.tolist() == [0.5, math.inf]


def test_compare_report_and_csv():
    full = Ensemble([_rec(0.2), _rec(1.5, 1.0), _rec(0.7)])
    red = Ensemble([_rec(0.2), _rec(0.9), _rec(0.7)])
    rep = compare_ensembles(full, red, 2.0)
    assert rep.ks_terminal == pytest.approx(1 / 3)
    assert rep.ks_exit == pytest.approx(1 / 3)
    text = cdf_csv(rep.exit_full, rep.exit_reduced)
    lines = text.splitlines()
    assert lines[0] == "grid,cdf_full,cdf_reduced"
    assert len(lines) == 202
    assert lines[-1] == "2,0.33333333333333331,0"


# ---------------------------------------------------------------- Lyapunov


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=80), st.floats(0.0, 10.0))
def test_sliding_sup_matches_brute_force(values, window):
    t = np.arange(len(values)) * 0.5
    got = sliding_sup(t, values, window)
    a = np.abs(values)
    for i in range(t.size):
        assert got[i] == a[(t >= t[i] - window) & (t <= t[i])].max()


def test_constant_path_exponent_vanishes():
    t = np.geomspace(1.0, 1e5, 100)
    curve = lyapunov_estimate(t, np.full(t.size, 3.0))
    np.testing.assert_allclose(curve.lam, math.log(3.0) / t)
    assert abs(curve.summary) < 1e-4


def test_decaying_path_exponent():
    # x' = -x: the window sup over [t - 1, t] is exp(-(t - 1)), so lambda(t) = -(t - 1) / t
    t = np.linspace(0.0, 600.0, 600_001)
    sup = sliding_sup(t, np.exp(-t), 1.0)
    keep = t >= 1.0
    curve = lyapunov_estimate(t[keep], sup[keep], min_time=500.0)
    # rounding at the window edge may shift the argmax by one sample of width 1e-3
    err = np.abs(curve.lam + (curve.times - 1.0) / curve.times)
    assert np.all(err <= 1.01e-3 / curve.times)
    assert curve.lam[-1] == pytest.approx(-1.0, abs=2e-3)
    assert curve.summary == pytest.approx(-1.0, abs=0.05)


def test_short_trajectory_rejected():
    with pytest.raises(TrajectoryTooShort):
        lyapunov_estimate(np.array([1.0, 10.0, 100.0]), np.ones(3))


def test_aggregate_lyapunov():
    t = np.geomspace(1.0, 2e4, 50)
    curves = [lyapunov_estimate(t, np.exp(-c * t)) for c in (1e-4, 2e-4, 3e-4)]
    agg = aggregate_lyapunov(curves)
    np.testing.assert_allclose(agg.mean, -2e-4)
    np.testing.assert_allclose(agg.min, -3e-4)
    np.testing.assert_allclose(agg.max, -1e-4)
    assert agg.summary == pytest.approx(-2e-4)
    assert agg.csv().startswith("t,mean,min,max\n")
    with pytest.raises(ContractViolation):
        aggregate_lyapunov([curves[0], lyapunov_estimate(t[1:], np.ones(49))])
    with pytest.raises(ContractViolation):
        aggregate_lyapunov([])


def test_summary_text_format():
    text = summary_text({"a": 1, "b": 0.1, "c": True, "d": "stable"})
    assert text == "a=1\nb=0.10000000000000001\nc=true\nd=stable\n"
