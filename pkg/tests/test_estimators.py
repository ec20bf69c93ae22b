import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trapwalk import theory
from trapwalk.dynamics import Horizon, build_kernel, simulate, simulate_coupled
from trapwalk.env import Environment, Params, sample_cluster_sizes
from trapwalk.errors import DegenerateFit, InsufficientTail, OutOfHorizon
from trapwalk.estimators import (TimeGrid, env_histogram, estimate_escape_exponent, estimate_msd, estimate_speed,
                                 estimate_xi, fit_exponent, range_and_localtime, speed_from_positions,
                                 trap_occupation_fraction)

XI = -math.log(0.3)


def walks(count, lam=1.0, beta=0.0, p=0.3, d=1, steps=None, time=None, seed=0):
    ell = (1.0,) + (0.0,) * (d - 1)
    out = []
    for i in range(count):
        env = Environment(Params(d=d, p=p, lam=lam, beta=beta, ell=ell, seed=seed + i))
        out.append(simulate(env, build_kernel(lam, ell), Horizon(steps, time), rng_seed=seed + 1000 + i))
    return out


# -- grid and fitting -------------------------------------------------------------


def test_time_grid():
    g = TimeGrid.spanning(1e2, 1e6, 8)
    t = g.times
    assert g.count == 33 and (np.diff(t) > 0).all()
    assert t[0] == 1e2 and t[-1] == pytest.approx(1e6, rel=1e-12)
    assert g.decades == pytest.approx(4.0)
    assert g.clip(5e3).times[-1] <= 5e3
    with pytest.raises(OutOfHorizon):
        g.clip(50.0)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 1.0, 5)


@given(slope=st.floats(0.1, 1.5), scale=st.floats(0.1, 10))
def test_fit_recovers_power_law(slope, scale):
    t = TimeGrid.spanning(10, 1e6, 8).times
    norms = np.vstack([scale * t**slope, 2 * scale * t**slope])
    fit = fit_exponent(t, norms, burn_in_decades=1.0)
    assert fit.slope == pytest.approx(slope, abs=1e-9)
    assert fit.window[0] == pytest.approx(100.0)
    assert np.abs(fit.residuals).max() < 1e-9


def test_running_max_mode_and_zeros():
    t = TimeGrid.spanning(10, 1e5, 4).times
    wiggle = t**0.5 * (1.5 + np.sin(np.arange(len(t))))
    fit = fit_exponent(t, wiggle[None, :], use_running_max=True, burn_in_decades=0)
    assert fit.running_max and np.all(np.diff(np.maximum.accumulate(wiggle)) >= 0)
    with pytest.raises(DegenerateFit):
        fit_exponent(t, np.zeros((3, len(t))))


def test_exponent_needs_three_decades():
    with pytest.raises(ValueError):
        estimate_escape_exponent(walks(1, steps=1000), TimeGrid.spanning(10, 1e4 / 2, 8))


# -- speed --------------------------------------------------------------------------


def test_speed_from_positions():
    est = speed_from_positions([[10.0], [14.0], [12.0]], 10.0)
    assert est.mean[0] == pytest.approx(1.2)
    assert est.stderr[0] == pytest.approx(0.2 / math.sqrt(3))
    with pytest.raises(ValueError):
        speed_from_positions([[1.0]], 1.0)


def test_speed_without_traps_is_tanh1():
    trs = walks(100, lam=1.0, beta=0.0, time=1e5)
    est = estimate_speed(trs, 1e5)
    assert abs(est.mean[0] - math.tanh(1.0)) < 3 * est.stderr[0]


def test_speed_symmetric_without_bias():
    trs = walks(40, lam=0.0, beta=0.5, d=2, p=0.3, time=2e4)
    est = estimate_speed(trs, 2e4)
    assert np.all(np.abs(est.mean) < 3 * est.stderr + 1e-12)


def test_speed_out_of_horizon():
    with pytest.raises(OutOfHorizon):
        estimate_speed(walks(2, time=100.0), 1e4)


# -- exponents --------------------------------------------------------------------


def test_ballistic_slope_is_one():
    fit = estimate_escape_exponent(walks(4, lam=1.0, beta=0.0, time=1e6), TimeGrid.spanning(1e2, 1e6))
    assert fit.slope == pytest.approx(1.0, abs=0.05)


def test_simple_walk_limsup_slope_is_half():
    fit = estimate_escape_exponent(walks(20, lam=0.0, beta=0.0, time=1e6), TimeGrid.spanning(1e2, 1e6),
                                   use_running_max=True)
    assert fit.slope == pytest.approx(0.5, abs=0.1)


# -- msd ------------------------------------------------------------------------------


def test_msd_unit_rate_walk_in_d2():
    grid = TimeGrid.spanning(1e2, 1e4, 2)
    est = estimate_msd(walks(300, lam=0.0, beta=0.0, d=2, p=0.3, time=1e4), grid)
    assert est.msd[-1] == pytest.approx(1.0, rel=0.05)
    off = est.second_moment[-1, 0, 1]
    assert abs(off) < 3 * est.second_moment_stderr[-1, 0, 1]
    assert est.jumps[-1] == pytest.approx(1.0, rel=0.02)


def test_msd_warns_with_drift():
    with pytest.warns(UserWarning):
        estimate_msd(walks(2, lam=1.0, time=1e3), TimeGrid(10.0, 10.0, 3))


# -- environment seen from the walker ------------------------------------------------


def test_histogram_normalized_and_untilted_at_beta0():
    masses = []
    for tr in walks(60, lam=1.0, beta=0.0, time=2e4):
        h = env_histogram(tr, tr.env, 2e4)
        assert (h >= 0).all()
        assert math.fsum(h.tolist()) == pytest.approx(1.0, abs=1e-12)
        masses.append(h[0])
    m, se = np.mean(masses), np.std(masses, ddof=1) / math.sqrt(len(masses))
    assert abs(m - 0.7) < 3 * se


def test_histogram_matches_holding_intervals():
    tr = walks(1, lam=0.5, beta=0.8, steps=3000)[0]
    t = tr.final_time * 0.6
    h = env_histogram(tr, tr.env, t)
    n = tr.clock_inverse(t)
    spent = {}
    for i in range(n + 1):
        c = tr.env.cluster_size(tr.position(i))
        end = min(tr.jump_time(i + 1), t)
        spent[c] = spent.get(c, 0.0) + end - tr.jump_time(i)
    for c, v in spent.items():
        assert h[c] == pytest.approx(v / t, rel=1e-9)


def test_histogram_warns_for_deep_traps():
    tr = walks(1, beta=2 * XI, time=100.0)[0]
    with pytest.warns(UserWarning):
        env_histogram(tr, tr.env, 100.0)


# -- trap occupation --------------------------------------------------------------------


def test_trap_fraction_wide_window_is_one():
    tr = walks(1, beta=2 * XI, time=1e4, seed=3)[0]
    assert trap_occupation_fraction(tr, tr.env, 1e4, eps=1e6) == 1.0


def test_trap_fraction_deep_traps():
    beta = 2 * XI
    fr = [trap_occupation_fraction(tr, tr.env, 1e6, 0.4 / beta) for tr in walks(6, beta=beta, time=1e6, seed=20)]
    assert np.mean(fr) >= 0.5


@pytest.mark.parametrize("seed,eps,expected", [(4, 0.1, 0.0), (9, 0.2, 1.0)])
def test_trap_fraction_before_first_jump(seed, eps, expected):
    # before the first jump the walk sits on one cluster: all or nothing
    tr = walks(1, beta=2 * XI, steps=10, seed=seed)[0]
    t = tr.jump_time(1) / 2
    c0 = tr.env.cluster_size(tr.position(0))
    assert (abs(c0 / math.log(t) - 1 / (2 * XI)) <= eps) == bool(expected)
    assert trap_occupation_fraction(tr, tr.env, t, eps) == expected


def test_trap_fraction_needs_positive_beta():
    tr = walks(1, beta=0.0, steps=10)[0]
    with pytest.raises(ValueError):
        trap_occupation_fraction(tr, tr.env, 1.0, 0.1)


# -- range and local times ---------------------------------------------------------------


def test_range_first_step():
    tr = walks(1, steps=10)[0]
    assert range_and_localtime(tr, 1) == (2, 1)
    assert range_and_localtime(tr, 0) == (1, 1)


@settings(max_examples=20, deadline=None)
@given(n=st.integers(0, 5000), seed=st.integers(0, 1000))
def test_range_matches_brute_force(n, seed):
    tr = walks(1, lam=0.3, p=0.4, d=2, steps=5000, seed=seed)[0]
    pts = [tuple(tr.position(i)) for i in range(n + 1)]
    counts = {}
    for x in pts:
        counts[x] = counts.get(x, 0) + 1
    assert range_and_localtime(tr, n) == (len(counts), max(counts.values()))


def test_range_strong_bias():
    tr = walks(1, lam=10.0, steps=10**5)[0]
    r, _ = range_and_localtime(tr, 10**5)
    assert r / 10**5 == pytest.approx(math.tanh(10.0), rel=0.05)


def test_local_time_sublinear_without_bias():
    tr = walks(1, lam=0.0, steps=10**6, seed=8)[0]
    _, theta = range_and_localtime(tr, 10**6)
    assert theta <= (10**6) ** 0.6


# -- tail rate ---------------------------------------------------------------------------------


def test_xi_d1_p03_window():
    est = estimate_xi(sample_cluster_sizes(Params(p=0.3, seed=31), 10**6))
    assert 1.10 <= est.xi <= 1.31
    assert est.points >= 4 and est.window[0] == 2


def test_xi_d1_p05():
    est = estimate_xi(sample_cluster_sizes(Params(p=0.5, seed=32), 10**6))
    assert est.xi == pytest.approx(math.log(2), abs=0.1)


def test_xi_on_exact_law_draws():
    # draws straight from n p^n (1-p)^2, independent of the lattice sampler
    rng = np.random.default_rng(33)
    n = np.arange(0, 200)
    pmf = theory.cluster_pmf_1d(0.4, n)
    draws = rng.choice(n, size=10**6, p=pmf / pmf.sum())
    est = estimate_xi(draws)
    assert abs(est.xi - (-math.log(0.4))) < 0.1
    assert abs(est.xi - (-math.log(0.4))) < 5 * est.stderr + 0.05


def test_xi_d2_regression_fixture():
    est = estimate_xi(sample_cluster_sizes(Params(d=2, p=0.2, ell=(1.0, 0.0), seed=2020), 2 * 10**5))
    assert est.xi == pytest.approx(0.506770880457887, rel=1e-9)
    assert 0 < est.stderr < 0.1 * est.xi


def test_xi_errors():
    with pytest.raises(ValueError):
        estimate_xi(np.zeros(100, dtype=int))
    with pytest.raises(InsufficientTail):
        estimate_xi(np.r_[np.zeros(20000, dtype=int), np.ones(100, dtype=int)])


# -- coupling properties of estimators ---------------------------------------------------------


def test_speed_at_beta0_identical_in_coupled_and_single_runs():
    env = Environment(Params(p=0.3, lam=1.0, seed=9))
    k = build_kernel(1.0, (1.0,))
    cs = simulate_coupled(env, k, (0.0, 1.0), Horizon(max_time=1e4), rng_seed=9)
    single = simulate(Environment(env.params), k, Horizon(max_time=1e4), rng_seed=9, beta=0.0)
    assert (cs[0].position_at(1e4) == single.position_at(1e4)).all()
