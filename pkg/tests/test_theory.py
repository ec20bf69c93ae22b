import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from trapwalk import theory
from trapwalk.dynamics import build_kernel
from trapwalk.env import Params, sample_cluster_sizes
from trapwalk.errors import NotApplicable

XI = -math.log(0.3)


def test_drift_known_values():
    assert theory.drift_vector(1.0, (1.0,))[0] == pytest.approx(math.tanh(1.0), abs=1e-15)
    d2 = theory.drift_vector(1.0, (1.0, 0.0))
    assert d2[0] == pytest.approx(0.46211715726000974, abs=1e-15)  # sinh 1 / (cosh 1 + 1)
    assert d2[1] == 0.0


@given(lam=st.floats(0, 5), theta=st.floats(0, 2 * math.pi))
def test_drift_is_kernel_mean(lam, theta):
    ell = (math.cos(theta), math.sin(theta))
    k = build_kernel(lam, ell)
    mean = k.probs @ k.vectors
    assert np.allclose(mean, theory.drift_vector(lam, ell), atol=1e-12)


def test_closed_form_mgf_frozen_and_matches_series():
    assert theory.mgf_1d(0.3, 0.5) == pytest.approx(1.6489039489872086, rel=1e-14)
    for p, beta in [(0.3, 0.5), (0.3, 1.0), (0.5, 0.3), (0.1, 2.0)]:
        series, tail = theory.mgf_1d_series(p, beta)
        assert tail < 1e-12
        assert abs(theory.mgf_1d(p, beta) - series) < 1e-10


def test_mgf_diverges_at_and_above_xi():
    assert theory.mgf_1d(0.3, XI) == math.inf
    assert theory.mgf_1d(0.3, 2 * XI) == math.inf
    assert theory.mgf_1d_series(0.3, 2 * XI)[1] == math.inf
    assert theory.mgf_1d(0.3, 0.0) == 1.0


def test_pmf_sums_to_one():
    n = np.arange(0, 400)
    assert math.fsum(theory.cluster_pmf_1d(0.3, n).tolist()) == pytest.approx(1.0, abs=1e-14)


def test_mgf_monte_carlo_basic():
    c = sample_cluster_sizes(Params(p=0.3, seed=77), 200_000)
    est = theory.mgf_monte_carlo(c, 0.5, xi_hat=XI)
    assert est.reliable
    assert abs(est.value - theory.mgf_1d(0.3, 0.5)) < 4 * est.stderr
    assert theory.mgf_monte_carlo(c, 0.0).value == 1.0
    assert not theory.mgf_monte_carlo(c, XI - 0.05, xi_hat=XI).reliable


def test_mgf_monte_carlo_jackknife_equals_plain_stderr():
    # for a sample mean the jackknife reduces to s / sqrt(m)
    c = np.array([0, 0, 1, 2, 2, 3, 0, 5])
    est = theory.mgf_monte_carlo(c, 0.7)
    w = np.exp(0.7 * c)
    assert est.value == pytest.approx(w.mean(), rel=1e-14)
    assert est.stderr == pytest.approx(w.std(ddof=1) / math.sqrt(len(w)), rel=1e-12)


def test_speed():
    p = Params(lam=1.0, beta=0.5)
    v = theory.speed(p, theory.mgf_1d(0.3, 0.5))
    assert v[0] == pytest.approx(0.46187902965697425, rel=1e-13)
    assert theory.speed(p, math.inf)[0] == 0.0


@pytest.mark.parametrize(
    "d,lam,beta,value,regime,kind",
    [
        (1, 1.0, 0.5, 1.0, theory.BALLISTIC, theory.LIMIT),
        (1, 1.0, 2 * XI, 0.5, theory.SUBBALLISTIC_DRIFT, theory.LIMIT),
        (1, 1.0, XI, 1.0, theory.SUBBALLISTIC_DRIFT, theory.LIMIT),
        (1, 0.0, 0.0, 0.5, theory.DIFFUSIVE, theory.LIMSUP),
        (1, 0.0, 0.5, 0.5, theory.DIFFUSIVE, theory.LIMSUP),
        (1, 0.0, 2 * XI, 1 / 3, theory.SUBDIFFUSIVE_D1, theory.LIMSUP),
        (2, 0.0, 2 * XI, 0.25, theory.SUBDIFFUSIVE_DGE2, theory.LIMSUP),
    ],
)
def test_escape_table(d, lam, beta, value, regime, kind):
    ell = (1.0,) + (0.0,) * (d - 1)
    e = theory.escape_exponent(Params(d=d, lam=lam, beta=beta, ell=ell), XI)
    assert e.value == pytest.approx(value, abs=1e-14)
    assert (e.regime, e.kind) == (regime, kind)


def test_diffusion_matrix():
    p = Params(d=2, ell=(1.0, 0.0), beta=0.2)
    assert np.allclose(theory.diffusion_matrix(p, 1.25), np.eye(2) * 0.4)
    with pytest.raises(NotApplicable):
        theory.diffusion_matrix(p.replace(lam=1.0), 1.25)
    with pytest.raises(NotApplicable):
        theory.diffusion_matrix(p, math.inf)


def test_predict_d1_examples():
    pred = theory.predict(Params(lam=1.0, beta=0.5))
    assert pred.speed[0] == pytest.approx(0.4619, abs=5e-5)
    assert pred.regime == theory.BALLISTIC and pred.diffusion is None
    pred = theory.predict(Params(lam=0.0, beta=0.0))
    assert pred.regime == theory.DIFFUSIVE and pred.escape_exponent == 0.5
    assert pred.diffusion[0, 0] == 1.0
    pred = theory.predict(Params(lam=1.0, beta=2 * XI))
    assert pred.regime == theory.SUBBALLISTIC_DRIFT and pred.escape_exponent == pytest.approx(0.5)


def test_predict_higher_d_needs_inputs_and_flags_boundary():
    p = Params(d=2, ell=(1.0, 0.0), p=0.2, beta=0.8)
    with pytest.raises(ValueError):
        theory.predict(p)
    with pytest.raises(ValueError):
        theory.predict(p, xi=1.0)
    pred = theory.predict(p, xi=0.8)
    assert pred.boundary and pred.mgf == math.inf
    assert not theory.predict(p, xi=1.0, mgf=3.0).boundary


def test_tilted_law_normalized():
    c = np.arange(0, 300)
    tilted = np.exp(0.5 * c) * theory.cluster_pmf_1d(0.3, c) / theory.mgf_1d(0.3, 0.5)
    assert math.fsum(tilted.tolist()) == pytest.approx(1.0, abs=1e-12)
