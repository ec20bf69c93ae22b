"""Closed-form predictions for the biased walk among percolation traps."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .env import Environment, Params
from .errors import NotApplicable

BALLISTIC = "ballistic"
SUBBALLISTIC_DRIFT = "subballistic-drift"
SUBDIFFUSIVE_D1 = "subdiffusive-isotropic-d1"
SUBDIFFUSIVE_DGE2 = "subdiffusive-isotropic-dge2"
DIFFUSIVE = "diffusive"

LIMIT = "limit"
LIMSUP = "limsup"


def drift_vector(lam: float, ell) -> np.ndarray:
    """Mean step of the skeleton walk: ``sinh(lam*ell_k) / sum_j cosh(lam*ell_j)``."""
    ell = np.asarray(ell, dtype=np.float64)
    return np.sinh(lam * ell) / np.cosh(lam * ell).sum()


def xi_exact_1d(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    return -math.log(p)


def cluster_pmf_1d(p: float, n) -> np.ndarray:
    """P(C_0 = n) in d=1: ``1-p`` at 0, ``n p^n (1-p)^2`` for n >= 1."""
    n = np.asarray(n, dtype=np.float64)
    return np.where(n == 0, 1.0 - p, n * p**n * (1.0 - p) ** 2)


def cluster_tail_1d(p: float, n) -> np.ndarray:
    """P(C_0 >= n) in d=1 for n >= 1, i.e. ``n p^n - (n-1) p^(n+1)``."""
    n = np.asarray(n, dtype=np.float64)
    return n * p**n - (n - 1.0) * p ** (n + 1.0)


def mgf_1d(p: float, beta: float) -> float:
    """E[exp(beta*C_0)] in d=1; ``inf`` once ``p*e^beta >= 1``."""
    if beta == 0:
        return 1.0
    q = p * math.exp(beta)
    if q >= 1.0:
        return math.inf
    return (1.0 - p) + (1.0 - p) ** 2 * q / (1.0 - q) ** 2


def mgf_1d_series(p: float, beta: float, n_max: int = 200) -> tuple[float, float]:
    """Truncated-series value of the d=1 MGF and a bound on the dropped tail.

    Independent of the closed form: sums ``e^{beta n} P(C_0 = n)`` term by term.
    The bound is the geometric majorant of the remainder, ``inf`` if it diverges.
    """
    n = np.arange(1, n_max + 1, dtype=np.float64)
    terms = np.exp(beta * n) * cluster_pmf_1d(p, n)
    total = math.fsum(terms.tolist()) + (1.0 - p)
    q = p * math.exp(beta)
    if q >= 1.0:
        return total, math.inf
    # terms ratio (n+1)/n * q <= (n_max+1)/n_max * q beyond n_max
    r = (n_max + 2) / (n_max + 1) * q
    if r >= 1.0:
        return total, math.inf
    nxt = math.exp(beta * (n_max + 1)) * (n_max + 1) * p ** (n_max + 1) * (1 - p) ** 2
    return total, nxt / (1.0 - r)


@dataclass(frozen=True)
class MgfEstimate:
    value: float
    stderr: float
    reliable: bool
    top_share: float
    n: int


def mgf_monte_carlo(samples, beta: float, xi_hat: float | None = None, margin: float = 0.1) -> MgfEstimate:
    """Sample mean of ``exp(beta*C)`` with a jackknife standard error.

    Flagged unreliable when the top 1% of samples carries more than half the
    mass, when ``beta`` is within ``margin`` of ``xi_hat``, or when it overflows.
    """
    c = np.asarray(samples, dtype=np.int64)
    m = len(c)
    if m < 2:
        raise ValueError("need at least two samples")
    if beta == 0:
        return MgfEstimate(1.0, 0.0, True, 0.0, m)
    sizes, counts = np.unique(c, return_counts=True)
    with np.errstate(over="ignore"):
        w = np.exp(beta * sizes.astype(np.float64))
    total = math.fsum((w * counts).tolist())
    mean = total / m
    if not math.isfinite(mean):
        return MgfEstimate(math.inf, math.inf, False, 1.0, m)
    # leave-one-out means, grouped by distinct value
    loo = (total - w) / (m - 1)
    loo_bar = math.fsum((loo * counts).tolist()) / m
    se = math.sqrt((m - 1) / m * math.fsum((counts * (loo - loo_bar) ** 2).tolist()))
    k = max(1, math.ceil(m / 100))
    top = 0.0
    left = k
    for wi, ci in zip(w[::-1].tolist(), counts[::-1].tolist()):
        take = min(left, ci)
        top += take * wi
        left -= take
        if left == 0:
            break
    share = top / total
    reliable = share <= 0.5
    if xi_hat is not None and beta > xi_hat - margin:
        reliable = False
    return MgfEstimate(mean, se, reliable, share, m)


def speed(params: Params, mgf_value: float) -> np.ndarray:
    """Asymptotic velocity ``drift / mgf``; zero when the MGF is infinite."""
    if not mgf_value > 0:
        raise ValueError("mgf_value must be positive")
    if math.isinf(mgf_value):
        return np.zeros(params.d)
    return drift_vector(params.lam, params.ell) / mgf_value


@dataclass(frozen=True)
class EscapeExponent:
    value: float
    regime: str
    kind: str  # LIMIT or LIMSUP


def escape_exponent(params: Params, xi: float) -> EscapeExponent:
    """Algebraic escape rate of ``|Y_t|`` with its regime tag.

    ``beta == xi`` is treated with the ``beta >= xi`` rows.
    """
    if not xi > 0:
        raise ValueError("xi must be positive")
    beta = params.beta
    if params.lam > 0:
        if beta < xi:
            return EscapeExponent(1.0, BALLISTIC, LIMIT)
        return EscapeExponent(xi / beta, SUBBALLISTIC_DRIFT, LIMIT)
    if beta < xi:
        return EscapeExponent(0.5, DIFFUSIVE, LIMSUP)
    if params.d == 1:
        return EscapeExponent(xi / (beta + xi), SUBDIFFUSIVE_D1, LIMSUP)
    return EscapeExponent(xi / (2 * beta), SUBDIFFUSIVE_DGE2, LIMSUP)


def diffusion_matrix(params: Params, mgf_value: float) -> np.ndarray:
    if params.lam > 0:
        raise NotApplicable("diffusion matrix is only defined without drift")
    if not math.isfinite(mgf_value):
        raise NotApplicable("diffusion matrix needs a finite E[exp(beta*C_0)]")
    return np.eye(params.d) / (params.d * mgf_value)


def mu_weight(env: Environment, params: Params, x) -> float:
    """log of the reversible weight, ``2*lam*ell.x + beta*C_x``."""
    x = [int(v) for v in x]
    return 2.0 * params.lam * sum(lv * xv for lv, xv in zip(params.ell, x)) + params.beta * env.cluster_size(x)


@dataclass(frozen=True)
class TheoryPrediction:
    params: Params
    drift: np.ndarray
    xi: float
    xi_source: str
    mgf: float
    speed: np.ndarray
    escape: EscapeExponent
    diffusion: np.ndarray | None
    boundary: bool

    @property
    def regime(self) -> str:
        return self.escape.regime

    @property
    def escape_exponent(self) -> float:
        return self.escape.value


def predict(params: Params, xi: float | None = None, mgf: float | None = None) -> TheoryPrediction:
    """All predictions for one parameter point.

    In d=1 ``xi`` and the MGF are exact.  For d >= 2 ``xi`` must be supplied
    (typically a Monte Carlo estimate), and so must the MGF when
    ``0 < beta < xi``; above ``xi`` the MGF is infinite.  At ``beta == xi`` in
    d >= 2 the supplied MGF (or infinity) is used and ``boundary`` is set.
    """
    source = "supplied"
    if xi is None:
        if params.d != 1:
            raise ValueError("xi must be supplied for d >= 2")
        xi = xi_exact_1d(params.p)
        source = "exact"
    boundary = params.beta == xi
    if mgf is None:
        if params.d == 1:
            mgf = mgf_1d(params.p, params.beta)
        elif params.beta == 0:
            mgf = 1.0
        elif params.beta >= xi:
            mgf = math.inf
        else:
            raise ValueError("mgf must be supplied for d >= 2 when 0 < beta < xi")
    diff = None
    if params.lam == 0 and math.isfinite(mgf):
        diff = diffusion_matrix(params, mgf)
    return TheoryPrediction(
        params=params,
        drift=drift_vector(params.lam, params.ell),
        xi=xi,
        xi_source=source,
        mgf=mgf,
        speed=speed(params, mgf),
        escape=escape_exponent(params, xi),
        diffusion=diff,
        boundary=boundary,
    )
