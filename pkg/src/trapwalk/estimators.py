"""Monte Carlo estimators over simulated trajectories and cluster samples.

Most estimators come in two layers: a per-trajectory extraction that returns
small arrays (cheap to ship back from worker processes) and an aggregation
over replicas that only touches those arrays.  Aggregation is ordered by
replica index, so results never depend on scheduling.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFit, InsufficientTail, OutOfHorizon

VERSION = "1"


@dataclass(frozen=True)
class TimeGrid:
    """Geometric query times ``t0 * ratio**j``, ``j = 0 .. count-1``."""

    t0: float
    ratio: float
    count: int

    def __post_init__(self):
        if not self.t0 > 0 or not self.ratio > 1 or self.count < 1:
            raise ValueError("need t0 > 0, ratio > 1 and count >= 1")

    @classmethod
    def spanning(cls, t_min: float, t_max: float, per_decade: int = 8) -> "TimeGrid":
        decades = math.log10(t_max / t_min)
        count = max(2, int(round(decades * per_decade)) + 1)
        return cls(t_min, (t_max / t_min) ** (1.0 / (count - 1)), count)

    @property
    def times(self) -> np.ndarray:
        t = self.t0 * self.ratio ** np.arange(self.count)
        return t

    @property
    def decades(self) -> float:
        return (self.count - 1) * math.log10(self.ratio)

    def clip(self, t_max: float) -> "TimeGrid":
        """The longest prefix of this grid that stays within ``t_max``."""
        n = int(np.searchsorted(self.times, t_max, side="right"))
        if n < 1:
            raise OutOfHorizon(f"grid starts at {self.t0} beyond horizon {t_max}")
        return TimeGrid(self.t0, self.ratio, n)


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    intercept: float
    residuals: np.ndarray
    window: tuple
    running_max: bool
    stderr: float = math.nan
    replicas: int = 1


@dataclass(frozen=True)
class SpeedEstimate:
    mean: np.ndarray
    cov: np.ndarray
    replicas: int

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov) / self.replicas)


# -- speed ------------------------------------------------------------------


def speed_from_positions(positions, t: float) -> SpeedEstimate:
    y = np.asarray(positions, dtype=np.float64) / t
    if len(y) < 2:
        raise ValueError("need at least two replicas")
    return SpeedEstimate(y.mean(axis=0), np.atleast_2d(np.cov(y, rowvar=False)), len(y))


def estimate_speed(trajectories, t: float) -> SpeedEstimate:
    """Across-replica mean and covariance of ``Y_t / t``."""
    return speed_from_positions([tr.position_at(t) for tr in trajectories], t)


# -- escape exponent ----------------------------------------------------------


def grid_norms(traj, times) -> np.ndarray:
    """Euclidean ``|Y_t|`` at each query time."""
    pos = traj.positions_at(times).astype(np.float64)
    return np.sqrt((pos * pos).sum(axis=1))


def fit_exponent(times, norms, use_running_max: bool = False, burn_in_decades: float = 1.0) -> ExponentFit:
    """Least-squares slope of ``ln M_t`` against ``ln t``.

    ``norms`` has shape (replicas, J).  ``M_t`` is ``|Y_t|`` or, in running-max
    mode, the running maximum of ``|Y|`` over grid points up to ``t``.  At each
    grid point ``ln M_t`` is averaged over replicas with ``M_t > 0``; grid
    points before ``t_0 * 10**burn_in_decades`` are dropped.
    """
    times = np.asarray(times, dtype=np.float64)
    m = np.atleast_2d(np.asarray(norms, dtype=np.float64))
    if use_running_max:
        m = np.maximum.accumulate(m, axis=1)
    keep = times >= times[0] * 10.0**burn_in_decades * (1 - 1e-12)
    times, m = times[keep], m[:, keep]
    with np.errstate(divide="ignore"):
        logm = np.log(m)
    pos = m > 0
    counts = pos.sum(axis=0)
    ok = counts > 0
    if ok.sum() < 2:
        raise DegenerateFit("|Y_t| vanishes on the fit window")
    mean_log = np.where(pos, logm, 0.0).sum(axis=0)[ok] / counts[ok]
    lt = np.log(times[ok])
    slope, intercept = np.polyfit(lt, mean_log, 1)
    resid = mean_log - (slope * lt + intercept)
    stderr = math.nan
    full = pos[:, ok].all(axis=1)
    if full.sum() >= 2:
        per = np.polyfit(lt, logm[full][:, ok].T, 1)[0]
        stderr = float(per.std(ddof=1) / math.sqrt(len(per)))
    return ExponentFit(float(slope), float(intercept), resid, (float(times[ok][0]), float(times[ok][-1])),
                       use_running_max, stderr, m.shape[0])


def estimate_escape_exponent(trajectories, grid: TimeGrid, use_running_max: bool = False,
                             burn_in_decades: float = 1.0) -> ExponentFit:
    if not isinstance(trajectories, (list, tuple)):
        trajectories = [trajectories]
    if grid.decades < 3 - 1e-9:
        raise ValueError("exponent fits need a grid spanning at least 3 decades")
    times = grid.times
    norms = np.array([grid_norms(tr, times) for tr in trajectories])
    return fit_exponent(times, norms, use_running_max, burn_in_decades)


# -- mean squared displacement -------------------------------------------------


@dataclass(frozen=True)
class MsdEstimate:
    times: np.ndarray
    msd: np.ndarray  # E|Y_t|^2 / t
    msd_stderr: np.ndarray
    second_moment: np.ndarray  # E[Y_t Y_t^T] / t, shape (J, d, d)
    second_moment_stderr: np.ndarray
    jumps: np.ndarray  # E[N_t] / t, equal in expectation to msd when lam = 0
    jumps_stderr: np.ndarray
    replicas: int


def msd_sample(traj, times):
    """Positions ``Y_t`` and jump counts ``N_t = S^{-1}(t)`` at each time."""
    ns = traj.clock_inverse_many(times)
    pos = np.array([traj.position(n) for n in ns.tolist()])
    return pos, ns


def msd_from_samples(times, positions, jumps) -> MsdEstimate:
    """Aggregate ``msd_sample`` outputs; positions (R, J, d), jumps (R, J)."""
    t = np.asarray(times, dtype=np.float64)
    y = np.asarray(positions, dtype=np.float64)
    r = y.shape[0]
    sq = (y * y).sum(axis=2) / t
    outer = y[:, :, :, None] * y[:, :, None, :] / t[None, :, None, None]
    nj = np.asarray(jumps, dtype=np.float64) / t
    se = (lambda a: a.std(axis=0, ddof=1) / math.sqrt(r)) if r > 1 else (lambda a: np.full(a.shape[1:], np.nan))
    return MsdEstimate(t, sq.mean(axis=0), se(sq), outer.mean(axis=0), se(outer), nj.mean(axis=0), se(nj), r)


def estimate_msd(trajectories, grid: TimeGrid) -> MsdEstimate:
    """E|Y_t|^2/t and E[Y Y^T]/t across replicas, plus the jump-count estimate.

    Without drift ``|Y_t|^2 - N_t`` is a martingale, so ``E[N_t]/t`` estimates
    the same quantity with far smaller variance.
    """
    if any(tr.kernel.lam != 0 for tr in trajectories):
        warnings.warn("estimate_msd is meant for runs without drift", stacklevel=2)
    times = grid.times
    samples = [msd_sample(tr, times) for tr in trajectories]
    return msd_from_samples(times, [s[0] for s in samples], [s[1] for s in samples])


# -- environment seen from the walker ------------------------------------------


def _time_by_cluster(traj, t: float):
    """Exact time spent up to ``t`` at each step, with that step's cluster size."""
    if t > traj.final_time:
        raise OutOfHorizon(f"t={t} beyond horizon {traj.final_time}")
    n_t = traj.clock_inverse(t)
    durations, sizes = [], []
    for blk in traj.iter_blocks(upto=n_t + 1):
        j = min(blk.m, n_t + 1 - blk.start)
        if j <= 0:
            break
        s = blk.S[: j + 1].copy()
        s[-1] = min(s[-1], t) if blk.start + j - 1 == n_t else s[-1]
        durations.append(np.diff(s))
        sizes.append(blk.C[:j])
    return np.concatenate(durations), np.concatenate(sizes)


def env_histogram(traj, env, t: float) -> np.ndarray:
    """Fraction of ``[0, t]`` spent at sites of cluster size ``c`` (index ``c``).

    Built from the exact holding intervals; normalized so the masses sum to one.
    """
    if traj.beta >= _xi_guess(env.params):
        warnings.warn("tilted-law histogram only converges for beta < xi", stacklevel=2)
    dur, sizes = _time_by_cluster(traj, t)
    mass = np.bincount(sizes, weights=dur)
    return mass / math.fsum(mass.tolist())


def _xi_guess(params) -> float:
    return -math.log(params.p) if params.d == 1 else math.inf


def trap_occupation_fraction(traj, env, t: float, eps: float) -> float:
    """Share of ``[0, t]`` spent on clusters with ``C / ln t`` within ``eps`` of ``1/beta``."""
    beta = traj.beta
    if not beta > 0:
        raise ValueError("trap occupation needs beta > 0")
    if env.params.lam == 0 or beta <= _xi_guess(env.params):
        warnings.warn("trap occupation is meant for lam > 0 and beta > xi", stacklevel=2)
    dur, sizes = _time_by_cluster(traj, t)
    ratio = sizes / math.log(t) if t > 1 else np.full(len(sizes), np.inf)
    inside = np.abs(ratio - 1.0 / beta) <= eps
    total = math.fsum(dur.tolist())
    return math.fsum(dur[inside].tolist()) / total


# -- range and local times ------------------------------------------------------


def range_and_localtime(traj, n: int) -> tuple[int, int]:
    """Distinct sites among ``X_0 .. X_n`` and the largest visit count."""
    if not 0 <= n <= traj.n:
        raise OutOfHorizon(f"step {n} outside [0, {traj.n}]")
    keys = [blk.keys[: n - blk.start] for blk in traj.iter_blocks(upto=n)] if n else []
    last = traj.env.packer.pack(traj.position(n))
    allk = np.concatenate(keys + [np.array([last], dtype=np.int64)])
    _, counts = np.unique(allk, return_counts=True)
    return len(counts), int(counts.max())


# -- tail rate -------------------------------------------------------------------


@dataclass(frozen=True)
class XiEstimate:
    xi: float
    stderr: float
    window: tuple
    log_prefactor: float
    points: int


def estimate_xi(samples, n_min: int = 2, min_tail_count: int = 50, min_points: int = 4) -> XiEstimate:
    """Exponential tail rate of cluster sizes.

    Fits ``-ln P(C >= n) = xi*n - a*ln n + b`` by weighted least squares over
    ``n >= n_min`` with at least ``min_tail_count`` samples in the tail, with
    weights equal to tail counts.  The ``ln n`` term absorbs the polynomial
    prefactor of the tail, which otherwise biases the slope low by O(1/n) at
    the short windows reachable by sampling.  The standard error is a sandwich
    estimate using the multinomial covariance of the cumulative counts.
    """
    c = np.asarray(samples, dtype=np.int64)
    m = len(c)
    if m < 10**4:
        raise ValueError("estimate_xi needs at least 1e4 samples")
    counts = np.bincount(c)
    tail = np.cumsum(counts[::-1])[::-1]
    n = np.arange(len(tail))
    sel = (n >= max(n_min, 1)) & (tail >= min_tail_count)
    n, tail = n[sel].astype(np.float64), tail[sel].astype(np.float64)
    if len(n) < min_points:
        raise InsufficientTail(f"only {len(n)} tail points with >= {min_tail_count} counts")
    P = tail / m
    y = -np.log(P)
    A = np.column_stack([n, -np.log(n), np.ones_like(n)])
    w = tail
    AtW = A.T * w
    bread = np.linalg.inv(AtW @ A)
    coef = bread @ (AtW @ y)
    # Cov(ln P_i, ln P_j) = (1 - P_i) / (m P_i) for n_i <= n_j
    lo = np.minimum.outer(np.arange(len(n)), np.arange(len(n)))
    cov_y = ((1 - P) / (m * P))[lo]
    sand = bread @ (AtW @ cov_y @ AtW.T) @ bread
    return XiEstimate(float(coef[0]), float(math.sqrt(sand[0, 0])), (int(n[0]), int(n[-1])), float(coef[1]), len(n))
