"""Skeleton walk, clock process and the continuous-time walk.

The skeleton step ``X_{j+1} - X_j`` and the exponential ``eps_j`` are pure
functions of ``(rng_seed, j)`` on two separate hash streams, so a path can be
regenerated from any checkpoint and every beta sees the same ``(X, eps)``.

Jump times use blocked summation.  Within a block of ``k`` steps the partial
sums of holding times are accumulated from zero, and
``S_{bk + j} = S_{bk} + partial_j`` with a single rounding.  Every operation is
monotone in the holding times, so the coupling inequality across beta holds
exactly in floating point, not just in exact arithmetic.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from functools import lru_cache
from dataclasses import dataclass

import numpy as np

from . import rng
from .env import Environment, Params
from .errors import HorizonOverflow, OutOfHorizon

CHECKPOINT_EVERY = 1024
_CHUNK_BLOCKS = 16
_LOG_MAX_HOLD = math.log(1e300)


@dataclass(frozen=True)
class SkeletonKernel:
    """Step law of the skeleton; entries ordered ``+e_1, -e_1, +e_2, ...``."""

    d: int
    probs: np.ndarray
    cum: np.ndarray
    vectors: np.ndarray
    log_norm: float  # log K, K = 1 / sum_e exp(lam * ell.e)
    lam: float
    ell: tuple

    def sample(self, u: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.cum, u, side="right")
        return np.minimum(idx, 2 * self.d - 1)

    def index_of(self, e) -> int:
        e = tuple(int(v) for v in e)
        for i, v in enumerate(self.vectors.tolist()):
            if tuple(v) == e:
                return i
        raise ValueError(f"{e} is not a signed unit vector")


def build_kernel(lam: float, ell) -> SkeletonKernel:
    ell = np.asarray(ell, dtype=np.float64)
    norm = math.sqrt(math.fsum((ell * ell).tolist()))
    if abs(norm - 1.0) > 1e-12:
        raise ValueError(f"ell must be a unit vector, got {ell.tolist()}")
    d = len(ell)
    vectors = np.zeros((2 * d, d), dtype=np.int64)
    for k in range(d):
        vectors[2 * k, k] = 1
        vectors[2 * k + 1, k] = -1
    a = lam * (vectors @ ell)
    amax = a.max()
    w = np.exp(a - amax)
    total = w.sum()
    probs = w / total
    cum = np.cumsum(probs)
    cum[-1] = 1.0
    log_norm = -(amax + math.log(total))
    return SkeletonKernel(d, probs, cum, vectors, log_norm, float(lam), tuple(ell.tolist()))


@lru_cache(maxsize=256)
def log_normalizer(lam: float, ell: tuple) -> float:
    """``log K`` with ``K = 1 / sum_e exp(lam ell.e)``, computed stably."""
    a = [s * lam * float(v) for v in ell for s in (1.0, -1.0)]
    amax = max(a)
    return -(amax + math.log(math.fsum(math.exp(v - amax) for v in a)))


def log_jump_rate(env: Environment, params: Params, x, e) -> float:
    # scalar path on purpose: this is called per edge in property checks
    e = [int(v) for v in e]
    if sum(abs(v) for v in e) != 1 or len(e) != params.d:
        raise ValueError("e must be a signed unit vector")
    drift = sum(lv * ev for lv, ev in zip(params.ell, e))
    return log_normalizer(params.lam, tuple(params.ell)) + params.lam * drift - params.beta * env.cluster_size(x)


def jump_rate(env: Environment, params: Params, x, e) -> float:
    """Rate of the jump ``x -> x+e``: ``K exp(lam ell.e - beta C_x)``."""
    return math.exp(log_jump_rate(env, params, x, e))


@dataclass(frozen=True)
class Horizon:
    max_steps: int | None = None
    max_time: float | None = None

    def __post_init__(self):
        if self.max_steps is None and self.max_time is None:
            raise ValueError("horizon needs max_steps or max_time")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps must be positive")
        if self.max_time is not None and not self.max_time > 0:
            raise ValueError("max_time must be positive")


@dataclass
class Block:
    """Replayed steps ``start .. start+m-1``; ``S`` has ``m+1`` entries."""

    start: int
    X: np.ndarray
    S: np.ndarray
    C: np.ndarray
    eps: np.ndarray
    hold: np.ndarray
    keys: np.ndarray

    @property
    def m(self) -> int:
        return len(self.C)


class _Skeleton:
    """Generates ``(X, C, eps)`` for index ranges of one walk."""

    def __init__(self, env: Environment, kernel: SkeletonKernel, rng_seed: int):
        self.env = env
        self.kernel = kernel
        self.rng_seed = rng_seed
        self.skel_key = rng.stream_key(rng_seed, rng.SKELETON)
        self.exp_key = rng.stream_key(rng_seed, rng.HOLDING)

    def generate(self, start: int, m: int, x0: np.ndarray):
        idx = np.arange(start, start + m, dtype=np.int64)
        steps = self.kernel.vectors[self.kernel.sample(rng.counter_uniform_array(self.skel_key, idx))]
        pos = np.cumsum(steps, axis=0)
        pos += x0
        X = np.empty_like(pos)
        X[0] = x0
        X[1:] = pos[:-1]
        keys = self.env.packer.pack_array(X)
        C = self.env.cluster_sizes_keys(keys)
        eps = rng.counter_exponential_array(self.exp_key, idx)
        return X, pos[-1].copy(), keys, C, eps


def _holding(eps: np.ndarray, C: np.ndarray, beta: float) -> np.ndarray:
    if beta == 0:
        return eps.copy()
    cmax = int(C.max(initial=0))
    if beta * cmax > _LOG_MAX_HOLD:
        raise HorizonOverflow(f"holding time exp({beta}*{cmax}) exceeds 1e300")
    return eps * np.exp(beta * C)


class Trajectory:
    """A simulated path stored as checkpoints every ``k`` steps.

    Queries replay the relevant block from its checkpoint; a few recently
    replayed blocks are kept.
    """

    def __init__(self, env: Environment, kernel: SkeletonKernel, beta: float, rng_seed: int, k: int):
        self.env = env
        self.kernel = kernel
        self.beta = float(beta)
        self.rng_seed = rng_seed
        self.k = k
        self.d = env.params.d
        self._skeleton = _Skeleton(env, kernel, rng_seed)
        self._cp_pos = [np.zeros(self.d, dtype=np.int64)]
        self._cp_time = [0.0]
        self.n = 0
        self.final_pos = np.zeros(self.d, dtype=np.int64)
        self.final_time = 0.0
        self.terminated_by = None
        self._blocks: OrderedDict = OrderedDict()
        self._cp_arrays = None

    # -- construction --------------------------------------------------------

    def _feed(self, start, X, x_end, keys, C, eps, max_time):
        """Append one block of (at most ``k``) steps; return True when stopped."""
        hold = _holding(eps, C, self.beta)
        partial = np.empty(len(hold) + 1)
        partial[0] = 0.0
        np.cumsum(hold, out=partial[1:])
        S = self._cp_time[-1] + partial
        if not math.isfinite(S[-1]):
            raise HorizonOverflow("jump time is no longer finite")
        m = len(hold)
        stop = m
        if max_time is not None:
            j = int(np.searchsorted(S, max_time, side="left"))
            if j <= m:
                stop = j
        self.n = start + stop
        self.final_time = float(S[stop])
        self.final_pos = x_end if stop == m else X[stop].copy()
        if stop == m and m == self.k:
            self._cp_pos.append(self.final_pos.copy())
            self._cp_time.append(self.final_time)
        self._cp_arrays = None
        if stop < m or (max_time is not None and self.final_time >= max_time):
            self.terminated_by = "time"
            return True
        return False

    # -- checkpoints --------------------------------------------------------

    @property
    def checkpoints(self):
        """``(steps, times, positions)`` at every stored checkpoint."""
        if self._cp_arrays is None:
            t = np.array(self._cp_time)
            self._cp_arrays = (np.arange(len(t)) * self.k, t, np.array(self._cp_pos))
        return self._cp_arrays

    def block(self, b: int) -> Block:
        cached = self._blocks.get(b)
        if cached is not None:
            self._blocks.move_to_end(b)
            return cached
        start = b * self.k
        if start > self.n:
            raise OutOfHorizon(f"block {b} lies beyond step {self.n}")
        m = min(self.k, self.n - start)
        x0 = self._cp_pos[b]
        if m == 0:
            blk = Block(start, np.zeros((0, self.d), np.int64), np.array([self._cp_time[b]]),
                        np.zeros(0, np.int64), np.zeros(0), np.zeros(0), np.zeros(0, np.int64))
        else:
            X, _, keys, C, eps = self._skeleton.generate(start, m, x0)
            hold = _holding(eps, C, self.beta)
            partial = np.empty(m + 1)
            partial[0] = 0.0
            np.cumsum(hold, out=partial[1:])
            blk = Block(start, X, self._cp_time[b] + partial, C, eps, hold, keys)
        self._blocks[b] = blk
        if len(self._blocks) > 8:
            self._blocks.popitem(last=False)
        return blk

    def iter_blocks(self, upto: int | None = None):
        """Yield replayed blocks covering steps ``0 .. upto-1`` (default: all)."""
        last = self.n if upto is None else min(upto, self.n)
        b = 0
        while b * self.k < last or b == 0:
            yield self.block(b)
            b += 1
            if b * self.k >= last:
                break

    # -- queries --------------------------------------------------------------

    def clock_inverse(self, t: float) -> int:
        """The step ``n`` with ``S_n <= t < S_{n+1}``."""
        return int(self.clock_inverse_many(np.array([t]))[0])

    def clock_inverse_many(self, times) -> np.ndarray:
        times = np.asarray(times, dtype=np.float64)
        if times.size and (times.min() < 0 or not times.max() <= self.final_time):
            raise OutOfHorizon(f"query time outside [0, {self.final_time}]")
        _, cp_t, _ = self.checkpoints
        bidx = np.searchsorted(cp_t, times, side="right") - 1
        out = np.empty(len(times), dtype=np.int64)
        for b in np.unique(bidx).tolist():
            sel = bidx == b
            blk = self.block(b)
            j = np.searchsorted(blk.S, times[sel], side="right") - 1
            out[sel] = blk.start + j
        return out

    def position(self, n: int) -> np.ndarray:
        """Skeleton position ``X_n``."""
        if not 0 <= n <= self.n:
            raise OutOfHorizon(f"step {n} outside [0, {self.n}]")
        if n == self.n:
            return self.final_pos.copy()
        blk = self.block(n // self.k)
        return blk.X[n - blk.start].copy()

    def jump_time(self, n: int) -> float:
        if not 0 <= n <= self.n:
            raise OutOfHorizon(f"step {n} outside [0, {self.n}]")
        blk = self.block(n // self.k)
        return float(blk.S[n - blk.start])

    def positions_at(self, times) -> np.ndarray:
        """``Y_t = X_{S^{-1}(t)}`` for each time (right-continuous)."""
        ns = self.clock_inverse_many(times)
        out = np.empty((len(ns), self.d), dtype=np.int64)
        for i, n in enumerate(ns.tolist()):
            out[i] = self.position(n)
        return out

    def position_at(self, t: float) -> np.ndarray:
        return self.positions_at(np.array([t]))[0]

    def write_checkpoints(self, stream, header: str = "") -> None:
        """Write ``n S_n x_1 ... x_d`` records at checkpoint resolution plus the end."""
        if header:
            stream.write(f"# {header}\n")
        steps, times, pos = self.checkpoints
        rows = list(zip(steps.tolist(), times.tolist(), pos.tolist()))
        if steps[-1] != self.n:
            rows.append((self.n, self.final_time, self.final_pos.tolist()))
        for n, s, x in rows:
            stream.write(f"{n} {s!r} {' '.join(str(v) for v in x)}\n")


@dataclass
class CoupledTrajectorySet:
    """Trajectories for several beta driven by one skeleton and one eps stream."""

    betas: tuple
    members: list

    def __getitem__(self, i) -> Trajectory:
        return self.members[i]

    def __len__(self):
        return len(self.members)

    def clock_inverse_table(self, times) -> np.ndarray:
        """``S^{-1}(beta_i; t_j)`` as an array of shape (len(betas), len(times))."""
        return np.array([m.clock_inverse_many(times) for m in self.members])

    def monotonicity_violations(self, times) -> int:
        """Count pairs where a larger beta has a larger clock inverse."""
        table = self.clock_inverse_table(times)
        order = np.argsort(np.asarray(self.betas), kind="stable")
        t = table[order]
        return int((np.diff(t, axis=0) > 0).sum())


def _run(env, kernel, betas, horizon: Horizon, rng_seed: int, k: int) -> list:
    trajs = [Trajectory(env, kernel, b, rng_seed, k) for b in betas]
    active = list(range(len(trajs)))
    source = trajs[0]._skeleton
    max_steps = horizon.max_steps
    start = 0
    x0 = np.zeros(env.params.d, dtype=np.int64)
    while active:
        m = _CHUNK_BLOCKS * k
        if max_steps is not None:
            m = min(m, max_steps - start)
        X, x_end, keys, C, eps = source.generate(start, m, x0)
        for off in range(0, m, k):
            mb = min(k, m - off)
            bx_end = x_end if off + mb == m else X[off + mb]
            still = []
            for i in active:
                stopped = trajs[i]._feed(start + off, X[off:off + mb], bx_end,
                                         keys[off:off + mb], C[off:off + mb], eps[off:off + mb],
                                         horizon.max_time)
                if not stopped:
                    still.append(i)
            active = still
            if not active:
                break
        start += m
        x0 = x_end
        if max_steps is not None and start >= max_steps:
            for i in active:
                trajs[i].terminated_by = "steps"
            break
    return trajs


def simulate(env: Environment, kernel: SkeletonKernel, horizon: Horizon, rng_seed: int,
             beta: float | None = None, checkpoint_every: int = CHECKPOINT_EVERY) -> Trajectory:
    """Run one walk until ``max_steps`` jumps or the first jump time >= ``max_time``.

    ``beta`` defaults to ``env.params.beta``.
    """
    b = env.params.beta if beta is None else beta
    return _run(env, kernel, [b], horizon, rng_seed, checkpoint_every)[0]


def simulate_coupled(env: Environment, kernel: SkeletonKernel, beta_list, horizon: Horizon,
                     rng_seed: int, checkpoint_every: int = CHECKPOINT_EVERY) -> CoupledTrajectorySet:
    betas = tuple(float(b) for b in beta_list)
    if not betas:
        raise ValueError("beta_list must be non-empty")
    if min(betas) < 0:
        raise ValueError("beta values must be non-negative")
    return CoupledTrajectorySet(betas, _run(env, kernel, betas, horizon, rng_seed, checkpoint_every))


def clock_inverse(traj: Trajectory, t: float) -> int:
    return traj.clock_inverse(t)


def position_at(traj: Trajectory, t: float) -> np.ndarray:
    return traj.position_at(t)
