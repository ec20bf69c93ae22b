"""Lazily sampled Bernoulli site percolation on Z^d.

Nothing is pre-generated.  The state of site ``x`` is a hash of
``(seed, packed(x))`` compared against ``p``, and cluster sizes are computed on
demand by breadth-first search and memoized for every site of the explored
cluster.

Coordinates are packed into one non-negative int64: each axis gets
``63 // d`` bits holding ``x_k + 2**(w-1)``.  For d <= 3 this covers at least
``[-2**20, 2**20)`` per axis; leaving the box raises CoordinateRangeError.
"""

from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import ClusterCapExceeded, CoordinateRangeError

# Site percolation thresholds, rounded down (d=1 has p_c = 1).
SUBCRITICAL_GUARD = {1: 0.99, 2: 0.59, 3: 0.31}


@dataclass(frozen=True)
class Params:
    """Model parameters plus the few controls every run needs."""

    d: int = 1
    p: float = 0.3
    lam: float = 0.0
    ell: tuple = (1.0,)
    beta: float = 0.0
    cluster_cap: int = 10**6
    seed: int = 0
    p_guard: float | None = None

    def __post_init__(self):
        ell = tuple(float(v) for v in self.ell)
        object.__setattr__(self, "ell", ell)
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")
        if len(ell) != self.d:
            raise ValueError(f"ell has {len(ell)} components for d={self.d}")
        if abs(math.sqrt(math.fsum(v * v for v in ell)) - 1.0) > 1e-12:
            raise ValueError(f"ell must be a unit vector, got {ell}")
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"p must lie in (0, 1), got {self.p}")
        if self.lam < 0 or self.beta < 0:
            raise ValueError("lambda and beta must be non-negative")
        if self.cluster_cap < 1:
            raise ValueError("cluster_cap must be >= 1")
        guard = self.p_guard if self.p_guard is not None else SUBCRITICAL_GUARD.get(self.d)
        if guard is not None and self.p >= guard:
            warnings.warn(
                f"p={self.p} is at or above the subcriticality guard {guard} for d={self.d}; "
                "cluster exploration may hit cluster_cap",
                stacklevel=3,
            )

    def replace(self, **changes) -> "Params":
        kw = {f: getattr(self, f) for f in self.__dataclass_fields__}
        kw.update(changes)
        return Params(**kw)

    @property
    def ell_array(self) -> np.ndarray:
        return np.asarray(self.ell, dtype=np.float64)


class Packer:
    """Bijection between lattice points in a box and non-negative ints."""

    def __init__(self, d: int):
        self.d = d
        self.width = 63 // d
        self.offset = 1 << (self.width - 1)
        self.fmask = (1 << self.width) - 1
        self.steps = [1 << (self.width * k) for k in range(d)]
        self._shifts = np.array([self.width * k for k in range(d)], dtype=np.int64)

    def pack(self, x) -> int:
        key = 0
        for k, xk in enumerate(x):
            v = int(xk) + self.offset
            if not 0 <= v <= self.fmask:
                raise CoordinateRangeError(f"coordinate {int(xk)} outside +-2^{self.width - 1}")
            key |= v << (self.width * k)
        return key

    def unpack(self, key: int) -> tuple:
        return tuple(((key >> (self.width * k)) & self.fmask) - self.offset for k in range(self.d))

    def pack_array(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.int64).reshape(-1, self.d)
        v = xs + self.offset
        if v.size and (v.min() < 0 or v.max() > self.fmask):
            raise CoordinateRangeError(f"coordinates outside +-2^{self.width - 1}")
        return np.bitwise_or.reduce(v << self._shifts, axis=1) if self.d > 1 else v[:, 0].copy()

    def unpack_array(self, keys) -> np.ndarray:
        keys = np.asarray(keys, dtype=np.int64)
        return ((keys[:, None] >> self._shifts) & self.fmask) - self.offset

    def neighbors(self, key: int):
        for k, s in enumerate(self.steps):
            c = (key >> (self.width * k)) & self.fmask
            if c == self.fmask or c == 0:
                raise CoordinateRangeError("cluster exploration reached the edge of the packable box")
            yield key + s
            yield key - s


@dataclass
class Environment:
    """One percolation configuration, sampled lazily and deterministically.

    ``cache`` maps packed site keys to cluster sizes (0 for closed sites).
    Clearing it never changes any answer.
    """

    params: Params
    cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.packer = Packer(self.params.d)
        self._key = rng.stream_key(self.params.seed, rng.SITE)
        # open iff the top 53 hash bits fall below p * 2**53 (exact in floating point)
        self._threshold = self.params.p * 2.0**53
        self.explorations = 0

    # -- site states --------------------------------------------------------

    def is_open_key(self, key: int) -> bool:
        return (rng.counter_hash(self._key, key) >> 11) < self._threshold

    def is_open_keys(self, keys) -> np.ndarray:
        return rng.counter_uniform_array(self._key, keys) < self.params.p

    def site_state(self, x) -> bool:
        """True if site ``x`` is open."""
        return self.is_open_key(self.packer.pack(x))

    def site_states(self, xs) -> np.ndarray:
        return self.is_open_keys(self.packer.pack_array(xs))

    # -- clusters -----------------------------------------------------------

    def cluster_size(self, x) -> int:
        return self.cluster_size_key(self.packer.pack(x))

    def cluster_size_key(self, key: int) -> int:
        size = self.cache.get(key)
        if size is None:
            if not self.is_open_key(key):
                self.cache[key] = 0
                return 0
            size = self._explore(key)
        return size

    def _explore(self, root: int) -> int:
        # BFS over open neighbors; caches the whole cluster in one pass.
        cap = self.params.cluster_cap
        seen = {root}
        queue = deque([root])
        closed = []
        is_open = self.is_open_key
        cache = self.cache
        while queue:
            key = queue.popleft()
            for nb in self.packer.neighbors(key):
                if nb in seen:
                    continue
                cached = cache.get(nb)
                if cached == 0 or (cached is None and not is_open(nb)):
                    if cached is None:
                        closed.append(nb)
                    continue
                seen.add(nb)
                if len(seen) > cap:
                    raise ClusterCapExceeded(
                        f"cluster exploration exceeded cluster_cap={cap} (p={self.params.p}, d={self.params.d})"
                    )
                queue.append(nb)
        return self._store(seen, closed)

    def _store(self, members, closed) -> int:
        size = len(members)
        cache = self.cache
        for key in members:
            cache[key] = size
        for key in closed:
            cache[key] = 0
        self.explorations += 1
        return size

    def cluster_sizes(self, xs) -> np.ndarray:
        return self.cluster_sizes_keys(self.packer.pack_array(xs))

    def cluster_sizes_keys(self, keys) -> np.ndarray:
        """Cluster sizes for an array of packed keys (vectorized where possible)."""
        keys = np.asarray(keys, dtype=np.int64)
        uniq, inverse = np.unique(keys, return_inverse=True)
        cache = self.cache
        sizes = np.fromiter((cache.get(k, -1) for k in uniq.tolist()), dtype=np.int64, count=len(uniq))
        missing = sizes < 0
        if missing.any():
            mkeys = uniq[missing]
            if self.params.d == 1:
                sizes[missing] = self._fill_runs_1d(mkeys)
            else:
                is_open = self.is_open_keys(mkeys)
                out = np.zeros(len(mkeys), dtype=np.int64)
                for k in mkeys[~is_open].tolist():
                    cache[k] = 0
                for i in np.flatnonzero(is_open).tolist():
                    out[i] = self.cluster_size_key(int(mkeys[i]))
                sizes[missing] = out
        return sizes[inverse.reshape(-1)]

    def _fill_runs_1d(self, keys: np.ndarray) -> np.ndarray:
        # In d=1 clusters are runs of open sites; label them on an interval
        # covering all requested keys, widening until both edge runs are closed.
        lo = int(keys.min()) - 1
        hi = int(keys.max()) + 1
        pad = 32
        while True:
            span = np.arange(lo - pad, hi + pad + 1, dtype=np.int64)
            if span[0] < 0 or span[-1] > self.packer.fmask:
                raise CoordinateRangeError("cluster exploration reached the edge of the packable box")
            state = self.is_open_keys(span)
            closed = np.flatnonzero(~state)
            if len(closed) >= 2 and span[closed[0]] <= lo and span[closed[-1]] >= hi:
                break
            pad *= 2
        a, b = closed[0], closed[-1]
        span = span[a : b + 1]
        state = state[a : b + 1]
        # run id increments at every closed site; open sites share the id of the preceding closed one
        run_id = np.cumsum(~state)
        counts = np.bincount(run_id, weights=state.astype(np.float64)).astype(np.int64)
        size = np.where(state, counts[run_id], 0)
        if size.max(initial=0) > self.params.cluster_cap:
            raise ClusterCapExceeded(f"cluster exploration exceeded cluster_cap={self.params.cluster_cap}")
        self.cache.update(zip(span.tolist(), size.tolist()))
        self.explorations += 1
        idx = np.searchsorted(span, keys)
        return size[idx]

    def clear_cache(self) -> None:
        self.cache.clear()

    def dump_clusters(self, stream) -> None:
        """Write every cached open site as ``x_1 ... x_d size`` lines."""
        for key in sorted(self.cache):
            size = self.cache[key]
            if size:
                coords = " ".join(str(c) for c in self.packer.unpack(key))
                stream.write(f"{coords} {size}\n")


def site_state(env: Environment, x) -> bool:
    return env.site_state(x)


def cluster_size(env: Environment, x) -> int:
    return env.cluster_size(x)


def sample_cluster_sizes(params: Params, replicas: int) -> np.ndarray:
    """Size of the origin's cluster in ``replicas`` independent environments.

    Replica ``i`` uses the environment seed ``derive_seed(params.seed, i, ENV_SEED)``,
    the same one a walk replica ``i`` would see.
    """
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    seeds = rng.derive_seeds(params.seed, np.arange(replicas), rng.ENV_SEED)
    if params.d == 1:
        return _origin_runs_1d(params, seeds)
    packer = Packer(params.d)
    origin = packer.pack((0,) * params.d)
    open0 = _open_at(_site_keys(seeds), np.full(replicas, origin, dtype=np.int64), params.p)
    out = np.zeros(replicas, dtype=np.int64)
    for i in np.flatnonzero(open0).tolist():
        env = Environment(params.replace(seed=int(seeds[i])))
        out[i] = env.cluster_size_key(origin)
    return out


def _site_keys(seeds: np.ndarray) -> np.ndarray:
    # vectorized rng.stream_key(seed, SITE) == hash_words(seed, SITE)
    h0 = np.uint64(0x243F6A8885A308D3)
    g = np.uint64(rng.GOLDEN)
    with np.errstate(over="ignore"):
        h = rng.mix64_array((h0 ^ seeds.astype(np.uint64)) + g)
        return rng.mix64_array((h ^ np.uint64(rng.SITE)) + g)


def _open_at(keys: np.ndarray, packed: np.ndarray, p: float) -> np.ndarray:
    # per-row key version of counter_uniform_array
    g = np.uint64(rng.GOLDEN)
    with np.errstate(over="ignore"):
        inner = rng.mix64_array(packed.astype(np.uint64) + g)
    h = rng.mix64_array(keys ^ inner)
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53)) < p


def _origin_runs_1d(params: Params, seeds: np.ndarray) -> np.ndarray:
    # Exact run lengths through the origin, extended in chunks until every
    # replica has met a closed site on both sides.
    keys = _site_keys(seeds)
    origin = Packer(1).offset
    n = len(seeds)
    open0 = _open_at(keys, np.full(n, origin, dtype=np.int64), params.p)
    sizes = open0.astype(np.int64)
    for direction in (1, -1):
        active = np.flatnonzero(open0)
        start = 1
        chunk = 16
        while len(active):
            offs = origin + direction * np.arange(start, start + chunk, dtype=np.int64)
            st = _open_at(keys[active, None], offs[None, :].repeat(len(active), 0), params.p)
            first_closed = np.where(st.all(axis=1), chunk, np.argmin(st, axis=1))
            sizes[active] += first_closed
            active = active[first_closed == chunk]
            start += chunk
            if start > params.cluster_cap:
                raise ClusterCapExceeded(f"cluster exploration exceeded cluster_cap={params.cluster_cap}")
    if sizes.max(initial=0) > params.cluster_cap:
        raise ClusterCapExceeded(f"cluster exploration exceeded cluster_cap={params.cluster_cap}")
    return sizes
