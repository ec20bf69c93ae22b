"""Replica fan-out.

A replica is identified by its index; its environment and walk seeds are
derived from ``(master_seed, index, tag)``.  Workers return small per-replica
records, which are reassembled in index order.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from . import rng
from .dynamics import CHECKPOINT_EVERY, Horizon, build_kernel, simulate, simulate_coupled
from .env import Environment, Params
from .errors import TrapwalkError


class ReplicaError(TrapwalkError):
    def __init__(self, index: int, cause: Exception):
        super().__init__(f"replica {index}: {type(cause).__name__}: {cause}")
        self.index = index
        self.cause = cause


@dataclass(frozen=True)
class Replica:
    index: int
    env_seed: int
    walk_seed: int


def replica(master_seed: int, index: int) -> Replica:
    return Replica(index,
                   rng.derive_seed(master_seed, index, rng.ENV_SEED),
                   rng.derive_seed(master_seed, index, rng.WALK_SEED))


def make_walk(params: Params, rep: Replica, horizon: Horizon, betas=None, checkpoint_every: int = CHECKPOINT_EVERY):
    """Environment and trajectory (or coupled set when ``betas`` is given) for one replica."""
    env = Environment(params.replace(seed=rep.env_seed))
    kernel = build_kernel(params.lam, params.ell)
    if betas is None:
        return env, simulate(env, kernel, horizon, rep.walk_seed, checkpoint_every=checkpoint_every)
    return env, simulate_coupled(env, kernel, betas, horizon, rep.walk_seed, checkpoint_every)


def _call(args):
    fn, master_seed, index, payload = args
    try:
        return fn(replica(master_seed, index), payload)
    except TrapwalkError as exc:
        raise ReplicaError(index, exc) from exc


def map_replicas(fn, master_seed: int, count: int, payload=None, workers: int = 1) -> list:
    """``[fn(replica(master_seed, i), payload) for i in range(count)]``, optionally in parallel.

    ``fn`` must be a module-level function when ``workers > 1``.
    """
    jobs = [(fn, master_seed, i, payload) for i in range(count)]
    if workers <= 1 or count <= 1:
        return [_call(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_call, jobs, chunksize=max(1, count // (4 * workers))))
