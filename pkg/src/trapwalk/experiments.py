"""Experiment pipelines behind the ``theory``, ``simulate`` and ``sweep`` subcommands.

Outputs are plain files.  Everything written to ``results.csv``,
``summary.csv``, ``theory.csv``, ``sweep.csv`` and ``trajectories/`` is a pure
function of the config (bit-identical for any worker count); wall-clock time
goes to ``timing.json`` only.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng, theory
from .config import RunConfig
from .dynamics import Horizon
from .env import sample_cluster_sizes
from .errors import ConfigError, NotApplicable
from .estimators import (VERSION, TimeGrid, env_histogram, estimate_xi, fit_exponent,
                         range_and_localtime, trap_occupation_fraction)
from .runner import make_walk, map_replicas

RESULT_COLUMNS = ["run_id", "config_hash", "estimator", "quantity", "d", "p", "lambda", "beta",
                  "grid_t", "value", "stderr", "replicas", "seed_path", "estimator_version"]
XI_TAG = 0x71

NA = "NA"


def fmt(v) -> str:
    if v is None:
        return NA
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return NA if math.isnan(v) else repr(v)
    return str(v)


def write_csv(path: Path, columns, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(row.get(c)) for c in columns])
    path.write_text(buf.getvalue())


# -- theory ---------------------------------------------------------------------


def sweep_points(cfg: RunConfig) -> list:
    """Cross product of the swept axes (base values for axes not swept)."""
    ps = cfg.sweep_p if cfg.sweep_p is not None else [cfg.p]
    lams = cfg.sweep_lambda if cfg.sweep_lambda is not None else [cfg.lam]
    betas = cfg.sweep_beta if cfg.sweep_beta is not None else [cfg.beta]
    return [dict(p=p, lam=lam, beta=beta) for p, lam, beta in itertools.product(ps, lams, betas)]


class _TheoryInputs:
    """xi and E[exp(beta C)] per point: exact in d=1, supplied or sampled otherwise."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self._samples = {}

    def samples(self, p):
        if p not in self._samples:
            params = self.cfg.params(p=p, seed=rng.derive_seed(self.cfg.seed, 0, XI_TAG))
            self._samples[p] = sample_cluster_sizes(params, self.cfg.xi_samples)
        return self._samples[p]

    def __call__(self, p, beta):
        cfg = self.cfg
        if cfg.d == 1:
            xi, source = (cfg.xi, "supplied") if cfg.xi > 0 else (theory.xi_exact_1d(p), "exact")
        elif cfg.xi > 0:
            xi, source = cfg.xi, "supplied"
        else:
            xi, source = estimate_xi(self.samples(p)).xi, "estimated"
        if cfg.mgf > 0:
            mgf = cfg.mgf
        elif cfg.d == 1:
            mgf = theory.mgf_1d(p, beta)
        elif beta == 0:
            mgf = 1.0
        elif beta >= xi:
            mgf = math.inf
        else:
            mgf = theory.mgf_monte_carlo(self.samples(p), beta, xi_hat=xi).value
        return xi, source, mgf


def theory_rows(cfg: RunConfig) -> list:
    inputs = _TheoryInputs(cfg)
    rows = []
    for pt in sweep_points(cfg):
        params = cfg.params(**pt)
        xi, source, mgf = inputs(pt["p"], pt["beta"])
        pred = theory.predict(params, xi=xi, mgf=mgf)
        row = dict(config_hash=cfg.config_hash(), d=cfg.d, p=pt["p"], beta=pt["beta"], xi=xi,
                   xi_source=source, mgf=mgf, escape_exponent=pred.escape.value,
                   regime=pred.escape.regime, kind=pred.escape.kind, boundary=pred.boundary)
        row["lambda"] = pt["lam"]
        row["diffusion"] = pred.diffusion[0, 0] if pred.diffusion is not None else "n/a"
        for k in range(cfg.d):
            row[f"drift_{k + 1}"] = pred.drift[k]
            row[f"speed_{k + 1}"] = pred.speed[k]
        rows.append(row)
    return rows


def theory_columns(d: int) -> list:
    return (["config_hash", "d", "p", "lambda", "beta", "xi", "xi_source", "mgf"]
            + [f"drift_{k + 1}" for k in range(d)] + [f"speed_{k + 1}" for k in range(d)]
            + ["diffusion", "escape_exponent", "regime", "kind", "boundary"])


def cmd_theory(cfg: RunConfig, out_dir=None) -> list:
    rows = theory_rows(cfg)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "theory.csv", theory_columns(cfg.d), rows)
    return rows


# -- simulate ---------------------------------------------------------------------


@dataclass(frozen=True)
class _Job:
    params: object
    horizon: Horizon
    times: np.ndarray
    estimators: tuple
    betas: tuple | None
    t_eval: float | None
    trap_eps: float
    header: str | None
    checkpoint_every: int


def _member_record(env, tr, job: _Job) -> dict:
    times = job.times
    avail = times <= tr.final_time
    pos = np.full((len(times), tr.d), np.nan)
    jumps = np.full(len(times), np.nan)
    ns = tr.clock_inverse_many(times[avail])
    jumps[avail] = ns
    pos[avail] = [tr.position(n) for n in ns.tolist()]
    rec = dict(beta=tr.beta, steps=tr.n, final_time=tr.final_time, terminated_by=tr.terminated_by,
               final_pos=tr.final_pos.tolist(), grid_pos=pos, grid_jumps=jumps)
    t_h = job.t_eval if job.t_eval is not None else tr.final_time
    if job.t_eval is not None:
        rec["eval_pos"] = tr.position_at(job.t_eval)
    if "histogram" in job.estimators:
        rec["histogram"] = env_histogram(tr, env, t_h)
    if "range" in job.estimators:
        rec["range"] = range_and_localtime(tr, tr.n)
    if "trap" in job.estimators and tr.beta > 0:
        rec["trap"] = trap_occupation_fraction(tr, env, t_h, job.trap_eps)
    if job.header is not None:
        buf = io.StringIO()
        tr.write_checkpoints(buf, f"{job.header} beta={tr.beta!r}")
        rec["trajectory"] = buf.getvalue()
    return rec


def _replica_job(rep, job: _Job) -> dict:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        env, walk = make_walk(job.params, rep, job.horizon, job.betas, job.checkpoint_every)
        members = walk.members if job.betas is not None else [walk]
        out = dict(index=rep.index, env_seed=rep.env_seed, walk_seed=rep.walk_seed,
                   members=[_member_record(env, tr, job) for tr in members])
        if job.betas is not None:
            common = job.times[job.times <= min(m.final_time for m in members)]
            out["violations"] = walk.monotonicity_violations(common)
    return out


def _mean_se(values):
    a = np.asarray(values, dtype=np.float64)
    mean = a.mean(axis=0)
    se = a.std(axis=0, ddof=1) / math.sqrt(len(a)) if len(a) > 1 else np.full(np.shape(mean), np.nan)
    return mean, se


def run_replicas(cfg: RunConfig, workers: int | None = None, header: str | None = None,
                 params=None) -> tuple[list, TimeGrid]:
    params = params or cfg.params()
    horizon = Horizon(max_steps=cfg.max_steps or None, max_time=cfg.max_time or None)
    grid = TimeGrid(cfg.grid_t0, cfg.grid_ratio, cfg.grid_count)
    job = _Job(params, horizon, grid.times, tuple(cfg.estimators),
               tuple(cfg.beta_list) if cfg.beta_list else None,
               cfg.max_time or None, cfg.trap_eps, header, cfg.checkpoint_every)
    out = map_replicas(_replica_job, cfg.seed, cfg.replicas, job, workers or cfg.workers)
    return out, grid


def aggregate(cfg: RunConfig, outputs: list, grid: TimeGrid, params=None) -> list:
    """Turn per-replica outputs into flat result records."""
    params = params or cfg.params()
    h = cfg.config_hash()
    base = dict(run_id=h[:12], config_hash=h, d=cfg.d, p=params.p, replicas=len(outputs),
                seed_path=f"seed={cfg.seed}/replica=0..{len(outputs) - 1}/{{env,walk}}",
                estimator_version=VERSION)
    base["lambda"] = params.lam
    rows = []

    def add(estimator, quantity, beta, grid_t, value, stderr):
        rows.append(dict(base, estimator=estimator, quantity=quantity, beta=beta, grid_t=grid_t,
                         value=value, stderr=stderr))

    n_members = len(outputs[0]["members"])
    times = grid.times
    for i in range(n_members):
        recs = [o["members"][i] for o in outputs]
        beta = recs[0]["beta"]
        common = min(int(np.searchsorted(times, r["final_time"], side="right")) for r in recs)
        gpos = np.array([r["grid_pos"][:common] for r in recs])
        if "speed" in cfg.estimators:
            if "eval_pos" in recs[0]:
                t_s, y = cfg.max_time, np.array([r["eval_pos"] for r in recs], dtype=np.float64)
            elif common:
                t_s, y = times[common - 1], gpos[:, -1, :]
            else:
                t_s = None
            if t_s is not None:
                mean, se = _mean_se(y / t_s)
                for k in range(cfg.d):
                    add("speed", f"speed_{k + 1}", beta, t_s, mean[k], se[k])
        if "exponent" in cfg.estimators:
            norms = np.sqrt((gpos**2).sum(axis=2))
            mode = cfg.exponent_mode == "limsup"
            try:
                fit = fit_exponent(times[:common], norms, mode, cfg.burn_in_decades)
                add("exponent", f"slope_{cfg.exponent_mode}", beta, fit.window[1], fit.slope, fit.stderr)
                add("exponent", f"intercept_{cfg.exponent_mode}", beta, fit.window[1], fit.intercept, None)
            except Exception as exc:  # noqa: BLE001 - degenerate windows are reported, not fatal
                add("exponent", f"slope_{cfg.exponent_mode}", beta, None, math.nan, None)
                warnings.warn(f"exponent fit skipped: {exc}", stacklevel=2)
        if "msd" in cfg.estimators:
            jumps = np.array([r["grid_jumps"][:common] for r in recs])
            t = times[:common]
            sq, sq_se = _mean_se((gpos**2).sum(axis=2) / t)
            nj, nj_se = _mean_se(jumps / t)
            outer, outer_se = _mean_se(gpos[:, :, :, None] * gpos[:, :, None, :] / t[None, :, None, None])
            for j in range(common):
                add("msd", "msd", beta, t[j], sq[j], sq_se[j])
                add("msd", "jumps", beta, t[j], nj[j], nj_se[j])
                for a in range(cfg.d):
                    for b in range(cfg.d):
                        add("msd", f"second_moment_{a + 1}_{b + 1}", beta, t[j], outer[j, a, b], outer_se[j, a, b])
        if "histogram" in cfg.estimators:
            width = max(len(r["histogram"]) for r in recs)
            H = np.zeros((len(recs), width))
            for k, r in enumerate(recs):
                H[k, : len(r["histogram"])] = r["histogram"]
            mean, se = _mean_se(H)
            for c in range(width):
                add("histogram", f"mass_{c}", beta, cfg.max_time or None, mean[c], se[c])
        if "range" in cfg.estimators:
            rng_, loc = zip(*(r["range"] for r in recs))
            m, s = _mean_se(rng_)
            add("range", "range", beta, None, m, s)
            m, s = _mean_se(loc)
            add("range", "max_local_time", beta, None, m, s)
        if "trap" in cfg.estimators and "trap" in recs[0]:
            m, s = _mean_se([r["trap"] for r in recs])
            add("trap", "fraction", beta, cfg.max_time or None, m, s)
    if "violations" in outputs[0]:
        add("coupling", "violations", None, None, sum(o["violations"] for o in outputs), None)
    return rows


def summary_rows(cfg: RunConfig, outputs: list) -> list:
    rows = []
    for o in outputs:
        for r in o["members"]:
            row = dict(replica=o["index"], beta=r["beta"], env_seed=o["env_seed"], walk_seed=o["walk_seed"],
                       steps=r["steps"], final_time=r["final_time"], terminated_by=r["terminated_by"])
            for k, v in enumerate(r["final_pos"]):
                row[f"x_{k + 1}"] = v
            rows.append(row)
    return rows


def cmd_simulate(cfg: RunConfig, out_dir=None, workers: int | None = None) -> list:
    """Run the replicas, write result records and summaries, return the records."""
    started = time.perf_counter()
    h = cfg.config_hash()
    header = f"config_hash={h}" if cfg.write_trajectories else None
    outputs, grid = run_replicas(cfg, workers, header)
    rows = aggregate(cfg, outputs, grid)
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "results.csv", RESULT_COLUMNS, rows)
    write_csv(out / "summary.csv",
              ["replica", "beta", "env_seed", "walk_seed", "steps", "final_time", "terminated_by"]
              + [f"x_{k + 1}" for k in range(cfg.d)], summary_rows(cfg, outputs))
    if cfg.write_trajectories:
        tdir = out / "trajectories"
        tdir.mkdir(exist_ok=True)
        for o in outputs:
            for i, r in enumerate(o["members"]):
                suffix = f"_m{i}" if len(o["members"]) > 1 else ""
                (tdir / f"replica_{o['index']:04d}{suffix}.traj").write_text(r["trajectory"])
    (out / "timing.json").write_text(json.dumps({"wall_time_s": time.perf_counter() - started,
                                                 "workers": workers or cfg.workers}) + "\n")
    return rows


# -- sweep ------------------------------------------------------------------------------


def sweep_columns(d: int) -> list:
    return (["config_hash", "d", "p", "lambda", "beta", "xi", "mgf", "regime", "kind", "theory_exponent"]
            + [f"theory_speed_{k + 1}" for k in range(d)] + [f"speed_{k + 1}" for k in range(d)]
            + [f"speed_stderr_{k + 1}" for k in range(d)] + ["exponent", "exponent_stderr", "replicas"])


def cmd_sweep(cfg: RunConfig, out_dir=None, workers: int | None = None) -> list:
    points = sweep_points(cfg)
    if len(points) > cfg.max_sweep_points:
        raise ConfigError(f"sweep has {len(points)} points, budget is max_sweep_points={cfg.max_sweep_points}")
    inputs = _TheoryInputs(cfg)
    h = cfg.config_hash()
    table = []
    for pt in points:
        point_cfg = cfg.replace(p=pt["p"], lam=pt["lam"], beta=pt["beta"], beta_list=[],
                                estimators=["speed", "exponent"])
        params = point_cfg.params()
        outputs, grid = run_replicas(point_cfg, workers, params=params)
        recs = {(r["estimator"], r["quantity"]): r for r in aggregate(point_cfg, outputs, grid, params)}
        xi, _, mgf = inputs(pt["p"], pt["beta"])
        try:
            pred = theory.predict(params, xi=xi, mgf=mgf)
        except (ValueError, NotApplicable):
            pred = None
        row = dict(config_hash=h, d=cfg.d, p=pt["p"], beta=pt["beta"], xi=xi, mgf=mgf,
                   replicas=cfg.replicas)
        row["lambda"] = pt["lam"]
        if pred is not None:
            row.update(regime=pred.escape.regime, kind=pred.escape.kind, theory_exponent=pred.escape.value)
            for k in range(cfg.d):
                row[f"theory_speed_{k + 1}"] = pred.speed[k]
        for k in range(cfg.d):
            r = recs.get(("speed", f"speed_{k + 1}"))
            if r is not None:
                row[f"speed_{k + 1}"] = r["value"]
                row[f"speed_stderr_{k + 1}"] = r["stderr"]
        r = recs.get(("exponent", f"slope_{cfg.exponent_mode}"))
        if r is not None:
            row["exponent"] = r["value"]
            row["exponent_stderr"] = r["stderr"]
        table.append(row)
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "sweep.csv", sweep_columns(cfg.d), table)
    return table
