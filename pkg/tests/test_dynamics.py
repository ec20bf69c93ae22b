import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trapwalk import theory
from trapwalk.dynamics import (Horizon, build_kernel, clock_inverse, jump_rate, log_jump_rate, position_at,
                               simulate, simulate_coupled)
from trapwalk.env import Environment, Params
from trapwalk.errors import HorizonOverflow, OutOfHorizon


def walk(lam=1.0, beta=0.5, p=0.3, steps=None, time=None, seed=1, k=1024, d=1):
    ell = (1.0,) + (0.0,) * (d - 1)
    env = Environment(Params(d=d, p=p, lam=lam, beta=beta, ell=ell, seed=seed))
    return simulate(env, build_kernel(lam, ell), Horizon(steps, time), rng_seed=seed + 100, checkpoint_every=k)


# -- kernel and rates ----------------------------------------------------------------


def test_kernel_two_dimensional_values():
    k = build_kernel(1.0, (1.0, 0.0))
    z = math.e + 1 / math.e + 2
    assert np.allclose(k.probs, [math.e / z, 1 / (math.e * z), 1 / z, 1 / z], atol=1e-15)
    assert k.cum[-1] == 1.0
    assert k.log_norm == pytest.approx(-math.log(z), abs=1e-14)


def test_kernel_sampling_frequencies():
    k = build_kernel(0.7, (0.6, 0.8))
    u = np.random.default_rng(0).random(400_000)
    freq = np.bincount(k.sample(u), minlength=4) / len(u)
    assert np.allclose(freq, k.probs, atol=0.003)


def test_kernel_rejects_non_unit_direction():
    with pytest.raises(ValueError):
        build_kernel(1.0, (1.0, 1.0))


def test_jump_rate_formula():
    params = Params(p=0.4, lam=0.8, beta=1.3, seed=3)
    env = Environment(params)
    for x in range(-20, 20):
        c = env.cluster_size((x,))
        expect = math.exp(0.8 - 1.3 * c) / (math.exp(0.8) + math.exp(-0.8))
        assert jump_rate(env, params, (x,), (1,)) == pytest.approx(expect, rel=1e-13)
    with pytest.raises(ValueError):
        log_jump_rate(env, params, (0,), (2,))


@settings(max_examples=60, deadline=None)
@given(d=st.integers(1, 3), lam=st.floats(0, 3), beta=st.floats(0, 4), p=st.floats(0.05, 0.25),
       seed=st.integers(0, 2**40), x=st.lists(st.integers(-30, 30), min_size=3, max_size=3),
       axis=st.integers(0, 2), sign=st.sampled_from([-1, 1]))
def test_detailed_balance(d, lam, beta, p, seed, x, axis, sign):
    ell = tuple(np.ones(d) / math.sqrt(d))
    params = Params(d=d, p=p, lam=lam, beta=beta, ell=ell, seed=seed)
    env = Environment(params)
    x = x[:d]
    e = [0] * d
    e[axis % d] = sign
    y = [a + b for a, b in zip(x, e)]
    lhs = theory.mu_weight(env, params, x) + log_jump_rate(env, params, x, e)
    rhs = theory.mu_weight(env, params, y) + log_jump_rate(env, params, y, [-v for v in e])
    assert abs(lhs - rhs) < 1e-12


# -- trajectories ------------------------------------------------------------------


def test_steps_horizon_and_skeleton_moves():
    tr = walk(steps=5000, k=256)
    assert tr.n == 5000 and tr.terminated_by == "steps"
    xs = np.array([tr.position(n) for n in range(5001)])
    assert (np.abs(np.diff(xs[:, 0])) == 1).all()
    assert (tr.final_pos == xs[-1]).all()


def test_time_horizon_flags_time():
    tr = walk(steps=10**7, time=2000.0)
    assert tr.terminated_by == "time"
    assert tr.final_time >= 2000.0 > tr.jump_time(tr.n - 1)


def test_clock_inverse_definition():
    tr = walk(steps=3000, k=128)
    rng = np.random.default_rng(5)
    for t in rng.uniform(0, tr.final_time, 200):
        n = clock_inverse(tr, t)
        assert tr.jump_time(n) <= t
        if n < tr.n:
            assert t < tr.jump_time(n + 1)
        assert (position_at(tr, t) == tr.position(n)).all()
    assert clock_inverse(tr, 0.0) == 0
    with pytest.raises(OutOfHorizon):
        tr.clock_inverse(tr.final_time * 1.01)
    with pytest.raises(OutOfHorizon):
        tr.position(tr.n + 1)


def test_jump_times_use_trap_weights():
    tr = walk(steps=2000, beta=0.7, k=100)
    blk = tr.block(3)
    assert np.allclose(blk.hold, blk.eps * np.exp(0.7 * blk.C), rtol=1e-15)
    assert (np.diff(blk.S) > 0).all()
    c = Environment(Params(p=0.3, lam=1.0, beta=0.7, seed=1)).cluster_sizes(blk.X)
    assert (c == blk.C).all()


def test_results_do_not_depend_on_replay_cache():
    a = walk(steps=20_000, k=512)
    b = walk(steps=20_000, k=512)
    ts = np.linspace(0, a.final_time, 50)
    first = a.positions_at(ts)
    for blk in list(a._blocks):
        a._blocks.pop(blk)
    assert (a.positions_at(ts[::-1])[::-1] == first).all()
    assert (b.positions_at(ts) == first).all()
    assert a.final_time == b.final_time


def test_checkpoint_records():
    tr = walk(steps=3000, k=1000)
    buf = io.StringIO()
    tr.write_checkpoints(buf, "config_hash=abc")
    lines = buf.getvalue().splitlines()
    assert lines[0] == "# config_hash=abc"
    recs = [line.split() for line in lines[1:]]
    assert [int(r[0]) for r in recs] == [0, 1000, 2000, 3000]
    for r in recs:
        n = int(r[0])
        assert float(r[1]) == tr.jump_time(n)
        assert int(r[2]) == tr.position(n)[0]


def test_overflow_is_reported():
    with pytest.raises(HorizonOverflow):
        walk(p=0.9, beta=400.0, steps=5000)


def test_speed_rough_check():
    tr = walk(lam=1.0, beta=0.0, steps=100_000)
    assert tr.final_pos[0] / 100_000 == pytest.approx(math.tanh(1.0), abs=0.01)
    assert tr.final_time / 100_000 == pytest.approx(1.0, abs=0.01)


def test_two_dimensional_walk_runs():
    tr = walk(d=2, p=0.4, lam=0.5, beta=0.3, steps=5000)
    assert tr.final_pos.shape == (2,)
    assert np.abs(tr.final_pos).sum() <= 5000


# -- coupling -------------------------------------------------------------------------


def coupled(betas, steps=30_000, seed=4, lam=1.0):
    env = Environment(Params(p=0.3, lam=lam, seed=seed))
    return env, simulate_coupled(env, build_kernel(lam, (1.0,)), betas, Horizon(max_steps=steps), rng_seed=seed)


def test_coupled_clock_inverse_ordered_in_beta():
    _, cs = coupled((0.0, 0.6, 1.2, 2.4))
    t_max = min(m.final_time for m in cs.members)
    times = np.geomspace(0.01, t_max, 2000)
    table = cs.clock_inverse_table(times)
    assert (np.diff(table, axis=0) <= 0).all()
    assert cs.monotonicity_violations(times) == 0


def test_coupled_jump_times_ordered_exactly():
    _, cs = coupled((0.3, 0.0, 1.0))
    s = np.array([[m.jump_time(n) for n in range(0, 30_001, 7)] for m in cs.members])
    assert (s[1] <= s[0]).all() and (s[0] <= s[2]).all()


def test_coupled_member_equals_standalone_run():
    env, cs = coupled((0.0, 0.9))
    alone = simulate(Environment(env.params), build_kernel(1.0, (1.0,)), Horizon(max_steps=30_000),
                     rng_seed=4, beta=0.9)
    member = cs[1]
    assert member.final_time == alone.final_time
    assert (member.final_pos == alone.final_pos).all()
    assert member.checkpoints[1].tolist() == alone.checkpoints[1].tolist()


def test_coupled_members_share_skeleton():
    _, cs = coupled((0.0, 2.0), steps=5000)
    assert all((cs[0].position(n) == cs[1].position(n)).all() for n in range(0, 5001, 97))
