import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from kacchaos.coupling import g_coupling, run_coupled, run_decoupled, sup_distance_statistic
from kacchaos.events import EventAtom, EventLog, EventStream
from kacchaos.laws import InitialLaw, InteractionLaw
from kacchaos.metrics import w_p_sorted, wpp_vs
from kacchaos.particles import run_bird
from kacchaos.reference import FixedPool, PoolProvider, ReferencePool, build_pool

KAC = InteractionLaw.kac()
W7 = InteractionLaw.wealth(0.7)
G01 = InitialLaw.gaussian(0.0, 1.0)
ONE = InitialLaw.point_mass(1.0)


def _pool(vals):
    return ReferencePool(0.0, vals, "wild")


def test_g_identity_when_laws_agree():
    x = [99.0, 0.0, 10.0]  # particle 0 is left out
    pool = _pool([0.0, 10.0])
    for f in (0.01, 0.5, 0.99):
        assert g_coupling(x, 0, 1 + f, pool) == 0.0
        assert g_coupling(x, 0, 2 + f, pool) == 10.0


def test_g_monotone_pairing_cost():
    x = [99.0, 0.0, 10.0]
    pool = _pool([1.0, 11.0])
    cost = np.mean([abs(g_coupling(x, 0, j + 0.5, pool) - x[j]) for j in (1, 2)])
    # brute force over the two pairings: identity costs 1, crossed costs 10
    assert cost == 1.0


def test_g_tie_break_by_index():
    x = [123.0, 5.0, 5.0, 7.0]
    pool = ReferencePool(0.0, np.arange(1, 1001) / 1000.0, "wild")
    assert g_coupling(x, 0, 2.5, pool) == pool_q(pool, 0.5)
    assert g_coupling(x, 0, 1.5, pool) == pool_q(pool, 0.5 / 3)


def pool_q(pool, u):
    return pool.quantile_scalar(u)


def test_g_rejects_own_cell():
    with pytest.raises(ValueError):
        g_coupling([1.0, 2.0, 3.0], 1, 1.5, _pool([0.0]))
    with pytest.raises(ValueError):
        g_coupling([1.0, 2.0, 3.0], 1, 3.0, _pool([0.0]))


def test_g_analytic_pool_median():
    pool = build_pool(KAC, G01, 0.0, 8, None)
    assert g_coupling([0.0, -1.0, 1.0], 0, 1.999999, pool) < 0 < g_coupling([0.0, -1.0, 1.0], 0, 2.5, pool)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 12), st.integers(0, 10**6), st.sampled_from([1, 2]))
def test_g_average_cost_equals_exact_distance(n, seed, p):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n + 1)
    pool = _pool(rng.normal(size=n))  # pool size = number of others
    i = int(rng.integers(0, n + 1))
    others = [j for j in range(n + 1) if j != i]
    f = float(rng.uniform(0.01, 0.99))
    cost = np.mean([abs(g_coupling(x, i, j + f, pool) - x[j]) ** p for j in others])
    assert cost == pytest.approx(w_p_sorted(x[others], pool.samples, p) ** p, rel=1e-12, abs=1e-15)


def test_g_tau_average_recovers_pool_moments():
    rng = np.random.default_rng(1)
    n = 21
    x = rng.normal(size=n)
    pool = _pool(rng.exponential(size=4000))
    taus = [j + f for j in range(1, n) for f in rng.random(200)]
    g = np.array([g_coupling(x, 0, tau, pool) for tau in taus])
    for phi, target in [(g, pool.samples.mean()), (g ** 2, np.mean(pool.samples ** 2))]:
        assert abs(phi.mean() - target) <= 3 * phi.std() / math.sqrt(len(phi))


def test_fixed_point_coupling_is_exact():
    prov = PoolProvider(W7, ONE, 64)
    run = run_coupled(W7, ONE, 30, 2.0, EventStream(30, W7, 1), prov)
    assert np.all(run.u[-1] == 1.0)
    assert sup_distance_statistic(run) == 0.0


def test_single_atom_hand_trace():
    rot = InteractionLaw.kac(math.pi / 2)
    log = EventLog.from_atoms(2, [EventAtom(0.5, (0.0, -1.0, 0.0, 1.0), 0.3, 1.5)])
    run = run_coupled(rot, None, 2, 1.0, log, FixedPool(_pool([3.5])), x0=[3.0, 4.0])
    assert run.x[-1].tolist() == [-4.0, 3.0]
    assert run.u[-1].tolist() == [-3.5, 3.5]
    # with pools equal to the leave-one-out states the coupled pair tracks X exactly
    assert g_coupling([3.0, 4.0], 0, 1.5, _pool([4.0])) == 4.0
    assert g_coupling([3.0, 4.0], 1, 0.3, _pool([3.0])) == 3.0


def test_x_marginal_bit_identical_to_bird():
    law, p0 = W7, InitialLaw.exponential(1)
    prov = PoolProvider(law, p0, 2048, seed=2)
    grid = [0.25, 0.5, 1.0]
    run = run_coupled(law, p0, 40, 1.0, EventStream(40, law, 17), prov, grid)
    bird = run_bird(law, p0, 40, 1.0, EventStream(40, law, 17), grid)
    for xs, (_, ens) in zip(run.x, bird):
        assert np.array_equal(xs, ens.states)
    assert run.collision_count == len(EventStream(40, law, 17).take_until(1.0))


def test_tracked_subset_matches_full_run():
    law, p0 = W7, InitialLaw.exponential(1)
    prov = PoolProvider(law, p0, 2048, seed=2)
    full = run_coupled(law, p0, 40, 1.0, EventStream(40, law, 5), prov)
    part = run_coupled(law, p0, 40, 1.0, EventStream(40, law, 5), prov, track=[0, 7])
    assert part.u[-1][0] == full.u[-1][0] and part.u[-1][7] == full.u[-1][7]


def test_u_has_nonlinear_marginal():
    n, reps = 50, 400
    prov = PoolProvider(KAC, G01, 1 << 14)
    u = np.concatenate([run_coupled(KAC, G01, n, 1.0, EventStream(n, KAC, 3, r), prov).u[-1]
                        for r in range(reps)])
    wild = build_pool(KAC, G01, 1.0, 1 << 15, np.random.default_rng(11), source="wild")
    assert wpp_vs(u, wild, 1) <= 0.05


def test_pairs_exchangeable():
    law, p0 = W7, InitialLaw.exponential(1)
    prov = PoolProvider(law, p0, 4096, seed=1)
    d0, d1 = [], []
    for r in range(300):
        run = run_coupled(law, p0, 16, 1.0, EventStream(16, law, 8, r), prov, track=[0, 1])
        d0.append(run.x[-1][0] - run.u[-1][0])
        d1.append(run.x[-1][1] - run.u[-1][1])
    assert stats.ks_2samp(d0, d1).pvalue > 0.01


def test_coupling_distance_decreases_with_n():
    law, p0 = W7, InitialLaw.exponential(1)
    prov = PoolProvider(law, p0, 1 << 15, seed=4)
    means = []
    for n in (16, 64, 256):
        vals = [run_coupled(law, p0, n, 1.0, EventStream(n, law, 2, r), prov).distance()
                for r in range(60)]
        means.append(np.mean(vals))
    assert means[0] > means[1] > means[2]


def test_decoupled_fixed_point():
    prov = PoolProvider(W7, ONE, 64)
    s = EventStream(10, W7, 1)
    run = run_decoupled(W7, ONE, 10, 3, 2.0, s, s.fork_independent_copy(), prov)
    assert np.all(run.u[-1] == 1.0) and np.all(run.v[-1] == 1.0)
    assert run.distance() == 0.0


def test_decoupled_pair_uncorrelated():
    law, p0 = InteractionLaw.kac(), G01
    prov = PoolProvider(law, p0, 1024)
    v1, v2 = [], []
    for r in range(1000):
        s = EventStream(2, law, 12, r)
        run = run_decoupled(law, p0, 2, 2, 1.0, s, s.fork_independent_copy(), prov)
        v1.append(run.v[-1][0])
        v2.append(run.v[-1][1])
    corr = np.corrcoef(v1, v2)[0, 1]
    assert abs(corr) <= 3 / math.sqrt(1000)


def test_decoupled_block_zero_does_not_depend_on_other_blocks():
    law, p0 = W7, InitialLaw.exponential(1)
    prov = PoolProvider(law, p0, 2048, seed=3)
    s1 = EventStream(24, law, 6)
    one = run_decoupled(law, p0, 24, 3, 1.0, s1, s1.fork_independent_copy(), prov)
    s2 = EventStream(24, law, 6)
    many = run_decoupled(law, p0, 24, 3, 1.0, s2, s2.fork_independent_copy(), prov, blocks=8)
    assert many.blocks == 8 and len(many.v[-1]) == 24
    assert np.array_equal(one.v[-1], many.v[-1][:3])
    assert np.array_equal(one.u[-1], many.u[-1][:3])


def test_decoupled_u_matches_coupled_u():
    law, p0 = W7, InitialLaw.exponential(1)
    prov = PoolProvider(law, p0, 2048, seed=3)
    s = EventStream(20, law, 9)
    dec = run_decoupled(law, p0, 20, 2, 1.0, s, s.fork_independent_copy(), prov)
    cpl = run_coupled(law, p0, 20, 1.0, EventStream(20, law, 9), prov)
    assert np.array_equal(dec.u[-1], cpl.u[-1][:2])


def test_decoupled_rejects_bad_k():
    s = EventStream(4, W7, 0)
    with pytest.raises(ValueError):
        run_decoupled(W7, ONE, 4, 5, 1.0, s, s.fork_independent_copy(), PoolProvider(W7, ONE, 8))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([KAC, W7]))
def test_sup_dominates_terminal(seed, law):
    p0 = G01 if law is KAC else InitialLaw.exponential(1)
    prov = PoolProvider(law, p0, 512, step=0.05, seed=seed)
    run = run_coupled(law, p0, 12, 1.0, EventStream(12, law, seed), prov, [0.5, 1.0])
    term = np.abs(run.x[-1] - run.u[-1]) ** law.p
    assert np.all(run.sup[-1] >= term)
    assert np.all(run.sup[-1] >= run.sup[0])
    assert sup_distance_statistic(run) == run.sup[-1][0]


def test_path_recording():
    prov = PoolProvider(W7, InitialLaw.exponential(1), 512)
    run = run_coupled(W7, InitialLaw.exponential(1), 8, 2.0, EventStream(8, W7, 1), prov,
                      record_path=True)
    times = [p[0] for p in run.path]
    assert times == sorted(times) and len(times) > 0
    assert run.path[-1][1] == run.x[-1][0] and run.path[-1][2] == run.u[-1][0]
