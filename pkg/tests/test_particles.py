import math

import numpy as np
import pytest

from kacchaos.events import EventAtom, EventLog, EventStream
from kacchaos.laws import InitialLaw, InteractionLaw
from kacchaos.particles import apply_collision, new_ensemble, run_bird, run_nanbu

KAC = InteractionLaw.kac()
ROT = InteractionLaw.kac(math.pi / 2)
W7 = InteractionLaw.wealth(0.7)


def _rot_atom(t=0.5, rho=0.4, sigma=1.6):
    return EventAtom(t, (0.0, -1.0, 0.0, 1.0), rho, sigma)


def test_quarter_turn_collision():
    ens = new_ensemble(ROT, [3.0, 4.0])
    apply_collision(ens, _rot_atom())
    assert ens.states.tolist() == [-4.0, 3.0]
    assert ens.conserved_sum() == 25.0
    assert ens.collision_count == 1 and ens.time == 0.5


def test_wealth_collision():
    ens = new_ensemble(W7, [10.0, 0.0])
    apply_collision(ens, EventAtom(0.1, (0.7, 0.3, 0.7, 0.3), 0.2, 1.9))
    assert ens.states == pytest.approx([7.0, 3.0])
    assert ens.states.sum() == 10.0


def test_other_states_untouched():
    x = np.array([0.1, 0.2, 0.3, 0.4, 0.5]) * math.pi
    ens = new_ensemble(KAC, x)
    apply_collision(ens, EventAtom(1.0, (0.6, -0.8, 0.6, 0.8), 1.5, 3.5))
    for k in (0, 2, 4):
        assert ens.states[k] == x[k]


def test_out_of_order_atom_rejected():
    ens = new_ensemble(ROT, [3.0, 4.0])
    apply_collision(ens, _rot_atom(t=1.0))
    with pytest.raises(ValueError):
        apply_collision(ens, _rot_atom(t=0.5))


def test_tracker_follows_sum():
    log = EventStream(30, KAC, 4).take(2000)
    ens = new_ensemble(KAC, np.random.default_rng(0).normal(size=30))
    start = ens.conserved_tracker
    for atom in log:
        apply_collision(ens, atom)
    assert ens.conserved_tracker == pytest.approx(ens.conserved_sum(), rel=1e-12)
    assert ens.conserved_tracker == pytest.approx(start, rel=1e-9)


def test_fixed_point_stays_one():
    n = 50
    snaps = run_bird(W7, InitialLaw.point_mass(1.0), n, 3.0, EventStream(n, W7, 1), [1.0, 3.0])
    for _, ens in snaps:
        assert np.all(ens.states == 1.0)


def test_kac_second_moment_constant():
    n = 200
    snaps = run_bird(KAC, InitialLaw.uniform(-1, 2), n, 5.0, EventStream(n, KAC, 2),
                     np.linspace(0, 5, 11))
    s0 = snaps[0][1].conserved_sum()
    for _, ens in snaps:
        assert abs(ens.conserved_sum() - s0) / s0 < 1e-9


def test_wealth_sum_conserved_and_nonnegative():
    n = 1000
    law = InteractionLaw.wealth(("uniform", 0.1, 0.9))
    snaps = run_bird(law, InitialLaw.exponential(1.0), n, 200.0, EventStream(n, law, 3), [0, 200.0])
    (_, a), (_, b) = snaps
    assert b.collision_count > 99_000
    assert abs(b.states.sum() - a.states.sum()) / a.states.sum() < 1e-9
    assert np.all(b.states >= 0)


def test_collision_count_statistics():
    counts = [run_bird(KAC, InitialLaw.gaussian(), 100, 2.0, EventStream(100, KAC, 5, r))[-1][1]
              .collision_count for r in range(200)]
    assert abs(counts[0] - 100) <= 30
    assert abs(np.mean(counts) - 100) <= 3 * np.std(counts) / math.sqrt(200)


def test_snapshots_are_left_limits():
    atom = _rot_atom(t=1.0)
    log = EventLog.from_atoms(2, [atom])
    snaps = run_bird(ROT, None, 2, 2.0, log, [1.0, 2.0], x0=[3.0, 4.0])
    assert snaps[0][1].states.tolist() == [3.0, 4.0]
    assert snaps[1][1].states.tolist() == [-4.0, 3.0]


def test_replay_requires_initial_states():
    log = EventStream(3, KAC, 0).take(5)
    with pytest.raises(ValueError):
        run_bird(KAC, InitialLaw.gaussian(), 3, 1.0, log)


def test_overflow_reports_atom():
    law = InteractionLaw.table([(1.0, (1e200, 1e200, 1e200, 1e200))])
    log = EventStream(3, law, 0).take(10)
    with pytest.raises(OverflowError, match="atom 1"):
        run_bird(law, None, 3, float(log.t[-1]) + 1, log, x0=[1.0, 1.0, 1.0])


def test_exchangeability_under_relabelling():
    n = 4
    perm = np.array([2, 0, 3, 1])  # new label of old particle k is perm[k]
    rng = np.random.default_rng(7)
    x0 = rng.normal(size=n)
    log = EventStream(n, KAC, 9).take(400)
    t_end = float(log.t[-1]) + 1.0
    base = run_bird(KAC, None, n, t_end, log, x0=x0)[-1][1].states

    rho = perm[log.i_idx] + (log.rho - log.i_idx)
    sigma = perm[log.j_idx] + (log.sigma - log.j_idx)
    relabelled = EventLog(n, log.t, log.alpha, rho, sigma)
    y0 = np.empty(n)
    y0[perm] = x0
    moved = run_bird(KAC, None, n, t_end, relabelled, x0=y0)[-1][1].states
    assert np.array_equal(moved[perm], base)


def test_nanbu_single_atom():
    atom = EventAtom(0.5, (0.0, -1.0, 0.0, 1.0), 0.25, 1.5)
    log = EventLog.from_atoms(2, [atom], rate=2.0)
    out = run_nanbu(ROT, None, 2, 1.0, log, x0=[3.0, 4.0])
    assert out[-1][1].states.tolist() == [-4.0, 4.0]


def test_nanbu_rejects_bird_rate_stream():
    with pytest.raises(ValueError):
        run_nanbu(KAC, InitialLaw.gaussian(), 10, 1.0, EventStream(10, KAC, 0))


def test_nanbu_fixed_point():
    snaps = run_nanbu(W7, InitialLaw.point_mass(1.0), 40, 2.0, EventStream.for_nanbu(40, W7, 1))
    assert np.all(snaps[-1][1].states == 1.0)


def test_nanbu_variance_matches_bird():
    n, reps = 50, 200
    p0 = InitialLaw.gaussian()
    bird = [np.var(run_bird(KAC, p0, n, 2.0, EventStream(n, KAC, 1, r))[-1][1].states)
            for r in range(reps)]
    nanbu = [np.var(run_nanbu(KAC, p0, n, 2.0, EventStream.for_nanbu(n, KAC, 2, r))[-1][1].states)
             for r in range(reps)]
    se = math.hypot(np.std(bird), np.std(nanbu)) / math.sqrt(reps)
    assert abs(np.mean(bird) - np.mean(nanbu)) <= 3 * se


def test_mean_field_moment_decay():
    # E sum x^2 / N = M_2(P_0) exp(-c(2) t) when the cross moment vanishes on a centred law
    law = InteractionLaw.table([(0.5, (0.6, 0.5, 0.6, -0.5)), (0.5, (0.6, -0.5, 0.6, 0.5))], p=2)
    n, t, reps = 100, 1.0, 200
    vals = [np.mean(run_bird(law, InitialLaw.gaussian(), n, t, EventStream(n, law, 6, r))[-1][1]
                    .states ** 2) for r in range(reps)]
    target = math.exp(-law.c(2) * t)
    assert abs(np.mean(vals) - target) <= 3 * np.std(vals) / math.sqrt(reps)
