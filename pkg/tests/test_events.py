import hashlib
import math

import numpy as np
import pytest
from scipy import stats

from kacchaos.events import EventAtom, EventLog, EventStream, fork_independent_copy, next_event, restrict
from kacchaos.laws import InteractionLaw

KAC = InteractionLaw.kac()


def test_two_particles_both_orders():
    log = EventStream(2, KAC, 11).take(100_000)
    assert set(zip(log.i_idx, log.j_idx)) == {(0, 1), (1, 0)}
    frac = np.mean(log.i_idx == 0)
    assert abs(frac - 0.5) <= 3 * math.sqrt(0.25 / len(log))


def test_mean_interarrival():
    log = EventStream(10, KAC, 12).take(100_000)
    gaps = np.diff(np.concatenate([[0.0], log.t]))
    assert abs(gaps.mean() - 0.2) <= 3 * gaps.std() / math.sqrt(len(gaps))


def test_fraction_touching_one_particle():
    log = EventStream(10, KAC, 13).take(100_000)
    hit = (log.i_idx == 0) | (log.j_idx == 0)
    assert abs(hit.mean() - 0.2) <= 3 * math.sqrt(0.16 / len(log))


def test_next_event_matches_batch():
    a = EventStream(7, KAC, 5)
    b = EventStream(7, KAC, 5)
    atoms = [next_event(a) for _ in range(300)]
    log = b.take(300)
    assert [tuple(x) for x in atoms] == [tuple(x) for x in log]
    assert a.clock == atoms[-1].t


def test_atoms_in_pair_set_and_increasing():
    log = EventStream(5, KAC, 3).take(20_000)
    assert np.all(np.diff(log.t) > 0)
    assert np.all(log.i_idx != log.j_idx)
    assert np.all((log.rho >= 0) & (log.rho < 5) & (log.sigma >= 0) & (log.sigma < 5))


def test_take_until_splits_consistently():
    a = EventStream(20, KAC, 9)
    first = a.take_until(3.0)
    second = a.take_until(7.0)
    whole = EventStream(20, KAC, 9).take_until(7.0)
    assert np.all(first.t <= 3.0) and np.all(second.t > 3.0)
    assert np.array_equal(np.concatenate([first.t, second.t]), whole.t)


def test_poisson_count_chi_square():
    n, t, reps = 6, 2.0, 2000
    counts = np.array([len(EventStream(n, KAC, 100, stream_id=r).take_until(t)) for r in range(reps)])
    lam = n * t / 2
    edges = np.arange(0, 15)
    obs = np.array([np.sum(counts == k) for k in edges[:-1]] + [np.sum(counts >= edges[-1])])
    probs = np.append(stats.poisson.pmf(edges[:-1], lam), stats.poisson.sf(edges[-1] - 1, lam))
    keep = probs * reps >= 5
    obs_k = np.append(obs[keep], obs[~keep].sum())
    exp_k = np.append(probs[keep], probs[~keep].sum()) * reps
    assert stats.chisquare(obs_k, exp_k).pvalue > 0.01


def test_pairs_uniform_chi_square():
    n = 8
    log = EventStream(n, KAC, 21).take(56_000)
    cells = log.i_idx * n + log.j_idx
    obs = np.bincount(cells, minlength=n * n)
    obs = obs[[i * n + j for i in range(n) for j in range(n) if i != j]]
    assert stats.chisquare(obs).pvalue > 0.01


def test_fractional_parts_uniform_and_independent():
    log = EventStream(10, KAC, 22).take(50_000)
    frac = log.rho - log.i_idx
    assert stats.kstest(frac, "uniform").pvalue > 0.01
    assert stats.spearmanr(frac, log.i_idx).pvalue > 0.01
    assert stats.spearmanr(log.sigma - log.j_idx, log.j_idx).pvalue > 0.01


def test_digest_reproducible():
    a = EventStream(10, KAC, 31, stream_id=4).take(10_000)
    b = EventStream(10, KAC, 31, stream_id=4).take(10_000)
    c = EventStream(10, KAC, 31, stream_id=5).take(10_000)
    assert a.digest() == b.digest() != c.digest()
    assert a.digest() == hashlib.sha256(a.to_bytes()).hexdigest()


def test_byte_roundtrip(tmp_path):
    log = EventStream(4, KAC, 1).take(100)
    path = tmp_path / "log.bin"
    log.dump(path)
    blob = path.read_bytes()
    assert len(blob) == 100 * 7 * 8
    back = EventLog.from_bytes(4, blob)
    assert back.digest() == log.digest()
    first = np.frombuffer(blob[:8], "<f8")[0]
    assert first == log.t[0]


def test_restricted_view_two_particles():
    log = EventStream(2, KAC, 2).take(500)
    view = list(restrict(log, 0))
    assert len(view) == len(log)
    assert all(1.0 <= tau < 2.0 for *_, tau in view)


def test_restricted_view_sides():
    atom = EventAtom(0.1, (1.0, 2.0, 3.0, 4.0), 2.25, 4.75)
    log = EventLog.from_atoms(6, [atom])
    assert list(log.restrict(2)) == [(0.1, 1.0, 2.0, 4.75)]
    assert list(log.restrict(4)) == [(0.1, 3.0, 4.0, 2.25)]
    assert list(log.restrict(0)) == []


def test_views_count_each_atom_twice():
    n = 7
    log = EventStream(n, KAC, 3).take(3000)
    assert sum(len(log.restrict(i)) for i in range(n)) == 2 * len(log)
    for i in range(n):
        assert all(not (i <= tau < i + 1) for *_, tau in log.restrict(i))


def test_view_partner_uniform():
    log = EventStream(10, KAC, 44).take(100_000)
    partners = np.array([int(tau) for *_, tau in log.restrict(0)])
    obs = np.bincount(partners, minlength=10)
    assert obs[0] == 0
    assert stats.chisquare(obs[1:]).pvalue > 0.01


def test_per_particle_rate_one():
    t = 2000.0
    log = EventStream(10, KAC, 45).take_until(t)
    k = len(log.restrict(3))
    assert abs(k - t) <= 3 * math.sqrt(t)


def test_fork_independent_copy():
    s = EventStream(10, KAC, 7)
    c = fork_independent_copy(s)
    assert c.stream_id != s.stream_id and c.n_particles == s.n_particles and c.rate == s.rate
    a, b = s.take(100), c.take(100)
    assert not np.array_equal(a.t, b.t)


def test_fork_first_arrivals_uncorrelated():
    pairs = []
    for r in range(10_000):
        s = EventStream(4, KAC, 8, stream_id=r)
        c = s.fork_independent_copy()
        pairs.append((s.peek_time(), c.peek_time()))
    x, y = np.array(pairs).T
    corr = np.corrcoef(x, y)[0, 1]
    assert abs(corr) <= 3 / math.sqrt(len(x))


def test_nanbu_stream_rate():
    s = EventStream.for_nanbu(10, KAC, 1)
    assert s.rate == 10
    log = s.take(50_000)
    gaps = np.diff(np.concatenate([[0.0], log.t]))
    assert gaps.mean() == pytest.approx(0.1, rel=0.02)
