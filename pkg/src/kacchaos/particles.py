"""Bird- and Nanbu-type N-particle systems driven by an event stream."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .events import EventLog, EventStream


@dataclass
class ParticleEnsemble:
    time: float
    states: np.ndarray
    p: int
    collision_count: int = 0
    conserved_power: int | None = None
    conserved_tracker: float | None = field(default=None)

    def __post_init__(self):
        self.states = np.array(self.states, dtype=float)
        if self.conserved_power is not None and self.conserved_tracker is None:
            self.conserved_tracker = float(np.sum(self.states ** self.conserved_power))

    @property
    def n(self):
        return len(self.states)

    def copy(self):
        return ParticleEnsemble(self.time, self.states.copy(), self.p, self.collision_count,
                                self.conserved_power, self.conserved_tracker)

    def conserved_sum(self):
        if self.conserved_power is None:
            return None
        return float(np.sum(self.states ** self.conserved_power))


def new_ensemble(law, states, time=0.0):
    return ParticleEnsemble(time, states, law.p, 0, law.conserved_power())


def apply_collision(ens, atom):
    """Apply one Bird collision in place and return the ensemble.

    Both new coordinates are computed from the pre-collision pair.
    """
    if atom.t < ens.time:
        raise ValueError(f"atom at t={atom.t} precedes ensemble time {ens.time}")
    i, j = int(atom.rho), int(atom.sigma)
    l, r, lt, rt = atom.alpha
    x = ens.states
    xi, xj = float(x[i]), float(x[j])
    ni = l * xi + r * xj
    nj = lt * xj + rt * xi
    x[i] = ni
    x[j] = nj
    if ens.conserved_power is not None:
        k = ens.conserved_power
        ens.conserved_tracker += ni ** k + nj ** k - xi ** k - xj ** k
    ens.time = atom.t
    ens.collision_count += 1
    return ens


def _as_log(stream, t_end):
    if isinstance(stream, EventLog):
        return stream.until(t_end)
    return stream.take_until(t_end)


def initial_states(p0, n, stream, x0=None):
    if x0 is not None:
        x0 = np.array(x0, dtype=float)
        if len(x0) != n:
            raise ValueError("x0 has the wrong length")
        return x0
    if not isinstance(stream, EventStream):
        raise ValueError("replaying a log needs explicit initial states x0")
    return p0.sample(stream.init_rng(), n)


def _snapshot_grid(snapshot_times, t_end):
    grid = [t_end] if snapshot_times is None else sorted(float(s) for s in snapshot_times)
    if grid and (grid[0] < 0 or grid[-1] > t_end):
        raise ValueError("snapshot times must lie in [0, t_end]")
    return grid


def bird_steps(x, ii, jj, alpha, start, stop):
    """Advance the plain list ``x`` through atoms ``start..stop-1``; return failing index or -1."""
    for n in range(start, stop):
        i = ii[n]
        j = jj[n]
        l, r, lt, rt = alpha[n]
        xi = x[i]
        xj = x[j]
        ni = l * xi + r * xj
        nj = lt * xj + rt * xi
        if not (math.isfinite(ni) and math.isfinite(nj)):
            return n
        x[i] = ni
        x[j] = nj
    return -1


def _run(law, p0, n, t_end, stream, snapshot_times, x0, step_fn):
    if n < 2:
        raise ValueError("need N >= 2")
    grid = _snapshot_grid(snapshot_times, t_end)
    x_init = initial_states(p0, n, stream, x0)
    log = _as_log(stream, t_end)
    if log.n_particles != n:
        raise ValueError("stream has a different particle count")
    x = x_init.tolist()
    ii = log.i_idx.tolist()
    jj = log.j_idx.tolist()
    alpha = log.alpha.tolist()
    extra = log.rho.tolist()
    cuts = np.searchsorted(log.t, grid, side="left")
    power = law.conserved_power()
    out = []
    done = 0
    for s, cut in zip(grid, cuts):
        bad = step_fn(x, ii, jj, alpha, extra, done, int(cut))
        if bad >= 0:
            raise OverflowError(f"state overflow at atom {bad} (t={log.t[bad]})")
        done = int(cut)
        ens = ParticleEnsemble(s, np.array(x), law.p, done, power)
        out.append((s, ens))
    return out


def run_bird(law, p0, n, t_end, stream, snapshot_times=None, x0=None):
    """Simulate the Bird system; snapshots are left limits at the grid times.

    ``stream`` is an :class:`EventStream` (initial states then come from its
    ``init_rng``) or a recorded :class:`EventLog` together with ``x0``.
    """
    def step(x, ii, jj, alpha, _rho, a, b):
        return bird_steps(x, ii, jj, alpha, a, b)
    return _run(law, p0, n, t_end, stream, snapshot_times, x0, step)


def nanbu_steps(x, ii, jj, alpha, rho, start, stop):
    for n in range(start, stop):
        i = ii[n]
        a = alpha[n]
        # the unused fractional part of rho picks the (l, r) or (lt, rt) half
        if rho[n] - i < 0.5:
            l, r = a[0], a[1]
        else:
            l, r = a[2], a[3]
        ni = l * x[i] + r * x[jj[n]]
        if not math.isfinite(ni):
            return n
        x[i] = ni
    return -1


def run_nanbu(law, p0, n, t_end, stream, snapshot_times=None, x0=None):
    """Nanbu variant: each atom moves only particle ``floor(rho)``.

    The stream must run at rate ``N`` (see :meth:`EventStream.for_nanbu`) so
    that each particle jumps at rate 1, as in the Bird system.
    """
    rate = getattr(stream, "rate", None)
    if rate is not None and abs(rate - n) > 1e-12:
        raise ValueError(f"Nanbu stream must have rate N={n}, got {rate}")
    return _run(law, p0, n, t_end, stream, snapshot_times, x0, nanbu_steps)
