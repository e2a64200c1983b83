"""Poisson point measure driving the particle systems.

Atoms ``(t, alpha, rho, sigma)`` arrive at rate ``N/2``; ``alpha`` is drawn
from the interaction law and ``(rho, sigma)`` is uniform on the set of pairs
in ``[0, N)^2`` with distinct integer parts.  Particle indices are 0-based in
code: atom ``(rho, sigma)`` touches particles ``floor(rho)`` and
``floor(sigma)``.
"""
from __future__ import annotations

import hashlib
from typing import NamedTuple

import numpy as np

from ._rng import derive_seed, make_rng

_STREAM_DOMAIN = 0x5354524D
_INIT_DOMAIN = 0x494E4954

RECORD_DTYPE = np.dtype("<f8")
RECORD_FIELDS = 7


class EventAtom(NamedTuple):
    t: float
    alpha: tuple
    rho: float
    sigma: float

    @property
    def i(self):
        return int(self.rho)

    @property
    def j(self):
        return int(self.sigma)


class EventLog:
    """A finite, time-ordered batch of atoms held as arrays."""

    def __init__(self, n_particles, t, alpha, rho, sigma, rate=None):
        self.n_particles = int(n_particles)
        self.t = np.asarray(t, dtype=float)
        self.alpha = np.asarray(alpha, dtype=float).reshape(-1, 4)
        self.rho = np.asarray(rho, dtype=float)
        self.sigma = np.asarray(sigma, dtype=float)
        self.rate = rate
        if not (len(self.t) == len(self.alpha) == len(self.rho) == len(self.sigma)):
            raise ValueError("atom arrays have inconsistent lengths")

    @classmethod
    def from_atoms(cls, n_particles, atoms, rate=None):
        atoms = list(atoms)
        if not atoms:
            return cls(n_particles, [], np.empty((0, 4)), [], [], rate)
        return cls(n_particles,
                   [a.t for a in atoms], [a.alpha for a in atoms],
                   [a.rho for a in atoms], [a.sigma for a in atoms], rate)

    def __len__(self):
        return len(self.t)

    def __getitem__(self, n):
        return EventAtom(float(self.t[n]), tuple(float(v) for v in self.alpha[n]),
                         float(self.rho[n]), float(self.sigma[n]))

    def __iter__(self):
        for n in range(len(self)):
            yield self[n]

    @property
    def i_idx(self):
        return self.rho.astype(np.int64)

    @property
    def j_idx(self):
        return self.sigma.astype(np.int64)

    def until(self, t_end):
        n = int(np.searchsorted(self.t, t_end, side="right"))
        return EventLog(self.n_particles, self.t[:n], self.alpha[:n],
                        self.rho[:n], self.sigma[:n], self.rate)

    def to_bytes(self):
        """Little-endian records ``(t, l, r, lt, rt, rho, sigma)`` as float64."""
        rec = np.column_stack([self.t, self.alpha, self.rho, self.sigma])
        return rec.astype(RECORD_DTYPE).tobytes()

    @classmethod
    def from_bytes(cls, n_particles, blob, rate=None):
        rec = np.frombuffer(blob, dtype=RECORD_DTYPE).reshape(-1, RECORD_FIELDS)
        return cls(n_particles, rec[:, 0], rec[:, 1:5], rec[:, 5], rec[:, 6], rate)

    def digest(self):
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def dump(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    def restrict(self, i):
        """Atoms touching particle ``i`` seen from that particle."""
        return RestrictedView(self, i)


class RestrictedView:
    """Iterator over ``(t, l, r, tau)`` for the atoms that move particle ``i``.

    An atom with ``floor(rho) == i`` contributes ``(l, r)`` and ``tau = sigma``;
    one with ``floor(sigma) == i`` contributes ``(lt, rt)`` and ``tau = rho``.
    """

    def __init__(self, log, i):
        if not 0 <= i < log.n_particles:
            raise IndexError(f"particle index {i} out of range")
        self.log = log
        self.i = i

    def __iter__(self):
        log, i = self.log, self.i
        ii, jj = log.i_idx, log.j_idx
        for n in np.flatnonzero((ii == i) | (jj == i)):
            a = log.alpha[n]
            if ii[n] == i:
                yield (float(log.t[n]), float(a[0]), float(a[1]), float(log.sigma[n]))
            else:
                yield (float(log.t[n]), float(a[2]), float(a[3]), float(log.rho[n]))

    def __len__(self):
        return int(np.count_nonzero((self.log.i_idx == self.i) | (self.log.j_idx == self.i)))


class EventStream:
    """Lazily generated atoms of the driving Poisson measure.

    ``rate`` defaults to ``N/2`` (Bird systems); Nanbu systems use ``N``.
    Atoms are generated in blocks whose size depends only on ``N``, so the
    sequence is a function of ``(master_seed, stream_id, N, rate)`` alone.
    """

    def __init__(self, n_particles, law, master_seed=0, stream_id=0, rate=None):
        if n_particles < 2:
            raise ValueError("need at least two particles")
        self.n_particles = int(n_particles)
        self.law = law
        self.master_seed = int(master_seed)
        self.stream_id = int(stream_id)
        self.rate = float(rate) if rate is not None else self.n_particles / 2.0
        self.clock = 0.0
        self._rng = make_rng(self.master_seed, _STREAM_DOMAIN, self.stream_id)
        self._block = int(np.clip(self.n_particles, 64, 8192))
        self._buf = None
        self._pos = 0
        self._forks = 0
        self.emitted = 0

    @classmethod
    def for_nanbu(cls, n_particles, law, master_seed=0, stream_id=0):
        return cls(n_particles, law, master_seed, stream_id, rate=float(n_particles))

    def init_rng(self):
        """Generator for the initial states, independent of the atoms."""
        return make_rng(self.master_seed, _INIT_DOMAIN, self.stream_id)

    def _refill(self):
        rng, n, b = self._rng, self.n_particles, self._block
        gaps = rng.exponential(1.0 / self.rate, b)
        t = self.clock + np.cumsum(gaps)
        alpha = self.law.sample(rng, b)
        i = rng.integers(0, n, b)
        j = rng.integers(0, n - 1, b)
        j = j + (j >= i)
        frac = rng.random((2, b))
        top_i = np.nextafter(i + 1.0, -np.inf)
        top_j = np.nextafter(j + 1.0, -np.inf)
        rho = np.minimum(i + frac[0], top_i)
        sigma = np.minimum(j + frac[1], top_j)
        self._buf = (t, alpha, rho, sigma)
        self._pos = 0

    def _ensure(self):
        if self._buf is None or self._pos >= len(self._buf[0]):
            self._refill()

    def peek_time(self):
        self._ensure()
        return float(self._buf[0][self._pos])

    def next_event(self):
        self._ensure()
        t, alpha, rho, sigma = self._buf
        k = self._pos
        self._pos += 1
        self.clock = float(t[k])
        self.emitted += 1
        if self._pos >= len(t):
            self._buf = None
        return EventAtom(float(t[k]), tuple(float(v) for v in alpha[k]),
                         float(rho[k]), float(sigma[k]))

    def _take(self, stop):
        parts = []
        while True:
            self._ensure()
            t, alpha, rho, sigma = self._buf
            k0 = self._pos
            k1 = stop(t, k0)
            if k1 > k0:
                parts.append((t[k0:k1], alpha[k0:k1], rho[k0:k1], sigma[k0:k1]))
                self.clock = float(t[k1 - 1])
                self.emitted += k1 - k0
            self._pos = k1
            if k1 < len(t):
                break
            self._buf = None
        if not parts:
            return EventLog(self.n_particles, [], np.empty((0, 4)), [], [], self.rate)
        cols = [np.concatenate([p[c] for p in parts]) for c in range(4)]
        return EventLog(self.n_particles, *cols, rate=self.rate)

    def take_until(self, t_end):
        """All remaining atoms with time ``<= t_end``."""
        return self._take(lambda t, k0: int(np.searchsorted(t, t_end, side="right")))

    def take(self, n_atoms):
        """The next ``n_atoms`` atoms."""
        remaining = [int(n_atoms)]

        def stop(t, k0):
            k1 = min(len(t), k0 + remaining[0])
            remaining[0] -= k1 - k0
            return k1
        log = EventLog(self.n_particles, [], np.empty((0, 4)), [], [], self.rate)
        if n_atoms > 0:
            log = self._take(stop)
        return log

    def fork_independent_copy(self):
        """A statistically independent stream with the same ``N`` and rate."""
        self._forks += 1
        sid = derive_seed("fork", self.master_seed, self.stream_id, self._forks) >> 1
        return EventStream(self.n_particles, self.law, self.master_seed, sid, self.rate)


def next_event(stream):
    return stream.next_event()


def restrict(log, i):
    return log.restrict(i)


def fork_independent_copy(stream):
    return stream.fork_independent_copy()
