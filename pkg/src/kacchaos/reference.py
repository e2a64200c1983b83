"""Exact samples of the nonlinear law P_t and quantile-queryable pools.

A draw of P_t unfolds the nonlinear jump process backwards in time: wait an
Exp(1) clock; if it rings after ``t`` the value is a P_0 draw, otherwise draw
``(a, b)`` from the symmetrised pair law and return ``a*V1 + b*V2`` with two
independent draws ``V1, V2`` of P at the residual time.  The tree is expanded
level by level (no recursion) and then folded bottom-up.
"""
from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, field

import numpy as np

from ._rng import derive_seed, make_rng
from .laws import GAUSSIAN, KAC, POINT, WEALTH, InitialLaw

logger = logging.getLogger(__name__)

WILD = "wild"
ANALYTIC = "analytic"
EXTERNAL = "external"

DEFAULT_MAX_LEAVES = 10 ** 6


class BudgetExceeded(RuntimeError):
    def __init__(self, leaves, max_leaves):
        super().__init__(f"Wild tree needs {leaves} leaves, budget is {max_leaves}")
        self.leaves = leaves
        self.max_leaves = max_leaves


@dataclass(frozen=True)
class WildNodeBudget:
    max_leaves: int = DEFAULT_MAX_LEAVES

    @staticmethod
    def expected_leaves(t):
        return math.exp(t)


def wild_samples(law, p0, t, size, rng, max_leaves=DEFAULT_MAX_LEAVES, return_leaves=False):
    """``size`` independent draws of P_t (optionally with per-draw leaf counts)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    size = int(size)
    levels = []
    cur_t = np.full(size, float(t))
    n_nodes = 0
    while cur_t.size:
        n_nodes += cur_t.size
        if n_nodes > 2 * max_leaves * size + size:
            raise BudgetExceeded(n_nodes, max_leaves)
        clock = rng.exponential(1.0, cur_t.size)
        leaf = clock > cur_t
        leaf_vals = p0.sample(rng, int(np.count_nonzero(leaf)))
        inner = ~leaf
        ab = law.sample_pair_bar(rng, int(np.count_nonzero(inner)))
        levels.append((leaf, leaf_vals, ab))
        cur_t = np.repeat(cur_t[inner] - clock[inner], 2)

    values = np.empty(0)
    leaves = np.empty(0, dtype=np.int64)
    for leaf, leaf_vals, ab in reversed(levels):
        v = np.empty(leaf.size)
        c = np.empty(leaf.size, dtype=np.int64)
        v[leaf] = leaf_vals
        c[leaf] = 1
        v[~leaf] = ab[:, 0] * values[0::2] + ab[:, 1] * values[1::2]
        c[~leaf] = leaves[0::2] + leaves[1::2]
        values, leaves = v, c
    if size and leaves.max() > max_leaves:
        raise BudgetExceeded(int(leaves.max()), max_leaves)
    if return_leaves:
        return values, leaves
    return values


def wild_sample(law, p0, t, rng, max_leaves=DEFAULT_MAX_LEAVES):
    return float(wild_samples(law, p0, t, 1, rng, max_leaves)[0])


def is_analytically_stationary(law, p0):
    """True for (uniform-angle Kac, centred Gaussian) and (conservative trade, point mass)."""
    if law.kind == KAC and law.params[0] is None:
        return p0.kind == GAUSSIAN and p0.params[0] == 0.0
    if law.kind == WEALTH:
        return p0.kind == POINT
    return False


@dataclass(frozen=True, eq=False)
class ReferencePool:
    """Sorted sample standing in for P_t, with a left-continuous quantile."""

    t: float
    samples: np.ndarray
    source: str
    law: InitialLaw | None = None
    _prefix: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        s = np.sort(np.asarray(self.samples, dtype=float))
        if s.size < 1:
            raise ValueError("a pool needs at least one sample")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def size(self):
        return self.samples.size

    def quantile(self, u):
        """Vectorised quantile without domain checks (u is clipped into the pool)."""
        if self.source == ANALYTIC:
            return self.law.quantile(u)
        m = self.samples.size
        idx = np.ceil(np.asarray(u) * m).astype(np.int64) - 1
        return self.samples[np.clip(idx, 0, m - 1)]

    def quantile_scalar(self, u):
        if self.source == ANALYTIC:
            return float(self.law.quantile(u))
        m = self.samples.size
        k = math.ceil(u * m) - 1
        return float(self.samples[min(max(k, 0), m - 1)])

    def target(self):
        """Object for exact Wasserstein evaluation against this pool."""
        if self.source == ANALYTIC:
            return self.law
        from .metrics import AtomQuantile
        if "atoms" not in self._prefix:
            self._prefix["atoms"] = AtomQuantile(self.samples)
        return self._prefix["atoms"]


def pool_quantile(pool, u):
    if not 0.0 < u < 1.0:
        raise ValueError(f"quantile level {u} outside (0, 1)")
    return pool.quantile_scalar(u)


def build_pool(law, p0, t, m, rng, source="auto", max_leaves=DEFAULT_MAX_LEAVES):
    """Pool of size ``m`` for P_t.

    ``source="auto"`` uses the exact stationary law when recognised, else
    the Wild sampler; ``"wild"`` forces sampling.
    """
    if m < 1:
        raise ValueError("pool size must be >= 1")
    if source == "auto":
        source = ANALYTIC if is_analytically_stationary(law, p0) else WILD
    if source == ANALYTIC:
        if not is_analytically_stationary(law, p0):
            raise ValueError("no analytic stationary law for this model")
        u = (np.arange(1, m + 1) - 0.5) / m
        return ReferencePool(float(t), p0.quantile(u), ANALYTIC, p0)
    if source != WILD:
        raise ValueError(f"unknown pool source {source!r}")
    chunk = 1 << 16
    parts = [wild_samples(law, p0, t, min(chunk, m - k), rng, max_leaves)
             for k in range(0, m, chunk)]
    return ReferencePool(float(t), np.concatenate(parts), WILD)


class PoolProvider:
    """Memoised pools on a time grid of step ``step`` (nearest grid point).

    With ``exact=True`` a pool is built at each requested time instead.
    Pool seeds depend only on ``(seed, grid index)``, so the pools do not
    depend on the order in which they are requested.
    """

    def __init__(self, law, p0, size, step=0.01, seed=0, exact=False, source="auto"):
        self.law, self.p0 = law, p0
        self.size = int(size)
        self.step = float(step)
        self.seed = int(seed)
        self.exact = exact
        self.source = source
        self._pools = {}
        self._lock = threading.Lock()
        self.stationary = source != WILD and is_analytically_stationary(law, p0)

    def key(self, t):
        if self.stationary:
            return 0
        if self.exact:
            return float(t)
        return int(round(t / self.step))

    def _build(self, key):
        if self.stationary:
            t = 0.0
        else:
            t = key if self.exact else key * self.step
        rng = make_rng(derive_seed("pool", self.seed, key))
        return build_pool(self.law, self.p0, t, self.size, rng, self.source)

    def __call__(self, t):
        key = self.key(t)
        pool = self._pools.get(key)
        if pool is None:
            with self._lock:
                pool = self._pools.get(key)
                if pool is None:
                    pool = self._build(key)
                    self._pools[key] = pool
        return pool

    def prebuild(self, t_end):
        if self.stationary or self.exact:
            return
        for k in range(0, int(round(t_end / self.step)) + 1):
            self(k * self.step)


class FixedPool:
    """Provider returning one pool for every time (tests and degenerate cases)."""

    def __init__(self, pool):
        self.pool = pool

    def __call__(self, t):
        return self.pool


def save_pool(pool, path, model_hash="", seed=0):
    with open(path, "w") as fh:
        fh.write(f"# model_hash={model_hash},t={pool.t!r},M={pool.size},seed={seed},"
                 f"source={pool.source}\n")
        fh.write("sample\n")
        for v in pool.samples:
            fh.write(f"{float(v)!r}\n")


def load_pool(path):
    """Read a pool written by :func:`save_pool`; returns ``(pool, header dict)``."""
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise ValueError("pool file lacks its header line")
        header = dict(kv.split("=", 1) for kv in first[1:].strip().split(","))
        if fh.readline().strip() != "sample":
            raise ValueError("pool file lacks the 'sample' column")
        vals = np.array([float(line) for line in fh if line.strip()])
    if len(vals) != int(header["M"]):
        raise ValueError("pool file is truncated")
    return ReferencePool(float(header["t"]), vals, EXTERNAL), header
