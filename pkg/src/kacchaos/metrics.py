"""One-dimensional Wasserstein distances, moments, and rate fits.

In 1D the monotone (quantile) coupling is optimal for every cost |x-y|^p
with p >= 1, so all distances reduce to integrals of quantile gaps.  Three
routes are provided:

* ``w_p_sorted``   equal-size samples, matched in sorted order;
* ``w_p_quantile`` unequal sizes, exact integration over merged breakpoints;
* ``wpp_vs``       an empirical sample against a fixed target (a large
  sorted pool or a continuous law), exact for p in {1, 2} via the gap
  integrals ``G_y(x) = int_0^x |y - Q(u)|^p du``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .laws import InitialLaw


@dataclass(frozen=True)
class WassersteinReport:
    p: int
    value: float
    sizes: tuple
    method: str


def w_p_sorted(a, b, p):
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size != b.size:
        raise ValueError("sizes differ; use w_p_quantile for unequal samples")
    if a.size == 0:
        raise ValueError("empty sample")
    return float(np.mean(np.abs(a - b) ** p) ** (1.0 / p))


def w_p_quantile(a, b, p):
    """Exact W_p between two empirical measures of arbitrary sizes."""
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    n, m = a.size, b.size
    if n == 0 or m == 0:
        raise ValueError("empty sample")
    grid = np.union1d(np.arange(n + 1) / n, np.arange(m + 1) / m)
    mid = 0.5 * (grid[:-1] + grid[1:])
    ia = np.minimum((mid * n).astype(np.int64), n - 1)
    ib = np.minimum((mid * m).astype(np.int64), m - 1)
    total = float(np.sum(np.diff(grid) * np.abs(a[ia] - b[ib]) ** p))
    return total ** (1.0 / p)


def wasserstein(a, b, p):
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == b.size:
        return WassersteinReport(p, w_p_sorted(a, b, p), (a.size, b.size), "sorted-equal")
    return WassersteinReport(p, w_p_quantile(a, b, p), (a.size, b.size), "quantile-grid")


class AtomQuantile:
    """A discrete law with sorted atoms and their weights (uniform by default).

    Keeps prefix sums of w, w*s and w*s^2 so that partial quantile integrals
    ``int_0^x Q(u)^k du`` cost one binary search.
    """

    def __init__(self, atoms, weights=None):
        s = np.asarray(atoms, dtype=float).ravel()
        w = np.full(s.size, 1.0 / s.size) if weights is None else np.asarray(weights, float)
        order = np.argsort(s, kind="stable")
        self.s = s[order]
        self.w = w[order] / w.sum()
        self.cw = np.concatenate([[0.0], np.cumsum(self.w)])
        self.cw[-1] = 1.0
        self.c1 = np.concatenate([[0.0], np.cumsum(self.w * self.s)])
        self.c2 = np.concatenate([[0.0], np.cumsum(self.w * self.s ** 2)])

    def quantile(self, u):
        k = np.searchsorted(self.cw, u, side="left") - 1
        return self.s[np.clip(k, 0, self.s.size - 1)]

    def cdf(self, y):
        return self.cw[np.searchsorted(self.s, y, side="right")]

    def partial(self, x, order):
        x = np.asarray(x, dtype=float)
        k = np.clip(np.searchsorted(self.cw, x, side="left") - 1, 0, self.s.size - 1)
        rest = x - self.cw[k]
        pre = (self.cw, self.c1, self.c2)[order][k]
        return pre + rest * self.s[k] ** order


class _LawQuantile:
    """Continuous-law adapter exposing the same partial-integral interface."""

    def __init__(self, law):
        self.law = law

    def quantile(self, u):
        return self.law.quantile(u)

    def cdf(self, y):
        return self.law.cdf(y)

    def partial(self, x, order):
        # quantile(0) and quantile(1) may be infinite; truncated moments accept that
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        return self.law.truncated_moment(self.law.quantile(x), order)


def as_target(target):
    """Normalise a target (law, pool, atoms or raw sample) for :func:`wpp_vs`."""
    if isinstance(target, (AtomQuantile, _LawQuantile)):
        return target
    if isinstance(target, InitialLaw):
        atoms = target.atoms()
        if atoms is not None:
            return AtomQuantile(*atoms)
        return _LawQuantile(target)
    if hasattr(target, "target"):
        return as_target(target.target())
    return AtomQuantile(target)


def _gap_integral(tq, y, x, p):
    """``int_0^x |y - Q(u)|^p du`` for arrays y, x and p in {1, 2}."""
    if p == 2:
        return y * y * x - 2.0 * y * tq.partial(x, 1) + tq.partial(x, 2)
    s = np.minimum(tq.cdf(y), x)
    i_s = tq.partial(s, 1)
    return y * s - i_s + (tq.partial(x, 1) - i_s) - y * (x - s)


def wpp_vs(sample, target, p):
    """W_p^p between the empirical measure of ``sample`` and ``target`` (p in {1, 2})."""
    if p not in (1, 2):
        raise ValueError("exact target route supports p in {1, 2}")
    y = np.sort(np.asarray(sample, dtype=float).ravel())
    n = y.size
    if n == 0:
        raise ValueError("empty sample")
    tq = as_target(target)
    hi = np.arange(1, n + 1) / n
    lo = np.arange(n) / n
    val = float(np.sum(_gap_integral(tq, y, hi, p) - _gap_integral(tq, y, lo, p)))
    return max(val, 0.0)


def w_p_vs(sample, target, p):
    return wpp_vs(sample, target, p) ** (1.0 / p)


def moment_q(sample, q):
    if q < 0:
        raise ValueError("q must be >= 0")
    x = np.asarray(sample, dtype=float)
    if q == 0:
        return 1.0
    return float(np.mean(np.abs(x) ** q))


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    reps: int

    def __float__(self):
        return self.mean


def mc_summary(values):
    v = np.asarray(values, dtype=float)
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return MCEstimate(float(v.mean()), se, int(v.size))


def _sampler(mu):
    if isinstance(mu, InitialLaw):
        return lambda rng, n: mu.sample(rng, n)
    samples = np.asarray(mu.samples if hasattr(mu, "samples") else mu, dtype=float)
    return lambda rng, n: samples[rng.integers(0, samples.size, n)]


def eps_n_p(mu, n, p, reps, rng):
    """Monte Carlo ``E W_p^p(empirical of n i.i.d. mu draws, mu)``."""
    if n < 1 or reps < 1:
        raise ValueError("n and reps must be >= 1")
    draw = _sampler(mu)
    tq = as_target(mu)
    return mc_summary([wpp_vs(draw(rng, n), tq, p) for _ in range(reps)])


# exchangeable generators for the block-splitting audit

class ConstantExchangeable:
    """Y = (c, ..., c)."""

    def __init__(self, m, c=0.0):
        self.m, self.c = int(m), float(c)

    def sample(self, rng, reps):
        return np.full((reps, self.m), self.c)

    def joint_wpp_upper(self, n, p, mu):
        # Y's n-marginal equals mu^n when mu is the point mass at c
        atoms = mu.atoms() if isinstance(mu, InitialLaw) else None
        if atoms is not None and len(atoms[0]) == 1:
            return abs(atoms[0][0] - self.c) ** p
        raise ValueError("constant generator is audited against its own point mass")


class GaussianShiftExchangeable:
    """Y = Z + s*xi*(1, ..., 1) with Z i.i.d. N(0, 1) and xi ~ N(0, 1) independent.

    Audited against mu = N(0, 1).  The joint term uses the cost
    (1/n) sum |x_i - y_i|^p.  For p = 2 it is the closed-form Gaussian
    optimal-transport cost; for p = 1 it is bounded above by the shift
    coupling (Y vs Z) and by the p = 2 value.
    """

    def __init__(self, m, shift):
        self.m, self.shift = int(m), float(shift)

    def sample(self, rng, reps):
        z = rng.standard_normal((reps, self.m))
        xi = rng.standard_normal((reps, 1))
        return z + self.shift * xi

    def joint_wpp_upper(self, n, p, mu=None):
        s2 = self.shift ** 2
        bures = (math.sqrt(1.0 + n * s2) - 1.0) ** 2 / n
        if p == 2:
            return bures
        return min(self.shift * math.sqrt(2.0 / math.pi), math.sqrt(bures))


@dataclass(frozen=True)
class BlockSplitReport:
    m: int
    n: int
    p: int
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float
    holds: bool
    note: str = "joint-law terms replaced by coupling upper bounds (RHS can only grow)"


def block_split_check(generator, mu, n, p, reps, rng, eps_reps=None):
    """Check ``2^(1-p) E W_p^p(emp Y, mu) <= (kn/m)(J_n + eps_n) + (l/m)(J_l + eps_l)``.

    ``m = k n + l`` with ``l < n``; ``J`` are joint-law terms (upper bounds).
    Holds when lhs <= rhs + 3 combined standard errors.
    """
    m = generator.m
    if not 1 <= n <= m:
        raise ValueError("need 1 <= n <= m")
    eps_reps = reps if eps_reps is None else eps_reps
    k, ell = divmod(m, n)
    tq = as_target(mu)
    ys = generator.sample(rng, reps)
    lhs = mc_summary([2.0 ** (1 - p) * wpp_vs(y, tq, p) for y in ys])
    e_n = eps_n_p(mu, n, p, eps_reps, rng)
    rhs = k * n / m * (generator.joint_wpp_upper(n, p, mu) + e_n.mean)
    var = (k * n / m * e_n.stderr) ** 2
    if ell:
        e_l = eps_n_p(mu, ell, p, eps_reps, rng)
        rhs += ell / m * (generator.joint_wpp_upper(ell, p, mu) + e_l.mean)
        var += (ell / m * e_l.stderr) ** 2
    rhs_se = math.sqrt(var)
    holds = lhs.mean <= rhs + 3.0 * math.sqrt(lhs.stderr ** 2 + var)
    return BlockSplitReport(m, n, p, lhs.mean, lhs.stderr, rhs, rhs_se, bool(holds))


@dataclass(frozen=True)
class RateFitResult:
    gamma_hat: float
    intercept: float
    r_squared: float
    n_points: int


def _ols(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx == 0.0:
        raise ValueError("degenerate design: all abscissae are equal")
    slope = float(xc @ (y - y.mean())) / sxx
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot <= 1e-300 else max(0.0, 1.0 - float(resid @ resid) / ss_tot)
    return slope, intercept, r2


def fit_power_law(points):
    """OLS of log(value) on log(N); ``gamma_hat`` is the negated slope."""
    pts = list(points)
    if len(pts) < 3:
        raise ValueError("need at least 3 points")
    ns = np.array([p[0] for p in pts], dtype=float)
    vals = np.array([p[1] for p in pts], dtype=float)
    if np.any(vals <= 0) or np.any(ns <= 0):
        raise ValueError("power-law fit needs positive N and values")
    slope, icpt, r2 = _ols(np.log(ns), np.log(vals))
    return RateFitResult(-slope, icpt, r2, len(pts))


def fit_decay_rate(points):
    """OLS of log(value) on t; returns the decay rate (negated slope) as a RateFitResult."""
    pts = list(points)
    if len(pts) < 2:
        raise ValueError("need at least 2 points")
    ts = np.array([p[0] for p in pts], dtype=float)
    vals = np.array([p[1] for p in pts], dtype=float)
    if np.any(vals <= 0):
        raise ValueError("decay fit needs positive values")
    slope, icpt, r2 = _ols(ts, np.log(vals))
    return RateFitResult(-slope, icpt, r2, len(pts))
