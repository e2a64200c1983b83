"""Interaction laws, initial laws and the exponent machinery built on them.

An interaction draws a coefficient vector ``(l, r, lt, rt)`` and maps a pair of
states ``(u, v)`` to ``(l*u + r*v, lt*v + rt*u)``.  The function

    c(q) = 1 - E(|l|^q + |r|^q + |lt|^q + |rt|^q) / 2

controls moment growth; ``q_star`` and ``c_bar`` are derived from it.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, special

logger = logging.getLogger(__name__)

KAC = "kac"
INELASTIC_KAC = "inelastic_kac"
WEALTH = "wealth"
TABLE = "table"

LAW_KINDS = (KAC, INELASTIC_KAC, WEALTH, TABLE)

POINT = "point"
UNIFORM = "uniform"
GAUSSIAN = "gaussian"
EXPONENTIAL = "exponential"
PARETO = "pareto"
TWO_POINT = "two_point"

INITIAL_KINDS = (POINT, UNIFORM, GAUSSIAN, EXPONENTIAL, PARETO, TWO_POINT)

Q_STAR_CAP = 128.0


def adaptive_simpson(f, a, b, tol=1e-10, max_depth=50):
    """Integrate a scalar function on [a, b] by adaptive Simpson refinement."""

    def simpson(fa, fm, fb, a, b):
        return (b - a) * (fa + 4.0 * fm + fb) / 6.0

    def refine(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = simpson(fa, flm, fm, a, m)
        right = simpson(fm, frm, fb, m, b)
        delta = left + right - whole
        if depth <= 0 or abs(delta) <= 15.0 * tol:
            return left + right + delta / 15.0
        return (refine(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + refine(m, b, fm, frm, fb, right, 0.5 * tol, depth - 1))

    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    return refine(a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, max_depth)


@lru_cache(maxsize=4096)
def _abs_cos_moment(s):
    """E|cos(theta)|^s for theta uniform on [0, 2*pi)."""
    if s == 0:
        return 1.0
    val = adaptive_simpson(lambda th: math.cos(th) ** s if th < math.pi / 2 else 0.0,
                           0.0, math.pi / 2)
    return 2.0 / math.pi * val


@dataclass(frozen=True)
class InteractionLaw:
    """Law of the coefficient vector ``(L, R, Lt, Rt)``.

    ``p`` is the Wasserstein order (1 or 2) the model is studied in.  Use the
    classmethod constructors rather than building ``params`` by hand.
    """

    kind: str
    params: tuple
    p: int = 2

    def __post_init__(self):
        if self.kind not in LAW_KINDS:
            raise ValueError(f"unknown interaction kind {self.kind!r}")
        if self.p not in (1, 2):
            raise ValueError("p must be 1 or 2")
        if self.kind == TABLE:
            probs = np.array([a[0] for a in self.params], dtype=float)
            if probs.size == 0 or np.any(probs <= 0):
                raise ValueError("table probabilities must be positive")
            if abs(probs.sum() - 1.0) > 1e-12:
                raise ValueError(f"table probabilities sum to {probs.sum()!r}, not 1")
            for _, coeffs in self.params:
                if len(coeffs) != 4 or not all(math.isfinite(c) for c in coeffs):
                    raise ValueError("table atoms need four finite coefficients")
        elif self.kind == WEALTH:
            form = self.params[0]
            if form == "const":
                lam = self.params[1]
                if not 0.0 <= lam <= 1.0:
                    raise ValueError("mixing weight must lie in [0, 1]")
            elif form == "uniform":
                lo, hi = self.params[1:]
                if not 0.0 <= lo < hi <= 1.0:
                    raise ValueError("uniform mixing weight needs 0 <= a < b <= 1")
            else:
                raise ValueError(f"unknown mixing weight law {form!r}")
        elif self.kind == INELASTIC_KAC:
            if self.params[0] < 0:
                raise ValueError("inelasticity must be non-negative")

    # -- constructors -----------------------------------------------------
    @classmethod
    def kac(cls, angle=None, p=2):
        """Kac collisions; ``angle=None`` means theta uniform on [0, 2*pi)."""
        return cls(KAC, (None if angle is None else float(angle),), p)

    @classmethod
    def inelastic_kac(cls, inelasticity, angle=None, p=2):
        """Kac rotation with coefficients shrunk by ``|cos|^e`` and ``|sin|^e``."""
        return cls(INELASTIC_KAC,
                   (float(inelasticity), None if angle is None else float(angle)), p)

    @classmethod
    def wealth(cls, weight=0.7, p=1):
        """Conservative trade ``(lam, 1-lam, lam, 1-lam)``.

        ``weight`` is either a number (degenerate mixing weight) or a tuple
        ``("uniform", a, b)``.
        """
        if isinstance(weight, (tuple, list)):
            form, lo, hi = weight
            if form != "uniform":
                raise ValueError(f"unknown mixing weight law {form!r}")
            return cls(WEALTH, ("uniform", float(lo), float(hi)), p)
        return cls(WEALTH, ("const", float(weight)), p)

    @classmethod
    def table(cls, atoms, p=1):
        """Discrete law from ``[(prob, (l, r, lt, rt)), ...]``."""
        params = tuple((float(pr), tuple(float(c) for c in co)) for pr, co in atoms)
        return cls(TABLE, params, p)

    # -- sampling ---------------------------------------------------------
    @property
    def _angle(self):
        return self.params[0] if self.kind == KAC else self.params[1]

    @property
    def _shrink(self):
        return self.params[0] if self.kind == INELASTIC_KAC else 0.0

    def sample(self, rng, size):
        """Draw ``size`` coefficient vectors as a ``(size, 4)`` array."""
        out = np.empty((size, 4))
        if self.kind in (KAC, INELASTIC_KAC):
            angle = self._angle
            theta = (rng.uniform(0.0, 2 * np.pi, size) if angle is None
                     else np.full(size, angle))
            c, s = np.cos(theta), np.sin(theta)
            e = self._shrink
            if e:
                c = c * np.abs(c) ** e
                s = s * np.abs(s) ** e
            out[:, 0] = c
            out[:, 1] = -s
            out[:, 2] = c
            out[:, 3] = s
        elif self.kind == WEALTH:
            if self.params[0] == "const":
                lam = np.full(size, self.params[1])
            else:
                lam = rng.uniform(self.params[1], self.params[2], size)
            out[:, 0] = lam
            out[:, 1] = 1.0 - lam
            out[:, 2] = lam
            out[:, 3] = 1.0 - lam
        else:
            probs = np.array([a[0] for a in self.params])
            coeffs = np.array([a[1] for a in self.params])
            if len(probs) == 1:
                out[:] = coeffs[0]
            else:
                idx = rng.choice(len(probs), size=size, p=probs / probs.sum())
                out[:] = coeffs[idx]
        return out

    def sample_pair_bar(self, rng, size):
        """Draw ``(a, b)`` from the symmetrised single-particle law.

        With probability 1/2 the pair is ``(l, r)``, otherwise ``(lt, rt)``.
        """
        alpha = self.sample(rng, size)
        flip = rng.random(size) < 0.5
        ab = alpha[:, :2].copy()
        ab[flip] = alpha[flip, 2:]
        return ab

    # -- exact expectations ----------------------------------------------
    def abs_moments(self, q):
        """``(E|L|^q, E|R|^q, E|Lt|^q, E|Rt|^q)``."""
        q = float(q)
        if q < 0:
            raise ValueError("q must be non-negative")
        if self.kind in (KAC, INELASTIC_KAC):
            s = q * (1.0 + self._shrink)
            angle = self._angle
            if angle is None:
                m = _abs_cos_moment(s)
                return (m, m, m, m)
            mc = abs(math.cos(angle)) ** s
            ms = abs(math.sin(angle)) ** s
            return (mc, ms, mc, ms)
        if self.kind == WEALTH:
            if self.params[0] == "const":
                lam = self.params[1]
                a, b = lam ** q, (1.0 - lam) ** q
            else:
                lo, hi = self.params[1:]
                w = (q + 1.0) * (hi - lo)
                a = (hi ** (q + 1) - lo ** (q + 1)) / w
                b = ((1 - lo) ** (q + 1) - (1 - hi) ** (q + 1)) / w
            return (a, b, a, b)
        res = [0.0, 0.0, 0.0, 0.0]
        for prob, coeffs in self.params:
            for k in range(4):
                res[k] += prob * abs(coeffs[k]) ** q
        return tuple(res)

    def c(self, q):
        m = self.abs_moments(q)
        val = 1.0 - 0.5 * sum(m)
        if not math.isfinite(val):
            raise FloatingPointError(f"c({q}) is not finite")
        return val

    def c_bar(self, q):
        return min(self.c(self.p), self.c(q))

    def cross_moment(self):
        """E(L*R + Lt*Rt); identically zero for the Kac kinds."""
        if self.kind in (KAC, INELASTIC_KAC):
            return 0.0
        if self.kind == WEALTH:
            if self.params[0] == "const":
                lam = self.params[1]
                return 2.0 * lam * (1.0 - lam)
            lo, hi = self.params[1:]
            # E[lam - lam^2] for lam uniform on [lo, hi]
            m1 = 0.5 * (lo + hi)
            m2 = (hi ** 3 - lo ** 3) / (3.0 * (hi - lo))
            return 2.0 * (m1 - m2)
        return sum(pr * (co[0] * co[1] + co[2] * co[3]) for pr, co in self.params)

    def nondegeneracy(self):
        """E(|R| + |Rt|)."""
        m = self.abs_moments(1.0)
        return m[1] + m[3]

    def coefficients_bounded(self):
        """True when |L|, |R|, |Lt|, |Rt| <= 1 almost surely."""
        if self.kind in (KAC, INELASTIC_KAC, WEALTH):
            return True
        return all(abs(c) <= 1.0 for _, co in self.params for c in co)

    def conserved_power(self):
        """1 if sum(x) is conserved per collision, 2 if sum(x^2) is, else None."""
        if self.kind == KAC:
            return 2
        if self.kind == WEALTH:
            return 1
        if self.kind == TABLE:
            co = [c for _, c in self.params]
            if all(abs(l + rt - 1) <= 1e-15 and abs(lt + r - 1) <= 1e-15
                   for l, r, lt, rt in co):
                return 1
            if all(abs(l * l + rt * rt - 1) <= 1e-15 and abs(lt * lt + r * r - 1) <= 1e-15
                   and abs(l * r + lt * rt) <= 1e-15 for l, r, lt, rt in co):
                return 2
        return None

    def spec(self):
        return {"kind": self.kind, "params": _jsonable(self.params), "p": self.p}


def sample_alpha(law, rng):
    """One draw of ``(l, r, lt, rt)`` as a tuple of floats."""
    return tuple(float(v) for v in law.sample(rng, 1)[0])


def c_of_q(law, q):
    return law.c(q)


def _jsonable(obj):
    if isinstance(obj, tuple):
        return [_jsonable(o) for o in obj]
    return obj


@dataclass(frozen=True)
class InitialLaw:
    """Initial one-particle law.  Gaussian is parametrised by its variance."""

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind not in INITIAL_KINDS:
            raise ValueError(f"unknown initial law {self.kind!r}")
        prm = self.params
        if self.kind == UNIFORM and not prm[0] < prm[1]:
            raise ValueError("uniform needs a < b")
        if self.kind == GAUSSIAN and not prm[1] > 0:
            raise ValueError("gaussian variance must be positive")
        if self.kind == EXPONENTIAL and not prm[0] > 0:
            raise ValueError("exponential rate must be positive")
        if self.kind == PARETO and not (prm[0] > 0 and prm[1] > 0):
            raise ValueError("pareto index and scale must be positive")
        if self.kind == TWO_POINT and not 0.0 <= prm[2] <= 1.0:
            raise ValueError("two-point weight must lie in [0, 1]")

    @classmethod
    def point_mass(cls, c):
        return cls(POINT, (float(c),))

    @classmethod
    def uniform(cls, a, b):
        return cls(UNIFORM, (float(a), float(b)))

    @classmethod
    def gaussian(cls, mean=0.0, variance=1.0):
        return cls(GAUSSIAN, (float(mean), float(variance)))

    @classmethod
    def exponential(cls, rate=1.0):
        return cls(EXPONENTIAL, (float(rate),))

    @classmethod
    def pareto(cls, index, scale=1.0):
        return cls(PARETO, (float(index), float(scale)))

    @classmethod
    def two_point(cls, x0, x1, w=0.5):
        """Mass ``1 - w`` at ``x0`` and ``w`` at ``x1``."""
        return cls(TWO_POINT, (float(x0), float(x1), float(w)))

    @property
    def moment_finite_up_to(self):
        return self.params[0] if self.kind == PARETO else math.inf

    def atoms(self):
        """``(values, weights)`` sorted by value for discrete kinds, else None."""
        if self.kind == POINT:
            return np.array([self.params[0]]), np.array([1.0])
        if self.kind == TWO_POINT:
            x0, x1, w = self.params
            vals = [(x0, 1.0 - w), (x1, w)]
            vals = sorted(v for v in vals if v[1] > 0)
            return np.array([v[0] for v in vals]), np.array([v[1] for v in vals])
        return None

    def sample(self, rng, size):
        k, prm = self.kind, self.params
        if k == POINT:
            return np.full(size, prm[0])
        if k == UNIFORM:
            return rng.uniform(prm[0], prm[1], size)
        if k == GAUSSIAN:
            return rng.normal(prm[0], math.sqrt(prm[1]), size)
        if k == EXPONENTIAL:
            return rng.exponential(1.0 / prm[0], size)
        if k == PARETO:
            return prm[1] * (1.0 - rng.random(size)) ** (-1.0 / prm[0])
        x0, x1, w = prm
        return np.where(rng.random(size) < w, x1, x0)

    def quantile(self, u):
        """Left-continuous quantile function, vectorised over ``u``."""
        u = np.asarray(u, dtype=float)
        k, prm = self.kind, self.params
        if k == POINT:
            return np.full_like(u, prm[0])
        if k == UNIFORM:
            return prm[0] + (prm[1] - prm[0]) * u
        if k == GAUSSIAN:
            return prm[0] + math.sqrt(prm[1]) * special.ndtri(u)
        with np.errstate(divide="ignore"):
            if k == EXPONENTIAL:
                return -np.log1p(-u) / prm[0]
            if k == PARETO:
                return prm[1] * (1.0 - u) ** (-1.0 / prm[0])
        vals, weights = self.atoms()
        if len(vals) == 1:
            return np.full_like(u, vals[0])
        return np.where(u <= weights[0], vals[0], vals[1])

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        k, prm = self.kind, self.params
        if k == POINT:
            return (x >= prm[0]).astype(float)
        if k == UNIFORM:
            return np.clip((x - prm[0]) / (prm[1] - prm[0]), 0.0, 1.0)
        if k == GAUSSIAN:
            return special.ndtr((x - prm[0]) / math.sqrt(prm[1]))
        if k == EXPONENTIAL:
            return np.where(x > 0, -np.expm1(-prm[0] * np.maximum(x, 0.0)), 0.0)
        if k == PARETO:
            a, xm = prm
            return np.where(x > xm, 1.0 - (xm / np.maximum(x, xm)) ** a, 0.0)
        vals, weights = self.atoms()
        return sum(w * (x >= v) for v, w in zip(vals, weights)).astype(float)

    def truncated_moment(self, x, order):
        """``E[X^order ; X <= x]`` for the continuous kinds (order 0, 1 or 2)."""
        x = np.asarray(x, dtype=float)
        if order == 0:
            return self.cdf(x)
        k, prm = self.kind, self.params
        with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
            if k == GAUSSIAN:
                mu, sd = prm[0], math.sqrt(prm[1])
                z = (x - mu) / sd
                phi = np.where(np.isfinite(z), np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi), 0.0)
                cdf = special.ndtr(z)
                if order == 1:
                    return mu * cdf - sd * phi
                zphi = np.where(np.isfinite(z), z * phi, 0.0)
                return (mu * mu + sd * sd) * cdf - 2 * mu * sd * phi - sd * sd * zphi
            if k == UNIFORM:
                a, b = prm
                xc = np.clip(x, a, b)
                return (xc ** (order + 1) - a ** (order + 1)) / ((order + 1) * (b - a))
            if k == EXPONENTIAL:
                lam = prm[0]
                xc = np.maximum(x, 0.0)
                tail = np.where(np.isinf(xc), 0.0, np.exp(-lam * xc))
                xt = np.where(np.isinf(xc), 0.0, xc)
                if order == 1:
                    return (1.0 - tail * (1.0 + lam * xt)) / lam
                return (2.0 - tail * (lam * lam * xt * xt + 2 * lam * xt + 2.0)) / lam ** 2
            if k == PARETO:
                a, xm = prm
                xc = np.maximum(x, xm)
                if order == a:
                    return a * xm ** a * np.log(xc / xm)
                if order < a:
                    return a * xm ** a * (xc ** (order - a) - xm ** (order - a)) / (order - a)
                return np.where(np.isinf(xc), np.inf,
                                a * xm ** a * (xc ** (order - a) - xm ** (order - a)) / (order - a))
        raise ValueError(f"truncated moments not defined for {k!r}")

    def moment(self, q):
        """Absolute moment ``E|X|^q``."""
        k, prm = self.kind, self.params
        if q == 0:
            return 1.0
        if k == POINT:
            return abs(prm[0]) ** q
        if k == UNIFORM:
            a, b = prm

            def prim(x):
                return math.copysign(abs(x) ** (q + 1), x) / (q + 1)
            return (prim(b) - prim(a)) / (b - a)
        if k == GAUSSIAN:
            mu, var = prm
            sd = math.sqrt(var)
            if mu == 0.0:
                return sd ** q * 2 ** (q / 2) * math.gamma((q + 1) / 2) / math.sqrt(math.pi)
            val, _ = integrate.quad(
                lambda z: abs(mu + sd * z) ** q * math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi),
                -np.inf, np.inf)
            return val
        if k == EXPONENTIAL:
            return math.gamma(q + 1) / prm[0] ** q
        if k == PARETO:
            a, xm = prm
            return a * xm ** q / (a - q) if q < a else math.inf
        x0, x1, w = prm
        return (1 - w) * abs(x0) ** q + w * abs(x1) ** q

    def spec(self):
        return {"kind": self.kind, "params": list(self.params)}


def model_hash(law, p0):
    """Short stable digest identifying an (interaction law, initial law) pair."""
    import hashlib
    blob = json.dumps({"law": law.spec(), "p0": p0.spec()}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def q_star(law, p0, cap=Q_STAR_CAP):
    """``sup{q : M_q(p0) < inf, c(q) > 0}`` (``-inf`` when the set is empty).

    The root of ``c`` above ``p`` is bracketed by doubling from ``[p, 2p]`` up
    to ``cap`` and then bisected.  If ``c`` stays positive up to the cap the
    result is ``inf``; that value is only certified when all coefficients are
    bounded by 1 in absolute value (then ``c`` is increasing).
    """
    p = law.p
    moment_cap = p0.moment_finite_up_to
    lo = None
    if law.c(p) > 0:
        lo = float(p)
    else:
        h = 1e-6 * p
        if law.c(p + h) > 0:
            lo = p + h
    if lo is None:
        # concave c vanishing at p and non-increasing above it
        below = [q for q in np.linspace(0.0, p, 65)[1:-1] if law.c(q) > 0]
        if not below:
            return -math.inf
        return min(float(p), moment_cap)

    hi = max(2.0 * p, lo)
    root = math.inf
    while True:
        if hi >= moment_cap:
            break
        if law.c(hi) <= 0:
            a, b = lo, hi
            for _ in range(200):
                m = 0.5 * (a + b)
                if law.c(m) > 0:
                    a = m
                else:
                    b = m
                if b - a <= 1e-13 * max(1.0, b):
                    break
            root = 0.5 * (a + b)
            break
        if hi >= cap:
            if not law.coefficients_bounded():
                logger.warning("c(q) still positive at the cap q=%g; q* reported as inf "
                               "without certificate", cap)
            break
        lo = hi
        hi = min(2.0 * hi, cap)
    return min(root, moment_cap)


@dataclass(frozen=True)
class ExponentProfile:
    c_of_p: float
    q_star: float
    certified: bool
    law: InteractionLaw = field(repr=False)

    def c_bar(self, q):
        return min(self.c_of_p, self.law.c(q))


def exponent_profile(law, p0):
    qs = q_star(law, p0)
    certified = not (math.isinf(qs) and qs > 0
                     and math.isinf(p0.moment_finite_up_to)
                     and not law.coefficients_bounded())
    return ExponentProfile(law.c(law.p), qs, certified, law)


@dataclass(frozen=True)
class Flag:
    name: str
    passed: bool
    value: float


@dataclass(frozen=True)
class HypothesisReport:
    flags: tuple

    @property
    def ok(self):
        return all(f.passed for f in self.flags)

    def failing(self):
        return [f.name for f in self.flags if not f.passed]

    def __getitem__(self, name):
        for f in self.flags:
            if f.name == name:
                return f
        raise KeyError(name)


def check_theorem_hypotheses(law, p0, tol=1e-9):
    """Check the conditions required for the propagation-of-chaos rates."""
    p = law.p
    cp = law.c(p)
    mp = p0.moment(p)
    flags = [
        Flag("c_p_nonnegative", cp >= -tol, cp),
        Flag("moment_p_finite", p < p0.moment_finite_up_to and math.isfinite(mp), mp),
        Flag("nondegenerate", law.nondegeneracy() > 0, law.nondegeneracy()),
    ]
    if p == 2:
        cm = law.cross_moment()
        qs = q_star(law, p0)
        flags.append(Flag("cross_moment_zero", abs(cm) <= tol, cm))
        flags.append(Flag("q_star_above_2", qs > 2, qs))
    return HypothesisReport(tuple(flags))
