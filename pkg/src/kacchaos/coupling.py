"""Coupled nonlinear processes driven by the particle system's own atoms.

``U^i`` jumps exactly when ``X^i`` does, with the same coefficients, but its
partner value is ``G(X_{t-}, tau)``: the monotone transport of the
leave-one-out empirical measure of ``X_{t-}`` onto P_t, randomised inside the
partner's cell by ``frac(tau)``.  ``V^i`` (for ``i`` in a block of ``k``
labels) replaces the σ-side atoms whose partner lies in the same block by
atoms of an independent copy of the stream, which makes the ``V^i`` of a
block independent nonlinear processes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .events import EventLog, EventStream
from .particles import _snapshot_grid, initial_states

_U_FLOOR = 1e-300


def _as_log(stream, t_end):
    if isinstance(stream, EventLog):
        return stream.until(t_end)
    return stream.take_until(t_end)


def _descriptor(stream):
    if isinstance(stream, EventStream):
        return {"n": stream.n_particles, "seed": stream.master_seed,
                "stream_id": stream.stream_id, "rate": stream.rate}
    return {"n": stream.n_particles, "log": True}


def _rank_level(x, i, j, f, n):
    """Quantile level of ``x[j]`` within the leave-``i``-out sample, shifted by ``f``."""
    xj = x[j]
    r = int(np.count_nonzero(x < xj)) + int(np.count_nonzero(x[:j] == xj))
    xi = x[i]
    if xi < xj or (xi == xj and i < j):
        r -= 1
    u = (r + f) / (n - 1)
    return u if u > 0.0 else _U_FLOOR


def g_coupling(x, i, tau, pool):
    """Partner value fed to ``U^i`` for an atom whose partner coordinate is ``tau``.

    ``x`` is the full pre-jump state vector; particle ``i`` (0-based) is left
    out.  ``floor(tau)`` selects the partner ``j``; its rank ``r`` among the
    remaining ``N-1`` states (ties broken by index) and ``f = frac(tau)``
    give the pool quantile at ``(r - 1 + f)/(N - 1)`` with 1-based ``r``.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if not 0.0 <= tau < n:
        raise ValueError(f"tau={tau} outside [0, {n})")
    j = int(tau)
    if j == i:
        raise ValueError(f"tau={tau} lies in the excluded cell of particle {i}")
    return pool.quantile_scalar(_rank_level(x, i, j, tau - j, n))


@dataclass
class CoupledRun:
    times: list
    x: list
    u: list
    sup: list
    tracked: np.ndarray
    p: int
    stream: dict
    collision_count: int = 0
    path: list = field(default_factory=list)

    def distance(self, snapshot=-1, particles=None):
        """Mean over tracked particles of ``|X^i - U^i|^p`` at a snapshot."""
        idx = self.tracked if particles is None else np.asarray(particles)
        return float(np.mean(np.abs(self.x[snapshot][idx] - self.u[snapshot][idx]) ** self.p))


@dataclass
class DecoupledRun:
    k: int
    blocks: int
    times: list
    u: list
    v: list
    p: int
    stream: dict
    copy_stream: dict
    path: list = field(default_factory=list)

    def distance(self, snapshot=-1):
        """Mean of ``|U^i - V^i|^p`` over all particles in the decoupled blocks."""
        return float(np.mean(np.abs(self.u[snapshot] - self.v[snapshot]) ** self.p))


def _engine(law, p0, n, t_end, stream, pool_provider, snapshot_times, x0, track,
            k=None, blocks=1, copy_stream=None, record_path=False):
    if n < 2:
        raise ValueError("need N >= 2")
    p = law.p
    grid = _snapshot_grid(snapshot_times, t_end)
    x = initial_states(p0, n, stream, x0)
    log = _as_log(stream, t_end)
    if log.n_particles != n:
        raise ValueError("stream has a different particle count")

    n_v = 0
    if k is not None:
        if not 2 <= k <= n:
            raise ValueError("need 2 <= k <= N")
        blocks = max(1, min(int(blocks), n // k))
        n_v = k * blocks
    if track is None:
        tracked = np.ones(n, dtype=bool)
    else:
        tracked = np.zeros(n, dtype=bool)
        tracked[np.asarray(list(track), dtype=np.int64)] = True
    tracked[:n_v] = True
    trk = tracked.tolist()

    u = x.copy()
    v = x[:n_v].copy()
    sup = np.zeros(n)

    times = log.t
    src = np.zeros(len(log), dtype=np.int8)
    idx = np.arange(len(log))
    if n_v:
        clog = _as_log(copy_stream, t_end)
        ci, cj = clog.i_idx, clog.j_idx
        keep = np.flatnonzero((ci < n_v) & (cj < n_v) & (ci // k == cj // k))
        times = np.concatenate([times, clog.t[keep]])
        src = np.concatenate([src, np.ones(keep.size, dtype=np.int8)])
        idx = np.concatenate([idx, keep])
        order = np.argsort(times, kind="stable")
        times, src, idx = times[order], src[order], idx[order]

    ii, jj = log.i_idx.tolist(), log.j_idx.tolist()
    alpha, rho, sigma = log.alpha.tolist(), log.rho.tolist(), log.sigma.tolist()
    if n_v:
        c_alpha, c_rho, c_j = clog.alpha.tolist(), clog.rho.tolist(), cj.tolist()
    src_l, idx_l, t_l = src.tolist(), idx.tolist(), times.tolist()
    cuts = np.searchsorted(times, grid, side="left")

    out_t, out_x, out_u, out_v, out_sup = [], [], [], [], []
    path = []
    if record_path:
        path.append((0.0, float(x[0]), float(u[0]), float(v[0]) if n_v else math.nan))
    pos = 0
    for s, cut in zip(grid, cuts):
        for e in range(pos, int(cut)):
            a = idx_l[e]
            t = t_l[e]
            pool = pool_provider(t)
            if src_l[e]:
                # copy atom: only the σ-side V moves, partner drawn through X_{t-}
                j = c_j[a]
                rr = c_rho[a]
                lt, rt = c_alpha[a][2], c_alpha[a][3]
                g = pool.quantile_scalar(_rank_level(x, j, int(rr), rr - int(rr), n))
                v[j] = lt * v[j] + rt * g
                if record_path and j == 0:
                    path.append((t, float(x[0]), float(u[0]), float(v[0])))
                continue
            i, j = ii[a], jj[a]
            l, r, lt, rt = alpha[a]
            if trk[i]:
                sg = sigma[a]
                gi = pool.quantile_scalar(_rank_level(x, i, j, sg - j, n))
            if trk[j]:
                rh = rho[a]
                gj = pool.quantile_scalar(_rank_level(x, j, i, rh - i, n))
            xi = x[i]
            xj = x[j]
            ni = l * xi + r * xj
            nj = lt * xj + rt * xi
            if not (math.isfinite(ni) and math.isfinite(nj)):
                raise OverflowError(f"state overflow at atom {a} (t={t})")
            x[i] = ni
            x[j] = nj
            if trk[i]:
                u[i] = l * u[i] + r * gi
                d = abs(ni - u[i]) ** p
                if d > sup[i]:
                    sup[i] = d
                if i < n_v:
                    v[i] = l * v[i] + r * gi
            if trk[j]:
                u[j] = lt * u[j] + rt * gj
                d = abs(nj - u[j]) ** p
                if d > sup[j]:
                    sup[j] = d
                if j < n_v and i // k != j // k:
                    v[j] = lt * v[j] + rt * gj
            if record_path and (i == 0 or j == 0):
                path.append((t, float(x[0]), float(u[0]), float(v[0]) if n_v else math.nan))
        pos = int(cut)
        out_t.append(s)
        out_x.append(x.copy())
        out_u.append(u.copy())
        out_v.append(v.copy())
        out_sup.append(sup.copy())

    return {"times": out_t, "x": out_x, "u": out_u, "v": out_v, "sup": out_sup,
            "tracked": np.flatnonzero(tracked), "count": len(log), "path": path,
            "blocks": blocks, "n_v": n_v, "copy": copy_stream if n_v else None}


def run_coupled(law, p0, n, t_end, stream, pool_provider, snapshot_times=None,
                track=None, x0=None, record_path=False):
    """Run X together with the coupled processes U (on ``track``, default all).

    ``pool_provider(t)`` returns the reference pool standing in for P_t.
    U starts at X_0 and consumes exactly the atoms of X; no extra randomness
    is drawn, so the X component equals :func:`run_bird` on the same stream.
    """
    res = _engine(law, p0, n, t_end, stream, pool_provider, snapshot_times, x0, track,
                  record_path=record_path)
    return CoupledRun(res["times"], res["x"], res["u"], res["sup"], res["tracked"],
                      law.p, _descriptor(stream), res["count"], res["path"])


def run_decoupled(law, p0, n, k, t_end, stream, stream_copy, pool_provider,
                  snapshot_times=None, blocks=1, x0=None, record_path=False):
    """U and the decoupled V on the first ``blocks`` blocks of ``k`` labels.

    With ``blocks=1`` this is the construction on labels ``0..k-1``.  Larger
    values repeat it on the disjoint label blocks ``[b k, (b+1) k)``, which by
    exchangeability have the same joint law, and share one copy stream.
    """
    res = _engine(law, p0, n, t_end, stream, pool_provider, snapshot_times, x0, track=(),
                  k=k, blocks=blocks, copy_stream=stream_copy, record_path=record_path)
    n_v = res["n_v"]
    return DecoupledRun(k, res["blocks"], res["times"], [u[:n_v] for u in res["u"]],
                        res["v"], law.p, _descriptor(stream), _descriptor(stream_copy),
                        res["path"])


def sup_distance_statistic(run, particle=0, snapshot=-1):
    """Running maximum of ``|X^i - U^i|^p`` over jump times up to a snapshot."""
    return float(run.sup[snapshot][particle])
