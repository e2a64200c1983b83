"""Experiment configuration, orchestration and CSV/JSON reporting.

A run is a sweep over ``(N, replica)`` cells.  Each cell simulates one path
up to ``max(t_grid)`` and reports every statistic at every grid time, so a
cell's rows depend only on ``(master seed, experiment, N, replica)``.
"""
from __future__ import annotations

import configparser
import csv
import io
import json
import logging
import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from ._rng import derive_seed, make_rng
from .coupling import run_coupled, run_decoupled
from .events import EventStream
from .laws import InitialLaw, InteractionLaw, check_theorem_hypotheses, model_hash
from .metrics import (GaussianShiftExchangeable, fit_decay_rate, fit_power_law,
                      block_split_check, mc_summary, moment_q, w_p_quantile, wpp_vs)
from .particles import run_bird, run_nanbu
from .reference import PoolProvider

logger = logging.getLogger(__name__)

CSV_VERSION = 1
COLUMNS = ("experiment", "model_hash", "N", "t", "replica", "statistic", "value", "stderr", "seed")

CHAOS = "chaos-rate"
MOMENT = "moment-decay"
COUPLING = "coupling-distance"
DECOUPLING = "decoupling"
NANBU = "nanbu-vs-bird"
SUP = "sup-distance"
BLOCK_SPLIT = "block-split-audit"
KINDS = (CHAOS, MOMENT, COUPLING, DECOUPLING, NANBU, SUP, BLOCK_SPLIT)
THEOREM_KINDS = (CHAOS, COUPLING, DECOUPLING, SUP)
RATE_KINDS = (CHAOS, COUPLING, DECOUPLING, SUP)


class HypothesisError(ValueError):
    pass


# model specs ---------------------------------------------------------------

MODEL_FORMS = {
    "kac": "uniform-angle Kac collisions (p=2)",
    "kac:<theta>": "Kac with a fixed angle",
    "inelastic_kac:<e>": "Kac with coefficients cos|cos|^e, sin|sin|^e",
    "wealth:<lambda>": "conservative trade with fixed saving weight (p=1)",
    "wealth:uniform:<a>:<b>": "conservative trade with weight ~ U(a, b)",
    "table:<w>@<l>,<r>,<lt>,<rt>;...": "finite table of coefficient atoms",
}
INITIAL_FORMS = {
    "point:<c>": "point mass",
    "uniform:<a>:<b>": "uniform on [a, b]",
    "gaussian:<mean>:<variance>": "normal law",
    "exponential:<rate>": "exponential law",
    "pareto:<index>:<scale>": "Pareto law (moments finite below the index)",
    "two_point:<x0>:<x1>:<w>": "mass w at x1, 1-w at x0",
}


def parse_model(spec, p=None):
    head, _, rest = spec.strip().partition(":")
    kw = {} if p is None else {"p": int(p)}
    if head == "kac":
        return InteractionLaw.kac(float(rest) if rest else None, **kw)
    if head == "inelastic_kac":
        return InteractionLaw.inelastic_kac(float(rest), **kw)
    if head == "wealth":
        if rest.startswith("uniform"):
            _, a, b = rest.split(":")
            return InteractionLaw.wealth(("uniform", float(a), float(b)), **kw)
        return InteractionLaw.wealth(float(rest) if rest else 0.7, **kw)
    if head == "table":
        atoms = []
        for part in rest.split(";"):
            w, _, coeffs = part.partition("@")
            atoms.append((float(w), tuple(float(c) for c in coeffs.split(","))))
        return InteractionLaw.table(atoms, **kw)
    raise ValueError(f"unknown model spec {spec!r}")


def parse_initial(spec):
    head, *args = spec.strip().split(":")
    vals = [float(a) for a in args]
    makers = {"point": InitialLaw.point_mass, "uniform": InitialLaw.uniform,
              "gaussian": InitialLaw.gaussian, "exponential": InitialLaw.exponential,
              "pareto": InitialLaw.pareto, "two_point": InitialLaw.two_point}
    if head not in makers:
        raise ValueError(f"unknown initial-law spec {spec!r}")
    return makers[head](*vals)


# configuration -------------------------------------------------------------

def _floats(text):
    return [float(v) for v in str(text).replace(" ", "").split(",") if v]


def _ints(text):
    return [int(v) for v in str(text).replace(" ", "").split(",") if v]


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep.  Config files are ``key = value`` lines (``#`` comments).

    Keys: experiment, model, p0, p, n_grid, t_grid, replicas, pool_size,
    ref_step, seed, k, blocks, exact_pool, out.
    """

    experiment: str = CHAOS
    model: str = "wealth:0.7"
    p0: str = "exponential:1"
    p: int | None = None
    n_grid: tuple = (64, 128, 256)
    t_grid: tuple = (1.0,)
    replicas: int = 20
    pool_size: int = 1 << 16
    ref_step: float = 0.01
    seed: int = 0
    k: int = 2
    blocks: str = "all"
    exact_pool: bool = False
    out: str | None = None

    def __post_init__(self):
        if self.experiment not in KINDS:
            raise ValueError(f"unknown experiment {self.experiment!r}; one of {KINDS}")
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if any(n < 2 for n in self.n_grid):
            raise ValueError("N grid entries must be >= 2")
        if not self.t_grid or any(t <= 0 for t in self.t_grid):
            raise ValueError("t grid entries must be positive")
        if self.pool_size < 1:
            raise ValueError("pool_size must be >= 1")
        object.__setattr__(self, "n_grid", tuple(sorted(set(int(n) for n in self.n_grid))))
        object.__setattr__(self, "t_grid", tuple(sorted(set(float(t) for t in self.t_grid))))

    @property
    def law(self):
        return parse_model(self.model, self.p)

    @property
    def initial(self):
        return parse_initial(self.p0)

    @property
    def model_hash(self):
        return model_hash(self.law, self.initial)

    @classmethod
    def from_file(cls, path):
        with open(path) as fh:
            return cls.from_text(fh.read())

    @classmethod
    def from_text(cls, text):
        cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
        cp.read_string("[experiment]\n" + text)
        sec = cp["experiment"]
        known = set(cls.__dataclass_fields__)
        unknown = set(sec) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        for key, raw in sec.items():
            if key in ("n_grid",):
                kw[key] = tuple(_ints(raw))
            elif key == "t_grid":
                kw[key] = tuple(_floats(raw))
            elif key in ("replicas", "pool_size", "seed", "k", "p"):
                kw[key] = int(raw)
            elif key == "ref_step":
                kw[key] = float(raw)
            elif key == "exact_pool":
                kw[key] = sec.getboolean(key)
            else:
                kw[key] = raw.strip()
        return cls(**kw)

    def to_text(self):
        lines = []
        for key, val in asdict(self).items():
            if val is None:
                continue
            if isinstance(val, tuple):
                val = ",".join(repr(v) for v in val)
            lines.append(f"{key} = {val}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True, order=True)
class ReportRow:
    experiment: str
    model_hash: str
    N: int
    t: float
    replica: int
    statistic: str
    value: float
    stderr: float | None = None
    seed: int = 0

    def fields(self):
        se = "" if self.stderr is None else repr(float(self.stderr))
        return [self.experiment, self.model_hash, str(self.N), repr(float(self.t)),
                str(self.replica), self.statistic, repr(float(self.value)), se, str(self.seed)]


def _sort_key(row):
    return (row.N, row.t, row.replica, row.statistic)


def cell_seed(master, kind, n, replica):
    return derive_seed(int(master), kind, int(n), int(replica)) >> 1


# cell evaluation -----------------------------------------------------------

_CTX = {}


def _providers(cfg):
    law, p0 = cfg.law, cfg.initial
    t_max = max(cfg.t_grid)
    base = derive_seed(cfg.seed, "pools") >> 1
    size = cfg.pool_size
    provs = {}
    if cfg.experiment in (CHAOS,):
        # one exact-time reference per grid time
        provs["ref"] = PoolProvider(law, p0, size, seed=base, exact=True)
        for t in cfg.t_grid:
            provs["ref"](t)
    if cfg.experiment in (COUPLING, DECOUPLING, SUP):
        prov = PoolProvider(law, p0, size, step=cfg.ref_step, seed=base + 1,
                            exact=cfg.exact_pool)
        if not cfg.exact_pool:
            prov.prebuild(t_max)
        provs["coupling"] = prov
        if size < max(cfg.n_grid) ** 2 and not prov.stationary:
            logger.warning("pool size %d is below N^2=%d; pool noise may mask the N-rate",
                           size, max(cfg.n_grid) ** 2)
    return provs


def pool_noise_floor(pool, p, rng):
    """Rough ``W_p^p(pool, P_t)`` from a random half split of the pool.

    Two independent halves sit about ``2^p`` times further apart (in
    ``W_p^p``) than the whole pool sits from its law.  Analytic pools count
    as noise free.
    """
    if pool.source == "analytic" or pool.size < 2:
        return 0.0
    perm = rng.permutation(pool.size)
    half = pool.size // 2
    a, b = pool.samples[perm[:half]], pool.samples[perm[half:2 * half]]
    return w_p_quantile(a, b, p) ** p / 2.0 ** p


def _noise_floor(cfg, provs):
    prov = provs.get("coupling")
    if prov is None:
        return []
    rng = make_rng(derive_seed(cfg.seed, "noise-floor"))
    return [{"t": t, "value": pool_noise_floor(prov(t), cfg.law.p, rng)} for t in cfg.t_grid]


def _bird_cell(cfg, n, seed):
    law, p0 = cfg.law, cfg.initial
    stream = EventStream(n, law, seed)
    return run_bird(law, p0, n, max(cfg.t_grid), stream, cfg.t_grid)


def _evaluate_cell(cfg, n, replica, provs, dump_states=False, dump_paths=False):
    kind = cfg.experiment
    seed = cell_seed(cfg.seed, kind, n, replica)
    law, p0, p = cfg.law, cfg.initial, cfg.law.p
    t_max = max(cfg.t_grid)
    stats = []
    states, path = [], []

    if kind == CHAOS:
        for t, ens in _bird_cell(cfg, n, seed):
            stats.append((t, "wpp", wpp_vs(ens.states, provs["ref"](t), p)))
            states.append((t, ens.states))
    elif kind == MOMENT:
        for t, ens in _bird_cell(cfg, n, seed):
            stats.append((t, "moment_p", moment_q(ens.states, p)))
            stats.append((t, "moment_2", moment_q(ens.states, 2)))
            states.append((t, ens.states))
    elif kind == NANBU:
        bird = _bird_cell(cfg, n, seed)
        stream = EventStream.for_nanbu(n, law, seed, stream_id=1)
        nanbu = run_nanbu(law, p0, n, t_max, stream, cfg.t_grid)
        for (t, eb), (_, en) in zip(bird, nanbu):
            stats.append((t, "bird_var", float(np.var(eb.states))))
            stats.append((t, "nanbu_var", float(np.var(en.states))))
            stats.append((t, "bird_moment_p", moment_q(eb.states, p)))
            stats.append((t, "nanbu_moment_p", moment_q(en.states, p)))
            states.append((t, eb.states))
    elif kind in (COUPLING, SUP):
        stream = EventStream(n, law, seed)
        run = run_coupled(law, p0, n, t_max, stream, provs["coupling"], cfg.t_grid,
                          record_path=dump_paths)
        for s, t in enumerate(run.times):
            if kind == COUPLING:
                stats.append((t, "coupling_distance", run.distance(s)))
                stats.append((t, "coupling_distance_1", run.distance(s, [0])))
            else:
                stats.append((t, "sup_distance", float(np.mean(run.sup[s]))))
                stats.append((t, "sup_distance_1", float(run.sup[s][0])))
                stats.append((t, "terminal_distance", run.distance(s)))
            states.append((t, run.x[s]))
        path = run.path
    elif kind == DECOUPLING:
        stream = EventStream(n, law, seed)
        copy = stream.fork_independent_copy()
        blocks = n if cfg.blocks == "all" else int(cfg.blocks)
        run = run_decoupled(law, p0, n, cfg.k, t_max, stream, copy, provs["coupling"],
                            cfg.t_grid, blocks=blocks, record_path=dump_paths)
        for s, t in enumerate(run.times):
            stats.append((t, "decoupling_distance", run.distance(s)))
            stats.append((t, "decoupling_distance_1",
                          float(abs(run.u[s][0] - run.v[s][0]) ** p)))
        path = run.path
    elif kind == BLOCK_SPLIT:
        rng = make_rng(seed)
        m = n
        nb = int(rng.integers(1, m + 1))
        shift = float(rng.uniform(0.0, 2.0))
        gen = GaussianShiftExchangeable(m, shift)
        rep = block_split_check(gen, InitialLaw.gaussian(0.0, 1.0), nb, p, 200, rng)
        t = cfg.t_grid[0]
        stats += [(t, "lhs", rep.lhs), (t, "rhs", rep.rhs), (t, "holds", float(rep.holds)),
                  (t, "n", float(nb)), (t, "shift", shift)]
    rows = [ReportRow(kind, cfg.model_hash, n, float(t), replica, name, float(v), None, seed)
            for t, name, v in stats]
    for r in rows:
        if not math.isfinite(r.value):
            raise FloatingPointError(f"non-finite statistic {r.statistic} in cell N={n} "
                                     f"replica={replica}")
    extras = {}
    if dump_states:
        extras["states"] = states
    if dump_paths:
        extras["path"] = path
    return rows, extras


def _worker(task):
    n, replica = task
    cfg, provs, ds, dp = _CTX["cfg"], _CTX["provs"], _CTX["ds"], _CTX["dp"]
    return n, replica, _evaluate_cell(cfg, n, replica, provs, ds, dp and replica == 0)


# running -------------------------------------------------------------------

@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list
    summary: dict
    table: str
    states: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)


def require_hypotheses(cfg):
    if cfg.experiment not in THEOREM_KINDS:
        return
    report = check_theorem_hypotheses(cfg.law, cfg.initial)
    if not report.ok:
        names = ", ".join(f"{name} (value {report[name].value})" for name in report.failing())
        raise HypothesisError(f"{cfg.experiment} refused: failing hypothesis {names}")


def run_experiment(cfg, workers=1, dump_states=False, dump_paths=False):
    require_hypotheses(cfg)
    provs = _providers(cfg)
    tasks = [(n, r) for n in cfg.n_grid for r in range(cfg.replicas)]
    _CTX.update(cfg=cfg, provs=provs, ds=dump_states, dp=dump_paths)
    try:
        if workers <= 1:
            results = [_worker(t) for t in tasks]
        else:
            ctx = multiprocessing.get_context("fork")
            with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as ex:
                results = list(ex.map(_worker, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    finally:
        _CTX.clear()
    rows, states, paths = [], {}, {}
    for n, replica, (cell_rows, extras) in results:
        rows.extend(cell_rows)
        if "states" in extras:
            states[(n, replica)] = extras["states"]
        if extras.get("path"):
            paths[n] = extras["path"]
    rows.sort(key=_sort_key)
    table, summary = summarize(rows)
    floor = _noise_floor(cfg, provs)
    if floor:
        summary["noise_floor"] = floor
        table += "\n" + "\n".join(f"pool noise floor @t={f['t']}: {f['value']:.3g}" for f in floor)
    return ExperimentResult(cfg, rows, summary, table, states, paths)


def header_line(cfg=None):
    text = f"# kacchaos report v{CSV_VERSION}"
    if cfg is not None:
        text += (f" experiment={cfg.experiment} model={cfg.model} p0={cfg.p0}"
                 f" p={cfg.law.p} seed={cfg.seed} pool_size={cfg.pool_size}")
    return text


def rows_to_csv(rows, cfg=None):
    buf = io.StringIO()
    buf.write(header_line(cfg) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in sorted(rows, key=_sort_key):
        w.writerow(r.fields())
    return buf.getvalue()


def write_csv(rows, path, cfg=None):
    Path(path).write_text(rows_to_csv(rows, cfg))


def read_csv(path):
    rows = []
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rd = csv.DictReader(lines)
    if tuple(rd.fieldnames or ()) != COLUMNS:
        raise ValueError(f"unexpected columns {rd.fieldnames}")
    for rec in rd:
        rows.append(ReportRow(rec["experiment"], rec["model_hash"], int(rec["N"]),
                              float(rec["t"]), int(rec["replica"]), rec["statistic"],
                              float(rec["value"]),
                              float(rec["stderr"]) if rec["stderr"] else None,
                              int(rec["seed"])))
    return rows


def _per_n_path(path, n, many):
    p = Path(path)
    return p if not many else p.with_name(f"{p.stem}_N{n}{p.suffix}")


def write_states(states, path, n_grid):
    many = len(n_grid) > 1
    for n in n_grid:
        keys = sorted(k for k in states if k[0] == n)
        with open(_per_n_path(path, n, many), "w") as fh:
            fh.write("replica,time,particle_index,state\n")
            for key in keys:
                for t, x in states[key]:
                    for idx, val in enumerate(x):
                        fh.write(f"{key[1]},{t!r},{idx},{float(val)!r}\n")


def write_paths(paths, path, n_grid):
    many = len(n_grid) > 1
    for n in n_grid:
        with open(_per_n_path(path, n, many), "w") as fh:
            fh.write("time,X1,U1,V1\n")
            for t, x, u, v in paths.get(n, []):
                fh.write(f"{t!r},{x!r},{u!r},{v!r}\n")


# summary -------------------------------------------------------------------

def summarize(rows, thresholds=None):
    """Per-cell means with standard errors, plus fits.

    Rate experiments get a power-law fit in N per (statistic, t); moment
    experiments get an exponential decay fit in t per (statistic, N).
    ``thresholds`` maps a statistic to ``{"gamma_min": .., "r2_min": ..}``.
    """
    groups = {}
    kind = rows[0].experiment if rows else None
    for r in rows:
        groups.setdefault((r.statistic, r.N, r.t), []).append(r.value)
    cells = []
    for (stat, n, t), vals in sorted(groups.items()):
        if not vals:
            continue
        est = mc_summary(vals)
        cells.append({"statistic": stat, "N": n, "t": t, "mean": est.mean,
                      "stderr": est.stderr, "count": est.reps})

    fits = []
    stats = sorted({c["statistic"] for c in cells})
    if kind in RATE_KINDS:
        for stat in stats:
            for t in sorted({c["t"] for c in cells if c["statistic"] == stat}):
                pts = [(c["N"], c["mean"]) for c in cells if c["statistic"] == stat and c["t"] == t]
                fits.append(_fit_entry(stat, "t", t, pts, fit_power_law, "gamma_hat", thresholds))
    elif kind == MOMENT:
        for stat in stats:
            for n in sorted({c["N"] for c in cells if c["statistic"] == stat}):
                pts = [(c["t"], c["mean"]) for c in cells if c["statistic"] == stat and c["N"] == n]
                fits.append(_fit_entry(stat, "N", n, pts, fit_decay_rate, "decay_rate", None))

    lines = [f"{'statistic':<24}{'N':>7}{'t':>8}{'mean':>14}{'stderr':>12}{'n':>6}"]
    for c in cells:
        lines.append(f"{c['statistic']:<24}{c['N']:>7}{c['t']:>8.3g}{c['mean']:>14.6g}"
                     f"{c['stderr']:>12.3g}{c['count']:>6}")
    for f in fits:
        if "error" in f:
            lines.append(f"fit {f['statistic']} @{f['at']}={f['value']}: refused ({f['error']})")
        else:
            extra = "" if f.get("passed") is None else f"  {'PASS' if f['passed'] else 'FAIL'}"
            lines.append(f"fit {f['statistic']} @{f['at']}={f['value']}: {f['estimate_name']}="
                         f"{f['estimate']:.4f} r2={f['r_squared']:.4f} points={f['n_points']}{extra}")
    return "\n".join(lines), {"version": CSV_VERSION, "experiment": kind,
                              "cells": cells, "fits": fits}


def _fit_entry(stat, at, value, pts, fitter, name, thresholds):
    entry = {"statistic": stat, "at": at, "value": value, "estimate_name": name}
    if pts and all(v == 0.0 for _, v in pts):
        entry["error"] = "non-positive values (exact-zero cells)"
        entry["exact_zero"] = True
        return entry
    try:
        fit = fitter(pts)
    except ValueError as exc:
        entry["error"] = str(exc)
        return entry
    entry.update(estimate=fit.gamma_hat, intercept=fit.intercept,
                 r_squared=fit.r_squared, n_points=fit.n_points)
    th = (thresholds or {}).get(stat)
    if th:
        entry["passed"] = bool(fit.gamma_hat >= th.get("gamma_min", -math.inf)
                               and fit.r_squared >= th.get("r2_min", -math.inf))
    return entry


def with_overrides(cfg, **kw):
    kw = {k: v for k, v in kw.items() if v is not None}
    return replace(cfg, **kw) if kw else cfg


def summary_json(summary):
    return json.dumps(summary, indent=2, sort_keys=True)
