"""Regularization schedules, theoretical exponents and empirical rate sweeps."""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import csv
import io
import logging
import math

import numpy as np
from scipy import stats

from .data import NoiseSpec, TruthSpec, exact_l2_error, sample_dataset
from .errors import InputError, MklError
from .solver import FitOptions, RegParams, block_systems, fit

__all__ = [
    "ScheduleInputs",
    "RateReport",
    "eta",
    "xi",
    "schedule",
    "theoretical_exponent",
    "theoretical_d_exponent",
    "preconditions",
    "fit_loglog_slope",
    "run_rate_sweep",
    "d_sweep",
    "phase_transition_scan",
]

log = logging.getLogger(__name__)

BRANCHES = ("l1", "elastic")


def _branch(branch):
    b = str(branch).lower()
    if b not in BRANCHES:
        raise InputError(f"branch must be one of {BRANCHES}, got {branch!r}")
    return b


def eta(t, n):
    return max(1.0, math.sqrt(t), t / math.sqrt(n))


def xi(lam, n, M, s):
    if not lam > 0:
        raise InputError("lambda must be positive")
    return max(
        lam ** (-s / 2.0) / math.sqrt(n),
        lam ** (-0.5) / n ** (1.0 / (1.0 + s)),
        math.sqrt(math.log(M) / n),
    )


@dataclass(frozen=True)
class ScheduleInputs:
    n: int
    M: int
    d: int
    s: float
    q: float = 0.0
    R2g: float = None
    R1f: float = None
    t: float = 1.0
    psi: float = 1.0

    def __post_init__(self):
        if self.t < 1:
            raise InputError("t must be at least 1")
        if min(self.n, self.M, self.d) < 1:
            raise InputError("n, M and d must be positive")
        if not 0 < self.s < 1 or not 0 <= self.q <= 1:
            raise InputError("need s in (0, 1) and q in [0, 1]")


def schedule(inputs, branch):
    """Regularization triple and base ``lambda`` for the chosen branch.

    elastic: ``lam = d^{1/(1+q+s)} n^{-1/(1+q+s)} R_{2,g*}^{-2/(1+q+s)}``, ``lam3 = lam``;
    l1: ``lam = d^{(1-s)/(1+s)} n^{-1/(1+s)} R_{1,f*}^{-2/(1+s)}``, ``lam3 = 0``.
    Both use ``lam1 = psi eta(t) xi_n(lam)`` and ``lam2 = lam1 sqrt(lam)``.
    """
    branch = _branch(branch)
    n, d, s, q = inputs.n, inputs.d, inputs.s, inputs.q
    if branch == "elastic":
        if inputs.R2g is None:
            raise InputError("the elastic schedule needs R_{2,g*}")
        a = 1.0 + q + s
        lam = d ** (1.0 / a) * n ** (-1.0 / a) * inputs.R2g ** (-2.0 / a)
    else:
        if inputs.R1f is None:
            raise InputError("the L1 schedule needs R_{1,f*}")
        lam = d ** ((1.0 - s) / (1.0 + s)) * n ** (-1.0 / (1.0 + s)) * inputs.R1f ** (-2.0 / (1.0 + s))
    lam1 = inputs.psi * eta(inputs.t, n) * xi(lam, n, inputs.M, s)
    lam3 = lam if branch == "elastic" else 0.0
    return RegParams(lam1, lam1 * math.sqrt(lam), lam3), lam


def theoretical_exponent(s, q, branch):
    """Exponent of ``n`` in the leading term of the simplified bound."""
    if _branch(branch) == "l1":
        return -1.0 / (1.0 + s)
    return -(1.0 + q) / (1.0 + q + s)


def theoretical_d_exponent(s, q, branch):
    """Exponent of ``d`` in the leading term, with ``R`` held fixed."""
    if _branch(branch) == "l1":
        return (1.0 - s) / (1.0 + s)
    return (1.0 + q) / (1.0 + q + s)


def preconditions(inputs, branch, C1=1.0, beta=1.0):
    """Side conditions of the rate theorem, with unknown constants set to 1."""
    params, lam = schedule(inputs, branch)
    x = xi(lam, inputs.n, inputs.M, inputs.s)
    proxy = C1 / beta**2 * inputs.psi * math.sqrt(inputs.n) * x * x * inputs.d
    logm = math.log(inputs.M) / math.sqrt(inputs.n)
    return {"logM_over_sqrt_n": logm, "logM_ok": logm <= 1.0, "re_proxy": proxy, "re_ok": proxy <= 1.0}


def fit_loglog_slope(x, y):
    """Least-squares slope of ``log y`` on ``log x`` and its standard error."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or np.any(x <= 0) or np.any(y <= 0):
        raise InputError("need at least two positive points")
    res = stats.linregress(np.log(x), np.log(y))
    return float(res.slope), float(res.stderr)


@dataclass
class RateReport:
    axis: str
    branch: str
    grid: list
    mean: list
    se: list
    slope: float
    slope_se: float
    theory_exponent: float
    errors: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    fixed: dict = field(default_factory=dict)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "d", "mean_err", "se", "branch", "slope", "theory_exponent"])
        for g, m, s in zip(self.grid, self.mean, self.se):
            n = g if self.axis == "n" else self.fixed.get("n")
            d = g if self.axis == "d" else self.fixed.get("d")
            w.writerow([n, d, repr(m), repr(s), self.branch, repr(self.slope), repr(self.theory_exponent)])
        return buf.getvalue()


@dataclass(frozen=True)
class SweepCell:
    truth: TruthSpec
    n: int
    seed: int
    branch: str
    noise: NoiseSpec
    t: float = 1.0
    psi: float = 1.0
    lam_scale: float = 1.0
    opts: FitOptions = field(default_factory=FitOptions)


def _data_seed(seed, n):
    return int(np.random.SeedSequence([seed, n]).generate_state(1)[0])


def run_cell(cell, systems=None):
    """Fit one (n, seed) cell; returns ``(error, converged, preconditions)``."""
    truth = cell.truth.build()
    ds = sample_dataset(truth, cell.n, cell.noise, seed=_data_seed(cell.seed, cell.n))
    inp = ScheduleInputs(n=cell.n, M=truth.M, d=max(truth.d, 1), s=cell.truth.s, q=truth.q,
                         R2g=truth.R(2, "g"), R1f=truth.R(1, "f"), t=cell.t, psi=cell.psi)
    params, _ = schedule(inp, cell.branch)
    if cell.lam_scale != 1.0:
        params = RegParams(*(cell.lam_scale * v for v in params.as_tuple()))
    if systems is None:
        systems = block_systems(ds.X, truth.kernels)
    model = fit(ds, truth.kernels, params, cell.opts, systems=systems)
    err = exact_l2_error(model.spectral_blocks(), truth)
    return err, model.converged, preconditions(inp, cell.branch)


def _safe_cell(cell):
    try:
        return run_cell(cell)
    except MklError as exc:
        log.warning("cell n=%d seed=%d failed: %s", cell.n, cell.seed, exc)
        return np.nan, False, {}


def _run_cells(cells, jobs):
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_safe_cell, cells))
    return [_safe_cell(c) for c in cells]


def _aggregate(grid, cells, results, key):
    errors = {g: [] for g in grid}
    flags = []
    for cell, (err, conv, pre) in zip(cells, results):
        g = key(cell)
        if not conv or not np.isfinite(err):
            flags.append({"point": g, "seed": cell.seed, "reason": "not converged"})
            log.warning("excluding point %s seed %d: fit not converged", g, cell.seed)
            errors[g].append(np.nan)
            continue
        if pre and not (pre["logM_ok"] and pre["re_ok"]):
            flags.append({"point": g, "seed": cell.seed, "reason": "precondition proxy exceeded", **pre})
        errors[g].append(float(err))
    mean, se = [], []
    for g in grid:
        e = np.array(errors[g], dtype=float)
        e = e[np.isfinite(e)]
        mean.append(float(e.mean()) if e.size else float("nan"))
        se.append(float(e.std(ddof=1) / np.sqrt(e.size)) if e.size > 1 else float("nan"))
    return errors, flags, mean, se


def run_rate_sweep(truth, n_grid, seeds, branch, t=1.0, noise=None, psi=1.0, lam_scale=1.0,
                   opts=None, jobs=1):
    """Mean exact ``L2(Pi)`` error along ``n`` and its fitted log-log slope.

    ``truth`` is a :class:`TruthSpec`; seed ``k`` replaces its ``seed`` field,
    so truth and data are redrawn per seed and shared across branches.
    """
    branch = _branch(branch)
    n_grid = sorted(int(n) for n in n_grid)
    seeds = list(seeds)
    if len(n_grid) < 4 or n_grid[-1] < 16 * n_grid[0]:
        raise InputError("n grid needs at least 4 points spanning a 16x range")
    if len(seeds) < 10:
        raise InputError("need at least 10 seeds")
    noise = NoiseSpec() if noise is None else noise
    opts = opts or FitOptions()
    cells = [SweepCell(replace(truth, seed=int(sd)), n, int(sd), branch, noise, t, psi, lam_scale, opts)
             for n in n_grid for sd in seeds]
    results = _run_cells(cells, jobs)
    errors, flags, mean, se = _aggregate(n_grid, cells, results, key=lambda c: c.n)
    good = [i for i, m in enumerate(mean) if np.isfinite(m) and m > 0]
    slope, slope_se = fit_loglog_slope([n_grid[i] for i in good], [mean[i] for i in good])
    return RateReport("n", branch, n_grid, mean, se, slope, slope_se,
                      theoretical_exponent(truth.s, truth.q, branch), errors, flags,
                      fixed={"d": truth.d, "M": truth.M, "q": truth.q, "s": truth.s})


def d_sweep(n, d_grid, branch, seeds, M, s=0.5, q=0.0, noise=None, t=1.0, psi=1.0, K=512,
            support=8, profile="homogeneous", opts=None, jobs=1):
    """Mean exact error along the number of active blocks ``d`` at fixed ``n``.

    Designs and block eigensystems are shared across ``d`` for a given seed.
    """
    branch = _branch(branch)
    d_grid = sorted(int(d) for d in d_grid)
    if max(d_grid) > M / 2 or min(d_grid) < 1:
        raise InputError("every d must satisfy 1 <= d <= M/2")
    noise = NoiseSpec() if noise is None else noise
    opts = opts or FitOptions()
    cells, results = [], []
    for sd in seeds:
        systems = None
        for d in d_grid:
            spec = TruthSpec(M=M, d=d, q=q, s=s, K=K, profile=profile, support=support, seed=int(sd))
            cell = SweepCell(spec, int(n), int(sd), branch, noise, t, psi, 1.0, opts)
            if systems is None:
                ds = sample_dataset(spec.build(), n, noise, seed=_data_seed(cell.seed, n))
                systems = block_systems(ds.X, spec.kernel)
            try:
                results.append(run_cell(cell, systems))
            except MklError as exc:
                log.warning("cell d=%d seed=%d failed: %s", d, sd, exc)
                results.append((np.nan, False, {}))
            cells.append(cell)
    errors, flags, mean, se = _aggregate(d_grid, cells, results, key=lambda c: c.truth.d)
    good = [i for i, m in enumerate(mean) if np.isfinite(m) and m > 0]
    slope, slope_se = fit_loglog_slope([d_grid[i] for i in good], [mean[i] for i in good])
    return RateReport("d", branch, d_grid, mean, se, slope, slope_se,
                      theoretical_d_exponent(s, q, branch), errors, flags,
                      fixed={"n": int(n), "M": M, "q": q, "s": s})


def phase_transition_scan(s, d, n, R2g, q_grid, R1f=None):
    """Compare the leading terms of the L1 and elastic-net bounds along ``q``.

    ``R1f`` defaults to ``sqrt(d) * R2g``, the homogeneous case at ``q = 0``.
    Returns one dict per ``q`` with both values and a ``crossover`` flag set
    where the elastic-net bound is strictly smaller.
    """
    R1f = math.sqrt(d) * R2g if R1f is None else R1f
    l1 = d ** ((1 - s) / (1 + s)) * n ** (-1 / (1 + s)) * R1f ** (2 * s / (1 + s))
    rows = []
    for q in q_grid:
        a = 1 + q + s
        el = d ** ((1 + q) / a) * n ** (-(1 + q) / a) * R2g ** (2 * s / a)
        rows.append({"q": float(q), "l1_bound": l1, "elastic_bound": el, "crossover": el < l1})
    return rows
