"""Hold-out parameter selection with a clipped estimator.

The data are split in half, every candidate ``(lam1, lam2, lam3)`` is fitted on
the first half, predictions are clipped to ``[-B, B]`` and the candidate with
the smallest validation error wins.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
import csv
import io

import numpy as np

from .data import exact_l2_error
from .errors import InputError, MklError, SelectionError
from .solver import FitOptions, RegParams, block_systems, fit

__all__ = [
    "ParamGrid",
    "ClipSpec",
    "ClippedModel",
    "SelectionResult",
    "split",
    "clip",
    "build_grid",
    "select",
]

EXACT_MAX_N = 8


def split(dataset):
    """First ``floor(n/2)`` rows for training, the rest for validation."""
    n = dataset.n
    if n < 2:
        raise InputError("need at least two samples to split")
    half = n // 2
    return dataset.subset(slice(0, half)), dataset.subset(slice(half, n))


def clip(value, B):
    if not B > 0:
        raise InputError("clipping bound must be positive")
    out = np.clip(value, -B, B)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class ParamGrid:
    """Candidate triples in a fixed order: elastic branch first, then L1."""

    triples: tuple
    branches: tuple
    mode: str
    gamma: tuple

    def __len__(self):
        return len(self.triples)

    def params(self):
        return [RegParams(*t) for t in self.triples]


def build_grid(n, mode="log", budget=8):
    """Candidate set over ``Gamma_n``.

    ``mode="exact"`` uses ``Gamma_n = {1/n^2, 2/n^2, ..., 1}`` (``n <= 8`` only);
    ``mode="log"`` uses ``budget`` log-spaced values on ``[1/n^2, 1]``.
    Elastic triples are ``(l1, l1 sqrt(l3), l3)`` for ``l1, l3`` in the set,
    L1 triples are ``(l1, l1 sqrt(lam), 0)`` for ``l1, lam`` in the set.
    """
    if n < 2:
        raise InputError("n must be at least 2")
    if mode == "exact":
        if n > EXACT_MAX_N:
            raise InputError(
                f"the exact grid has n^4 = {n ** 4} elastic triples; "
                f"it is only built for n <= {EXACT_MAX_N}, use mode='log'"
            )
        gamma = np.arange(1, n * n + 1) / float(n * n)
    elif mode == "log":
        if budget < 4:
            raise InputError("budget must be at least 4")
        gamma = np.geomspace(1.0 / n**2, 1.0, int(budget))
    else:
        raise InputError(f"unknown grid mode {mode!r}")
    triples, branches = [], []
    for l1 in gamma:
        for l3 in gamma:
            triples.append((float(l1), float(l1 * np.sqrt(l3)), float(l3)))
            branches.append("elastic")
    for l1 in gamma:
        for lam in gamma:
            triples.append((float(l1), float(l1 * np.sqrt(lam)), 0.0))
            branches.append("l1")
    return ParamGrid(tuple(triples), tuple(branches), mode, tuple(float(g) for g in gamma))


@dataclass(frozen=True)
class ClipSpec:
    """Clipping bound; ``B=None`` means ``B = (1 + delta) max_i |y_i|``."""

    B: float = None
    delta: float = 0.1

    def __post_init__(self):
        if self.B is not None and not self.B > 0:
            raise InputError("B must be positive")
        if self.delta < 0:
            raise InputError("delta must be nonnegative")

    def resolve(self, y):
        if self.B is not None:
            return float(self.B)
        top = float(np.max(np.abs(y)))
        B = (1.0 + self.delta) * top
        if not B > top:
            B = np.nextafter(top, np.inf) if top > 0 else 1.0
        return float(B)


@dataclass(eq=False)
class ClippedModel:
    model: object
    B: float

    def predict(self, X):
        return clip(self.model.predict(X), self.B)


@dataclass
class SelectionResult:
    params: RegParams
    model: ClippedModel
    table: list
    index: int

    def to_csv(self):
        buf = io.StringIO()
        cols = ["lam1", "lam2", "lam3", "validation_mse", "exact_l2_error", "converged"]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for row in self.table:
            w.writerow([_fmt(row[c]) for c in cols])
        return buf.getvalue()


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v)
    return repr(float(v))


def _fit_one(args):
    train, kernels, params, opts, systems = args
    try:
        return fit(train, kernels, params, opts, systems=systems), None
    except MklError as exc:
        return None, f"{type(exc).__name__}: {exc}"


def select(dataset, kernels, grid, clip_spec=None, opts=None, truth=None, jobs=1):
    """Pick the grid point with the smallest clipped validation error.

    Ties go to the lexicographically smallest ``(lam1, lam3, lam2)``. When
    ``truth`` is given, the exact ``L2(Pi)`` error of every unclipped fit is
    added to the table.
    """
    if len(grid) == 0:
        raise InputError("empty parameter grid")
    clip_spec = clip_spec or ClipSpec()
    opts = opts or FitOptions()
    B = clip_spec.resolve(dataset.y)
    train, valid = split(dataset)
    systems = block_systems(train.X, kernels)
    jobs_args = [(train, kernels, p, opts, systems) for p in grid.params()]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_fit_one, jobs_args))
    else:
        results = [_fit_one(a) for a in jobs_args]

    table = []
    for params, branch, (model, err) in zip(grid.params(), grid.branches, results):
        row = {"lam1": params.lam1, "lam2": params.lam2, "lam3": params.lam3, "branch": branch,
               "validation_mse": None, "exact_l2_error": None, "converged": False, "error": err}
        if model is not None:
            pred = clip(model.predict(valid.X), B)
            row["validation_mse"] = float(np.mean((pred - valid.y) ** 2))
            row["converged"] = bool(model.converged)
            if truth is not None:
                row["exact_l2_error"] = exact_l2_error(model.spectral_blocks(), truth)
        row["_model"] = model
        table.append(row)

    ok = [i for i, row in enumerate(table) if row["validation_mse"] is not None]
    if not ok:
        raise SelectionError("every candidate fit failed", [r["error"] for r in table])
    best = min(ok, key=lambda i: (table[i]["validation_mse"], table[i]["lam1"], table[i]["lam3"], table[i]["lam2"]))
    model = table[best]["_model"]
    for row in table:
        del row["_model"]
    return SelectionResult(grid.params()[best], ClippedModel(model, B), table, best)
