"""Synthetic ground truths and datasets on the product design.

Each of the ``M`` input coordinates is drawn i.i.d. uniform on [0, 1] and
block ``m`` only sees coordinate ``m``. Since every eigenfunction is centered,
blocks are orthogonal in ``L2(Pi)`` and the squared ``L2(Pi)`` error of an
additive model splits exactly into per-block spectral sums.
"""
from dataclasses import dataclass, field, asdict
import io
import json

import numpy as np

from .errors import InputError
from .functions import (
    SpectralFunction,
    as_spectral,
    l2_norm,
    power_operator,
    rkhs_norm,
    unit_direction,
    _lp,
)
from .kernels import SpectralKernel

__all__ = [
    "TruthSpec",
    "GroundTruth",
    "NoiseSpec",
    "Dataset",
    "make_truth",
    "sample_dataset",
    "exact_l2_error",
    "mc_l2_error",
    "read_dataset",
]

PROFILES = ("homogeneous", "inhomogeneous", "custom")


@dataclass(frozen=True)
class TruthSpec:
    """Everything needed to regenerate a :class:`GroundTruth`."""

    M: int
    d: int
    q: float = 0.0
    s: float = 0.5
    K: int = 512
    profile: str = "homogeneous"
    R_target: float = None
    support: int = 8
    permute: bool = False
    seed: int = 0

    @property
    def kernel(self):
        return SpectralKernel(s=self.s, K=self.K)

    def build(self):
        return make_truth(
            self.M, self.d, self.q, self.profile, self.R_target, self.seed,
            kernel=self.kernel, support=self.support, permute=self.permute,
        )


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Additive truth ``f* = sum_m f*_m`` with ``f*_m = T^{q/2} g*_m``."""

    kernels: tuple
    q: float
    active: tuple
    g: tuple
    f: tuple
    profile: str
    spec: TruthSpec = None

    @property
    def M(self):
        return len(self.kernels)

    @property
    def d(self):
        return len(self.active)

    def R(self, p, which="f"):
        """Mixed norm ``R_{p,f*}`` (``which="f"``) or ``R_{p,g*}`` (``which="g"``)."""
        blocks = self.f if which == "f" else self.g
        return _lp([rkhs_norm(b) for b in blocks], p)

    def __call__(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros(X.shape[0])
        for m in self.active:
            out += self.f[m](X[:, m])
        return out

    def sup_norm_bound(self):
        """Crude upper bound ``sum_m sqrt(2) ||f*_m||_{l1 coeffs}`` on ``||f*||_inf``."""
        return float(sum(np.sqrt(2.0) * np.abs(self.f[m].coeffs).sum() for m in self.active))


def make_truth(M, d, q=0.0, profile="homogeneous", R_target=None, seed=0,
               kernel=None, support=8, permute=False):
    """Draw a ground truth with ``d`` active blocks out of ``M``.

    Each active ``g*_m`` has a uniformly random direction on the unit sphere
    of the span of the leading ``support`` eigenfunctions, then

    * ``homogeneous``: rescaled so ``||f*_m||_H = 1``;
    * ``inhomogeneous``: rescaled so ``||f*_m||_H = 1/m`` (``m = 1..d``);
    * ``custom``: all ``||g*_m||_H`` equal and ``R_{2,g*} = R_target``.
    """
    if not 0 <= d <= M or M < 1:
        raise InputError(f"need 0 <= d <= M and M >= 1, got d={d}, M={M}")
    if not 0.0 <= q <= 1.0:
        raise InputError("q must lie in [0, 1]")
    if profile not in PROFILES:
        raise InputError(f"unknown profile {profile!r}")
    if profile == "custom" and not (R_target is not None and R_target > 0):
        raise InputError("custom profile needs a positive R_target")
    kernel = kernel or SpectralKernel()
    rng = np.random.default_rng(seed)
    active = np.arange(d)
    if permute:
        active = np.sort(rng.permutation(M)[:d])
    zero = SpectralFunction.zero(kernel)
    g = [zero] * M
    f = [zero] * M
    for rank, m in enumerate(active, start=1):
        u = unit_direction(kernel, rng, support)
        fu = power_operator(u, q / 2.0)
        if profile == "homogeneous":
            scale = 1.0 / rkhs_norm(fu)
        elif profile == "inhomogeneous":
            scale = 1.0 / (rank * rkhs_norm(fu))
        else:
            scale = R_target / np.sqrt(d)
        g[m] = u * scale
        f[m] = fu * scale
    spec = TruthSpec(M=M, d=d, q=q, s=kernel.s, K=kernel.K, profile=profile,
                     R_target=R_target, support=support, permute=permute, seed=seed)
    return GroundTruth(
        kernels=(kernel,) * M, q=q, active=tuple(int(m) for m in active),
        g=tuple(g), f=tuple(f), profile=profile, spec=spec,
    )


@dataclass(frozen=True)
class NoiseSpec:
    """``kind`` is ``"none"``, ``"bounded"`` (Uniform[-level, level]) or ``"gaussian"`` (sd ``level``)."""

    kind: str = "bounded"
    level: float = 0.5

    def __post_init__(self):
        if self.kind not in ("none", "bounded", "gaussian"):
            raise InputError(f"unknown noise kind {self.kind!r}")
        if self.kind != "none" and not self.level > 0:
            raise InputError("noise level must be positive when noise is enabled")

    def draw(self, rng, n):
        if self.kind == "none":
            return np.zeros(n)
        if self.kind == "bounded":
            return rng.uniform(-self.level, self.level, size=n)
        return rng.normal(0.0, self.level, size=n)


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = None
    truth: TruthSpec = None

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def M(self):
        return self.X.shape[1]

    def subset(self, rows):
        return Dataset(self.X[rows], self.y[rows], self.noise, self.seed, self.truth)

    def to_csv(self):
        buf = io.StringIO()
        header = [f"x_{m + 1}" for m in range(self.M)] + ["y"]
        buf.write(",".join(header) + "\n")
        for row, yi in zip(self.X, self.y):
            buf.write(",".join(repr(float(v)) for v in row) + "," + repr(float(yi)) + "\n")
        return buf.getvalue()

    def sidecar(self):
        return {
            "truth": None if self.truth is None else asdict(self.truth),
            "seed": self.seed,
            "noise": asdict(self.noise),
            "n": self.n,
            "M": self.M,
        }

    def write(self, csv_path):
        csv_path = str(csv_path)
        with open(csv_path, "w") as fh:
            fh.write(self.to_csv())
        with open(_sidecar_path(csv_path), "w") as fh:
            json.dump(self.sidecar(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _sidecar_path(csv_path):
    return csv_path[:-4] + ".json" if csv_path.endswith(".csv") else csv_path + ".json"


def read_dataset(csv_path):
    """Load a dataset written by :meth:`Dataset.write`."""
    csv_path = str(csv_path)
    table = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    meta = {}
    try:
        with open(_sidecar_path(csv_path)) as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        pass
    truth = TruthSpec(**meta["truth"]) if meta.get("truth") else None
    noise = NoiseSpec(**meta["noise"]) if meta.get("noise") else NoiseSpec("none", 0.0)
    return Dataset(table[:, :-1], table[:, -1], noise, meta.get("seed"), truth)


def sample_dataset(truth, n, noise=None, seed=0):
    """Draw ``n`` i.i.d. pairs from the product design around ``truth``."""
    if n < 1:
        raise InputError("n must be positive")
    noise = NoiseSpec() if noise is None else noise
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 1.0, size=(n, truth.M))
    eps = noise.draw(rng, n)
    y = truth(X) + eps
    return Dataset(X, y, noise, seed, truth.spec)


def exact_l2_error(blocks, truth):
    """``sum_m ||f_m - f*_m||^2_{L2(Q)}`` from spectral coefficients.

    This equals ``||f - f*||^2_{L2(Pi)}`` on the product design.
    """
    if len(blocks) != truth.M:
        raise InputError(f"expected {truth.M} blocks, got {len(blocks)}")
    total = 0.0
    for fm, km, tm in zip(blocks, truth.kernels, truth.f):
        if getattr(fm, "kernel", None) != km:
            raise InputError("model block and truth use different kernels")
        diff = as_spectral(fm) - tm
        total += l2_norm(diff) ** 2
    return total


def mc_l2_error(predict, truth, n_mc=100_000, seed=0, sampler=None):
    """Monte Carlo estimate of ``E[(f(X) - f*(X))^2]`` and its standard error.

    Used for non-product designs, where no exact formula exists.
    """
    rng = np.random.default_rng(seed)
    X = sampler(n_mc, rng) if sampler is not None else rng.uniform(size=(n_mc, truth.M))
    sq = (predict(X) - truth(X)) ** 2
    return float(sq.mean()), float(sq.std(ddof=1) / np.sqrt(n_mc))
