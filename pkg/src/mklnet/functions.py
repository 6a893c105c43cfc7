"""Functions in the block RKHSs and the norms used throughout mklnet.

Two representations are supported:

* :class:`SpectralFunction` stores coefficients ``b_k`` in the eigenbasis of a
  :class:`~mklnet.kernels.SpectralKernel`; every norm is exact.
* :class:`KernelExpansion` stores ``f(x) = sum_i alpha_i k(x, x_i)``.

``BlockFunction`` is either of the two.
"""
from dataclasses import dataclass
import json
from typing import Union

import numpy as np

from .errors import InputError, RepresentationError
from .kernels import SpectralKernel, kernel_from_json

__all__ = [
    "SpectralFunction",
    "KernelExpansion",
    "BlockFunction",
    "l2_norm",
    "rkhs_norm",
    "empirical_norm",
    "sup_norm_estimate",
    "power_operator",
    "interp_norm",
    "sample_ball_hq",
    "mixed_norm",
    "as_spectral",
]


@dataclass(frozen=True, eq=False)
class SpectralFunction:
    kernel: SpectralKernel
    coeffs: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.coeffs, dtype=float).ravel()
        if not np.all(np.isfinite(b)):
            raise RepresentationError("coefficients must be finite")
        b.setflags(write=False)
        object.__setattr__(self, "coeffs", b)

    @classmethod
    def zero(cls, kernel):
        return cls(kernel, np.zeros(kernel.K))

    @classmethod
    def basis(cls, kernel, k):
        """The eigenfunction ``phi_k`` (1-based)."""
        b = np.zeros(kernel.K)
        b[k - 1] = 1.0
        return cls(kernel, b)

    def __call__(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self.kernel.features(x, K=self.coeffs.size) @ self.coeffs

    def __add__(self, other):
        _check_same_kernel(self, other)
        return SpectralFunction(self.kernel, self.coeffs + other.coeffs)

    def __sub__(self, other):
        _check_same_kernel(self, other)
        return SpectralFunction(self.kernel, self.coeffs - other.coeffs)

    def __mul__(self, a):
        return SpectralFunction(self.kernel, a * self.coeffs)

    __rmul__ = __mul__

    def to_json(self):
        return json.dumps({"kernel": json.loads(self.kernel.to_json()), "coeffs": self.coeffs.tolist()})

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(kernel_from_json(d["kernel"]), np.array(d["coeffs"], dtype=float))


@dataclass(frozen=True, eq=False)
class KernelExpansion:
    kernel: object
    anchors: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        anchors = np.asarray(self.anchors, dtype=float).ravel()
        alpha = np.asarray(self.alpha, dtype=float).ravel()
        if anchors.shape != alpha.shape:
            raise InputError("anchors and alpha must have the same length")
        object.__setattr__(self, "anchors", anchors)
        object.__setattr__(self, "alpha", alpha)

    def __call__(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self.kernel(x, self.anchors) @ self.alpha

    def to_spectral(self):
        """Convert via ``b_k = mu_k sum_i alpha_i phi_k(x_i)``."""
        if not isinstance(self.kernel, SpectralKernel):
            raise RepresentationError("only spectral kernels have an eigen-coefficient form")
        phi = self.kernel.features(self.anchors)
        return SpectralFunction(self.kernel, self.kernel.eigenvalues * (phi.T @ self.alpha))

    def to_json(self):
        return json.dumps({
            "kernel": json.loads(self.kernel.to_json()),
            "anchors": self.anchors.tolist(),
            "alpha": self.alpha.tolist(),
        })


BlockFunction = Union[SpectralFunction, KernelExpansion]


def _check_same_kernel(f, g):
    if f.kernel != g.kernel:
        raise InputError("functions live in different RKHSs")


def as_spectral(f):
    if isinstance(f, SpectralFunction):
        return f
    return f.to_spectral()


def _eigen_support(f):
    b = f.coeffs
    if b.size > f.kernel.K:
        raise RepresentationError(
            f"{b.size} coefficients but the kernel only has {f.kernel.K} eigenpairs"
        )
    return b, f.kernel.eigenvalues[: b.size]


def l2_norm(f):
    """``||f||_{L2(Q)}``, exact through orthonormality."""
    return float(np.linalg.norm(as_spectral(f).coeffs))


def interp_norm(f, beta):
    """Norm of the interpolation space ``H_beta``: ``sqrt(sum mu_k^{-beta} b_k^2)``."""
    if not 0.0 <= beta <= 2.0:
        raise InputError("beta must lie in [0, 2]")
    b, mu = _eigen_support(as_spectral(f))
    return float(np.sqrt(np.sum(mu ** (-beta) * b * b)))


def rkhs_norm(f):
    if isinstance(f, KernelExpansion):
        K = f.kernel(f.anchors, f.anchors)
        return float(np.sqrt(max(f.alpha @ K @ f.alpha, 0.0)))
    return interp_norm(f, 1.0)


def empirical_norm(f, points):
    """``sqrt((1/n) sum_i f(x_i)^2)``."""
    points = np.asarray(points, dtype=float).ravel()
    if points.size == 0:
        raise InputError("empirical_norm() needs at least one point")
    v = f(points)
    return float(np.sqrt(np.mean(v * v)))


def sup_norm_estimate(f, grid_size=100_000):
    """Max of ``|f|`` over a uniform grid of ``grid_size`` points on [0, 1].

    This is a lower bound on the true sup-norm.
    """
    if grid_size < 1000:
        raise InputError("grid_size must be at least 1000")
    best = 0.0
    for chunk in np.array_split(np.linspace(0.0, 1.0, int(grid_size)), max(1, int(grid_size) // 20_000)):
        best = max(best, float(np.max(np.abs(f(chunk)))))
    return best


def power_operator(f, beta):
    """Apply ``T^beta``: ``b_k -> mu_k^beta b_k``."""
    if not 0.0 <= beta <= 1.0:
        raise InputError("power exponent must lie in [0, 1]")
    b, mu = _eigen_support(f)
    return SpectralFunction(f.kernel, mu**beta * b)


def unit_direction(kernel, rng, support=None):
    """A uniformly random unit vector of ``H`` supported on the leading ``support`` eigenfunctions."""
    J = kernel.K if support is None else int(support)
    if not 1 <= J <= kernel.K:
        raise InputError("support must lie in [1, K]")
    a = rng.standard_normal(J)
    a /= np.linalg.norm(a)
    b = np.zeros(kernel.K)
    b[:J] = np.sqrt(kernel.eigenvalues[:J]) * a
    return SpectralFunction(kernel, b)


def sample_ball_hq(kernel, q, R, rng_seed=None, support=None):
    """Draw ``f = T^{q/2} g`` with ``||g||_H <= R``.

    The direction of ``g`` is uniform on the unit sphere of the span of the
    leading ``support`` eigenfunctions (all ``K`` by default) and the radius is
    ``R * Uniform(0, 1)``. Hence ``interp_norm(f, 1 + q) = ||g||_H <= R``.
    """
    if not 0.0 <= q <= 1.0:
        raise InputError("q must lie in [0, 1]")
    if R < 0:
        raise InputError("R must be nonnegative")
    rng = np.random.default_rng(rng_seed)
    if R == 0:
        return SpectralFunction.zero(kernel)
    g = unit_direction(kernel, rng, support) * (R * rng.uniform())
    return power_operator(g, q / 2.0)


def mixed_norm(blocks, p):
    """``(sum_m ||f_m||_H^p)^{1/p}``; ``p = inf`` gives the max."""
    if p < 1:
        raise InputError("p must be at least 1")
    if len(blocks) == 0:
        raise InputError("mixed_norm() needs at least one block")
    norms = np.array([rkhs_norm(f) for f in blocks])
    return _lp(norms, p)


def _lp(values, p):
    values = np.abs(np.asarray(values, dtype=float))
    if np.isinf(p):
        return float(values.max())
    return float(np.sum(values**p) ** (1.0 / p))
