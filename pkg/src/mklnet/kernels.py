"""Mercer kernels with an explicit eigen-system on [0, 1].

The reference kernel is

    k(x, x') = sum_{k=1}^K mu_k phi_k(x) phi_k(x'),
    phi_k(x) = sqrt(2) cos(pi k x),   mu_k = c k^{-1/s},

which is centered and orthonormal under the uniform measure on [0, 1].
The scale ``c`` is derived from ``s`` and ``K`` so that ``sup_x k(x, x) <= 1``
holds by construction (``|phi_k| <= sqrt(2)`` gives ``k(x, x) <= 2 c sum k^{-1/s}``).
"""
from dataclasses import dataclass, field
from functools import cached_property
import json

import numpy as np
from scipy.special import zeta

from .errors import InputError, NumericError

__all__ = [
    "SpectralKernel",
    "GaussianKernel",
    "GramMatrix",
    "Eigensystem",
    "eval_kernel",
    "gram",
    "eigensystem",
    "block_eigensystem",
    "kernel_from_json",
]

BASES = ("cosine01",)
CLAMP_RTOL = 1e-12


def _check_domain(x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)) or np.any(x < 0.0) or np.any(x > 1.0):
        raise InputError("kernel arguments must lie in [0, 1]")
    return x


@dataclass(frozen=True)
class SpectralKernel:
    """Cosine-basis Mercer kernel with polynomial eigenvalue decay.

    Parameters
    ----------
    s : float
        Decay exponent in (0, 1); eigenvalues decay as ``k^{-1/s}``.
    K : int
        Number of retained eigenpairs.
    basis : str
        Orthonormal system id. Only ``"cosine01"`` is available.
    """

    s: float = 0.5
    K: int = 512
    basis: str = "cosine01"

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise InputError(f"decay exponent s must lie in (0, 1), got {self.s}")
        if int(self.K) != self.K or self.K < 1:
            raise InputError(f"truncation K must be a positive integer, got {self.K}")
        if self.basis not in BASES:
            raise InputError(f"unknown basis {self.basis!r}")

    @cached_property
    def scale(self):
        """The derived constant ``c``."""
        k = np.arange(1, self.K + 1, dtype=float)
        return 1.0 / (2.0 * np.sum(k ** (-1.0 / self.s)))

    @cached_property
    def eigenvalues(self):
        k = np.arange(1, self.K + 1, dtype=float)
        mu = self.scale * k ** (-1.0 / self.s)
        mu.setflags(write=False)
        return mu

    @cached_property
    def truncation_error(self):
        """Upper bound on ``|k_K(x, x') - k_inf(x, x')|`` for the same scale."""
        return float(2.0 * self.scale * zeta(1.0 / self.s, self.K + 1))

    @property
    def metadata(self):
        return {
            "s": self.s,
            "K": self.K,
            "basis": self.basis,
            "scale": self.scale,
            "truncation_error": self.truncation_error,
        }

    def features(self, x, K=None):
        """Evaluate the basis: returns an array of shape ``(len(x), K)``."""
        x = _check_domain(np.atleast_1d(x))
        k = np.arange(1, (K or self.K) + 1, dtype=float)
        return np.sqrt(2.0) * np.cos(np.pi * np.multiply.outer(x, k))

    def __call__(self, x, y):
        """Kernel matrix between point sets ``x`` and ``y``."""
        fx = self.features(x)
        fy = self.features(y)
        return (fx * self.eigenvalues) @ fy.T

    def to_json(self):
        return json.dumps({"s": self.s, "K": self.K, "basis": self.basis})


@dataclass(frozen=True)
class GaussianKernel:
    """Evaluate-only Gaussian kernel ``exp(-(x - x')^2 / (2 width^2))``.

    It has no explicit eigen-system, so exact-norm code paths refuse it.
    """

    width: float = 0.2

    def __post_init__(self):
        if not self.width > 0:
            raise InputError("width must be positive")

    def __call__(self, x, y):
        x = _check_domain(np.atleast_1d(x))
        y = _check_domain(np.atleast_1d(y))
        return np.exp(-np.subtract.outer(x, y) ** 2 / (2.0 * self.width**2))

    def to_json(self):
        return json.dumps({"basis": "gaussian", "width": self.width})


def kernel_from_json(text):
    spec = json.loads(text) if isinstance(text, str) else dict(text)
    if spec.get("basis") == "gaussian":
        return GaussianKernel(width=spec["width"])
    return SpectralKernel(s=spec["s"], K=spec["K"], basis=spec.get("basis", "cosine01"))


def eval_kernel(kernel, x, y):
    """Evaluate ``k(x, y)`` for two scalars in [0, 1]."""
    return float(kernel(np.array([x], dtype=float), np.array([y], dtype=float))[0, 0])


@dataclass(frozen=True)
class GramMatrix:
    entries: np.ndarray
    points: np.ndarray

    @property
    def n(self):
        return self.entries.shape[0]

    @property
    def trace(self):
        return float(np.trace(self.entries))


def gram(kernel, points):
    """Gram matrix ``K_ij = k(x_i, x_j)`` over ``points``."""
    points = np.asarray(points, dtype=float).ravel()
    if points.size == 0:
        raise InputError("gram() needs at least one point")
    K = kernel(points, points)
    K = 0.5 * (K + K.T)
    return GramMatrix(entries=K, points=points)


@dataclass(frozen=True)
class Eigensystem:
    """Eigen-decomposition ``U diag(D) U^T`` of a block Gram matrix.

    ``clamped`` flags eigenvalues that were set to zero. ``V`` is only present
    for the feature-space fast path; there ``sqrt(mu) * (V @ beta)`` gives the
    spectral coefficients of the function whose whitened coordinates are
    ``beta``.
    """

    U: np.ndarray
    D: np.ndarray
    clamped: np.ndarray = field(default=None)
    V: np.ndarray = field(default=None)

    @property
    def rank(self):
        return int(np.count_nonzero(self.D > 0))

    def positive(self):
        """Restrict to strictly positive eigenvalues."""
        keep = self.D > 0
        V = None if self.V is None else self.V[:, keep]
        return Eigensystem(self.U[:, keep], self.D[keep], np.zeros(keep.sum(), bool), V)


def eigensystem(g):
    """Full symmetric eigendecomposition of a Gram matrix, sorted descending.

    Eigenvalues below ``1e-12 * trace`` are clamped to zero and flagged.
    """
    K = g.entries if isinstance(g, GramMatrix) else np.asarray(g, dtype=float)
    trace = float(np.trace(K))
    w, U = np.linalg.eigh(K)
    order = np.argsort(w)[::-1]
    w, U = w[order], U[:, order]
    clamped = w < CLAMP_RTOL * max(trace, 0.0)
    D = np.where(clamped, 0.0, w)
    err = np.linalg.norm((U * D) @ U.T - K)
    if not err <= 1e-8 * max(trace, np.finfo(float).tiny) + 1e-300:
        raise NumericError(
            "eigendecomposition does not reconstruct the Gram matrix",
            {"frobenius_error": float(err), "trace": trace},
        )
    return Eigensystem(U=U, D=D, clamped=clamped)


def block_eigensystem(kernel, points):
    """Thin eigensystem of ``gram(kernel, points)`` via the feature map.

    For a :class:`SpectralKernel` the Gram matrix is ``A A^T`` with
    ``A = Phi diag(sqrt(mu))``, so an SVD of the ``n x K`` matrix ``A`` is
    enough. Only the positive part is returned. Other kernels fall back to
    :func:`eigensystem`.
    """
    points = np.asarray(points, dtype=float).ravel()
    if not isinstance(kernel, SpectralKernel):
        return eigensystem(gram(kernel, points)).positive()
    if points.size == 0:
        raise InputError("block_eigensystem() needs at least one point")
    A = kernel.features(points) * np.sqrt(kernel.eigenvalues)
    U, sv, Vt = np.linalg.svd(A, full_matrices=False)
    D = sv**2
    trace = float(np.sum(A * A))
    keep = D >= CLAMP_RTOL * trace
    if trace == 0.0:
        keep[:] = False
    return Eigensystem(U=U[:, keep], D=D[keep], clamped=np.zeros(keep.sum(), bool), V=Vt[keep].T)
