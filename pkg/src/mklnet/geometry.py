"""Dependency between RKHS blocks and the constants that enter the rate bounds.

``kappa(I)`` is the smallest value of ``||sum_{m in I} f_m||^2 / sum ||f_m||^2``
and ``rho(I)`` is the largest canonical correlation between the spans of the
blocks in ``I`` and in its complement, both in ``L2(Pi)``. Together they give
the lower bound ``sqrt((1 - rho^2) kappa)`` on the restricted eigenvalue
``beta_inf(I)``.
"""
from dataclasses import dataclass, asdict, field
import json

import numpy as np
from scipy import linalg

from .errors import InputError, NumericError

__all__ = [
    "GeometryReport",
    "TheoremConstants",
    "DiagnosticsReport",
    "geometry_analytic_product",
    "geometry_spectral_mc",
    "mc_block_gram",
    "theorem_constants",
    "lemma2_diagnostic",
    "uniform_sampler",
    "gaussian_copula_sampler",
]

WHITEN_RIDGE = 1e-10


def _lemma1_bound(rho, kappa):
    return float(np.sqrt(max(0.0, 1.0 - rho * rho) * max(0.0, kappa)))


@dataclass(frozen=True)
class GeometryReport:
    I: tuple
    kappa: float
    rho: float
    lemma1_bound: float
    method: str
    n_mc: int = None
    K_trunc: int = None

    def to_json(self):
        d = asdict(self)
        d["I"] = list(self.I)
        d["note"] = "lemma1_bound is a lower bound on beta_inf(I), not beta_b(I) itself"
        return json.dumps(d, indent=2, sort_keys=True)


def geometry_analytic_product(I, M=None, design="product"):
    """Exact values for the product design: ``rho = 0`` and ``kappa = 1``.

    Independent coordinates plus centered bases make cross-block inner
    products vanish, so ``||sum f_m||^2 = sum ||f_m||^2``.
    """
    if design != "product":
        raise InputError("the analytic path only covers the product design; use geometry_spectral_mc")
    I = tuple(sorted(int(m) for m in I))
    if M is not None and any(not 0 <= m < M for m in I):
        raise InputError("block index out of range")
    return GeometryReport(I=I, kappa=1.0, rho=0.0, lemma1_bound=1.0, method="analytic-product")


def uniform_sampler(M):
    """Product design: i.i.d. uniform coordinates."""
    def sample(n, rng):
        return rng.uniform(size=(n, M))
    return sample


def gaussian_copula_sampler(corr):
    """Uniform marginals coupled through a Gaussian copula with correlation matrix ``corr``."""
    from scipy.stats import norm

    corr = np.asarray(corr, dtype=float)
    chol = np.linalg.cholesky(corr)

    def sample(n, rng):
        return norm.cdf(rng.standard_normal((n, corr.shape[0])) @ chol.T)
    return sample


def mc_block_gram(kernels, sampler, K_trunc, n_mc, seed=0, chunk=20_000):
    """Monte Carlo ``L2(Pi)`` Gram matrix of the leading eigenfunctions of every block.

    Returns an ``(M*K_trunc) x (M*K_trunc)`` matrix; block ``m`` occupies
    rows ``m*K_trunc:(m+1)*K_trunc``. Chunks use independent child seeds and
    are reduced in a fixed order.
    """
    M = len(kernels)
    P = M * K_trunc
    G = np.zeros((P, P))
    seeds = np.random.SeedSequence(seed).spawn(-(-n_mc // chunk))
    done = 0
    for ss in seeds:
        rng = np.random.default_rng(ss)
        size = min(chunk, n_mc - done)
        X = sampler(size, rng)
        F = np.hstack([k.features(X[:, m], K=K_trunc) for m, k in enumerate(kernels)])
        G += F.T @ F
        done += size
    return G / n_mc


def _inv_sqrt(S, what):
    w, V = np.linalg.eigh(S)
    if w.min() < WHITEN_RIDGE:
        raise NumericError(
            f"singular whitening for {what}",
            {"min_eigenvalue": float(w.min()), "rank": int(np.sum(w >= WHITEN_RIDGE)), "dim": int(w.size)},
        )
    w = w + WHITEN_RIDGE
    return (V / np.sqrt(w)) @ V.T


def geometry_from_gram(G, I, M, K_trunc):
    idx = lambda blocks: np.concatenate([np.arange(m * K_trunc, (m + 1) * K_trunc) for m in blocks]) \
        if len(blocks) else np.array([], dtype=int)
    I = tuple(sorted(int(m) for m in I))
    if not I or any(not 0 <= m < M for m in I):
        raise InputError("I must be a nonempty set of valid block indices")
    Ic = tuple(m for m in range(M) if m not in I)
    ii, cc = idx(I), idx(Ic)
    G_II = G[np.ix_(ii, ii)]
    Bdiag = np.zeros_like(G_II)
    for j, m in enumerate(I):
        sl = slice(j * K_trunc, (j + 1) * K_trunc)
        Bdiag[sl, sl] = G_II[sl, sl]
    W = _inv_sqrt(Bdiag, "the per-block Gram")
    kappa = float(np.linalg.eigvalsh(W @ G_II @ W).min())
    if Ic:
        W_I = _inv_sqrt(G_II, "the span of I")
        W_C = _inv_sqrt(G[np.ix_(cc, cc)], "the span of the complement")
        C = W_I @ G[np.ix_(ii, cc)] @ W_C
        rho = float(min(linalg.svdvals(C).max(), 1.0))
    else:
        rho = 0.0
    return I, kappa, rho


def geometry_spectral_mc(kernels, I, sampler, K_trunc=32, n_mc=100_000, seed=0):
    """Estimate ``kappa(I)`` and ``rho(I)`` on the truncated spans by Monte Carlo.

    Parameters
    ----------
    kernels : list of SpectralKernel
        One kernel per block; block ``m`` reads column ``m`` of the design.
    I : iterable of int
        Index set.
    sampler : callable
        ``sampler(n, rng)`` returns an ``n x M`` design in ``[0, 1]``.
    """
    if K_trunc < 1:
        raise InputError("K_trunc must be at least 1")
    if n_mc < 10_000:
        raise InputError("n_mc must be at least 10^4")
    G = mc_block_gram(kernels, sampler, K_trunc, n_mc, seed)
    I, kappa, rho = geometry_from_gram(G, I, len(kernels), K_trunc)
    return GeometryReport(I=I, kappa=kappa, rho=rho, lemma1_bound=_lemma1_bound(rho, kappa),
                          method="spectral-MC", n_mc=int(n_mc), K_trunc=int(K_trunc))


@dataclass(frozen=True)
class TheoremConstants:
    b1: float
    b2: float
    R2g: float
    b3: float = None
    R2g_hat: float = None
    h: tuple = None


def theorem_constants(truth, h_values=None):
    """Constants ``b~1``, ``b~2`` and, given ``h_m``, ``R^_{2,g*}`` and ``b_3``."""
    d = truth.d
    if d < 1:
        raise InputError("theorem constants need at least one active block")
    gn = np.array([np.sqrt(np.sum(truth.g[m].coeffs ** 2 / truth.kernels[m].eigenvalues)) for m in truth.active])
    R2g = float(np.sqrt(np.sum(gn**2)))
    b1 = 16.0 * (1.0 + np.sqrt(d) * gn.max() / R2g)
    if h_values is None:
        return TheoremConstants(b1=float(b1), b2=16.0, R2g=R2g)
    h = np.asarray(h_values, dtype=float)
    if h.shape != (d,) or np.any(h <= 0):
        raise InputError("need one positive h per active block")
    R_hat = float(np.sqrt(np.sum(gn**2 / h)))
    b3 = 32.0 * (1.0 + np.sqrt(d) * np.max(gn / h) / R_hat)
    return TheoremConstants(b1=float(b1), b2=16.0, R2g=R2g, b3=float(b3), R2g_hat=R_hat, h=tuple(h.tolist()))


@dataclass(frozen=True)
class DiagnosticsReport:
    """Per active block: fitted RKHS norm against half the true norm."""

    blocks: tuple
    fitted_norm: tuple
    threshold: tuple
    passed: tuple

    @property
    def pass_rate(self):
        return float(np.mean(self.passed)) if self.passed else float("nan")

    def to_dict(self):
        return {**asdict(self), "pass_rate": self.pass_rate}


def lemma2_diagnostic(model, truth):
    """Check ``||f^_m||_H >= ||f*_m||_H / 2`` for every truly active block."""
    from .functions import rkhs_norm

    if hasattr(model, "rkhs_norms"):
        fitted = model.rkhs_norms()
    else:
        fitted = np.array([rkhs_norm(b) for b in model])
    blocks, got, thr, ok = [], [], [], []
    for m in truth.active:
        t = rkhs_norm(truth.f[m]) / 2.0
        blocks.append(int(m))
        got.append(float(fitted[m]))
        thr.append(float(t))
        ok.append(bool(fitted[m] >= t))
    return DiagnosticsReport(tuple(blocks), tuple(got), tuple(thr), tuple(ok))
