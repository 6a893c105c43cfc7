"""Block coordinate descent for elastic-net multiple kernel learning.

Minimizes over ``f_m in H_m``::

    (1/n) sum_i (y_i - sum_m f_m(x_i))^2
        + sum_m (lam1 ||f_m||_n + lam2 ||f_m||_H + lam3 ||f_m||_H^2)

With ``f_m = sum_i alpha_{m,i} k_m(., x_{i,m})`` and the block Gram matrix
``K_m = U D U^T``, each block is reparametrized as ``alpha = U D^{-1/2} beta``
so that ``||f_m||_H = ||beta||``, ``||f_m||_n^2 = beta^T D beta / n`` and the
block fit values are ``U D^{1/2} beta``. ``lam3 = 0`` gives L1-MKL.
"""
from dataclasses import dataclass, field, asdict
import json
import logging

import numpy as np
from scipy import optimize

from .errors import InputError, NumericError
from .functions import KernelExpansion, SpectralFunction
from .kernels import SpectralKernel, block_eigensystem

__all__ = [
    "RegParams",
    "FitOptions",
    "MklModel",
    "objective",
    "block_objective",
    "block_zero_distance",
    "block_zero_test",
    "solve_block",
    "block_stationarity",
    "block_systems",
    "fit",
    "l1_fit",
]

log = logging.getLogger(__name__)

UNDERFLOW = 1e-14
POLISH_AFTER = 20
OMEGA_MIN, OMEGA_MAX = 0.5, 8.0


@dataclass(frozen=True)
class RegParams:
    lam1: float = 0.0
    lam2: float = 0.0
    lam3: float = 0.0

    def __post_init__(self):
        for name in ("lam1", "lam2", "lam3"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise InputError(f"{name} must be a finite nonnegative number, got {v}")

    @property
    def sparse(self):
        """Whether the penalty can zero out whole blocks."""
        return self.lam1 > 0 or self.lam2 > 0

    def as_tuple(self):
        return (self.lam1, self.lam2, self.lam3)


@dataclass(frozen=True)
class FitOptions:
    tol: float = 1e-8
    max_sweeps: int = 500
    inner_tol: float = 1e-10
    zero_tol: float = 1e-12
    kkt_tol: float = 1e-6
    max_inner: int = 10_000
    damping: float = 0.5
    extrapolate: bool = True

    def __post_init__(self):
        for name in ("tol", "inner_tol", "zero_tol", "kkt_tol"):
            if not getattr(self, name) > 0:
                raise InputError(f"{name} must be positive")
        if self.max_sweeps < 1 or self.max_inner < 1:
            raise InputError("iteration limits must be positive")


# -- block subproblem -------------------------------------------------------


def block_objective(beta, z, D, lam1, lam2, lam3, n, rest=0.0):
    """Block objective in whitened coordinates.

    ``z = U^T r``; ``rest`` is the part of ``||r||^2`` orthogonal to ``U``.
    """
    beta = np.asarray(beta, dtype=float)
    res = z - np.sqrt(D) * beta
    return (
        (res @ res + rest) / n
        + lam1 * np.sqrt(max(beta @ (D * beta), 0.0) / n)
        + lam2 * np.linalg.norm(beta)
        + lam3 * (beta @ beta)
    )


def block_zero_distance(g, D, lam1, n, tol=1e-12):
    """``min_{||w|| <= 1} ||g - (lam1/sqrt(n)) D^{1/2} w||``.

    Solved through the multiplier ``theta`` of the ball constraint, with
    ``w_i(theta) = a sqrt(d_i) g_i / (a^2 d_i + theta)`` and ``a = lam1/sqrt(n)``.
    """
    g = np.asarray(g, dtype=float)
    D = np.asarray(D, dtype=float)
    if not np.all(np.isfinite(g)):
        raise NumericError("non-finite block gradient", {"max_abs": float(np.nanmax(np.abs(g)))})
    a = lam1 / np.sqrt(n)
    s = np.sqrt(np.maximum(D, 0.0))
    pos = (s > 0) & (a > 0)
    if not pos.any():
        return float(np.linalg.norm(g))
    w_free = np.zeros_like(g)
    w_free[pos] = g[pos] / (a * s[pos])
    if np.linalg.norm(w_free) <= 1.0:
        return float(np.linalg.norm(g[~pos]))

    gp, sp, Dp = g[pos], s[pos], D[pos]

    def excess(theta):
        w = a * sp * gp / (a * a * Dp + theta)
        return w @ w - 1.0

    hi = a * sp.max() * np.linalg.norm(gp)
    if not excess(0.0) > 0 >= excess(hi):
        raise NumericError("zero-test bisection does not bracket a root", {"theta_hi": hi})
    theta = optimize.brentq(excess, 0.0, hi, xtol=tol * hi, rtol=4 * np.finfo(float).eps)
    w = np.zeros_like(g)
    w[pos] = a * sp * gp / (a * a * Dp + theta)
    w /= max(1.0, np.linalg.norm(w))
    return float(np.linalg.norm(g - a * s * w))


def block_zero_test(g, D, lam1, lam2, n, tol=1e-12):
    """True iff the zero block is optimal, i.e. the zero-test distance is ``<= lam2``.

    ``g = -(2/n) D^{1/2} U^T r`` is the loss gradient at ``beta = 0``.
    Near-ties resolve to zero.
    """
    dist = block_zero_distance(g, D, lam1, n, tol)
    return dist <= lam2 * (1.0 + 1e-12) + 1e-14


def block_stationarity(beta, z, D, lam1, lam2, lam3, n):
    """Norm of the gradient of the block objective at a nonzero ``beta``."""
    s = np.sqrt(D)
    grad = (2.0 / n) * (D * beta - s * z) + 2.0 * lam3 * beta
    if lam1 > 0:
        t1 = np.sqrt(beta @ (D * beta) / n)
        grad = grad + lam1 * D * beta / (n * t1)
    if lam2 > 0:
        grad = grad + lam2 * beta / np.linalg.norm(beta)
    return float(np.linalg.norm(grad))


def solve_block(r, U, D, lam1, lam2, lam3, n, opts=None, z=None, init=None):
    """Minimize the block objective given the partial residual ``r``.

    Returns whitened coefficients ``beta``. Assumes the zero test failed.
    Given the scalars ``t1 = ||f||_n`` and ``t2 = ||f||_H`` the minimizer has
    the closed form

        beta_i = (2/n) sqrt(d_i) z_i / ((2/n) d_i + lam1 d_i/(n t1) + lam2/t2 + 2 lam3),

    so the problem reduces to a fixed point in ``(t1, t2)``, iterated with
    damping. A 2-d root solve takes over if the iteration is slow. A nonzero
    ``init`` (e.g. the previous sweep's block) seeds the scalars.
    """
    opts = opts or FitOptions()
    D = np.asarray(D, dtype=float)
    z = U.T @ r if z is None else np.asarray(z, dtype=float)
    s = np.sqrt(D)
    num = (2.0 / n) * s * z
    base = (2.0 / n) * D + 2.0 * lam3

    def beta_of(t1, t2):
        den = base.copy()
        if lam1 > 0:
            den += lam1 * D / (n * t1)
        if lam2 > 0:
            den += lam2 / t2
        out = np.zeros_like(num)
        ok = den > 0
        out[ok] = num[ok] / den[ok]
        return out

    def scalars(beta):
        return np.sqrt(beta @ (D * beta) / n), np.linalg.norm(beta)

    scale = max(np.linalg.norm(num), 1e-300)

    def done(beta):
        if not np.any(beta):
            return False
        return block_stationarity(beta, z, D, lam1, lam2, lam3, n) <= opts.inner_tol * max(1.0, scale)

    beta = beta_of(np.inf, np.inf)
    if lam1 == 0 and lam2 == 0:
        return beta
    t = np.array(scalars(beta))
    if min(t[0] if lam1 > 0 else 1.0, t[1] if lam2 > 0 else 1.0) < UNDERFLOW:
        return np.zeros_like(beta)
    if init is not None and np.any(init):
        t_init = np.array(scalars(np.asarray(init, dtype=float)))
        if np.all(t_init > 0):
            t = t_init
    n_fp = min(opts.max_inner, POLISH_AFTER)
    for it in range(opts.max_inner):
        beta = beta_of(*t)
        t_new = np.array(scalars(beta))
        if (lam1 > 0 and t_new[0] < UNDERFLOW) or (lam2 > 0 and t_new[1] < UNDERFLOW):
            return np.zeros_like(beta)
        if done(beta):
            return beta
        t = opts.damping * t + (1.0 - opts.damping) * t_new
        if (it + 1) % n_fp == 0:
            polished = _polish(beta_of, scalars, t, lam1, lam2)
            if polished is not None and done(polished):
                return polished
    raise NumericError(
        "block fixed point did not converge",
        {"t1": float(t[0]), "t2": float(t[1]),
         "stationarity": block_stationarity(beta, z, D, lam1, lam2, lam3, n)},
    )


def _polish(beta_of, scalars, t, lam1, lam2):
    """Solve ``(t1, t2) = scalars(beta_of(t1, t2))`` in log space."""
    free = [lam1 > 0, lam2 > 0]
    t = np.asarray(t, dtype=float)
    if np.any(t[free] <= 0):
        return None

    def unpack(u):
        tt = t.copy()
        tt[free] = np.exp(u)
        return tt

    def resid(u):
        tt = unpack(u)
        new = np.array(scalars(beta_of(*tt)))
        with np.errstate(divide="ignore"):
            return np.log(new[free]) - u

    try:
        sol = optimize.root(resid, np.log(t[free]), method="hybr", options={"xtol": 1e-15})
    except (ValueError, FloatingPointError):
        return None
    if not np.all(np.isfinite(sol.x)):
        return None
    return beta_of(*unpack(sol.x))


# -- full problem -----------------------------------------------------------


def _kernel_list(kernels, M):
    if isinstance(kernels, (list, tuple)):
        if len(kernels) != M:
            raise InputError(f"expected {M} kernels, got {len(kernels)}")
        return list(kernels)
    return [kernels] * M


def block_systems(X, kernels):
    """Positive thin eigensystem of every block Gram matrix."""
    X = np.asarray(X, dtype=float)
    kernels = _kernel_list(kernels, X.shape[1])
    return [block_eigensystem(k, X[:, m]) for m, k in enumerate(kernels)]


@dataclass(eq=False)
class MklModel:
    """A fitted additive model ``f = sum_m sum_i alpha[m, i] k_m(., X[i, m])``."""

    alphas: np.ndarray
    anchors: np.ndarray
    kernels: list
    params: RegParams
    trace: list = field(default_factory=list)
    kkt_residual: float = np.nan
    converged: bool = False
    n_sweeps: int = 0
    betas: list = None
    systems: list = None

    @property
    def M(self):
        return self.alphas.shape[0]

    @property
    def n(self):
        return self.alphas.shape[1]

    @property
    def active_set(self):
        return tuple(int(m) for m in range(self.M) if np.any(self.alphas[m] != 0))

    @property
    def objective_value(self):
        return self.trace[-1] if self.trace else np.nan

    def blocks(self):
        """Each block as a :class:`KernelExpansion` over its anchors."""
        return [KernelExpansion(k, self.anchors[:, m], self.alphas[m]) for m, k in enumerate(self.kernels)]

    def spectral_blocks(self):
        """Each block in eigen-coefficient form (spectral kernels only)."""
        out = []
        for m, k in enumerate(self.kernels):
            if not isinstance(k, SpectralKernel):
                raise InputError("spectral form needs spectral kernels")
            sysm = None if self.systems is None else self.systems[m]
            if sysm is not None and sysm.V is not None and self.betas is not None:
                out.append(SpectralFunction(k, np.sqrt(k.eigenvalues) * (sysm.V @ self.betas[m])))
            else:
                out.append(KernelExpansion(k, self.anchors[:, m], self.alphas[m]).to_spectral())
        return out

    def block_values(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.stack([k(X[:, m], self.anchors[:, m]) @ self.alphas[m] for m, k in enumerate(self.kernels)], axis=1)

    def predict(self, X):
        return self.block_values(X).sum(axis=1)

    def rkhs_norms(self):
        if self.betas is not None:
            return np.array([np.linalg.norm(b) for b in self.betas])
        return np.array([np.sqrt(max(a @ k(self.anchors[:, m], self.anchors[:, m]) @ a, 0.0))
                         for m, (a, k) in enumerate(zip(self.alphas, self.kernels))])

    def to_dict(self, data_ref=None):
        return {
            "data": data_ref,
            "kernels": [json.loads(k.to_json()) for k in self.kernels],
            "params": asdict(self.params),
            "alphas": self.alphas.tolist(),
            "active_set": list(self.active_set),
            "objective": self.objective_value,
            "trace": list(self.trace),
            "kkt_residual": self.kkt_residual,
            "converged": self.converged,
            "n_sweeps": self.n_sweeps,
        }

    def to_json(self, data_ref=None):
        return json.dumps(self.to_dict(data_ref), indent=2)


def objective(model, dataset, kernels, params):
    """Objective value of ``model`` computed from Gram matrices and ``alpha``."""
    X, y = dataset.X, dataset.y
    n, M = X.shape
    alphas = np.asarray(model.alphas if hasattr(model, "alphas") else model, dtype=float)
    if alphas.shape != (M, n):
        raise InputError(f"coefficients have shape {alphas.shape}, expected {(M, n)}")
    if hasattr(model, "anchors") and not np.array_equal(model.anchors, X):
        raise InputError("model anchors differ from the dataset design")
    kernels = _kernel_list(kernels, M)
    fit_total = np.zeros(n)
    pen = 0.0
    for m, k in enumerate(kernels):
        K = k(X[:, m], X[:, m])
        Ka = K @ alphas[m]
        fit_total += Ka
        pen += (params.lam1 * np.sqrt(max(Ka @ Ka, 0.0) / n)
                + params.lam2 * np.sqrt(max(alphas[m] @ Ka, 0.0))
                + params.lam3 * max(alphas[m] @ Ka, 0.0))
    res = y - fit_total
    return float(res @ res / n + pen)


def _total_objective(y, F, betas, systems, params, n):
    res = y - F
    val = res @ res / n
    for b, sysm in zip(betas, systems):
        if np.any(b):
            val += (params.lam1 * np.sqrt(max(b @ (sysm.D * b), 0.0) / n)
                    + params.lam2 * np.linalg.norm(b) + params.lam3 * (b @ b))
    return float(val)


def _block_kkt(b, z, sysm, params, n, opts):
    if np.any(b):
        return block_stationarity(b, z, sysm.D, params.lam1, params.lam2, params.lam3, n)
    g = -(2.0 / n) * np.sqrt(sysm.D) * z
    dist = block_zero_distance(g, sysm.D, params.lam1, n, opts.zero_tol)
    return max(0.0, dist - params.lam2)


def fit(dataset, kernels, params, opts=None, warm_start=None, systems=None):
    """Cyclic block coordinate descent.

    Parameters
    ----------
    dataset : Dataset
        Provides ``X`` (n x M, block m reads column m) and ``y``.
    kernels : kernel or list of kernels
        One kernel per block, or one shared kernel.
    params : RegParams
    opts : FitOptions, optional
    warm_start : MklModel or list of arrays, optional
        Start from this model's (or these) whitened coefficients; same design.
    systems : list of Eigensystem, optional
        Precomputed :func:`block_systems` for ``dataset.X``.

    Returns
    -------
    MklModel
        ``converged`` is False when ``max_sweeps`` was reached.
    """
    opts = opts or FitOptions()
    X = np.asarray(dataset.X, dtype=float)
    y = np.asarray(dataset.y, dtype=float)
    n, M = X.shape
    if y.shape != (n,):
        raise InputError("y must have one entry per row of X")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise InputError("X and y must be finite")
    kernels = _kernel_list(kernels, M)
    if systems is None:
        systems = block_systems(X, kernels)
    systems = [sy.positive() if np.any(sy.D <= 0) else sy for sy in systems]
    lam1, lam2, lam3 = params.as_tuple()

    betas = [np.zeros(sy.D.size) for sy in systems]
    if warm_start is not None:
        init = warm_start.betas if isinstance(warm_start, MklModel) else warm_start
        if init is None or [np.size(b) for b in init] != [sy.D.size for sy in systems]:
            raise InputError("warm start does not match the block eigensystems")
        betas = [np.array(b, dtype=float) for b in init]
    fits = [sy.U @ (np.sqrt(sy.D) * b) for sy, b in zip(systems, betas)]
    F = np.sum(fits, axis=0) if M else np.zeros(n)

    with np.errstate(over="ignore", invalid="ignore"):
        trace = [_total_objective(y, F, betas, systems, params, n)]
    if not np.isfinite(trace[0]):
        raise NumericError("initial objective is not finite", {"objective": trace[0]})
    converged = False
    kkt = np.nan
    sweep = 0
    prev_betas, omega = None, OMEGA_MIN
    for sweep in range(1, opts.max_sweeps + 1):
        for m, sy in enumerate(systems):
            if sy.D.size == 0:
                continue
            r = y - F + fits[m]
            z = sy.U.T @ r
            rest = r @ r - z @ z
            old = betas[m]
            g = -(2.0 / n) * np.sqrt(sy.D) * z
            if (lam1 > 0 or lam2 > 0) and block_zero_test(g, sy.D, lam1, lam2, n, opts.zero_tol):
                new = np.zeros_like(old)
            else:
                new = solve_block(r, sy.U, sy.D, lam1, lam2, lam3, n, opts, z=z, init=old)
            f_old = block_objective(old, z, sy.D, lam1, lam2, lam3, n, rest)
            f_new = block_objective(new, z, sy.D, lam1, lam2, lam3, n, rest)
            if f_new <= f_old or not np.any(new):
                betas[m] = new
                F = F - fits[m]
                fits[m] = sy.U @ (np.sqrt(sy.D) * new)
                F = F + fits[m]
        val = _total_objective(y, F, betas, systems, params, n)
        if opts.extrapolate and prev_betas is not None:
            # momentum along the last sweep's move, kept only if it lowers the objective
            trial = [b + omega * (b - p) if np.any(b) else b for b, p in zip(betas, prev_betas)]
            t_fits = [sy.U @ (np.sqrt(sy.D) * b) for sy, b in zip(systems, trial)]
            t_F = np.sum(t_fits, axis=0)
            t_val = _total_objective(y, t_F, trial, systems, params, n)
            if t_val < val:
                betas, fits, F, val = trial, t_fits, t_F, t_val
                omega = min(2.0 * omega, OMEGA_MAX)
            else:
                omega = OMEGA_MIN
        prev_betas = [b.copy() for b in betas]
        if not np.isfinite(val):
            raise NumericError("objective is not finite", {"sweep": sweep})
        prev = trace[-1]
        trace.append(val)
        if prev - val <= opts.tol * max(abs(prev), np.finfo(float).tiny):
            kkt = _kkt(y, F, fits, betas, systems, params, n, opts)
            if kkt <= opts.kkt_tol:
                converged = True
                break
    else:
        kkt = _kkt(y, F, fits, betas, systems, params, n, opts)
        log.warning("fit stopped after %d sweeps without converging (kkt=%.3g)", sweep, kkt)

    alphas = np.zeros((M, n))
    for m, (sy, b) in enumerate(zip(systems, betas)):
        if np.any(b):
            alphas[m] = sy.U @ (b / np.sqrt(sy.D))
    return MklModel(
        alphas=alphas, anchors=X.copy(), kernels=kernels, params=params, trace=trace,
        kkt_residual=float(kkt), converged=converged, n_sweeps=sweep, betas=betas, systems=systems,
    )


def _kkt(y, F, fits, betas, systems, params, n, opts):
    worst = 0.0
    for m, sy in enumerate(systems):
        if sy.D.size == 0:
            continue
        z = sy.U.T @ (y - F + fits[m])
        worst = max(worst, _block_kkt(betas[m], z, sy, params, n, opts))
    return worst


def l1_fit(dataset, kernels, lam1, lam2, opts=None, warm_start=None, systems=None):
    """L1-MKL: :func:`fit` with ``lam3 = 0``."""
    return fit(dataset, kernels, RegParams(lam1, lam2, 0.0), opts, warm_start, systems)
