"""Independent reference computations used as test oracles.

Nothing here calls into the solver internals: objectives are rewritten from
the formula, minimizers come from a generic conic solver, plain subgradient
descent or lattice enumeration.
"""
import itertools
import warnings

import cvxpy as cp
import numpy as np

warnings.filterwarnings("ignore", message="Solution may be inaccurate")


def objective_direct(alphas, X, y, kernel, lam1, lam2, lam3):
    """Loop-level evaluation of the elastic-net MKL objective."""
    n, M = X.shape
    total = np.zeros(n)
    pen = 0.0
    for m in range(M):
        fm = np.zeros(n)
        for i in range(n):
            for j in range(n):
                fm[i] += alphas[m][j] * kernel(np.array([X[i, m]]), np.array([X[j, m]]))[0, 0]
        h2 = sum(alphas[m][i] * fm[i] for i in range(n))
        pen += lam1 * np.sqrt(np.mean(fm**2)) + lam2 * np.sqrt(max(h2, 0)) + lam3 * h2
        total += fm
    return float(np.mean((y - total) ** 2) + pen)


def block_value(beta, z, D, lam1, lam2, lam3, n):
    s = np.sqrt(D)
    return float(np.sum((z - s * beta) ** 2) / n + lam1 * np.sqrt(np.sum(D * beta**2) / n)
                 + lam2 * np.linalg.norm(beta) + lam3 * np.sum(beta**2))


def block_cvx(z, D, lam1, lam2, lam3, n):
    """Minimize the whitened block objective with a conic solver."""
    s = np.sqrt(D)
    b = cp.Variable(len(z))
    obj = (cp.sum_squares(z - cp.multiply(s, b)) / n + lam1 / np.sqrt(n) * cp.norm(cp.multiply(s, b))
           + lam2 * cp.norm(b) + lam3 * cp.sum_squares(b))
    prob = cp.Problem(cp.Minimize(obj))
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-13, tol_gap_rel=1e-13, tol_feas=1e-13, max_iter=500)
    return np.asarray(b.value), block_value(b.value, z, D, lam1, lam2, lam3, n)


def block_subgradient(z, D, lam1, lam2, lam3, n, iters=20000):
    """Subgradient descent with diminishing steps; returns the best iterate."""
    s = np.sqrt(D)
    b = np.zeros_like(z)
    best, best_val = b.copy(), block_value(b, z, D, lam1, lam2, lam3, n)
    L = 2 * D.max() / n + 2 * lam3 + 1e-12
    for k in range(1, iters + 1):
        g = (2 / n) * (D * b - s * z) + 2 * lam3 * b
        t1 = np.sqrt(np.sum(D * b * b) / n)
        if t1 > 0:
            g = g + lam1 * D * b / (n * t1)
        nb = np.linalg.norm(b)
        if nb > 0:
            g = g + lam2 * b / nb
        b = b - g / (L * np.sqrt(k))
        val = block_value(b, z, D, lam1, lam2, lam3, n)
        if val < best_val:
            best, best_val = b.copy(), val
    return best, best_val


def block_lattice_is_zero(z, D, lam1, lam2, lam3, n, radius, h):
    """Brute-force a 2-d block over a lattice: is the minimizing lattice point the origin?"""
    assert len(z) == 2
    ticks = np.arange(-radius, radius + h / 2, h)
    B = np.array(list(itertools.product(ticks, ticks)))
    s = np.sqrt(D)
    vals = (np.sum((z - s * B) ** 2, axis=1) / n + lam1 * np.sqrt(np.sum(D * B * B, axis=1) / n)
            + lam2 * np.linalg.norm(B, axis=1) + lam3 * np.sum(B * B, axis=1))
    return np.linalg.norm(B[np.argmin(vals)]) < 1e-6


def _blocks(X, kernel):
    """Whitened design ``A_m = U_m sqrt(D_m)`` from a dense eigendecomposition."""
    out = []
    for m in range(X.shape[1]):
        K = kernel(X[:, m], X[:, m])
        w, U = np.linalg.eigh(K)
        keep = w > 1e-12 * np.trace(K)
        out.append((U[:, keep] * np.sqrt(w[keep]), w[keep]))
    return out


def full_value(betas, blocks, y, lam1, lam2, lam3):
    n = len(y)
    F = sum(A @ b for (A, _), b in zip(blocks, betas))
    val = np.sum((y - F) ** 2) / n
    for (A, D), b in zip(blocks, betas):
        val += lam1 * np.sqrt(np.sum(D * b * b) / n) + lam2 * np.linalg.norm(b) + lam3 * np.sum(b * b)
    return float(val)


def fit_cvx(X, y, kernel, lam1, lam2, lam3):
    blocks = _blocks(X, kernel)
    n = len(y)
    vs = [cp.Variable(A.shape[1]) for A, _ in blocks]
    F = sum(A @ v for (A, _), v in zip(blocks, vs))
    obj = cp.sum_squares(y - F) / n
    for (A, D), v in zip(blocks, vs):
        obj = obj + lam1 / np.sqrt(n) * cp.norm(cp.multiply(np.sqrt(D), v)) + lam2 * cp.norm(v) + lam3 * cp.sum_squares(v)
    cp.Problem(cp.Minimize(obj)).solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12,
                                       tol_feas=1e-12, max_iter=500)
    betas = [np.asarray(v.value) for v in vs]
    return full_value(betas, blocks, y, lam1, lam2, lam3)


def fit_subgradient(X, y, kernel, lam1, lam2, lam3, iters=5000):
    """Full-problem subgradient descent over all blocks jointly; best value found."""
    blocks = _blocks(X, kernel)
    n = len(y)
    betas = [np.zeros(A.shape[1]) for A, _ in blocks]
    best = full_value(betas, blocks, y, lam1, lam2, lam3)
    L = 2 * sum(D.max() for _, D in blocks) / n + 2 * lam3 + 1e-12
    for k in range(1, iters + 1):
        F = sum(A @ b for (A, _), b in zip(blocks, betas))
        new = []
        for (A, D), b in zip(blocks, betas):
            g = -(2 / n) * A.T @ (y - F) + 2 * lam3 * b
            t1 = np.sqrt(np.sum(D * b * b) / n)
            if t1 > 0:
                g = g + lam1 * D * b / (n * t1)
            nb = np.linalg.norm(b)
            if nb > 0:
                g = g + lam2 * b / nb
            new.append(b - g / (L * np.sqrt(k)))
        betas = new
        best = min(best, full_value(betas, blocks, y, lam1, lam2, lam3))
    return best
