"""Weighted least-squares solves over an affine set.

Three update mechanisms are provided for the matrix problem: the image form
(an l x l system), the kernel form (an (nm - l) x (nm - l) system around a
feasible point) and the relaxed form, which replaces the constraint by a
quadratic penalty.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import lapack

from . import linops
from .errors import IllConditionedError, InfeasibleError
from .objective import LEFT, WeightMatrix

IMAGE = "image"
KERNEL = "kernel"
RELAXED = "relaxed"

# switch from the image to the kernel formula above this condition estimate
COND_LIMIT = 1e10


def spd_solve(A, b, estimate_cond=True):
    """Solve A x = b for symmetric positive definite A.

    Cholesky factorization with one pass of iterative refinement. Returns
    ``(x, cond)`` where ``cond`` is the LAPACK 1-norm condition estimate
    (NaN when ``estimate_cond`` is false).
    Raises :class:`IllConditionedError` when the factorization breaks down.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    c, info = lapack.dpotrf(A, lower=0, clean=0)
    if info != 0:
        raise IllConditionedError("matrix is not numerically positive definite")
    x, _ = lapack.dpotrs(c, b, lower=0)
    r, _ = lapack.dpotrs(c, b - A @ x, lower=0)
    x = x + r
    if not estimate_cond:
        return x, np.nan
    anorm = np.max(np.sum(np.abs(A), axis=0))
    rcond, _ = lapack.dpocon(c, anorm)
    cond = 1.0 / rcond if rcond > 0 else np.inf
    return x, cond


def _kernel_of(L):
    _, s, Vt = np.linalg.svd(L, full_matrices=True)
    return Vt[np.sum(s > s[0] * 1e-12):].T


def weighted_ls(L, H, y, cond_limit=np.inf):
    """argmin ||H x|| subject to L x = y, via the image formula.

    x* = (H^T H)^-1 L^T (L (H^T H)^-1 L^T)^-1 y
    """
    L = np.atleast_2d(np.asarray(L, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    M = H.T @ H
    MiLt, c1 = spd_solve(M, L.T)
    lam, c2 = spd_solve(L @ MiLt, y)
    cond = max(c1, c2)
    if cond > cond_limit:
        raise IllConditionedError(f"inner system condition estimate {cond:.3e}", cond)
    return MiLt @ lam


def weighted_ls_kernel(L, H, y, x0, K=None):
    """argmin ||H x|| subject to L x = y, via a kernel basis K and feasible x0.

    x* = x0 - K (K^T H^T H K)^-1 K^T H^T H x0
    """
    L = np.atleast_2d(np.asarray(L, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    x0 = np.asarray(x0, dtype=float)
    res = np.linalg.norm(L @ x0 - y)
    if res > 1e-8 * max(np.linalg.norm(y), 1.0):
        raise InfeasibleError(f"starting point is not feasible (residual {res:.3e})")
    if K is None:
        K = _kernel_of(L)
    if K.shape[1] == 0:
        return x0.copy()
    HK = H @ K
    v, _ = _solve_or_lstsq(HK.T @ HK, HK.T @ (H @ x0))
    return x0 - K @ v


def _solve_or_lstsq(A, b):
    try:
        return spd_solve(A, b, estimate_cond=False)
    except IllConditionedError:
        return np.linalg.lstsq(A, b, rcond=None)[0], np.inf


def _weight_parts(W, side):
    if isinstance(W, WeightMatrix):
        return W, W.side
    A = np.asarray(W, dtype=float)
    vals, basis = np.linalg.eigh(0.5 * (A + A.T))
    if vals[0] <= 0:
        raise IllConditionedError("weight is not positive definite")
    return WeightMatrix(LEFT if side is None else side, np.nan, np.nan, basis, vals), \
        (LEFT if side is None else side)


def _apply_side(A, X, side):
    """A X for side 1 (A is n x n), X A for side 2 (A is m x m)."""
    return A @ X if side == LEFT else X @ A


def weighted_gram(op, Winv, side=LEFT):
    """The l x l matrix of L o W^-1 o L*."""
    if op.kind == linops.SAMPLING:
        rows, cols = op.data
        if side == LEFT:
            return Winv[np.ix_(rows, rows)] * (cols[:, None] == cols[None, :])
        return Winv[np.ix_(cols, cols)] * (rows[:, None] == rows[None, :])
    L = op.matrix
    ell, n, m = op.ell, op.n, op.m
    # row k of L reshaped to (m, n) is A_k^T, so one GEMM applies W^-1 to all rows
    if side == LEFT:
        B = (L.reshape(ell * m, n) @ Winv).reshape(ell, -1)
    else:
        T = L.reshape(ell, m, n).transpose(1, 0, 2).reshape(m, ell * n)
        B = (Winv @ T).reshape(m, ell, n).transpose(1, 0, 2).reshape(ell, -1)
    return L @ B.T


def _gram(op, Wm: WeightMatrix, side):
    """L o W^-1 o L*, as C C^T with C = L (I x F) for W^-1 = F F^T."""
    if op.kind == linops.SAMPLING:
        return weighted_gram(op, Wm.inverse, side)
    L = op.matrix
    ell, n, m = op.ell, op.n, op.m
    F = Wm.factor(-1.0)
    if side == LEFT:
        C = (L.reshape(ell * m, n) @ F).reshape(ell, -1)
    else:
        C = (L.reshape(ell, m, n).transpose(0, 2, 1).reshape(ell * n, m) @ F).reshape(ell, -1)
    return C @ C.T


def _cond_bound(op, Wm: WeightMatrix):
    """Upper bound cond(L) ** 2 * cond(W) on the 2-norm condition of the image system."""
    vals = Wm.values
    kw = float(vals.max() / vals.min())
    if op.kind == linops.SAMPLING:
        return kw
    s = op._svd[1]
    return kw * float(s[0] / s[-1]) ** 2


def solve_image(problem, W, side=None, cond_limit=COND_LIMIT):
    """Weighted minimizer over the affine set via the l x l image system.

    Minimizes ||W^{1/2} X||_F (side 1) or ||X W^{1/2}||_F (side 2) subject to
    L(X) = y. Raises :class:`IllConditionedError` if the inner system's
    condition estimate exceeds ``cond_limit``; the kernel form is then the
    recommended fallback.
    """
    Wm, side = _weight_parts(W, side)
    op = problem.map
    # the 1-norm estimate is only needed when the 2-norm bound does not settle it
    need = _cond_bound(op, Wm) * op.ell > cond_limit
    lam, cond = spd_solve(_gram(op, Wm, side), problem.y, estimate_cond=need)
    if need and cond > cond_limit:
        raise IllConditionedError(f"image system condition estimate {cond:.3e}", cond)
    return _apply_side(Wm.inverse, linops.adjoint_apply(op, lam), side)


def solve_kernel(problem, W, X0, side=None):
    """Weighted minimizer over the affine set, parametrized around feasible X0."""
    Wm, side = _weight_parts(W, side)
    op = problem.map
    X0 = np.asarray(X0, dtype=float)
    res = problem.residual(X0)
    if res > 1e-8 * max(np.linalg.norm(problem.y), 1.0):
        raise InfeasibleError(f"starting point is not feasible (residual {res:.3e})")
    K = op._kernel
    d = K.shape[1]
    if d == 0:
        return X0.copy()
    n, m = op.n, op.m
    # the minimizer is invariant to scaling W; normalize against overflow
    vals = Wm.values / np.max(Wm.values)
    Ft = (Wm.basis * np.sqrt(vals)).T
    # G = sum_k ||F^T K_k||^2-style Gram, from one product with the stacked basis
    if side == LEFT:
        D = (Ft @ op.kernel_blocks).reshape(-1, d)
        WX0 = Ft.T @ (Ft @ X0)
    else:
        D = (Ft @ K.reshape(m, n * d)).reshape(-1, d)
        WX0 = (X0 @ Ft.T) @ Ft
    G = D.T @ D
    rhs = K.T @ WX0.reshape(-1, order="F")
    v, _ = _solve_or_lstsq(G, rhs)
    return X0 - (K @ v).reshape(n, m, order="F")


def solve_relaxed(problem, W, gamma, c_L, side=None):
    """Unconstrained minimizer of ||L(X) - y||^2 + c_L gamma ||W^{1/2} X||_F^2.

    Solved through the push-through identity as
    X = W^-1 L*((L W^-1 L* + c_L gamma I)^-1 y).
    """
    if gamma <= 0 or c_L <= 0:
        raise ValueError("gamma and c_L must be positive")
    Wm, side = _weight_parts(W, side)
    op = problem.map
    M = _gram(op, Wm, side)
    M[np.diag_indices_from(M)] += c_L * gamma
    lam, _ = _solve_or_lstsq(M, problem.y)
    return _apply_side(Wm.inverse, linops.adjoint_apply(op, lam), side)


def auto_c_L(problem):
    """Default penalty scale: the mean squared gain ||L||_F^2 / (n m) of the operator.

    With this choice the relaxed minimizer scales linearly with y.
    """
    op = problem.map
    if op.kind == linops.SAMPLING:
        fro2 = float(op.ell)
    elif op.kind == linops.FACTORED:
        L1, L2 = op.data
        fro2 = float(np.einsum("ika,jka,ibk,jbk->", L1, L1, L2, L2))
    else:
        fro2 = float(np.sum(op.matrix**2))
    return fro2 / (op.n * op.m)
