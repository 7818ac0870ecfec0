"""Log-det objectives, smoothed Schatten functions and optimal weights.

``side=1`` refers to the row Gram matrix ``X X^T + gamma I`` (n x n) and
``side=2`` to the column Gram matrix ``X^T X + gamma I`` (m x m).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import combinations

import numpy as np

from . import linops
from .errors import DomainError

LEFT = 1
RIGHT = 2

EIG_FLOOR = 1e-300


def _check_side(side):
    if side not in (LEFT, RIGHT):
        raise ValueError(f"side must be 1 (left) or 2 (right), got {side!r}")


def _check_gamma(gamma, allow_zero=False):
    if gamma < 0 or (gamma == 0 and not allow_zero) or not np.isfinite(gamma):
        raise DomainError(f"gamma must be positive, got {gamma}")


def padded_singular_values(X, count):
    """Singular values of X padded with zeros (or truncated) to ``count`` entries."""
    s = np.linalg.svd(np.asarray(X, dtype=float), compute_uv=False)
    out = np.zeros(count)
    k = min(count, s.size)
    out[:k] = s[:k]
    return out


def logdet_from_singular_values(s, gamma):
    """sum log(s_i^2 + gamma); gamma = 0 is allowed and may give -inf."""
    with np.errstate(divide="ignore"):
        return float(np.sum(np.log(s * s + gamma)))


def f_gamma(X, gamma, side=LEFT):
    """log det(X X^T + gamma I) for side 1, log det(X^T X + gamma I) for side 2."""
    _check_gamma(gamma)
    _check_side(side)
    X = np.asarray(X, dtype=float)
    count = X.shape[0] if side == LEFT else X.shape[1]
    return logdet_from_singular_values(padded_singular_values(X, count), gamma)


def f_gamma_scaled(X, gamma):
    """sum log(1 + sigma_i^2 / gamma); zero exactly at X = 0."""
    _check_gamma(gamma)
    s = np.linalg.svd(np.asarray(X, dtype=float), compute_uv=False)
    return float(np.sum(np.log1p(s * s / gamma)))


def schatten(X, gamma, p):
    """Smoothed Schatten-p value sum_i (sigma_i^2 + gamma)^(p/2) over n rows."""
    if not 0 < p <= 1:
        raise DomainError(f"p must lie in (0, 1], got {p}")
    if gamma < 0:
        raise DomainError(f"gamma must be nonnegative, got {gamma}")
    X = np.asarray(X, dtype=float)
    s = padded_singular_values(X, X.shape[0])
    return float(np.sum((s * s + gamma) ** (p / 2)))


def elementary_symmetric(values, k):
    """k-th elementary symmetric polynomial of ``values``."""
    e = np.zeros(k + 1)
    e[0] = 1.0
    for v in values:
        e[1:] = e[1:] + v * e[:-1]
    return float(e[k])


def det2_k(X, k, method="sv"):
    """Sum of squared k x k minors of X.

    ``method="sv"`` evaluates the elementary symmetric polynomial of the
    squared singular values; ``method="minors"`` enumerates all minors and is
    only meant as a cross-check for small matrices.
    """
    X = np.asarray(X, dtype=float)
    n, m = X.shape
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    if method == "minors":
        if n * m > 36:
            raise ValueError("minor enumeration is limited to n*m <= 36")
        total = 0.0
        for rows in combinations(range(n), k):
            sub = X[list(rows)]
            for cols in combinations(range(m), k):
                total += np.linalg.det(sub[:, list(cols)]) ** 2
        return float(total)
    if method != "sv":
        raise ValueError(f"unknown method {method!r}")
    if k > m:
        return 0.0
    s = np.linalg.svd(X, compute_uv=False)
    return elementary_symmetric(s * s, k)


def det_expansion(X, gamma):
    """det(X X^T + gamma I) assembled from the coefficients det2_k."""
    if gamma < 0:
        raise DomainError(f"gamma must be nonnegative, got {gamma}")
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    s = np.linalg.svd(X, compute_uv=False)
    total = gamma**n
    for k in range(1, n + 1):
        total += gamma ** (n - k) * (elementary_symmetric(s * s, k) if k <= s.size else 0.0)
    return float(total)


def frobenius_bound(X, gamma):
    """Upper bound gamma^(1-n) det(X X^T + gamma I) on ||X||_F^2."""
    X = np.asarray(X, dtype=float)
    return float(gamma ** (1 - X.shape[0]) * det_expansion(X, gamma))


def rank_surrogate(X, gamma):
    """||W^{1/2} X||_F^2 = sum sigma^2 / (sigma^2 + gamma) for the p = 0 weight."""
    s = np.linalg.svd(np.asarray(X, dtype=float), compute_uv=False)
    return float(np.sum(s * s / (s * s + gamma)))


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Symmetric positive definite weight ``basis @ diag(values) @ basis.T``."""

    side: int
    gamma: float
    p: float
    basis: np.ndarray
    values: np.ndarray

    @cached_property
    def W(self):
        W = (self.basis * self.values) @ self.basis.T
        return 0.5 * (W + W.T)

    def power(self, t):
        """W^t, from the stored eigendecomposition."""
        return (self.basis * self.values**t) @ self.basis.T

    def factor(self, t=1.0):
        """F with F F^T = W^t."""
        return self.basis * self.values ** (0.5 * t)

    @cached_property
    def inverse(self):
        return self.power(-1.0)


def weight(X, gamma, p=0.0, side=LEFT):
    """Optimal weight (X X^T + gamma I)^(p/2 - 1), or its column-side analogue.

    The eigenvectors come from a full SVD of X rather than an eigensolve of the
    Gram matrix, so tiny singular values keep full relative accuracy.
    """
    X = np.asarray(X, dtype=float)
    return weight_from_svd(np.linalg.svd(X, full_matrices=True), gamma, p, side)


def weight_from_svd(svd, gamma, p=0.0, side=LEFT):
    """:func:`weight` from a precomputed full SVD ``(U, s, Vt)``."""
    _check_gamma(gamma, allow_zero=True)
    _check_side(side)
    U, s, Vt = svd
    basis = U if side == LEFT else Vt.T
    lam = np.zeros(basis.shape[0])
    lam[: s.size] = s * s
    lam = np.maximum(lam + gamma, EIG_FLOOR)
    return WeightMatrix(side, float(gamma), float(p), basis, lam ** (p / 2 - 1))


def _as_weight_array(W):
    return W.W if isinstance(W, WeightMatrix) else np.asarray(W, dtype=float)


def J_gamma(X, W, gamma, side=None):
    """trace(W (X X^T + gamma I)) - log det W - n (or the column-side analogue)."""
    if side is None:
        side = W.side if isinstance(W, WeightMatrix) else LEFT
    _check_side(side)
    A = _as_weight_array(W)
    X = np.asarray(X, dtype=float)
    G = X @ X.T if side == LEFT else X.T @ X
    if A.shape != G.shape or not np.allclose(A, A.T, rtol=1e-12, atol=0):
        raise DomainError("weight must be symmetric with matching shape")
    try:
        C = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise DomainError("weight must be positive definite") from exc
    logdet = 2.0 * np.sum(np.log(np.diag(C)))
    k = G.shape[0]
    return float(np.sum(A * G) + gamma * np.trace(A) - logdet - k)


def grad_f(X, gamma):
    """Gradient of f_gamma (side 1): 2 W X with the p = 0 weight."""
    _check_gamma(gamma)
    X = np.asarray(X, dtype=float)
    return 2.0 * weight(X, gamma, 0.0, LEFT).W @ X


def F_relaxed(X, gamma, c_L, problem):
    """||L(X) - y||^2 + c_L * gamma * f^a_gamma(X) (penalty weight omega^2 = gamma)."""
    _check_gamma(gamma)
    if c_L <= 0:
        raise DomainError(f"c_L must be positive, got {c_L}")
    r = linops.apply(problem.map, X) - problem.y
    return float(r @ r + c_L * gamma * f_gamma_scaled(X, gamma))
