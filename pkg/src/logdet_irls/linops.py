"""Measurement operators on n x m matrices and the affine sets they define.

Matrices are vectorized column-major everywhere: entry ``(i, j)`` of an
``n x m`` matrix sits at position ``i + j * n`` of ``vec(X)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import (
    DegenerateOperatorError,
    DimensionError,
    InfeasibleError,
    UnsupportedVariantError,
)

DENSE = "dense"
SAMPLING = "sampling"
FACTORED = "factored"

# smallest admissible singular value of the operator, relative to the largest
ROW_RANK_TOL = 1e-10
FEASIBILITY_TOL = 1e-8


def vec(X):
    return np.asarray(X).reshape(-1, order="F")


def unvec(x, n, m):
    return np.asarray(x).reshape((n, m), order="F")


@dataclass(frozen=True, eq=False)
class LinearMap:
    """A linear operator R^{n x m} -> R^l.

    Use the :meth:`dense`, :meth:`sampling` and :meth:`factored` constructors.
    ``data`` holds the variant payload: the l x nm matrix, the ``(rows, cols)``
    index arrays, or the ``(L1, L2)`` stacks of shape (r_L, l, n) and
    (r_L, m, l).
    """

    kind: str
    n: int
    m: int
    ell: int
    data: tuple = field(repr=False)

    @classmethod
    def dense(cls, L, n, m):
        L = np.array(L, dtype=float)
        if L.ndim != 2 or L.shape[1] != n * m:
            raise DimensionError(f"dense operator must have shape (l, {n * m}), got {L.shape}")
        return cls(DENSE, n, m, L.shape[0], (L,))

    @classmethod
    def sampling(cls, rows, cols, n, m):
        rows = np.asarray(rows, dtype=np.intp).ravel()
        cols = np.asarray(cols, dtype=np.intp).ravel()
        if rows.shape != cols.shape:
            raise DimensionError("rows and cols must have equal length")
        if rows.size and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= m):
            raise DimensionError("sample index out of range")
        flat = rows + cols * n
        if np.unique(flat).size != flat.size:
            raise ValueError("sampling indices must be distinct")
        return cls(SAMPLING, n, m, rows.size, (rows, cols))

    @classmethod
    def factored(cls, L1, L2, n, m):
        L1 = np.array(L1, dtype=float)
        L2 = np.array(L2, dtype=float)
        if L1.ndim == 2:
            L1 = L1[None]
        if L2.ndim == 2:
            L2 = L2[None]
        rL, ell, n1 = L1.shape
        if n1 != n or L2.shape != (rL, m, ell):
            raise DimensionError(
                f"factors must have shapes (r_L, l, {n}) and (r_L, {m}, l), "
                f"got {L1.shape} and {L2.shape}"
            )
        return cls(FACTORED, n, m, ell, (L1, L2))

    @property
    def shape(self):
        return (self.n, self.m)

    @cached_property
    def matrix(self):
        """The equivalent l x nm matrix acting on ``vec(X)``."""
        if self.kind == DENSE:
            return self.data[0]
        if self.kind == SAMPLING:
            rows, cols = self.data
            L = np.zeros((self.ell, self.n * self.m))
            L[np.arange(self.ell), rows + cols * self.n] = 1.0
            return L
        L1, L2 = self.data
        # row k is sum_i vec(L1_i[k, :]^T L2_i[:, k]^T)
        T = np.einsum("tka,tbk->kab", L1, L2)
        return T.transpose(0, 2, 1).reshape(self.ell, -1)

    @cached_property
    def row_matrices(self):
        """Stack (l, n, m) with ``apply(X)[k] == <row_matrices[k], X>``."""
        return self.matrix.reshape(self.ell, self.m, self.n).transpose(0, 2, 1)

    @cached_property
    def _svd(self):
        U, s, Vt = np.linalg.svd(self.matrix, full_matrices=True)
        if s.size < self.ell or s[-1] <= ROW_RANK_TOL * s[0]:
            smin = s[-1] if s.size == self.ell else 0.0
            raise DegenerateOperatorError(
                f"operator is not of full row rank {self.ell} (sigma_min/sigma_max = "
                f"{smin / s[0] if s[0] else 0.0:.3e})"
            )
        return U, s, Vt

    @cached_property
    def _kernel(self):
        nm = self.n * self.m
        if self.kind == SAMPLING:
            rows, cols = self.data
            mask = np.ones(nm, dtype=bool)
            mask[rows + cols * self.n] = False
            return np.eye(nm)[:, mask]
        return self._svd[2][self.ell:].T.copy()

    @cached_property
    def kernel_blocks(self):
        """Kernel basis as an n x (m d) matrix [K_0 ... K_{m-1}] of column blocks.

        Block j (n x d) collects column j of every basis matrix, so a single
        product W @ kernel_blocks applies a left weight to the whole basis.
        """
        K = self._kernel
        d = K.shape[1]
        return K.reshape(self.m, self.n, d).transpose(1, 0, 2).reshape(self.n, self.m * d).copy()

    @cached_property
    def kernel_matrices(self):
        """Kernel basis reshaped to a (nm - l, n, m) stack of matrices."""
        K = self._kernel
        return K.T.reshape(K.shape[1], self.m, self.n).transpose(0, 2, 1)


def as_factored(op: LinearMap) -> LinearMap:
    """Rank-1 Khatri-Rao factorization of a sampling map."""
    if op.kind == FACTORED:
        return op
    if op.kind != SAMPLING:
        raise UnsupportedVariantError("only sampling maps have a built-in factorization")
    rows, cols = op.data
    k = np.arange(op.ell)
    L1 = np.zeros((1, op.ell, op.n))
    L2 = np.zeros((1, op.m, op.ell))
    L1[0, k, rows] = 1.0
    L2[0, cols, k] = 1.0
    return LinearMap.factored(L1, L2, op.n, op.m)


def _check_matrix(op, X):
    X = np.asarray(X, dtype=float)
    if X.shape != (op.n, op.m):
        raise DimensionError(f"expected a {op.n}x{op.m} matrix, got shape {X.shape}")
    return X


def apply(op: LinearMap, X) -> np.ndarray:
    X = _check_matrix(op, X)
    if op.kind == DENSE:
        return op.data[0] @ vec(X)
    if op.kind == SAMPLING:
        rows, cols = op.data
        return X[rows, cols].copy()
    L1, L2 = op.data
    return np.einsum("tka,ab,tbk->k", L1, X, L2)


def adjoint_apply(op: LinearMap, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (op.ell,):
        raise DimensionError(f"expected a vector of length {op.ell}, got shape {v.shape}")
    if op.kind == DENSE:
        return unvec(op.data[0].T @ v, op.n, op.m)
    if op.kind == SAMPLING:
        rows, cols = op.data
        out = np.zeros((op.n, op.m))
        out[rows, cols] = v
        return out
    L1, L2 = op.data
    return np.einsum("tka,k,tbk->ab", L1, v, L2)


def apply_factored(op: LinearMap, Y, Z) -> np.ndarray:
    """Evaluate ``apply(op, Y @ Z)`` without forming the product."""
    if op.kind != FACTORED:
        raise UnsupportedVariantError(f"apply_factored needs a factored map, got {op.kind}")
    Y = np.asarray(Y, dtype=float)
    Z = np.asarray(Z, dtype=float)
    if Y.shape[0] != op.n or Z.shape[1] != op.m or Y.shape[1] != Z.shape[0]:
        raise DimensionError(f"incompatible factor shapes {Y.shape} and {Z.shape}")
    L1, L2 = op.data
    out = np.zeros(op.ell)
    for i in range(L1.shape[0]):
        out += np.sum((L1[i] @ Y) * (Z @ L2[i]).T, axis=1)
    return out


def kernel_basis(op: LinearMap) -> np.ndarray:
    """Orthonormal basis of the null space, as an nm x (nm - l) matrix."""
    return op._kernel.copy()


def min_norm_solution(op: LinearMap, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape != (op.ell,):
        raise DimensionError(f"expected a vector of length {op.ell}, got shape {y.shape}")
    if op.kind == SAMPLING:
        return adjoint_apply(op, y)
    U, s, Vt = op._svd
    x = Vt[: op.ell].T @ ((U.T @ y) / s)
    X = unvec(x, op.n, op.m)
    res = np.linalg.norm(apply(op, X) - y)
    if res > FEASIBILITY_TOL * max(np.linalg.norm(y), 1.0):
        raise InfeasibleError(f"measurement vector not in image (residual {res:.3e})")
    return X


def project_affine(op: LinearMap, y, X) -> np.ndarray:
    """Frobenius-nearest point of {X : apply(op, X) = y}."""
    X = _check_matrix(op, X)
    if op.kind == SAMPLING:
        rows, cols = op.data
        out = X.copy()
        out[rows, cols] = y
        return out
    return X + min_norm_solution(op, np.asarray(y, dtype=float) - apply(op, X))


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """An affine rank minimization problem ``apply(map, X) = y``."""

    map: LinearMap
    y: np.ndarray
    reference: np.ndarray | None = None
    reference_rank: int | None = None
    seed: int | None = None

    @classmethod
    def from_reference(cls, op, X_ref, rank=None, seed=None):
        X_ref = np.asarray(X_ref, dtype=float)
        return cls(op, apply(op, X_ref), X_ref, rank, seed)

    @property
    def shape(self):
        return self.map.shape

    def residual(self, X):
        return float(np.linalg.norm(apply(self.map, X) - self.y))

    def transposed(self) -> "ProblemInstance":
        """The same problem posed on X^T."""
        op = self.map
        n, m = op.n, op.m
        if op.kind == SAMPLING:
            rows, cols = op.data
            top = LinearMap.sampling(cols, rows, m, n)
        elif op.kind == FACTORED:
            L1, L2 = op.data
            top = LinearMap.factored(L2.transpose(0, 2, 1), L1.transpose(0, 2, 1), m, n)
        else:
            # column-major vec of A_k^T is the row-major flattening of A_k
            top = LinearMap.dense(op.row_matrices.reshape(op.ell, -1), m, n)
        ref = None if self.reference is None else self.reference.T.copy()
        return ProblemInstance(top, self.y.copy(), ref, self.reference_rank, self.seed)
