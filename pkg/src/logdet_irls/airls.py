"""Alternating IRLS-p on a factored iterate X = Y Z with a relaxed constraint.

Each sweep orthonormalizes Y, solves a ridge problem for Z with the left
weight, orthonormalizes Z and solves a ridge problem for Y with the right
weight. Only the factors and the measurement operator's Khatri-Rao factors
are touched, so the cost per sweep is that of plain alternating least
squares.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import linops
from .lsq import auto_c_L
from .errors import IrlsError, SolverFailure, UnsupportedVariantError
from .irls import GammaSchedule

Y_PHASE = "Y-orthonormal"
Z_PHASE = "Z-row-orthonormal"


def rank_bound(n, m, ell):
    """1 + max{r : (n+m) r - r^2 <= l}, clamped to min(n, m)."""
    k = min(n, m)
    r = 0
    while r < k and (n + m) * (r + 1) - (r + 1) ** 2 <= ell:
        r += 1
    return min(r + 1, k)


def rank_bound_formula(n, m, ell):
    """Closed form of :func:`rank_bound`; needs (n+m)^2 >= 4 l."""
    return 1 + math.floor(0.5 * (n + m - math.sqrt((n + m) ** 2 - 4 * ell)))


@dataclass
class FactoredIterate:
    Y: np.ndarray
    Z: np.ndarray
    sigma: np.ndarray
    phase: str

    @property
    def X(self):
        return self.Y @ self.Z

    @property
    def R(self):
        return self.Y.shape[1]


def refactor(it: FactoredIterate) -> FactoredIterate:
    """Move the scale into the other factor and switch the phase.

    In the Y phase, Z = U S V^T gives (Y U S, V^T); in the Z phase,
    Y = U S V^T gives (U, S V^T Z). The product is unchanged.
    """
    if it.phase == Y_PHASE:
        U, s, Vt = np.linalg.svd(it.Z, full_matrices=False)
        return FactoredIterate((it.Y @ U) * s, Vt, s, Z_PHASE)
    U, s, Vt = np.linalg.svd(it.Y, full_matrices=False)
    return FactoredIterate(U, (s[:, None] * Vt) @ it.Z, s, Y_PHASE)


def penalty_diagonal(sigma, gamma, p):
    """Entries of (Sigma^2 + gamma I)^(-1/2 + p/4)."""
    return (sigma * sigma + gamma) ** (-0.5 + p / 4)


def _ridge_blocks(F, obs, other, y, pen, nblocks):
    """Independent ridge solves, one per column (or row) of the unknown factor.

    Block j collects the samples k with ``obs[k] == j``; the data row of
    sample k is ``F[other[k]]`` and ``pen`` is the diagonal penalty.
    """
    R = F.shape[1]
    rows = F[other]
    G = np.zeros((nblocks, R, R))
    b = np.zeros((nblocks, R))
    np.add.at(G, obs, rows[:, :, None] * rows[:, None, :])
    np.add.at(b, obs, rows * y[:, None])
    G[:, np.arange(R), np.arange(R)] += pen
    return np.linalg.solve(G, b[:, :, None])[:, :, 0]


def _design_Z(op, Y):
    """l x (R m) matrix A with apply(op, Y Z) = A vec(Z)."""
    L1, L2 = op.data
    P = np.einsum("tka,ab->tkb", L1, Y)
    A = np.einsum("tka,tbk->kba", P, L2)
    return A.reshape(op.ell, -1)


def _ridge_monolithic(A, y, pen):
    G = A.T @ A
    G[np.diag_indices_from(G)] += pen
    return np.linalg.solve(G, A.T @ y)


def update_Z(Y, sigma, gamma, p, c_L, problem, separable=True):
    """Ridge update of Z for orthonormal Y with the left complementary weight.

    Minimizes ||L(Y Z) - y||^2 + c_L gamma ||D Z||_F^2 with
    D = (diag(sigma)^2 + gamma I)^(-1/2 + p/4).
    """
    op = problem.map
    R = Y.shape[1]
    d = penalty_diagonal(np.asarray(sigma, dtype=float), gamma, p)
    pen = c_L * gamma * d * d
    if op.kind == linops.SAMPLING and separable:
        rows, cols = op.data
        Zt = _ridge_blocks(Y, cols, rows, problem.y, pen, op.m)
        return Zt.T.copy()
    if op.kind == linops.SAMPLING:
        op = linops.as_factored(op)
    if op.kind != linops.FACTORED:
        raise UnsupportedVariantError("alternating updates need a sampling or factored map")
    z = _ridge_monolithic(_design_Z(op, Y), problem.y, np.tile(pen, op.m))
    return z.reshape(op.m, R).T.copy()


def update_Y(Z, sigma, gamma, p, c_L, problem, separable=True):
    """Ridge update of Y for row-orthonormal Z with the right complementary weight.

    Minimizes ||L(Y Z) - y||^2 + c_L gamma ||Y D||_F^2; this is
    :func:`update_Z` on the transposed problem.
    """
    op = problem.map
    d = penalty_diagonal(np.asarray(sigma, dtype=float), gamma, p)
    pen = c_L * gamma * d * d
    if op.kind == linops.SAMPLING and separable:
        rows, cols = op.data
        return _ridge_blocks(Z.T, rows, cols, problem.y, pen, op.n)
    return update_Z(Z.T, sigma, gamma, p, c_L, _transposed(problem), separable).T.copy()


def _transposed(problem):
    op = problem.map
    if op.kind == linops.SAMPLING:
        op = linops.as_factored(op)
        problem = linops.ProblemInstance(op, problem.y)
    return problem.transposed()


def measure(problem, Y, Z):
    op = problem.map
    if op.kind == linops.SAMPLING:
        rows, cols = op.data
        return np.einsum("kr,rk->k", Y[rows], Z[:, cols])
    if op.kind == linops.FACTORED:
        return linops.apply_factored(op, Y, Z)
    return linops.apply(op, Y @ Z)


def relaxed_objective(problem, Y, Z, sigma, gamma, c_L):
    """F^a_gamma(YZ) = ||L(YZ) - y||^2 + c_L gamma sum log(1 + sigma^2/gamma)."""
    r = measure(problem, Y, Z) - problem.y
    return float(r @ r + c_L * gamma * np.sum(np.log1p(sigma * sigma / gamma)))


@dataclass
class AirlsConfig:
    p: float = 0.0
    R: int | None = None
    c_L: float | None = None
    schedule: GammaSchedule = field(default_factory=lambda: GammaSchedule.constant(0.9))
    max_sweeps: int = 10_000
    gamma_min: float | None = None
    stall_tol: float = 1e-10
    recovery_ref: np.ndarray | None = None
    recovery_tol: float = 1e-6
    seed: int = 0
    separable: bool = True
    record: bool = True

    def __post_init__(self):
        if not 0 <= self.p <= 1:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be at least 1")


@dataclass
class AirlsTrace:
    gamma: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    step: list = field(default_factory=list)
    spectrum: list = field(default_factory=list)
    iterate: FactoredIterate | None = None
    gamma_final: float = float("nan")
    iterations: int = 0
    reason: str = ""

    @property
    def X(self):
        return None if self.iterate is None else self.iterate.X


def initial_iterate(n, m, R, seed):
    """Gaussian Y and a row-orthonormal Z from an orthonormalized Gaussian."""
    rng = np.random.default_rng(seed)
    Y = rng.standard_normal((n, R))
    Q, _ = np.linalg.qr(rng.standard_normal((m, R)))
    return FactoredIterate(Y, Q.T.copy(), np.linalg.svd(Y, compute_uv=False), Z_PHASE)


def airls_run(problem, config: AirlsConfig, start: FactoredIterate | None = None) -> AirlsTrace:
    op = problem.map
    if op.kind not in (linops.SAMPLING, linops.FACTORED):
        raise UnsupportedVariantError("AIRLS needs a sampling or factored operator")
    n, m = problem.shape
    R = config.R if config.R is not None else rank_bound(n, m, op.ell)
    R = min(R, n, m)
    c_L = auto_c_L(problem) if config.c_L is None else config.c_L
    it = start if start is not None else initial_iterate(n, m, R, config.seed)
    if config.schedule.gamma0 is not None:
        gamma = float(config.schedule.gamma0)
    else:
        s = np.linalg.svd(linops.adjoint_apply(op, problem.y), compute_uv=False)
        gamma = float(s[0] ** 2) if s[0] > 0 else 1.0
    gamma_min = 1e-14 * gamma if config.gamma_min is None else config.gamma_min
    ynorm = max(np.linalg.norm(problem.y), np.finfo(float).tiny)
    ref = config.recovery_ref
    refnorm = None if ref is None else np.linalg.norm(ref)
    tproblem = None if (op.kind == linops.SAMPLING and config.separable) else _transposed(problem)

    trace = AirlsTrace()
    X = it.X

    def record(it, gamma, step):
        sig = np.linalg.svd(it.Y, compute_uv=False) if it.phase == Z_PHASE else it.sigma
        r = measure(problem, it.Y, it.Z) - problem.y
        trace.gamma.append(gamma)
        trace.objective.append(float(r @ r + c_L * gamma * np.sum(np.log1p(sig * sig / gamma))))
        trace.residual.append(float(np.linalg.norm(r) / ynorm))
        trace.step.append(step)
        trace.spectrum.append(sig)
        return sig

    if config.record:
        record(it, gamma, 0.0)
    reason = "max_sweeps"
    i = 0
    for i in range(1, config.max_sweeps + 1):
        try:
            if it.phase == Z_PHASE:
                it = refactor(it)
            Z = update_Z(it.Y, it.sigma, gamma, config.p, c_L, problem, config.separable)
            it = refactor(FactoredIterate(it.Y, Z, it.sigma, Y_PHASE))
            if tproblem is None:
                Y = update_Y(it.Z, it.sigma, gamma, config.p, c_L, problem, True)
            else:
                Y = update_Z(it.Z.T, it.sigma, gamma, config.p, c_L, tproblem, False).T
            it = FactoredIterate(Y, it.Z, it.sigma, Z_PHASE)
        except (IrlsError, np.linalg.LinAlgError) as exc:
            raise SolverFailure(str(exc), i) from exc
        X_new = it.X
        if not np.all(np.isfinite(X_new)):
            raise SolverFailure("non-finite iterate", i)
        step = float(np.linalg.norm(X_new - X))
        X = X_new
        s = np.linalg.svd(it.Y, compute_uv=False)
        gamma = config.schedule.next(gamma, s)
        if config.record:
            record(it, gamma, step)
        if ref is not None and np.linalg.norm(X - ref) <= config.recovery_tol * refnorm:
            reason = "recovered"
            break
        if step <= config.stall_tol * np.linalg.norm(X):
            reason = "stalled"
            break
        if gamma < gamma_min:
            reason = "gamma_min"
            break
    trace.iterate = it
    trace.gamma_final = gamma
    trace.iterations = i
    trace.reason = reason
    return trace
