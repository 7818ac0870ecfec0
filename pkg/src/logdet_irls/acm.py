"""Sparse vector recovery (affine cardinality minimization) by IRLS-p.

The vector problem is the diagonal special case of the matrix one: the weight
is ``diag(x_i^2 + gamma)^(p/2 - 1)`` and each step is a weighted
least-squares solve over ``{x : L x = y}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import lsq
from .errors import DimensionError, DomainError, IllConditionedError, IrlsError, SolverFailure
from .irls import GammaSchedule

CARD_EPS = 1e-6


@dataclass(frozen=True, eq=False)
class VectorProblem:
    L: np.ndarray
    y: np.ndarray
    reference: np.ndarray | None = None

    def __post_init__(self):
        L = np.atleast_2d(np.asarray(self.L, dtype=float))
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if L.shape[0] != y.size:
            raise DimensionError(f"map has {L.shape[0]} rows but y has length {y.size}")
        if L.shape[0] >= L.shape[1]:
            raise DimensionError("vector problem must be underdetermined (l < n)")
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "y", y)

    @classmethod
    def from_reference(cls, L, x_ref):
        x_ref = np.asarray(x_ref, dtype=float)
        return cls(L, np.asarray(L) @ x_ref, x_ref)

    @property
    def n(self):
        return self.L.shape[1]

    def residual(self, x):
        return float(np.linalg.norm(self.L @ x - self.y))


def vec_weight(x, gamma, p=0.0):
    """Diagonal weight entries (x_i^2 + gamma)^(p/2 - 1).

    gamma = 0 is accepted as long as no entry becomes infinite.
    """
    x = np.asarray(x, dtype=float)
    if gamma < 0 or not np.isfinite(gamma):
        raise DomainError(f"gamma must be nonnegative, got {gamma}")
    base = x * x + gamma
    if p < 2 and np.any(base == 0):
        raise DomainError("weight is unbounded: gamma = 0 and x has zero entries")
    return base ** (p / 2 - 1)


def cardinality(x, eps=CARD_EPS):
    """Number of entries with |x_i| > eps * ||x||_2."""
    x = np.asarray(x, dtype=float)
    norm = np.linalg.norm(x)
    return 0 if norm == 0 else int(np.sum(np.abs(x) > eps * norm))


@dataclass
class VecIrlsConfig:
    p: float = 0.0
    schedule: GammaSchedule = field(default_factory=lambda: GammaSchedule.constant(0.95))
    max_iters: int = 5000
    gamma_min: float | None = None
    stall_tol: float = 1e-12
    recovery_tol: float = 1e-9
    cond_limit: float = lsq.COND_LIMIT
    record: bool = True


@dataclass
class VecIrlsTrace:
    gamma: list = field(default_factory=list)
    weighted_norm: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    step: list = field(default_factory=list)
    x: np.ndarray | None = None
    iterations: int = 0
    reason: str = ""

    @property
    def cardinality(self):
        return cardinality(self.x)


def vec_irls_step(x, gamma, p, problem, cond_limit=lsq.COND_LIMIT):
    """argmin ||W^{1/2} x'|| over L x' = y for the weight at (x, gamma)."""
    w = vec_weight(x, gamma, p)
    H = np.diag(np.sqrt(w / w.max()))
    try:
        return lsq.weighted_ls(problem.L, H, problem.y, cond_limit=cond_limit)
    except IllConditionedError:
        return lsq.weighted_ls_kernel(problem.L, H, problem.y, x)


def vec_irls_run(problem: VectorProblem, config: VecIrlsConfig, x0=None) -> VecIrlsTrace:
    """IRLS-p for the vector problem from the minimum-norm point (or ``x0``)."""
    L, y = problem.L, problem.y
    x = np.linalg.pinv(L) @ y if x0 is None else np.asarray(x0, dtype=float).copy()
    sched = config.schedule
    if sched.gamma0 is not None:
        gamma = float(sched.gamma0)
    else:
        gamma = float(np.max(x * x)) or 1.0
    gamma_min = 1e-14 * gamma if config.gamma_min is None else config.gamma_min
    ynorm = max(np.linalg.norm(y), np.finfo(float).tiny)
    ref = problem.reference
    trace = VecIrlsTrace()

    def record(x, gamma, step):
        w = vec_weight(x, gamma, config.p) if gamma > 0 else np.full(x.size, np.nan)
        trace.gamma.append(gamma)
        trace.weighted_norm.append(float(np.sum(w * x * x)))
        trace.residual.append(problem.residual(x) / ynorm)
        trace.step.append(step)

    if config.record:
        record(x, gamma, 0.0)
    reason = "max_iters"
    i = 0
    for i in range(1, config.max_iters + 1):
        try:
            x_new = vec_irls_step(x, gamma, config.p, problem, config.cond_limit)
        except (IrlsError, np.linalg.LinAlgError) as exc:
            raise SolverFailure(str(exc), i) from exc
        step = float(np.linalg.norm(x_new - x))
        x = x_new
        gamma = sched.next(gamma, np.sort(np.abs(x))[::-1])
        if config.record:
            record(x, gamma, step)
        if ref is not None and np.linalg.norm(x - ref) <= config.recovery_tol * np.linalg.norm(ref):
            reason = "recovered"
            break
        if step <= config.stall_tol * np.linalg.norm(x):
            reason = "stalled"
            break
        if gamma < gamma_min:
            reason = "gamma_min"
            break
    trace.x = x
    trace.iterations = i
    trace.reason = reason
    return trace
