"""Matrix IRLS-p over the affine set, with complementary weight sides."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import linops, lsq
from .errors import IllConditionedError, IrlsError, SolverFailure
from .objective import LEFT, RIGHT, logdet_from_singular_values, weight_from_svd

AUTO = None


@dataclass(frozen=True)
class GammaSchedule:
    """Decay law for the regularization parameter gamma.

    ``kind`` is ``"constant"`` (gamma <- nu * gamma), ``"sigma"``
    (gamma <- min(gamma, alpha * sigma_{K+1}(X))) or ``"fixed"`` (gamma frozen).
    ``gamma0=None`` selects sigma_1(X0)^2 for the starting value.
    """

    kind: str = "constant"
    nu: float = 0.9
    alpha: float = 1.0
    K: int = 1
    gamma0: float | None = AUTO

    def __post_init__(self):
        if self.kind == "constant" and not 0 < self.nu < 1:
            raise ValueError(f"decay factor nu must lie in (0, 1), got {self.nu}")
        if self.kind == "sigma" and not (0 < self.alpha <= 1 and self.K >= 0):
            raise ValueError("sigma schedule needs alpha in (0, 1] and K >= 0")
        if self.kind not in ("constant", "sigma", "fixed"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.gamma0 is not None and self.gamma0 < 0:
            raise ValueError("gamma0 must be nonnegative")

    @classmethod
    def constant(cls, nu, gamma0=AUTO):
        return cls("constant", nu=nu, gamma0=gamma0)

    @classmethod
    def sigma_based(cls, alpha, K, gamma0=AUTO):
        return cls("sigma", alpha=alpha, K=K, gamma0=gamma0)

    @classmethod
    def fixed(cls, gamma):
        return cls("fixed", gamma0=gamma)

    def initial(self, X0):
        if self.gamma0 is not None:
            return float(self.gamma0)
        s = np.linalg.svd(X0, compute_uv=False)
        return float(s[0] ** 2) if s.size and s[0] > 0 else 1.0

    def next(self, gamma, s):
        """Next gamma given the current value and singular values ``s`` of the iterate."""
        if self.kind == "constant":
            return gamma * self.nu
        if self.kind == "sigma":
            sk = s[self.K] if self.K < s.size else 0.0
            return min(gamma, self.alpha * sk)
        return gamma


@dataclass
class IrlsConfig:
    p: float = 0.0
    sides: str | tuple = "left"
    schedule: GammaSchedule = field(default_factory=GammaSchedule)
    strategy: str = "auto"
    c_L: float | None = AUTO
    max_iters: int = 10_000
    gamma_min: float | None = AUTO
    stall_tol: float = 1e-10
    recovery_ref: np.ndarray | None = None
    recovery_tol: float = 1e-6
    cond_limit: float = lsq.COND_LIMIT
    record: bool = True

    def __post_init__(self):
        if not 0 <= self.p <= 1:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.stall_tol < 0 or self.recovery_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.strategy not in ("auto", lsq.IMAGE, lsq.KERNEL, lsq.RELAXED):
            raise ValueError(f"unknown strategy {self.strategy!r}")

    def side(self, i):
        """Weight side used for the step that produces iterate i + 1."""
        if self.sides == "left":
            return LEFT
        if self.sides == "right":
            return RIGHT
        if self.sides == "alternating":
            return LEFT if i % 2 == 0 else RIGHT
        return self.sides[i % len(self.sides)]


@dataclass
class IrlsTrace:
    """Per-iteration records of a run; index 0 is the starting point."""

    gamma: list = field(default_factory=list)
    f1: list = field(default_factory=list)
    f2: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    step: list = field(default_factory=list)
    spectrum: list = field(default_factory=list)
    sides: list = field(default_factory=list)
    strategies: list = field(default_factory=list)
    X: np.ndarray | None = None
    gamma_final: float = float("nan")
    iterations: int = 0
    reason: str = ""

    def as_arrays(self):
        return {k: np.asarray(getattr(self, k)) for k in ("gamma", "f1", "f2", "residual", "step")}


def _fro(A):
    return math.sqrt(float(np.vdot(A, A)))


def canonical_start(problem, schedule=None):
    """Minimum-norm feasible point and the starting gamma."""
    X0 = linops.min_norm_solution(problem.map, problem.y)
    schedule = schedule or GammaSchedule()
    return X0, schedule.initial(X0)


def irls_step(X, gamma, side, p, strategy, problem, X0=None, c_L=None,
              cond_limit=lsq.COND_LIMIT, svd=None):
    """One reweighting step; returns ``(X_next, strategy_used)``.

    ``strategy="auto"`` tries the image formula and falls back to the kernel
    formula around ``X0`` (default: ``X``) when the inner system is too
    ill-conditioned.
    """
    X = np.asarray(X, dtype=float)
    if svd is None:
        svd = np.linalg.svd(X, full_matrices=True)
    W = weight_from_svd(svd, gamma, p, side)
    if strategy == lsq.RELAXED:
        c = lsq.auto_c_L(problem) if c_L is None else c_L
        return lsq.solve_relaxed(problem, W, gamma, c), lsq.RELAXED
    if strategy == lsq.KERNEL:
        return lsq.solve_kernel(problem, W, X if X0 is None else X0), lsq.KERNEL
    try:
        return lsq.solve_image(problem, W, cond_limit=cond_limit), lsq.IMAGE
    except IllConditionedError:
        if strategy == lsq.IMAGE:
            raise
    return lsq.solve_kernel(problem, W, X if X0 is None else X0), lsq.KERNEL


def _record(trace, gamma, s, n, m, res, step, side, strategy, spectrum):
    sn = np.zeros(n)
    sm = np.zeros(m)
    k = min(n, s.size)
    sn[:k] = s[:k]
    sm[: min(m, s.size)] = s[: min(m, s.size)]
    trace.gamma.append(gamma)
    trace.f1.append(logdet_from_singular_values(sn, gamma))
    trace.f2.append(logdet_from_singular_values(sm, gamma))
    trace.residual.append(res)
    trace.step.append(step)
    trace.sides.append(side)
    trace.strategies.append(strategy)
    if spectrum:
        trace.spectrum.append(s.copy())


def irls_run(problem, config: IrlsConfig, X0=None, gamma0=None) -> IrlsTrace:
    """Run IRLS-p until one of the stopping rules fires.

    Stops on ``max_iters``, gamma below ``gamma_min`` (default 1e-14 gamma0),
    relative step below ``stall_tol``, or, when ``recovery_ref`` is given,
    relative distance to it below ``recovery_tol``.
    """
    n, m = problem.shape
    if X0 is None:
        X, g0 = canonical_start(problem, config.schedule)
    else:
        X = np.array(X0, dtype=float)
        g0 = config.schedule.initial(X)
    gamma = g0 if gamma0 is None else float(gamma0)
    gamma_min = 1e-14 * gamma if config.gamma_min is None else config.gamma_min
    ynorm = max(np.linalg.norm(problem.y), np.finfo(float).tiny)
    ref = config.recovery_ref
    refnorm = None if ref is None else np.linalg.norm(ref)
    X_feasible = X
    strategy = config.strategy

    trace = IrlsTrace()
    svd = np.linalg.svd(X, full_matrices=True)
    if config.record:
        _record(trace, gamma, svd[1], n, m, problem.residual(X) / ynorm, 0.0, 0, "", True)
    reason = "max_iters"
    i = 0
    for i in range(1, config.max_iters + 1):
        side = config.side(i - 1)
        try:
            X_new, used = irls_step(
                X, gamma, side, config.p, strategy, problem,
                X0=X_feasible, c_L=config.c_L, cond_limit=config.cond_limit, svd=svd,
            )
        except (IrlsError, np.linalg.LinAlgError) as exc:
            raise SolverFailure(str(exc), i) from exc
        if not np.all(np.isfinite(X_new)):
            raise SolverFailure("non-finite iterate", i)
        step = _fro(X_new - X)
        X = X_new
        if used != lsq.RELAXED:
            X_feasible = X
        if used == lsq.KERNEL and strategy == "auto":
            # gamma only shrinks, so the image system will not recover
            strategy = lsq.KERNEL
        svd = np.linalg.svd(X, full_matrices=True)
        gamma = config.schedule.next(gamma, svd[1])
        xnorm = _fro(X)
        if config.record:
            _record(trace, gamma, svd[1], n, m, problem.residual(X) / ynorm, step, side, used, True)
        if ref is not None and _fro(X - ref) <= config.recovery_tol * refnorm:
            reason = "recovered"
            break
        if step <= config.stall_tol * xnorm:
            reason = "stalled"
            break
        if gamma < gamma_min:
            reason = "gamma_min"
            break
    trace.X = X
    trace.gamma_final = gamma
    trace.iterations = i
    trace.reason = reason
    return trace


def stationarity_residual(X, gamma, problem, side=LEFT):
    """||X - X_W|| / max(1, ||X||) for the optimal weight W at X (zero iff stationary)."""
    X = np.asarray(X, dtype=float)
    X_W, _ = irls_step(X, gamma, side, 0.0, "auto", problem)
    return float(np.linalg.norm(X - X_W) / max(1.0, np.linalg.norm(X)))
