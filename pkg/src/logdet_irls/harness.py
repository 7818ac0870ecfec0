"""Random problem generation, outcome metrics and the experiment loop.

A trial plants a rank-r reference, measures it, runs a solver from the
canonical start and classifies the result against the reference. The
sensitivity loop reruns a failing trial with ever slower gamma decay.
"""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import acm, airls, irls, linops
from .errors import CoverageInfeasibleError, DegenerateOperatorError, DomainError, IrlsError
from .irls import GammaSchedule

EPS = 1e-6
RESIDUAL_TOL = 1e-6
RECOVERY_TOL = 1e-4
EARLY_STOP_TOL = 1e-6
NU0 = 1.2
MAX_ITERS_PER_RUN = 500_000
POST_SWEEPS = 200
SAMPLING_ATTEMPTS = 10_000
GAUSSIAN_RETRIES = 10
WORKERS_ENV = "LOGDET_IRLS_WORKERS"

IMPROVEMENT = "improvement"
SUCCESS = "success"
WEAK_FAIL = "weak_fail"
STRONG_FAIL = "strong_fail"
CATEGORIES = (IMPROVEMENT, SUCCESS, WEAK_FAIL, STRONG_FAIL)


def _rng(seed, stream):
    return np.random.default_rng([int(seed), stream])


# ---------------------------------------------------------------- generators

def gen_reference(n, m, r, seed):
    """Product of two Gaussian factors of inner dimension r."""
    if not 1 <= r <= min(n, m):
        raise DomainError(f"rank r must lie in [1, {min(n, m)}], got {r}")
    rng = _rng(seed, 0)
    return rng.standard_normal((n, r)) @ rng.standard_normal((r, m))


def gen_sparse_reference(n, s, seed):
    """Vector with s Gaussian entries on a uniformly random support."""
    if not 1 <= s <= n:
        raise DomainError(f"support size must lie in [1, {n}], got {s}")
    rng = _rng(seed, 0)
    x = np.zeros(n)
    x[rng.choice(n, s, replace=False)] = rng.standard_normal(s)
    return x


def gen_gaussian_operator(n, m, ell, seed):
    """Dense operator with i.i.d. standard normal entries and full row rank."""
    if not 1 <= ell < n * m:
        raise DomainError(f"need 1 <= l < n*m, got l = {ell}")
    rng = _rng(seed, 1)
    for _ in range(GAUSSIAN_RETRIES):
        op = linops.LinearMap.dense(rng.standard_normal((ell, n * m)), n, m)
        try:
            op._svd
        except DegenerateOperatorError:
            continue
        return op
    raise DegenerateOperatorError(f"no full-rank operator after {GAUSSIAN_RETRIES} draws")


def gen_sampling_operator(n, m, ell, r, seed):
    """l distinct uniform entries with at least r samples in every row and column."""
    if ell < r * max(n, m) or ell >= n * m:
        raise CoverageInfeasibleError(
            f"l = {ell} cannot cover every row and column {r} times in a {n}x{m} matrix"
        )
    rng = _rng(seed, 1)
    for _ in range(SAMPLING_ATTEMPTS):
        idx = np.sort(rng.choice(n * m, ell, replace=False))
        rows, cols = idx % n, idx // n
        if (np.bincount(rows, minlength=n).min() >= r
                and np.bincount(cols, minlength=m).min() >= r):
            return linops.LinearMap.sampling(rows, cols, n, m)
    raise CoverageInfeasibleError(f"coverage not met after {SAMPLING_ATTEMPTS} attempts")


def sampling_budget(n, m, r, c_mf):
    """Number of samples c_mf * r (n + m - r)."""
    return int(round(c_mf * r * (n + m - r)))


# ------------------------------------------------------------------- metrics

def _spectrum(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        return np.sort(np.abs(X))[::-1]
    return np.linalg.svd(X, compute_uv=False)


def rank_eps(X, eps=EPS):
    """Number of singular values above eps * ||X||_F (cardinality for vectors)."""
    s = _spectrum(X)
    norm = np.sqrt(np.sum(s * s))
    return 0 if norm == 0 else int(np.sum(s > eps * norm))


def Q_eps(X_alg, X_rs, eps=EPS):
    """Limit quotient of the eps-truncated determinants of X_alg and X_rs.

    0 or inf when the eps-ranks differ, else prod sigma_i(alg)^2 / prod sigma_i(rs)^2
    over the common rank.
    """
    ra, rr = rank_eps(X_alg, eps), rank_eps(X_rs, eps)
    if ra < rr:
        return 0.0
    if ra > rr:
        return math.inf
    sa, sr = _spectrum(X_alg)[:ra], _spectrum(X_rs)[:rr]
    return float(np.exp(2.0 * np.sum(np.log(sa) - np.log(sr))))


def truncate(X, r):
    """Best approximation of rank (or cardinality) at most r."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        out = np.zeros_like(X)
        keep = np.argsort(-np.abs(X), kind="stable")[:r]
        out[keep] = X[keep]
        return out
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    return (U[:, :r] * s[:r]) @ Vt[:r]


def _project(problem, X):
    if isinstance(problem, acm.VectorProblem):
        return X + np.linalg.lstsq(problem.L, problem.y - problem.L @ X, rcond=None)[0]
    return linops.project_affine(problem.map, problem.y, X)


def _residual(problem, X):
    return problem.residual(X)


def post_iterate(X, problem, r, sweeps=POST_SWEEPS):
    """Alternate projections onto the affine set and the rank-r variety.

    Ends on the truncation, so the result has rank at most r; stops early once
    a sweep moves the iterate by less than 1e-14 ||X||_F.
    """
    if r < 1:
        raise DomainError("post-iteration rank must be at least 1")
    X = truncate(np.asarray(X, dtype=float), r)
    for _ in range(sweeps):
        X_new = truncate(_project(problem, X), r)
        move = np.linalg.norm(X_new - X)
        X = X_new
        if move < 1e-14 * max(np.linalg.norm(X), np.finfo(float).tiny):
            break
    return X


@dataclass
class TrialOutcome:
    trial: int
    seed: int
    k: int | None
    category: str
    recovered: bool
    Q: float
    residual_rel: float
    iterations: int
    wall_ms: float
    rel_error: float = math.nan
    note: str = ""


def categorize(residual_rel, Q):
    """Category from the relative residual and the limit quotient."""
    if residual_rel > RESIDUAL_TOL or Q == math.inf or math.isnan(Q):
        return STRONG_FAIL
    if Q >= 1.005:
        return WEAK_FAIL
    if Q > 0.98:
        return SUCCESS
    return IMPROVEMENT


def classify(X_alg, problem, eps=EPS, post_sweeps=POST_SWEEPS):
    """Post-iterate to the reference rank and grade against the reference.

    Returns ``(category, recovered, Q, residual_rel, rel_error)``.
    """
    ref = problem.reference
    if ref is None:
        raise DomainError("classification needs a reference solution")
    r = getattr(problem, "reference_rank", None) or rank_eps(ref, eps)
    X = post_iterate(X_alg, problem, r, post_sweeps)
    ynorm = max(np.linalg.norm(problem.y), np.finfo(float).tiny)
    res = _residual(problem, X) / ynorm
    Q = Q_eps(X, ref, eps) if np.any(X) else 0.0
    rel = float(np.linalg.norm(X - ref) / np.linalg.norm(ref))
    category = categorize(res, Q)
    recovered = bool(rel <= RECOVERY_TOL and res <= RESIDUAL_TOL)
    if recovered:
        category = SUCCESS
    return category, recovered, Q, res, rel


# --------------------------------------------------------------- experiments

@dataclass
class ExperimentConfig:
    """Parameters of one Monte Carlo experiment.

    ``ell`` may be left unset in favour of ``c_mf``, the multiple of the
    rank-r degrees of freedom r (n + m - r) (or r for the vector problem).
    """

    n: int = 12
    m: int = 12
    r: int = 3
    ell: int | None = None
    c_mf: float | None = None
    operator: str = "gaussian"
    solver: str = "irls"
    p: float = 0.0
    trials: int = 50
    k_max: int = 10
    base_seed: int = 0
    nu0: float = NU0
    max_iters: int = MAX_ITERS_PER_RUN
    R: int | None = None
    sides: str = "left"
    post_sweeps: int = POST_SWEEPS
    timing: bool = False
    name: str = "experiment"

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.k_max < 0:
            raise ValueError("k_max must be nonnegative")
        if self.operator not in ("gaussian", "sampling"):
            raise ValueError(f"unknown operator kind {self.operator!r}")
        if self.solver not in ("irls", "airls", "acm"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.solver == "acm" and self.operator != "gaussian":
            raise ValueError("the vector solver needs a gaussian operator")
        if self.nu0 <= 1:
            raise ValueError("nu0 must exceed 1")
        if self.ell is None and self.c_mf is None:
            raise ValueError("either ell or c_mf must be given")

    @property
    def measurements(self):
        if self.ell is not None:
            return int(self.ell)
        if self.solver == "acm":
            return int(round(self.c_mf * self.r))
        return sampling_budget(self.n, self.m, self.r, self.c_mf)


def make_problem(config: ExperimentConfig, seed):
    """Planted instance for one trial; identical for identical seeds."""
    ell = config.measurements
    if config.solver == "acm":
        x = gen_sparse_reference(config.n, config.r, seed)
        L = _rng(seed, 1).standard_normal((ell, config.n))
        return acm.VectorProblem.from_reference(L, x)
    X = gen_reference(config.n, config.m, config.r, seed)
    if config.operator == "sampling":
        op = gen_sampling_operator(config.n, config.m, ell, config.r, seed)
    else:
        op = gen_gaussian_operator(config.n, config.m, ell, seed)
    return linops.ProblemInstance.from_reference(op, X, config.r, seed)


def decay_factor(k, nu0=NU0):
    """Factor applied to gamma at sensitivity index k: nu0^(-2^-k)."""
    return nu0 ** (-(2.0 ** -k))


def solve_once(problem, config: ExperimentConfig, nu, seed=0):
    """One solver run with constant decay ``nu``; returns ``(X, iterations)``."""
    sched = GammaSchedule.constant(nu)
    if config.solver == "acm":
        tr = acm.vec_irls_run(problem, acm.VecIrlsConfig(
            p=config.p, schedule=sched, max_iters=config.max_iters,
            recovery_tol=EARLY_STOP_TOL, record=False))
        return tr.x, tr.iterations
    if config.solver == "airls":
        tr = airls.airls_run(problem, airls.AirlsConfig(
            p=config.p, R=config.R, schedule=sched, max_sweeps=config.max_iters,
            recovery_ref=problem.reference, recovery_tol=EARLY_STOP_TOL,
            seed=seed, record=False))
        return tr.X, tr.iterations
    tr = irls.irls_run(problem, irls.IrlsConfig(
        p=config.p, sides=config.sides, schedule=sched, max_iters=config.max_iters,
        recovery_ref=problem.reference, recovery_tol=EARLY_STOP_TOL, record=False))
    return tr.X, tr.iterations


def sensitivity_run(problem, config: ExperimentConfig, trial=0, seed=0):
    """Rerun with decay nu_k^-1, k = 0..k_max, until the outcome is not a fail.

    Returns the first success or improvement with its index k; otherwise the
    outcome at k_max with ``k = None``.
    """
    total = 0
    t0 = time.perf_counter()
    outcome = None
    for k in range(config.k_max + 1):
        X, iters = solve_once(problem, config, decay_factor(k, config.nu0), seed)
        total += iters
        cat, rec, Q, res, rel = classify(X, problem, EPS, config.post_sweeps)
        outcome = TrialOutcome(trial, seed, k, cat, rec, Q, res, iters, 0.0, rel)
        if iters >= config.max_iters and not rec:
            outcome.note = "iteration cap reached"
            cat = outcome.category = STRONG_FAIL if cat == STRONG_FAIL else WEAK_FAIL
        if cat in (SUCCESS, IMPROVEMENT):
            break
    else:
        outcome.k = None
    outcome.iterations = total
    if config.timing:
        outcome.wall_ms = 1000.0 * (time.perf_counter() - t0)
    return outcome


def run_trial(config: ExperimentConfig, trial):
    seed = config.base_seed + trial
    try:
        problem = make_problem(config, seed)
        return sensitivity_run(problem, config, trial, seed)
    except (IrlsError, np.linalg.LinAlgError, ValueError) as exc:
        return TrialOutcome(trial, seed, None, STRONG_FAIL, False, math.nan,
                            math.nan, 0, 0.0, math.nan, f"{type(exc).__name__}: {exc}")


def _worker_count(workers):
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get(WORKERS_ENV, "")
    return max(1, int(env)) if env.strip().isdigit() else 1


def run_experiment(config: ExperimentConfig, workers=None, trials=None):
    """Outcomes of all trials, ordered by trial index.

    ``workers`` defaults to the ``LOGDET_IRLS_WORKERS`` environment variable
    (1 if unset). ``trials`` restricts the run to a subset of trial indices.
    """
    idx = list(range(config.trials)) if trials is None else sorted(trials)
    nw = _worker_count(workers)
    if nw == 1 or len(idx) == 1:
        out = [run_trial(config, t) for t in idx]
    else:
        with ProcessPoolExecutor(max_workers=nw) as pool:
            out = list(pool.map(run_trial, [config] * len(idx), idx))
    return sorted(out, key=lambda o: o.trial)


@dataclass
class Summary:
    counts: dict = field(default_factory=dict)
    recovered: int = 0
    trials: int = 0

    @property
    def recovery_fraction(self):
        return self.recovered / self.trials if self.trials else 0.0


def summarize(outcomes):
    counts = {c: 0 for c in CATEGORIES}
    for o in outcomes:
        counts[o.category] += 1
    return Summary(counts, sum(o.recovered for o in outcomes), len(outcomes))


def config_dict(config: ExperimentConfig):
    return asdict(config)


def with_overrides(config: ExperimentConfig, **kw):
    return replace(config, **kw)
