import numpy as np
import pytest

from logdet_irls import analytic, irls, linops, lsq
from logdet_irls.errors import SolverFailure
from logdet_irls.irls import GammaSchedule, IrlsConfig


def _problem(rng, n=6, m=6, r=1, ell=None):
    ell = ell or 2 * r * (n + m - r)
    X = rng.standard_normal((n, r)) @ rng.standard_normal((r, m))
    op = linops.LinearMap.dense(rng.standard_normal((ell, n * m)), n, m)
    return linops.ProblemInstance.from_reference(op, X, r)


def test_schedules():
    s = GammaSchedule.constant(0.5, gamma0=4.0)
    assert s.initial(np.eye(2)) == 4.0
    assert s.next(4.0, np.ones(2)) == 2.0
    sb = GammaSchedule.sigma_based(1.0, 1)
    assert sb.initial(np.diag([3.0, 1.0])) == 9.0
    assert sb.next(9.0, np.array([3.0, 0.5])) == 0.5
    assert GammaSchedule.fixed(0.3).next(0.3, np.ones(2)) == 0.3
    with pytest.raises(ValueError):
        GammaSchedule.constant(1.0)


def test_config_validation():
    with pytest.raises(ValueError):
        IrlsConfig(p=2)
    with pytest.raises(ValueError):
        IrlsConfig(strategy="other")
    cfg = IrlsConfig(sides="alternating")
    assert [cfg.side(i) for i in range(3)] == [1, 2, 1]


def test_recovers_low_rank(rng):
    prob = _problem(rng)
    tr = irls.irls_run(prob, IrlsConfig(recovery_ref=prob.reference))
    assert tr.reason == "recovered"
    assert np.linalg.norm(tr.X - prob.reference) <= 1e-6 * np.linalg.norm(prob.reference)
    assert tr.residual[-1] < 1e-8
    assert len(tr.f1) == tr.iterations + 1


@pytest.mark.parametrize("sides", ["left", "right", "alternating"])
def test_sides_recover(rng, sides):
    prob = _problem(rng, n=5, m=7)
    tr = irls.irls_run(prob, IrlsConfig(sides=sides, recovery_ref=prob.reference))
    assert tr.reason == "recovered"


def test_strategies_agree_per_step(rng):
    prob = _problem(rng, n=4, m=5, ell=10)
    X = linops.min_norm_solution(prob.map, prob.y)
    a, _ = irls.irls_step(X, 0.1, 1, 0.0, lsq.IMAGE, prob)
    b, _ = irls.irls_step(X, 0.1, 1, 0.0, lsq.KERNEL, prob)
    assert np.allclose(a, b)
    c, used = irls.irls_step(X, 1e-12, 1, 0.0, lsq.RELAXED, prob)
    assert used == lsq.RELAXED
    assert prob.residual(c) < 1e-6 * np.linalg.norm(prob.y)


def test_falls_back_to_kernel(rng):
    prob = _problem(rng, n=4, m=4, ell=12)
    X = prob.reference
    X_next, used = irls.irls_step(X, 1e-13, 1, 0.0, "auto", prob, cond_limit=1e6)
    assert used == lsq.KERNEL
    assert prob.residual(X_next) < 1e-8 * np.linalg.norm(prob.y)


def test_stationarity_at_fixed_point():
    fam = analytic.symmetric_2x2()
    g = 0.19
    X = fam.X(np.sqrt(1 - g), np.sqrt(1 - g))
    assert irls.stationarity_residual(X, g, fam.problem) < 1e-14


def test_stop_reasons(rng):
    prob = _problem(rng)
    assert irls.irls_run(prob, IrlsConfig(max_iters=3)).reason == "max_iters"
    tr = irls.irls_run(prob, IrlsConfig(schedule=GammaSchedule.constant(0.1)))
    assert tr.reason in ("gamma_min", "stalled")


def test_image_only_failure_is_wrapped(rng):
    prob = _problem(rng, n=4, m=4, ell=12)
    cfg = IrlsConfig(strategy=lsq.IMAGE, cond_limit=1.0)
    with pytest.raises(SolverFailure) as info:
        irls.irls_run(prob, cfg)
    assert info.value.iteration == 1


def test_canonical_start(rng):
    prob = _problem(rng)
    X0, g0 = irls.canonical_start(prob)
    assert np.allclose(X0, linops.min_norm_solution(prob.map, prob.y))
    assert np.isclose(g0, np.linalg.norm(X0, 2) ** 2)
