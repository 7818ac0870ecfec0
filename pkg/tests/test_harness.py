import math

import numpy as np
import pytest

from logdet_irls import harness, linops
from logdet_irls.errors import CoverageInfeasibleError, DomainError


def test_generators_are_deterministic():
    a = harness.gen_reference(5, 4, 2, seed=3)
    assert np.array_equal(a, harness.gen_reference(5, 4, 2, seed=3))
    assert np.linalg.matrix_rank(a) == 2
    op1 = harness.gen_gaussian_operator(4, 4, 9, seed=1)
    op2 = harness.gen_gaussian_operator(4, 4, 9, seed=1)
    assert np.array_equal(op1.matrix, op2.matrix)
    x = harness.gen_sparse_reference(10, 3, seed=0)
    assert np.count_nonzero(x) == 3
    with pytest.raises(DomainError):
        harness.gen_reference(3, 3, 4, seed=0)


def test_sampling_coverage():
    op = harness.gen_sampling_operator(10, 8, 40, 2, seed=4)
    rows, cols = op.data
    assert np.bincount(rows, minlength=10).min() >= 2
    assert np.bincount(cols, minlength=8).min() >= 2
    with pytest.raises(CoverageInfeasibleError):
        harness.gen_sampling_operator(10, 8, 15, 2, seed=0)
    assert harness.sampling_budget(50, 50, 5, 2.0) == 950


def test_rank_and_quotient():
    A = np.diag([3.0, 2.0, 0.0])
    B = np.diag([6.0, 1.0, 0.0])
    assert harness.rank_eps(A) == 2
    assert harness.Q_eps(A, B) == pytest.approx((3 * 2) ** 2 / (6 * 1) ** 2)
    assert harness.Q_eps(np.diag([1.0, 0, 0]), B) == 0.0
    assert harness.Q_eps(np.eye(3), B) == math.inf
    # vectors use sorted magnitudes
    assert harness.rank_eps(np.array([0.0, -2.0, 1.0])) == 2
    assert np.array_equal(harness.truncate(np.array([1.0, -3.0, 2.0]), 2), [0.0, -3.0, 2.0])
    X = np.random.default_rng(0).standard_normal((4, 4))
    assert np.linalg.matrix_rank(harness.truncate(X, 2)) == 2


@pytest.mark.parametrize("res,Q,expect", [
    (1e-9, 1.0, harness.SUCCESS), (1e-9, 0.5, harness.IMPROVEMENT),
    (1e-9, 0.98, harness.IMPROVEMENT), (1e-9, 1.005, harness.WEAK_FAIL),
    (1e-3, 1.0, harness.STRONG_FAIL), (1e-9, math.inf, harness.STRONG_FAIL),
    (1e-9, math.nan, harness.STRONG_FAIL)])
def test_categorize(res, Q, expect):
    assert harness.categorize(res, Q) == expect


def test_classify_reference_is_success():
    cfg = harness.ExperimentConfig(n=6, m=6, r=2, ell=30)
    prob = harness.make_problem(cfg, 0)
    cat, rec, Q, res, rel = harness.classify(prob.reference, prob)
    assert (cat, rec) == (harness.SUCCESS, True)
    assert Q == pytest.approx(1.0) and rel < 1e-10


def test_post_iterate_lands_on_rank():
    cfg = harness.ExperimentConfig(n=6, m=6, r=1, ell=20)
    prob = harness.make_problem(cfg, 1)
    noisy = prob.reference + 1e-3 * np.random.default_rng(1).standard_normal((6, 6))
    X = harness.post_iterate(noisy, prob, 1)
    assert np.linalg.matrix_rank(X, tol=1e-10) == 1
    assert np.linalg.norm(X - prob.reference) < 1e-8 * np.linalg.norm(prob.reference)


def test_decay_factor():
    assert harness.decay_factor(0) == pytest.approx(1 / 1.2)
    assert harness.decay_factor(1) == pytest.approx(1.2 ** -0.5)
    assert all(harness.decay_factor(k) < harness.decay_factor(k + 1) < 1 for k in range(5))


def test_config_validation():
    with pytest.raises(ValueError):
        harness.ExperimentConfig(ell=None, c_mf=None)
    with pytest.raises(ValueError):
        harness.ExperimentConfig(ell=10, solver="other")
    with pytest.raises(ValueError):
        harness.ExperimentConfig(ell=10, nu0=0.9)
    assert harness.ExperimentConfig(n=50, m=50, r=5, c_mf=2.0).measurements == 950


def test_experiment_is_reproducible_and_parallel_safe():
    cfg = harness.ExperimentConfig(n=6, m=6, r=1, ell=18, trials=4, k_max=2, base_seed=11)
    a = harness.run_experiment(cfg)
    b = harness.run_experiment(cfg, workers=2)
    assert a == b
    assert [o.trial for o in a] == [0, 1, 2, 3]
    assert [o.seed for o in a] == [11, 12, 13, 14]
    s = harness.summarize(a)
    assert sum(s.counts.values()) == 4 and s.recovery_fraction == 1.0


def test_too_few_measurements_is_not_recovered():
    cfg = harness.ExperimentConfig(n=6, m=6, r=2, ell=12, trials=2, k_max=0)
    out = harness.run_experiment(cfg)
    assert not any(o.recovered for o in out)
    assert all(o.k in (0, None) for o in out)


def test_bad_trial_becomes_strong_fail():
    cfg = harness.ExperimentConfig(n=6, m=6, r=2, ell=5, operator="sampling", trials=1, k_max=0)
    (o,) = harness.run_experiment(cfg)
    assert o.category == harness.STRONG_FAIL
    assert "CoverageInfeasibleError" in o.note


def test_vector_and_airls_trials():
    acm_cfg = harness.ExperimentConfig(n=20, m=1, r=2, ell=10, solver="acm", trials=2, k_max=1)
    assert all(o.recovered for o in harness.run_experiment(acm_cfg))
    air = harness.ExperimentConfig(n=15, m=15, r=2, c_mf=2.5, operator="sampling",
                                   solver="airls", trials=2, k_max=1)
    assert all(o.recovered for o in harness.run_experiment(air))


def test_timing_flag():
    cfg = harness.ExperimentConfig(n=5, m=5, r=1, ell=15, trials=1, k_max=0)
    assert harness.run_experiment(cfg)[0].wall_ms == 0.0
    assert harness.run_experiment(harness.with_overrides(cfg, timing=True))[0].wall_ms > 0
