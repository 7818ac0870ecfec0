import numpy as np
import pytest

from logdet_irls import linops, lsq, objective
from logdet_irls.errors import IllConditionedError, InfeasibleError
from logdet_irls.objective import LEFT, RIGHT


def _kkt(L, M, y):
    """Direct KKT solve of min x^T M x s.t. L x = y."""
    N, ell = M.shape[0], L.shape[0]
    A = np.block([[2 * M, L.T], [L, np.zeros((ell, ell))]])
    return np.linalg.solve(A, np.concatenate([np.zeros(N), y]))[:N]


def _weight_kron(W, side, n, m):
    # column-major vec: vec(W X) = (I_m kron W) vec(X), vec(X W) = (W kron I_n) vec(X)
    return np.kron(np.eye(m), W) if side == LEFT else np.kron(W, np.eye(n))


@pytest.mark.parametrize("side", [LEFT, RIGHT])
@pytest.mark.parametrize("kind", ["dense", "sampling"])
def test_solvers_match_kkt(rng, side, kind):
    n, m, ell = 4, 3, 6
    if kind == "dense":
        op = linops.LinearMap.dense(rng.standard_normal((ell, n * m)), n, m)
    else:
        flat = rng.choice(n * m, ell, replace=False)
        op = linops.LinearMap.sampling(flat % n, flat // n, n, m)
    prob = linops.ProblemInstance(op, rng.standard_normal(ell))
    W = objective.weight(rng.standard_normal((n, m)), 0.3, 0.5, side)
    expect = linops.unvec(_kkt(op.matrix, _weight_kron(W.W, side, n, m), prob.y), n, m)
    X0 = linops.min_norm_solution(op, prob.y)
    assert np.allclose(lsq.solve_image(prob, W), expect, atol=1e-10)
    assert np.allclose(lsq.solve_kernel(prob, W, X0), expect, atol=1e-10)
    # a plain array weight gives the same answer
    assert np.allclose(lsq.solve_image(prob, W.W, side=side), expect, atol=1e-10)


def test_weighted_gram_matches_explicit(rng):
    n, m, ell = 3, 4, 5
    op = linops.LinearMap.dense(rng.standard_normal((ell, n * m)), n, m)
    W = objective.weight(rng.standard_normal((n, m)), 0.2, 0.0, LEFT)
    Minv = np.linalg.inv(_weight_kron(W.W, LEFT, n, m))
    assert np.allclose(lsq.weighted_gram(op, W.inverse, LEFT), op.matrix @ Minv @ op.matrix.T)
    W2 = objective.weight(rng.standard_normal((n, m)), 0.2, 0.0, RIGHT)
    Minv2 = np.linalg.inv(_weight_kron(W2.W, RIGHT, n, m))
    assert np.allclose(lsq.weighted_gram(op, W2.inverse, RIGHT), op.matrix @ Minv2 @ op.matrix.T)


def test_relaxed_matches_normal_equations(rng):
    n, m, ell = 3, 3, 4
    op = linops.LinearMap.dense(rng.standard_normal((ell, n * m)), n, m)
    prob = linops.ProblemInstance(op, rng.standard_normal(ell))
    W = objective.weight(rng.standard_normal((n, m)), 0.5, 0.0, LEFT)
    g, c = 1e-2, 2.0
    L = op.matrix
    M = _weight_kron(W.W, LEFT, n, m)
    x = np.linalg.solve(L.T @ L + c * g * M, L.T @ prob.y)
    assert np.allclose(linops.vec(lsq.solve_relaxed(prob, W, g, c)), x)
    with pytest.raises(ValueError):
        lsq.solve_relaxed(prob, W, 0.0, c)


def test_relaxed_scales_with_y(rng):
    n, m, ell = 3, 4, 5
    op = linops.LinearMap.dense(rng.standard_normal((ell, n * m)), n, m)
    y = rng.standard_normal(ell)
    W = objective.weight(rng.standard_normal((n, m)), 0.5, 0.0, LEFT)
    a = lsq.solve_relaxed(linops.ProblemInstance(op, y), W, 1e-3, lsq.auto_c_L(linops.ProblemInstance(op, y)))
    b = lsq.solve_relaxed(linops.ProblemInstance(op, 7 * y), W, 1e-3,
                          lsq.auto_c_L(linops.ProblemInstance(op, 7 * y)))
    assert np.allclose(7 * a, b)


def test_auto_c_L_variants(rng):
    n, m, ell = 3, 4, 5
    flat = rng.choice(n * m, ell, replace=False)
    samp = linops.LinearMap.sampling(flat % n, flat // n, n, m)
    fac = linops.as_factored(samp)
    y = rng.standard_normal(ell)
    for op in (samp, fac, linops.LinearMap.dense(samp.matrix, n, m)):
        c = lsq.auto_c_L(linops.ProblemInstance(op, y))
        assert np.isclose(c, np.sum(op.matrix ** 2) / (n * m))


def test_ill_conditioned_and_infeasible(rng):
    n, m, ell = 3, 3, 4
    op = linops.LinearMap.dense(rng.standard_normal((ell, n * m)), n, m)
    prob = linops.ProblemInstance(op, rng.standard_normal(ell))
    X = np.zeros((3, 3))
    X[0, 0] = 1.0
    W = objective.weight(X, 1e-14, 0.0, LEFT)
    with pytest.raises(IllConditionedError) as info:
        lsq.solve_image(prob, W, cond_limit=1e3)
    assert info.value.condition > 1e3
    with pytest.raises(InfeasibleError):
        lsq.solve_kernel(prob, W, np.ones((3, 3)))


def test_generic_weighted_ls(rng):
    L = rng.standard_normal((3, 6))
    H = rng.standard_normal((6, 6)) + 3 * np.eye(6)
    y = rng.standard_normal(3)
    x = lsq.weighted_ls(L, H, y)
    assert np.allclose(x, _kkt(L, H.T @ H, y))
    x0 = np.linalg.pinv(L) @ y
    assert np.allclose(lsq.weighted_ls_kernel(L, H, y, x0), x)


@pytest.mark.parametrize("side", [LEFT, RIGHT])
def test_condition_bound_is_an_upper_bound(rng, side):
    n, m, ell = 4, 5, 9
    op = linops.LinearMap.dense(rng.standard_normal((ell, n * m)), n, m)
    for g in (1e-6, 1e-2, 1.0):
        W = objective.weight(rng.standard_normal((n, m)), g, 0.3, side)
        assert np.linalg.cond(lsq._gram(op, W, side)) <= lsq._cond_bound(op, W) * (1 + 1e-8)
