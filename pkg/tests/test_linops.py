import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from logdet_irls import linops
from logdet_irls.errors import (DegenerateOperatorError, DimensionError, InfeasibleError,
                                UnsupportedVariantError)


def _sampling(rng, n, m, ell):
    flat = rng.choice(n * m, ell, replace=False)
    return linops.LinearMap.sampling(flat % n, flat // n, n, m)


def _factored(rng, n, m, ell, rL=2):
    return linops.LinearMap.factored(rng.standard_normal((rL, ell, n)),
                                     rng.standard_normal((rL, m, ell)), n, m)


def test_vec_is_column_major():
    X = np.arange(6.0).reshape(2, 3)
    assert list(linops.vec(X)) == [0, 3, 1, 4, 2, 5]
    assert np.array_equal(linops.unvec(linops.vec(X), 2, 3), X)


@pytest.mark.parametrize("kind", ["dense", "sampling", "factored"])
def test_apply_matches_matrix_and_adjoint(rng, kind):
    n, m, ell = 4, 5, 7
    op = {"dense": lambda: linops.LinearMap.dense(rng.standard_normal((ell, n * m)), n, m),
          "sampling": lambda: _sampling(rng, n, m, ell),
          "factored": lambda: _factored(rng, n, m, ell)}[kind]()
    X = rng.standard_normal((n, m))
    v = rng.standard_normal(ell)
    assert np.allclose(linops.apply(op, X), op.matrix @ linops.vec(X))
    # <L X, v> == <X, L* v>
    assert np.isclose(linops.apply(op, X) @ v, np.sum(X * linops.adjoint_apply(op, v)))
    for k in range(ell):
        assert np.isclose(linops.apply(op, X)[k], np.sum(op.row_matrices[k] * X))


def test_sampling_matrix_entries():
    op = linops.LinearMap.sampling([0, 1], [2, 0], 2, 3)
    X = np.arange(6.0).reshape(2, 3)
    assert list(linops.apply(op, X)) == [2.0, 3.0]
    assert op.matrix[0, 0 + 2 * 2] == 1 and op.matrix[1, 1] == 1


def test_factored_product_without_forming(rng):
    op = _factored(rng, 5, 4, 6, rL=3)
    Y, Z = rng.standard_normal((5, 2)), rng.standard_normal((2, 4))
    assert np.allclose(linops.apply_factored(op, Y, Z), linops.apply(op, Y @ Z))
    samp = _sampling(rng, 5, 4, 6)
    fac = linops.as_factored(samp)
    assert np.allclose(linops.apply(fac, Y @ Z), linops.apply(samp, Y @ Z))
    with pytest.raises(UnsupportedVariantError):
        linops.apply_factored(samp, Y, Z)


@pytest.mark.parametrize("kind", ["dense", "sampling"])
def test_kernel_basis_and_min_norm(rng, kind):
    n, m, ell = 3, 4, 5
    op = (linops.LinearMap.dense(rng.standard_normal((ell, n * m)), n, m) if kind == "dense"
          else _sampling(rng, n, m, ell))
    K = linops.kernel_basis(op)
    assert K.shape == (n * m, n * m - ell)
    assert np.allclose(op.matrix @ K, 0, atol=1e-12)
    assert np.allclose(K.T @ K, np.eye(K.shape[1]), atol=1e-12)
    y = rng.standard_normal(ell)
    X = linops.min_norm_solution(op, y)
    assert np.allclose(linops.apply(op, X), y)
    assert np.allclose(np.linalg.pinv(op.matrix) @ y, linops.vec(X))
    stack = op.kernel_matrices
    assert np.allclose(linops.vec(stack[0]), K[:, 0])
    blocks = op.kernel_blocks
    # column j of every basis matrix sits in block j
    d = K.shape[1]
    assert np.allclose(blocks[:, d:2 * d], stack[:, :, 1].T)


def test_project_affine_is_orthogonal(rng):
    op = linops.LinearMap.dense(rng.standard_normal((4, 12)), 3, 4)
    y = rng.standard_normal(4)
    X = rng.standard_normal((3, 4))
    P = linops.project_affine(op, y, X)
    assert np.allclose(linops.apply(op, P), y)
    K = linops.kernel_basis(op)
    # the correction is orthogonal to the kernel
    assert np.allclose(K.T @ linops.vec(X - P), 0, atol=1e-12)


def test_errors(rng):
    with pytest.raises(DimensionError):
        linops.LinearMap.dense(np.ones((2, 5)), 2, 3)
    with pytest.raises(DimensionError):
        linops.LinearMap.sampling([0, 3], [0, 0], 2, 2)
    with pytest.raises(ValueError):
        linops.LinearMap.sampling([0, 0], [1, 1], 2, 2)
    op = linops.LinearMap.dense(np.ones((2, 4)), 2, 2)
    with pytest.raises(DegenerateOperatorError):
        linops.min_norm_solution(op, np.ones(2))
    with pytest.raises(DimensionError):
        linops.apply(linops.LinearMap.dense(np.eye(4)[:2], 2, 2), np.ones((3, 3)))


def test_problem_transposed(rng):
    for op in (linops.LinearMap.dense(rng.standard_normal((5, 12)), 3, 4),
               _sampling(rng, 3, 4, 5), _factored(rng, 3, 4, 5)):
        X = rng.standard_normal((3, 4))
        prob = linops.ProblemInstance.from_reference(op, X, 3)
        t = prob.transposed()
        assert t.shape == (4, 3)
        assert np.allclose(linops.apply(t.map, X.T), prob.y)
        assert t.residual(X.T) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**31))
def test_adjoint_identity_property(n, m, seed):
    rng = np.random.default_rng(seed)
    ell = max(1, (n * m) // 2)
    op = _factored(rng, n, m, ell, rL=1)
    X = rng.standard_normal((n, m))
    v = rng.standard_normal(ell)
    lhs = linops.apply(op, X) @ v
    rhs = np.sum(X * linops.adjoint_apply(op, v))
    assert np.isclose(lhs, rhs, rtol=1e-10, atol=1e-10)
