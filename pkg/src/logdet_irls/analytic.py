"""Two-parameter affine families with closed-form IRLS-0 behaviour.

Both problems have an affine set of the form ``{X0 + a E1 + b E2}``:

* :func:`symmetric_2x2` is ``[[a, 1], [1, b]]``. Its IRLS-0 step is the
  rational map ``(a, b) -> ((a+b)/(1+g+b^2), (a+b)/(1+g+a^2))`` and, for
  0 < g < 1, it has attracting fixed points at ``a = b = +-sqrt(1-g)``.
* :func:`divergent_2x3` is ``[[a, 1, a+1], [b+1, b, b+1]]``. With gamma = 0
  and a start with a >= 1, 0 < b <= 2a/(2a^2+1) the iterates drift off to
  (a, b) -> (inf, 0) while sigma_2 -> 0; from the minimum-norm start with a
  decaying gamma they converge to the global minimizer (a, b) = (-1, -2/3).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linops import LinearMap, ProblemInstance, apply, vec


@dataclass(frozen=True, eq=False)
class AffineFamily:
    base: np.ndarray
    directions: tuple
    problem: ProblemInstance

    def X(self, a, b):
        return self.base + a * self.directions[0] + b * self.directions[1]

    def coords(self, X):
        D = np.column_stack([vec(d) for d in self.directions])
        ab, *_ = np.linalg.lstsq(D, vec(np.asarray(X) - self.base), rcond=None)
        return float(ab[0]), float(ab[1])


def _dense_family(base, directions):
    n, m = base.shape
    D = np.column_stack([vec(d) for d in directions])
    Q, _ = np.linalg.qr(D, mode="complete")
    L = Q[:, len(directions):].T
    op = LinearMap.dense(L, n, m)
    return ProblemInstance(op, apply(op, base))


def symmetric_2x2():
    base = np.array([[0.0, 1.0], [1.0, 0.0]])
    E1 = np.array([[1.0, 0.0], [0.0, 0.0]])
    E2 = np.array([[0.0, 0.0], [0.0, 1.0]])
    op = LinearMap.sampling([0, 1], [1, 0], 2, 2)
    return AffineFamily(base, (E1, E2), ProblemInstance(op, np.array([1.0, 1.0])))


def divergent_2x3():
    base = np.array([[0.0, 1.0, 1.0], [1.0, 0.0, 1.0]])
    E1 = np.array([[1.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
    E2 = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])
    return AffineFamily(base, (E1, E2), _dense_family(base, (E1, E2)))


def symmetric_2x2_step(a, b, gamma):
    """Closed-form IRLS-0 update for :func:`symmetric_2x2`."""
    return (a + b) / (1 + gamma + b * b), (a + b) / (1 + gamma + a * a)


def divergent_2x3_step(a, b):
    """Closed-form gamma = 0 IRLS-0 update for :func:`divergent_2x3`."""
    N1 = (4*b + 4)*a**3 + (-b*b + 12*b + 8)*a**2 + (7*b*b + 20*b + 8)*a - b*b - 2
    D1 = (10*b*b + 8*b + 4)*a**2 + (2*b*b + 4)*a + 10*b*b + 16*b + 10
    N2 = (6*a + 6)*b**3 + (-4*a*a + 18*a + 7)*b**2 + 20*a*b + 4*a - 4
    D2 = (10*a*a + 2*a + 10)*b**2 + (8*a*a + 16)*b + 4*a*a + 4*a + 10
    return N1 / D1, N2 / D2


def divergence_bound(a):
    """Upper bound 2a / (2a^2 + 1) on b along the divergent sequence."""
    return 2 * a / (2 * a * a + 1)
