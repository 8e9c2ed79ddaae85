"""Independent reference computations for the tests.

Nothing here calls the package's transforms or operators: polynomials are
handled with ``numpy.polynomial`` and ``scipy.special``, integrals with a
Clenshaw-Curtis rule whose weights come from the classical cosine-sum formula.
"""

from fractions import Fraction
from functools import lru_cache

import numpy as np
from numpy.polynomial import chebyshev as npcheb
from scipy.special import eval_gegenbauer, eval_jacobi


@lru_cache(maxsize=None)
def cc_rule(M: int):
    """Nodes cos(pi j / M) and Clenshaw-Curtis weights (M even)."""
    theta = np.pi * np.arange(M + 1) / M
    x = np.cos(theta)
    w = np.zeros(M + 1)
    v = np.ones(M - 1)
    inner = theta[1:-1]
    for k in range(1, M // 2):
        v -= 2.0 * np.cos(2 * k * inner) / (4 * k * k - 1)
    v -= np.cos(M * inner) / (M * M - 1)
    w[1:-1] = 2.0 * v / M
    w[0] = w[-1] = 1.0 / (M * M - 1)
    return x, w


def cc_matrix(left, right, weight, tol=1e-12, start=64, max_nodes=2**13):
    """``left(x)^T diag(weight * w) right(x)`` refined until successive grids agree.

    ``left`` and ``right`` return arrays of shape (len(x), p) and (len(x), q).
    """
    M = start
    prev = None
    while M <= max_nodes:
        x, w = cc_rule(M)
        cur = left(x).T @ ((weight(x) * w)[:, None] * right(x))
        if prev is not None and np.max(np.abs(cur - prev)) <= tol * max(1.0, np.max(np.abs(cur))):
            return cur
        prev = cur
        M *= 2
    return prev


def cheb_values(coeffs, x, deriv=0):
    c = np.asarray(coeffs, dtype=float)
    return npcheb.chebval(x, npcheb.chebder(c, deriv) if deriv else c)


def gegenbauer_values(coeffs, lam, x):
    """``sum_j c_j C^(lam)_j(x)``."""
    return sum(c * eval_gegenbauer(j, lam, x) for j, c in enumerate(coeffs) if c)


def jacobi_basis_values(size, alpha, beta, x):
    return np.stack([eval_jacobi(j, alpha, beta, x) for j in range(size)], axis=1)


def t_endpoint(j: int, p: int, point: int) -> int:
    """Exact ``T_j^(p)(point)``: ``point^(j+p) prod_{q<p} (j^2 - q^2) / (2q + 1)``."""
    val = Fraction(point) ** (j + p)
    for q in range(p):
        val *= Fraction(j * j - q * q, 2 * q + 1)
    return val


def pg_matrix_oracle(problem, R, Q, n):
    """``(psi_i, L phi_j)`` under ``(1 - x^2)^(N - 1/2)`` by Clenshaw-Curtis.

    ``R``, ``Q`` are dense stencil images: columns of T and C^(N) coefficients.
    """
    N = problem.order
    coeffs = [a.coeffs for a in problem.coeffs]

    def L_phi(x):
        out = np.zeros((x.size, n))
        for j in range(n):
            for k, a in enumerate(coeffs):
                if np.any(a):
                    out[:, j] += npcheb.chebval(x, a) * cheb_values(R[:, j], x, k)
        return out

    def psi(x):
        return np.stack([gegenbauer_values(Q[:, i], N, x) for i in range(n)], axis=1)

    return cc_matrix(psi, L_phi, lambda x: np.clip(1.0 - x * x, 0.0, None) ** (N - 0.5))
