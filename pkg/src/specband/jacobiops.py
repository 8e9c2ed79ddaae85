"""Jacobi-basis operators and the Jacobi banded Petrov-Galerkin assembly.

``J^(a,b)`` denotes the classical Jacobi polynomials (``J_j(1) = binom(j+a, j)``).
Operators with shift ``k`` act on ``J^(alpha+k, beta+k)``. The Jacobi path is a
validation route: multiplication operators are built by the three-term
recurrence, O(d^2 n).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .banded import BandedMatrix, band_lu_solve
from .funapprox import ChebSeries, ChebyshevT, Jacobi, convert_up, to_chebyshev

__all__ = [
    "jacobi_diff_op",
    "jacobi_conv_op",
    "jacobi_mult_x_op",
    "jacobi_mult_op",
    "cheb_to_jacobi",
    "jacobi_omega",
    "jacobi_assemble",
    "jacobi_solve",
    "mpg_equivalence_check",
    "MpgReport",
]


def jacobi_diff_op(k: int, alpha, beta, size: int) -> BandedMatrix:
    """k-th derivative: J^(alpha,beta) coefficients to J^(alpha+k,beta+k) coefficients."""
    if k < 1:
        raise ValueError("differentiation order must be >= 1")
    s = float(alpha) + float(beta)
    n = max(size - k, 0)
    D = BandedMatrix((size, size), 0, k)
    if n:
        i = np.arange(n, dtype=float)
        vals = np.ones(n)
        # Gamma(s+2k+1+i) / Gamma(s+k+1+i) as a k-term product
        for q in range(1, k + 1):
            vals *= s + k + i + q
        D.set_diag(k, vals / 2.0**k)
    return D


def jacobi_conv_op(k: int, alpha, beta, size: int) -> BandedMatrix:
    """Conversion J^(alpha+k,beta+k) -> J^(alpha+k+1,beta+k+1), upper bandwidth 2."""
    a, b = float(alpha) + k, float(beta) + k
    j = np.arange(size, dtype=float)
    s = 2.0 * j + a + b
    with np.errstate(divide="ignore", invalid="ignore"):
        main = (j + a + b + 1.0) * (j + a + b + 2.0) / ((s + 1.0) * (s + 2.0))
        sup1 = (a - b) * (j + a + b + 1.0) / (s * (s + 2.0))
        sup2 = -(j + a) * (j + b) / (s * (s + 1.0))
    main[0] = 1.0  # J_0 = 1 in every basis; the formula is 0/0 when a + b = -1
    diags = {0: main}
    if size > 1:
        diags[1] = sup1[1:]
    if size > 2:
        diags[2] = sup2[2:]
    return BandedMatrix.from_diagonals((size, size), diags)


def jacobi_mult_x_op(k: int, alpha, beta, size: int) -> BandedMatrix:
    """Multiplication by ``x`` acting on J^(alpha+k,beta+k) coefficients."""
    a, b = float(alpha) + k, float(beta) + k
    j = np.arange(size, dtype=float)
    s = 2.0 * j + a + b
    with np.errstate(divide="ignore", invalid="ignore"):
        sub = 2.0 * (j + 1.0) * (j + a + b + 1.0) / ((s + 1.0) * (s + 2.0))
        main = (b * b - a * a) / (s * (s + 2.0))
        sup = 2.0 * (j + a) * (j + b) / (s * (s + 1.0))
    # j = 0 limits (removable when a + b is 0 or -1)
    sub[0] = 2.0 / (a + b + 2.0)
    main[0] = (b - a) / (a + b + 2.0)
    diags = {0: main}
    if size > 1:
        diags[-1] = sub[: size - 1]
        diags[1] = sup[1:]
    return BandedMatrix.from_diagonals((size, size), diags)


def jacobi_mult_op(h: ChebSeries, size: int) -> BandedMatrix:
    """Multiplication by ``h`` (a series in J^(a,b)) acting on J^(a,b) coefficients.

    Built from the three-term recurrence on a block padded by ``deg(h) + 1``,
    then cut back to ``size`` so the returned block is exact.
    """
    if not isinstance(h.basis, Jacobi):
        raise ValueError("jacobi_mult_op expects a Jacobi series")
    c = h.trim().coeffs
    d = c.size - 1
    padded = size + d + 1
    X = jacobi_mult_x_op(0, h.basis.alpha, h.basis.beta, padded)
    I = BandedMatrix.identity(padded)
    out = I * c[0]
    if d == 0:
        return out.truncate(size)
    A, B, C = h.basis.recurrence(np.arange(d))
    prev, cur = I, X * A[0] + I * B[0]
    out = out + cur * c[1]
    for j in range(1, d):
        nxt = (X @ cur) * A[j] + cur * B[j] - prev * C[j]
        prev, cur = cur, nxt
        out = out + cur * c[j + 1]
    return out.truncate(size)


def cheb_to_jacobi(s: ChebSeries, alpha, beta) -> ChebSeries:
    """Re-express a T series in J^(alpha,beta) by running the T recurrence on ``M[x]``."""
    if not isinstance(s.basis, ChebyshevT):
        s = to_chebyshev(s)
    c = s.coeffs
    n = c.size
    X = jacobi_mult_x_op(0, alpha, beta, max(n, 2))
    t_prev = np.zeros(X.rows)
    t_prev[0] = 1.0
    out = c[0] * t_prev
    if n > 1:
        t_cur = X @ t_prev
        out = out + c[1] * t_cur
        for j in range(2, n):
            t_prev, t_cur = t_cur, 2.0 * (X @ t_cur) - t_prev
            out = out + c[j] * t_cur
    return ChebSeries(out[:n], Jacobi(alpha, beta))


def jacobi_omega(N: int, alpha, beta, size: int) -> np.ndarray:
    """Squared norms ``d_j`` of J^(alpha+N, beta+N) under ``(1-x)^(alpha+N) (1+x)^(beta+N)``."""
    a, b = float(alpha) + N, float(beta) + N
    j = np.arange(size, dtype=float)
    logd = (
        (a + b + 1.0) * np.log(2.0)
        + gammaln(j + a + 1.0)
        + gammaln(j + b + 1.0)
        - np.log(2.0 * j + a + b + 1.0)
        - gammaln(j + 1.0)
        - gammaln(j + a + b + 1.0)
    )
    return np.exp(logd)


# ----------------------------------------------------------------------
# banded Petrov-Galerkin assembly in Jacobi bases
# ----------------------------------------------------------------------

def _jacobi_L(problem, alpha, beta, size: int) -> BandedMatrix:
    """Nested ``L^J``: J^(alpha,beta) coefficients of ``u`` to J^(alpha+N,beta+N) coefficients of ``Lu``."""
    N = problem.order
    P = size + 2 * N
    acc = BandedMatrix((P, P), 0, 0)
    for k in range(N + 1):
        if k:
            acc = jacobi_conv_op(k - 1, alpha, beta, P) @ acc
        a = problem.coeffs[k]
        if not np.any(a.coeffs):
            continue
        M = jacobi_mult_op(cheb_to_jacobi(a, alpha + k, beta + k), P)
        acc = acc + (M if k == 0 else M @ jacobi_diff_op(k, alpha, beta, P))
    return acc.truncate(size)


def _stencils(problem, alpha, beta, n, normalize):
    from .pgsolve import lift
    from .recombine import build_stencil, dual_test_constraints

    N = problem.order
    p, hom = lift(problem.constraints)
    R = build_stencil(hom, Jacobi(alpha, beta), n, normalize=normalize)
    tests = dual_test_constraints(hom, N, override=problem.test_constraints)
    Q = build_stencil([c.homogeneous() for c in tests], Jacobi(alpha + N, beta + N), n, normalize=normalize)
    return p, R, Q


def jacobi_assemble(problem, alpha, beta, n: int, normalize: str = "max") -> BandedMatrix:
    """``A^J = Q^T Omega^J L^J R^J`` with trial basis J^(alpha,beta) and test basis J^(alpha+N,beta+N).

    The test weight is ``(1-x)^(alpha+N) (1+x)^(beta+N)``. ``alpha = beta = -1/2``
    spans the same trial and test spaces as the Chebyshev assembly.
    """
    _, R, Q = _stencils(problem, alpha, beta, n, normalize)
    N = problem.order
    size = n + N
    L = _jacobi_L(problem, alpha, beta, size)
    return Q.image.T @ (L @ R.image).scale_rows(jacobi_omega(N, alpha, beta, size))


def jacobi_solve(problem, n: int, alpha=-0.5, beta=-0.5, normalize: str = "max"):
    """Solve ``problem`` on the Jacobi path; ``u`` is returned as a J^(alpha,beta) series plus the T-lift.

    The result's ``u`` is converted to Chebyshev-T so it can be compared with
    the other solvers directly.
    """
    from .pgsolve import PgSolution, _banded_solve, l2_error

    N = problem.order
    size = n + N
    t0 = time.perf_counter()
    p, R, Q = _stencils(problem, alpha, beta, n, normalize)
    L = _jacobi_L(problem, alpha, beta, size)
    omega = jacobi_omega(N, alpha, beta, size)
    A = (Q.image.T @ (L @ R.image).scale_rows(omega)).trim(0.0)
    g = cheb_to_jacobi(ChebSeries(problem.rhs.padded(max(len(problem.rhs), size))), alpha + N, beta + N)
    w = g.coeffs[:size].copy()
    if np.any(p.coeffs):
        pj = cheb_to_jacobi(p, alpha, beta).padded(size)
        w -= L @ pj
    f = Q.image.T @ (omega * w)
    t1 = time.perf_counter()
    v = _banded_solve(A, f, "lu")
    t2 = time.perf_counter()
    uj = ChebSeries(R.image @ v, Jacobi(alpha, beta))
    u = to_chebyshev(uj).coeffs.copy()
    u[: len(p)] += p.coeffs
    u = ChebSeries(u)
    diag = {
        "n": n,
        "method": "pg-jacobi",
        "bandwidths": [A.lower, A.upper],
        "t_construct_s": t1 - t0,
        "t_solve_s": t2 - t1,
        "residual": float(np.max(np.abs(A @ v - f))) if n else 0.0,
        "error_if_reference": None,
    }
    if problem.exact is not None:
        diag["error_if_reference"] = l2_error(u, problem.exact)
    return PgSolution(v, u, diag, A, f)


# ----------------------------------------------------------------------
# modal Petrov-Galerkin equivalence
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class MpgReport:
    """Banded assembly with derivative test functions next to its quadrature counterpart."""

    discrepancy: float
    banded: np.ndarray
    quadrature: np.ndarray
    h: np.ndarray


def _jacobi_derivative(c: np.ndarray, alpha, beta, k: int) -> ChebSeries:
    if k == 0:
        return ChebSeries(c, Jacobi(alpha, beta))
    D = jacobi_diff_op(k, alpha, beta, c.size)
    return ChebSeries(D @ c, Jacobi(alpha + k, beta + k))


def mpg_equivalence_check(problem, alpha, beta, n: int, h=None, tol: float = 1e-13) -> MpgReport:
    """Compare ``A^J`` built with ``Q^T = H^-1 (D_N^J)^T`` against direct quadrature.

    With that choice the i-th test function is ``h_i^-1 d^N/dx^N J_{i+N}``, and
    the quadrature side evaluates

        h_i^-1 int (1-x)^alpha (1+x)^beta (1-x^2)^N  (d^N J_{i+N}) (L phi_j) dx

    by adaptive Clenshaw-Curtis. Both sides carry the same ``H`` (default
    identity). Intended for small ``n``; the weight must be smooth enough for
    Clenshaw-Curtis (integer ``alpha``, ``beta`` are ideal).
    """
    from .pgsolve import lift
    from .quadrature import adaptive_cc
    from .recombine import build_stencil

    N = problem.order
    size = n + N
    h = np.ones(n) if h is None else np.asarray(h, dtype=float)
    _, hom = lift(problem.constraints)
    R = build_stencil(hom, Jacobi(alpha, beta), n)
    L = _jacobi_L(problem, alpha, beta, size)
    DN = jacobi_diff_op(N, alpha, beta, size)
    # column i of D_N^T H^-1 lands on row i only: d^N J_{i+N} = D[i, i+N] J^(alpha+N, beta+N)_i
    qdiag = np.zeros(size)
    qdiag[:n] = DN.diag(N)[:n] / h
    LR = (L @ R.image).scale_rows(jacobi_omega(N, alpha, beta, size) * qdiag)
    banded = LR.to_dense()[:n]

    Rd = R.image.to_dense()
    coeffs = problem.coeffs

    def L_phi(j, x):
        c = Rd[:, j]
        out = np.zeros_like(x)
        for k, a in enumerate(coeffs):
            if np.any(a.coeffs):
                out += a(x) * _jacobi_derivative(c, alpha, beta, k)(x)
        return out

    def test_fn(i, x):
        e = np.zeros(size)
        e[i + N] = 1.0
        return _jacobi_derivative(e, alpha, beta, N)(x) / h[i]

    def weight(x):
        return (1.0 - x) ** (alpha + N) * (1.0 + x) ** (beta + N)

    quad = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            quad[i, j] = adaptive_cc(lambda x: weight(x) * test_fn(i, x) * L_phi(j, x), tol=tol)
    return MpgReport(float(np.max(np.abs(banded - quad))) if n else 0.0, banded, quad, h)
