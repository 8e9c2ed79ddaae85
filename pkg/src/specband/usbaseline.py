"""Reference solvers: the bordered ultraspherical (tau) system and the square-truncated test mode.

``tau_solve`` assembles the classical almost-banded system densely and is
meant as a small-``n`` cross-check, O(n^3). ``accelerated_us_solve`` keeps the
banded pipeline but tests against raw ``C^(N)`` polynomials.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import Singular
from .funapprox import ChebSeries, ChebyshevT
from .pgsolve import OdeProblem, PgSolution, _rhs_cN, assemble_L, l2_error, solve

__all__ = ["TauSystem", "tau_system", "tau_solve", "accelerated_us_solve"]


@dataclass(frozen=True, eq=False)
class TauSystem:
    """Dense bordered system: constraint rows on top, the first ``n - N`` rows of ``L`` below."""

    matrix: np.ndarray
    rhs: np.ndarray
    N: int


def tau_system(problem: OdeProblem, n: int) -> TauSystem:
    N = problem.order
    if n < N + 2:
        raise ValueError(f"tau system needs n >= N + 2 = {N + 2}, got n = {n}")
    T = ChebyshevT()
    top = np.array([[float(c.evaluate(T, j)) for j in range(n)] for c in problem.constraints])
    L = assemble_L(problem, n).to_dense()
    g = _rhs_cN(problem.rhs, N, n)
    matrix = np.vstack([top, L[: n - N]])
    rhs = np.concatenate([[float(c.value) for c in problem.constraints], g[: n - N]])
    return TauSystem(matrix, rhs, N)


def tau_solve(problem: OdeProblem, n: int) -> PgSolution:
    """Solve the bordered system by dense Householder QR; ``u`` is returned in T directly."""
    t0 = time.perf_counter()
    sys = tau_system(problem, n)
    t1 = time.perf_counter()
    Qm, Rm = sla.qr(sys.matrix)
    d = np.abs(np.diag(Rm))
    if d.min() <= n * np.finfo(float).eps * d.max():
        raise Singular(f"tau system is numerically singular (min |r_ii| = {d.min():.3e})")
    c = sla.solve_triangular(Rm, Qm.T @ sys.rhs)
    t2 = time.perf_counter()
    u = ChebSeries(c)
    diag = {
        "n": n,
        "method": "tau",
        "bandwidths": None,
        "t_construct_s": t1 - t0,
        "t_solve_s": t2 - t1,
        "residual": float(np.max(np.abs(sys.matrix @ c - sys.rhs))),
        "error_if_reference": None,
    }
    if problem.exact is not None:
        diag["error_if_reference"] = l2_error(u, problem.exact)
    return PgSolution(c, u, diag, None, sys.rhs)


def accelerated_us_solve(problem: OdeProblem, n: int, **kw) -> PgSolution:
    """Recombined trial basis, raw ``C^(N)_0..C^(N)_{n-1}`` test functions; banded throughout."""
    return solve(problem, n, method="pg-usq", **kw)
