"""Banded Petrov-Galerkin solver for linear ODE boundary-value problems on [-1, 1].

The problem ``sum_k a^k(x) u^(k)(x) = g(x)`` with ``N`` linear constraints is
solved in the span of recombined Chebyshev polynomials ``phi_j = sum_i R[i, j] T_i``
that satisfy the (homogeneous) constraints, with residuals made orthogonal to
recombined ``C^(N)`` polynomials ``psi_i`` under the weight ``(1 - x^2)^(N - 1/2)``.
Orthogonality of ``C^(N)`` turns the Galerkin matrix into the banded product

    A = Q^T Omega L R

where ``L`` maps T coefficients of ``u`` to C^(N) coefficients of the operator
applied to ``u`` and ``Omega`` holds the squared norms of ``C^(N)_j``.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .banded import BandedMatrix, band_lu_solve, band_qr_solve
from .chebops import conv_op, diff_op, mult_op_C1, mult_op_k, mult_op_T
from .errors import Singular, UnliftableConstraints
from .funapprox import (
    ChebSeries,
    ChebyshevT,
    Ultraspherical,
    approximate,
    cheb_points,
    convert_up,
    to_chebyshev,
    values_from_coeffs,
    write_coeffs,
)
from .quadrature import cc_integrate
from .recombine import (
    LinearConstraint,
    Stencil,
    build_stencil,
    dual_test_constraints,
)

logger = logging.getLogger(__name__)

__all__ = [
    "OdeProblem",
    "PgSolution",
    "omega_diag",
    "lift",
    "assemble_L",
    "assemble_A",
    "project_rhs",
    "solve",
    "l2_error",
    "write_diagnostics",
]


def _as_series(a) -> ChebSeries:
    if isinstance(a, ChebSeries):
        return to_chebyshev(a).trim()
    if a is None:
        return ChebSeries([0.0])
    return ChebSeries(np.atleast_1d(np.asarray(a, dtype=float))).trim()


@dataclass(frozen=True, eq=False)
class OdeProblem:
    """``sum_{k=0}^{N} a^k(x) u^(k)(x) = g(x)`` on [-1, 1] with ``N`` constraints.

    Parameters
    ----------
    coeffs
        ``a^0, ..., a^N`` as Chebyshev-T series (plain numbers and coefficient
        arrays are accepted).
    rhs
        ``g`` as a Chebyshev-T series.
    constraints
        ``N`` constraints, possibly inhomogeneous.
    test_constraints
        Constraints for the test space; ``None`` means the default dual set.
    exact
        Optional reference solution (callable or series) used for diagnostics.
    """

    coeffs: tuple
    rhs: ChebSeries
    constraints: tuple
    test_constraints: tuple | None = None
    exact: Callable | ChebSeries | None = None
    name: str = ""

    def __post_init__(self):
        coeffs = tuple(_as_series(a) for a in self.coeffs)
        if len(coeffs) < 2:
            raise ValueError("the operator must have order at least 1")
        if not np.any(coeffs[-1].coeffs):
            raise ValueError("the leading coefficient a^N is identically zero")
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "rhs", _as_series(self.rhs))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if len(self.constraints) != self.order:
            raise ValueError(f"order {self.order} needs {self.order} constraints, got {len(self.constraints)}")
        if self.test_constraints is not None:
            object.__setattr__(self, "test_constraints", tuple(self.test_constraints))

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    @property
    def m(self) -> int:
        """Largest coefficient degree."""
        return max(len(a) - 1 for a in self.coeffs)

    @classmethod
    def from_functions(cls, coeffs, rhs, constraints, tol=1e-14, **kw) -> "OdeProblem":
        """Build a problem from callables (or numbers) via adaptive Chebyshev interpolation."""
        def series(f):
            if callable(f):
                return approximate(f, tol=tol)
            return _as_series(f)
        return cls(tuple(series(a) for a in coeffs), series(rhs), tuple(constraints), **kw)


@dataclass(frozen=True, eq=False)
class PgSolution:
    """Solution coefficients and diagnostics.

    ``v`` holds the coefficients in the recombined basis, ``u`` the Chebyshev
    series of the solution (``R v`` plus the lifting polynomial).
    """

    v: np.ndarray
    u: ChebSeries
    diagnostics: dict = field(default_factory=dict)
    A: BandedMatrix | None = None
    f: np.ndarray | None = None

    def __call__(self, x):
        return self.u(x)


# ----------------------------------------------------------------------
# pieces of the discretization
# ----------------------------------------------------------------------

def omega_diag(N: int, size: int) -> np.ndarray:
    """``d_j = ||C^(N)_j||^2`` under ``(1 - x^2)^(N - 1/2)``, j = 0..size-1.

    ``d_0`` is evaluated exactly and the rest by the ratio
    ``d_{j+1} / d_j = (j + 2N)(j + N) / ((j + 1)(j + N + 1))``; the closed
    form overflows through its gamma functions well before ``d_j`` does.
    """
    d0 = math.pi * float(Fraction(math.factorial(2 * N - 1), N * math.factorial(N - 1) ** 2 * 4 ** N) * 2)
    j = np.arange(max(size - 1, 0), dtype=float)
    ratio = (j + 2 * N) * (j + N) / ((j + 1) * (j + N + 1))
    return d0 * np.concatenate(([1.0], np.cumprod(ratio)))


def lift(constraints: Sequence[LinearConstraint], extra: int = 4):
    """Lowest-degree polynomial meeting the constraint values, and the homogeneous constraints.

    Degrees ``N-1, N, ..., N-1+extra`` are tried in turn; each attempt solves
    the ``N x (d+1)`` system exactly in rationals (free unknowns set to zero).

    Returns
    -------
    p : ChebSeries
        Lifting polynomial in T.
    homogeneous : list
        The constraints with their values set to zero.

    Raises
    ------
    UnliftableConstraints
        If no polynomial of degree up to ``N - 1 + extra`` meets the values.
    """
    constraints = list(constraints)
    hom = [c.homogeneous() for c in constraints]
    values = [Fraction(c.value) for c in constraints]
    if not any(values):
        return ChebSeries([0.0]), hom
    N = len(constraints)
    T = ChebyshevT()
    for d in range(N - 1, N + extra):
        rows = [[c.evaluate(T, t) for t in range(d + 1)] + [v] for c, v in zip(constraints, values)]
        sol = _solve_exact(rows, d + 1)
        if sol is not None:
            return ChebSeries([float(x) for x in sol]).trim(), hom
    raise UnliftableConstraints(f"no polynomial of degree <= {N - 1 + extra} meets the constraints")


def _solve_exact(rows, nvars):
    """A solution of the augmented rational system, free variables zero; ``None`` if inconsistent."""
    A = [list(r) for r in rows]
    pivots = []
    r = 0
    for c in range(nvars):
        piv = next((i for i in range(r, len(A)) if A[i][c] != 0), None)
        if piv is None:
            continue
        A[r], A[piv] = A[piv], A[r]
        inv = 1 / A[r][c]
        A[r] = [x * inv for x in A[r]]
        for i in range(len(A)):
            if i != r and A[i][c] != 0:
                f = A[i][c]
                A[i] = [x - f * y for x, y in zip(A[i], A[r])]
        pivots.append(c)
        r += 1
    if any(A[i][nvars] != 0 for i in range(r, len(A))):
        return None
    x = [Fraction(0)] * nvars
    for i, c in enumerate(pivots):
        x[c] = A[i][nvars]
    return x


def _mult(a: ChebSeries, k: int, size: int) -> BandedMatrix:
    if k == 0:
        return mult_op_T(a, size)
    if k == 1:
        return mult_op_C1(a, size)
    return mult_op_k(a, k, size)


def assemble_L(problem: OdeProblem, size: int, nested: bool = True) -> BandedMatrix:
    """``L``: T coefficients of ``u`` to C^(N) coefficients of ``sum a^k u^(k)``, ``size x size``.

    The nested form ``M_N D_N + S_{N-1}(... + S_1(M_1 D_1 + S_0 M_0))`` applies
    each conversion once; ``nested=False`` sums ``S_{N-1}...S_k M_k D_k``
    term by term. Operators are built on a block padded by ``2N`` so that the
    returned block equals the leading block of the infinite operator.
    """
    N = problem.order
    P = size + 2 * N
    zero = BandedMatrix((P, P), 0, 0)

    def term(k):
        a = problem.coeffs[k]
        if not np.any(a.coeffs):
            return None
        M = _mult(a, k, P)
        return M if k == 0 else M @ diff_op(k, P)

    if nested:
        acc = term(0) or zero
        for k in range(1, N + 1):
            acc = conv_op(k - 1, P) @ acc
            t = term(k)
            if t is not None:
                acc = acc + t
    else:
        acc = zero
        for k in range(N + 1):
            t = term(k)
            if t is None:
                continue
            for j in range(k, N):
                t = conv_op(j, P) @ t
            acc = acc + t
    return acc.truncate(size)


def _image(S):
    return S.image if isinstance(S, Stencil) else S


def assemble_A(problem: OdeProblem, R, Q, n: int, L: BandedMatrix | None = None) -> BandedMatrix:
    """``A = Q^T Omega L R`` (``n x n``), with outer diagonals that vanish exactly removed.

    ``Q = None`` selects the identity truncation of the test stencil, in
    which case ``Omega`` is a harmless row scaling and is left out.
    """
    N = problem.order
    size = n + N
    if L is None:
        L = assemble_L(problem, size)
    LR = L @ _image(R)
    if Q is None:
        A = LR.truncate(n, n)
    else:
        A = _image(Q).T @ LR.scale_rows(omega_diag(N, size))
    return A.trim(0.0)


def _to_test_space(w: np.ndarray, Q, N: int, n: int) -> np.ndarray:
    if Q is None:
        return w[:n].copy()
    return _image(Q).T @ (omega_diag(N, w.size) * w)


def project_rhs(g: ChebSeries, Q, n: int, N: int | None = None) -> np.ndarray:
    """``f_i = (psi_i, g)_omega``: convert ``g`` to C^(N), scale by ``Omega``, apply ``Q^T``."""
    if N is None:
        N = _image(Q).lower
    size = n + N
    return _to_test_space(_rhs_cN(g, N, size), Q, N, n)


def _rhs_cN(g: ChebSeries, N: int, size: int) -> np.ndarray:
    # conversion is upper triangular, so convert at full length before cutting
    full = ChebSeries(g.padded(max(len(g), size)))
    return convert_up(full, Ultraspherical(N)).coeffs[:size].copy()


def _banded_solve(A: BandedMatrix, f: np.ndarray, solver: str) -> np.ndarray:
    # The weights d_j grow like j^(2N-1); equilibrating rows keeps partial
    # pivoting meaningful and is worth about an order of magnitude in accuracy.
    scale = A.row_abs_max()
    scale[scale == 0.0] = 1.0
    A, f = A.scale_rows(1.0 / scale), f / scale
    if solver == "qr":
        return band_qr_solve(A, f)
    try:
        return band_lu_solve(A, f)
    except Singular:
        logger.info("banded LU flagged a tiny pivot; retrying with Givens QR")
        return band_qr_solve(A, f)


def solve(
    problem: OdeProblem,
    n: int,
    *,
    method: str = "pg",
    nested: bool = True,
    normalize: str = "max",
    solver: str = "lu",
    workers: int | None = None,
) -> PgSolution:
    """Solve ``problem`` with ``n`` recombined basis functions.

    ``method="pg"`` uses recombined C^(N) test functions; ``method="pg-usq"``
    tests against the raw ``C^(N)_0..C^(N)_{n-1}`` instead (a square
    truncation of the ultraspherical method, with constraints handled by
    recombination rather than bordering).
    """
    if method not in ("pg", "pg-usq"):
        raise ValueError(f"unknown method {method!r}")
    N = problem.order
    size = n + N
    t0 = time.perf_counter()
    p, hom = lift(problem.constraints)
    R = build_stencil(hom, ChebyshevT(), n, normalize=normalize, workers=workers)
    if method == "pg":
        tests = dual_test_constraints(hom, N, override=problem.test_constraints)
        Q = build_stencil([c.homogeneous() for c in tests], Ultraspherical(N), n,
                          normalize=normalize, workers=workers)
    else:
        Q = None
    L = assemble_L(problem, max(size, len(p)), nested=nested)
    A = assemble_A(problem, R, Q, n, L=L.truncate(size))
    w = _rhs_cN(problem.rhs, N, size)
    if np.any(p.coeffs):
        w -= (L @ p.padded(L.cols))[:size]
    f = _to_test_space(w, Q, N, n)
    t1 = time.perf_counter()
    v = _banded_solve(A, f, solver)
    t2 = time.perf_counter()

    u = R.image @ v
    u[: len(p)] += p.coeffs
    sol_u = ChebSeries(u)
    diag = {
        "n": n,
        "method": method,
        "bandwidths": [A.lower, A.upper],
        "t_construct_s": t1 - t0,
        "t_solve_s": t2 - t1,
        "residual": float(np.max(np.abs(A @ v - f))) if n else 0.0,
        "error_if_reference": None,
    }
    if problem.exact is not None:
        diag["error_if_reference"] = l2_error(sol_u, problem.exact)
    return PgSolution(v, sol_u, diag, A, f)


# ----------------------------------------------------------------------
# error measurement and export
# ----------------------------------------------------------------------

def l2_error(u_hat: ChebSeries, reference) -> float:
    """``(int_{-1}^{1} (u - u_hat)^2 dx)^(1/2)`` by Clenshaw-Curtis quadrature.

    ``reference`` is a callable or a series. The grid has
    ``max(2 deg + 16, 64)`` intervals and is doubled once; a disagreement
    between the two estimates is logged and the finer one returned.
    """
    u_hat = to_chebyshev(u_hat)
    ref_series = to_chebyshev(reference) if isinstance(reference, ChebSeries) else None
    deg = len(u_hat) - 1
    if ref_series is not None:
        deg = max(deg, len(ref_series) - 1)
        size = deg + 1
        diff = u_hat.padded(size) - ref_series.padded(size)

    def estimate(M):
        if ref_series is not None:
            vals = values_from_coeffs(diff, M)
        else:
            x = cheb_points(M)
            ref = np.asarray(reference(x), dtype=float)
            vals = values_from_coeffs(u_hat.coeffs, M) - ref
        return math.sqrt(max(cc_integrate(vals * vals), 0.0))

    M = max(2 * deg + 16, 64)
    coarse, fine = estimate(M), estimate(2 * M)
    if abs(coarse - fine) > 1e-3 * fine + 1e-15:
        logger.warning("l2_error not settled: %.3e (M=%d) vs %.3e (M=%d)", coarse, M, fine, 2 * M)
    return fine


def write_diagnostics(path, sol: PgSolution) -> None:
    """Append the diagnostics record to a JSON-lines file."""
    keys = ("n", "bandwidths", "t_construct_s", "t_solve_s", "residual", "error_if_reference")
    record = {k: sol.diagnostics.get(k) for k in keys}
    record["method"] = sol.diagnostics.get("method")
    with open(path, "a") as fh:
        fh.write(json.dumps(record) + "\n")


def export_solution(prefix, sol: PgSolution) -> tuple:
    """Write ``<prefix>.coeffs`` and append to ``<prefix>.jsonl``; returns both paths."""
    coeff_path, diag_path = f"{prefix}.coeffs", f"{prefix}.jsonl"
    write_coeffs(coeff_path, sol.u)
    write_diagnostics(diag_path, sol)
    return coeff_path, diag_path
