"""Basis recombination: stencils whose columns satisfy homogeneous constraints exactly.

Column ``k`` of a stencil combines ``P_k, ..., P_{k+N}`` of an orthogonal basis
``P`` with weights ``gamma^k_0..gamma^k_N`` chosen so that every constraint
annihilates the combination. The weights come from an ``N x (N+1)`` integer
system solved by fraction-free elimination, so they are exact; the float
image used by the solvers is derived from the exact values afterwards.

All columns are eliminated together: every matrix entry is a numpy object
array of Python integers indexed by ``k``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .banded import BandedMatrix
from .errors import InvalidConstraints, SingularStencil, UnsupportedConstraint
from .funapprox import Basis, ChebSeries, ChebyshevT, Jacobi, Ultraspherical

logger = logging.getLogger(__name__)

GAMMA_MIN = 1e-8
_BLOCK = 8192

__all__ = [
    "LinearConstraint",
    "EndpointDeriv",
    "Custom",
    "Stencil",
    "build_stencil",
    "dual_test_constraints",
    "endpoint_value",
    "GAMMA_MIN",
]


# ----------------------------------------------------------------------
# constraints
# ----------------------------------------------------------------------

class LinearConstraint:
    """A linear functional ``B`` on polynomials together with a target value."""

    value: float = 0.0

    def evaluate(self, basis: Basis, degree: int) -> Fraction:
        """Exact ``B(P_degree)`` for the basis element of the given degree."""
        raise NotImplementedError

    def homogeneous(self) -> "LinearConstraint":
        return replace(self, value=0.0)

    def apply(self, s: ChebSeries) -> float:
        """``B`` applied to a series, in floating point."""
        vals = np.array([float(self.evaluate(s.basis, t)) for t in range(len(s))])
        return float(vals @ s.coeffs)


@dataclass(frozen=True)
class EndpointDeriv(LinearConstraint):
    """``u^(order)(point) = value`` with ``point`` equal to -1 or +1."""

    point: int
    order: int = 0
    value: float = 0.0

    def __post_init__(self):
        if self.point not in (-1, 1):
            raise InvalidConstraints(f"endpoint must be -1 or 1, got {self.point!r}")
        if int(self.order) != self.order or self.order < 0:
            raise InvalidConstraints(f"derivative order must be a nonnegative integer, got {self.order!r}")

    def evaluate(self, basis, degree):
        return endpoint_value(basis, self.point, self.order, degree)

    def mirrored(self) -> "EndpointDeriv":
        return replace(self, point=-self.point)

    def apply(self, s: ChebSeries) -> float:
        if isinstance(s.basis, ChebyshevT):
            t = np.arange(len(s), dtype=float)
            vals = np.ones_like(t)
            for q in range(self.order):
                vals *= (t * t - q * q) / (2 * q + 1)
            vals *= float(self.point) ** (np.arange(len(s)) + self.order)
            return float(vals @ s.coeffs)
        return super().apply(s)

    def __str__(self):
        d = "u" + "'" * self.order if self.order <= 3 else f"u^({self.order})"
        return f"{d}({self.point:+d}) = {self.value:g}"


@dataclass(frozen=True)
class Custom(LinearConstraint):
    """A user functional given by its exact action ``func(basis, degree)`` on basis elements."""

    func: Callable = field(compare=False)
    value: float = 0.0
    name: str = "custom"

    def evaluate(self, basis, degree):
        v = self.func(basis, degree)
        if isinstance(v, float):
            raise InvalidConstraints(f"{self.name}: custom constraints must return exact rationals")
        return Fraction(v)

    def __str__(self):
        return f"{self.name} = {self.value:g}"


def _rising(x, p: int):
    out = 1
    for i in range(p):
        out *= x + i
    return out


def endpoint_value(basis: Basis, point: int, order: int, degree: int) -> Fraction:
    """Exact ``P_degree^(order)(point)`` for T, C^(k) and Jacobi bases."""
    t, p, s = degree, order, point
    if t < p:
        return Fraction(0)
    if isinstance(basis, ChebyshevT):
        v = Fraction(1)
        for q in range(p):
            v *= Fraction(t * t - q * q, 2 * q + 1)
        return v * s ** ((t + p) % 2)
    if isinstance(basis, Ultraspherical):
        lam = basis.k
        # d^p C_t^(lam) = 2^p (lam)_p C_{t-p}^(lam+p), C_m^(mu)(1) = binom(m + 2mu - 1, m)
        m = t - p
        v = 2**p * _rising(lam, p) * math.comb(m + 2 * (lam + p) - 1, m)
        return Fraction(v * s ** (m % 2))
    if isinstance(basis, Jacobi):
        a, b = Fraction(basis.alpha), Fraction(basis.beta)
        # d^p J_t^(a,b) = (t+a+b+1)_p / 2^p J_{t-p}^(a+p,b+p); J_m(1) = binom(m+a, m)
        m = t - p
        c = _rising(t + a + b + 1, p) / Fraction(2**p)
        e = a + p if s == 1 else b + p
        v = Fraction(1)
        for i in range(1, m + 1):
            v *= (e + i) / i
        return c * v * s ** (m % 2)
    raise UnsupportedConstraint(f"no endpoint formula for basis {basis!r}")


# ----------------------------------------------------------------------
# the constraint matrices B^k, vectorized over k
# ----------------------------------------------------------------------

def _obj(values) -> np.ndarray:
    out = np.empty(len(values), dtype=object)
    out[:] = list(values)
    return out


def _range_product(lo: np.ndarray, count: int) -> np.ndarray:
    """``prod_{r=lo}^{lo+count-1} r`` elementwise (object ints)."""
    out = _obj([1] * lo.size)
    for i in range(count):
        out = out * (lo + i)
    return out


def _endpoint_rows(basis: Basis, c: EndpointDeriv, N: int, ks: np.ndarray) -> list:
    """Integer multiples (by a nonzero factor depending only on ``k``) of ``B(P_{k+j})``, j = 0..N."""
    s, p = c.point, c.order
    rows = []
    if isinstance(basis, ChebyshevT):
        # prod_{q<p} (t^2 - q^2) = t * prod_{r=t-p+1}^{t+p-1} r
        for j in range(N + 1):
            t = ks + j
            v = _range_product(t - p + 1, 2 * p - 1) * t if p else _obj([1] * ks.size)
            rows.append(v * s**j)
        return rows
    lam = basis.k
    # (t+p+2lam-1)! / (t-p)! = prod_{r=t-p+1}^{t+p+2lam-1} r; the factors common to
    # all j (r in [k+N-p+1, k+p+2lam-1]) are dropped, leaving N of them per entry
    width = 2 * p + 2 * lam - 1
    common = width - N
    if common >= 0 and N - p + 1 > 0:
        for j in range(N + 1):
            lo = _range_product(ks + j - p + 1, N - j)
            hi = _range_product(ks + p + 2 * lam, j)
            rows.append(lo * hi * s**j)
    else:
        for j in range(N + 1):
            rows.append(_range_product(ks + j - p + 1, width) * s**j)
    return rows


def _generic_rows(basis: Basis, c: LinearConstraint, N: int, ks: np.ndarray) -> list:
    """Rows from exact rational evaluations, cleared of denominators column by column."""
    k0, k1 = int(ks[0]), int(ks[-1]) + 1
    vals = [c.evaluate(basis, t) for t in range(k0, k1 + N)]
    rows = [np.empty(ks.size, dtype=object) for _ in range(N + 1)]
    for idx in range(ks.size):
        window = vals[idx: idx + N + 1]
        den = math.lcm(*(v.denominator for v in window))
        for j, v in enumerate(window):
            rows[j][idx] = v.numerator * (den // v.denominator)
    return rows


def _constraint_matrix(constraints, basis, ks) -> np.ndarray:
    N = len(constraints)
    B = np.empty((N, N + 1, ks.size), dtype=object)
    fast_basis = isinstance(basis, (ChebyshevT, Ultraspherical))
    for i, c in enumerate(constraints):
        if fast_basis and isinstance(c, EndpointDeriv):
            rows = _endpoint_rows(basis, c, N, ks)
        else:
            rows = _generic_rows(basis, c, N, ks)
        for j in range(N + 1):
            B[i, j] = rows[j]
    return B


# ----------------------------------------------------------------------
# fraction-free elimination
# ----------------------------------------------------------------------

def _eliminate(B: np.ndarray):
    """Fraction-free forward elimination without pivoting, batched over the last axis.

    Returns the reduced matrices and a mask of columns that met a zero pivot
    (their entries are meaningless). The final pivot of a square leading block
    is its determinant.
    """
    N = B.shape[0]
    K = B.shape[2]
    M = B.copy()
    bad = np.zeros(K, dtype=bool)
    prev = _obj([1] * K)
    for c in range(N):
        piv = M[c, c]
        zero = piv == 0
        if zero.any():
            bad |= zero
            piv = piv.copy()
            piv[zero] = 1
            M[c, c] = piv
        for i in range(c + 1, N):
            M[i, c + 1:] = (M[i, c + 1:] * piv - M[i, c] * M[c, c + 1:]) // prev
        prev = piv
    return M, bad


def _null_vectors(B: np.ndarray):
    """Integer null vectors ``(x_0..x_{N-1}, det)`` of each ``B[:, :, k]``.

    Returns ``(X, bad)`` with ``bad`` as in :func:`_eliminate`.
    """
    N = B.shape[0]
    M, bad = _eliminate(B)
    det = M[N - 1, N - 1].copy() if N else _obj([1] * B.shape[2])
    X = np.empty((N + 1, B.shape[2]), dtype=object)
    X[N] = det
    for j in range(N - 1, -1, -1):
        acc = -det * M[j, N]
        for l in range(j + 1, N):
            acc = acc - M[j, l] * X[l]
        X[j] = acc // M[j, j]
    return X, bad


def _null_vector_scalar(Bk, k: int) -> list:
    """Null vector with ``gamma_N = det`` by exact elimination with pivoting (one column)."""
    N = len(Bk)
    A = [[Fraction(Bk[i][j]) for j in range(N + 1)] for i in range(N)]
    perm_sign = 1
    for c in range(N):
        piv = next((r for r in range(c, N) if A[r][c] != 0), None)
        if piv is None:
            raise SingularStencil(k)
        if piv != c:
            A[c], A[piv] = A[piv], A[c]
            perm_sign = -perm_sign
        for r in range(c + 1, N):
            f = A[r][c] / A[c][c]
            if f:
                for j in range(c, N + 1):
                    A[r][j] -= f * A[c][j]
    det = Fraction(perm_sign)
    for c in range(N):
        det *= A[c][c]
    x = [Fraction(0)] * (N + 1)
    x[N] = det
    for j in range(N - 1, -1, -1):
        acc = -det * A[j][N] - sum(A[j][l] * x[l] for l in range(j + 1, N))
        x[j] = acc / A[j][j]
    den = math.lcm(*(v.denominator for v in x))
    return [int(v * den) for v in x]


def _paired_orders(constraints, basis):
    """Derivative orders if every condition at +1 has a twin at -1 (T or C^(k) only), else None."""
    if not isinstance(basis, (ChebyshevT, Ultraspherical)):
        return None
    if not all(isinstance(c, EndpointDeriv) for c in constraints):
        return None
    keys = [(c.point, c.order) for c in constraints]
    if len(set(keys)) != len(keys) or {(-s, p) for s, p in keys} != set(keys):
        return None
    return sorted(p for s, p in keys if s == 1)


def _solve_paired(orders, basis, N: int, ks: np.ndarray):
    """Null vectors for a mirror-symmetric constraint set.

    The integer rows at -1 equal those at +1 times ``(-1)^j``, so sums and
    differences of twin rows split the system into an even-``j`` block
    (``P x (P+1)``, holding ``gamma_N``) and a square odd-``j`` block that must
    be nonsingular, forcing the odd weights to vanish.
    """
    plus = [_endpoint_rows(basis, EndpointDeriv(1, p), N, ks) for p in orders]
    P = len(orders)
    E = np.empty((P, P + 1, ks.size), dtype=object)
    O = np.empty((P, P, ks.size), dtype=object)
    for i, rows in enumerate(plus):
        for j in range(N + 1):
            (E[i, j // 2] if j % 2 == 0 else O[i, j // 2])[:] = rows[j]
    Xe, bad = _null_vectors(E)
    Mo, bad_o = _eliminate(O)
    det_o = Mo[P - 1, P - 1]
    bad |= bad_o
    X = np.empty((N + 1, ks.size), dtype=object)
    X[0::2] = Xe
    X[1::2] = 0
    singular = ~bad & ((det_o == 0) | (Xe[-1] == 0))
    if singular.any():
        raise SingularStencil(int(ks[np.flatnonzero(singular)[0]]))
    B = np.empty((N, N + 1, ks.size), dtype=object)
    for i, rows in enumerate(plus):
        for j in range(N + 1):
            B[2 * i, j] = rows[j]
            B[2 * i + 1, j] = rows[j] if j % 2 == 0 else -rows[j]
    return X, bad, B


def _solve_block(constraints, basis, k0: int, k1: int) -> np.ndarray:
    ks = _obj(range(k0, k1))
    N = len(constraints)
    orders = _paired_orders(constraints, basis)
    if orders is not None:
        X, bad, B = _solve_paired(orders, basis, N, ks)
    else:
        B = _constraint_matrix(constraints, basis, ks)
        X, bad = _null_vectors(B)
    for idx in np.flatnonzero(bad):
        X[:, idx] = _null_vector_scalar(B[:, :, idx].tolist(), k0 + int(idx))
    det = X[-1]
    if np.any(det == 0):
        raise SingularStencil(k0 + int(np.flatnonzero(det == 0)[0]))
    flip = det < 0
    if flip.any():
        X[:, flip] = -X[:, flip]
    # exactness: every constraint annihilates every column
    for i in range(N):
        r = B[i, 0] * X[0]
        for j in range(1, N + 1):
            r = r + B[i, j] * X[j]
        if np.any(r != 0):
            k = k0 + int(np.flatnonzero(r != 0)[0])
            raise ArithmeticError(f"stencil column {k} violates constraint {i}")
    return X


# ----------------------------------------------------------------------
# stencils
# ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Stencil:
    """Exact recombination weights and their float image.

    ``numerators[j, k]`` are integers with ``gamma^k_j = numerators[j, k] / numerators[N, k]``
    (so ``gamma^k_N = 1`` in the exact form). ``image`` is the ``(n+N) x n``
    banded matrix with lower bandwidth ``N``; by default each column is scaled
    to unit max-norm with ``gamma^k_N > 0`` (``normalize="max"``), or anchored
    at ``gamma^k_N = 1`` (``normalize="anchor"``).
    """

    basis: Basis
    constraints: tuple
    numerators: np.ndarray
    image: BandedMatrix
    normalize: str = "max"

    @property
    def N(self) -> int:
        return self.numerators.shape[0] - 1

    @property
    def n(self) -> int:
        return self.numerators.shape[1]

    def gamma(self, k: int) -> list:
        """Exact weights ``gamma^k_0..gamma^k_N`` with ``gamma^k_N = 1``."""
        col = self.numerators[:, k]
        return [Fraction(int(v), int(col[-1])) for v in col]

    def column_scale(self) -> np.ndarray:
        """Factor taking the anchored column (``gamma_N = 1``) to the image column."""
        return self.image.diag(-self.N)[: self.n]

    def __matmul__(self, v):
        return self.image @ v


def build_stencil(
    constraints: Sequence[LinearConstraint],
    basis: Basis,
    n: int,
    *,
    normalize: str = "max",
    gamma_min: float = GAMMA_MIN,
    workers: int | None = None,
) -> Stencil:
    """Stencil for ``n`` recombined basis functions over ``basis``.

    Parameters
    ----------
    constraints
        ``N`` homogeneous constraints (``value == 0``).
    basis
        The orthogonal basis being recombined.
    n
        Number of columns.
    normalize
        ``"max"`` scales each float column to unit max-norm, ``"anchor"``
        keeps ``gamma_N = 1``.
    gamma_min
        Normalized columns with ``|gamma_N| < gamma_min`` are reported.
    workers
        Solve column blocks in this many processes (constraints must be
        picklable).

    Raises
    ------
    SingularStencil
        If the anchored ``N x N`` system is singular at some column.
    InvalidConstraints
        If a constraint has a nonzero value.
    """
    constraints = tuple(constraints)
    N = len(constraints)
    if N == 0:
        raise InvalidConstraints("at least one constraint is required")
    if any(c.value != 0 for c in constraints):
        raise InvalidConstraints("stencil constraints must be homogeneous (lift first)")
    if normalize not in ("max", "anchor"):
        raise ValueError(f"unknown normalization {normalize!r}")
    if n < 1:
        raise ValueError("n must be positive")

    if workers and workers > 1 and n >= 2 * workers:
        edges = np.linspace(0, n, workers + 1).astype(int)
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_solve_block, [constraints] * workers, [basis] * workers,
                                  edges[:-1].tolist(), edges[1:].tolist()))
        X = np.concatenate(parts, axis=1)
    else:
        # bounded blocks keep the object arrays cache-resident, so cost stays linear in n
        X = np.concatenate([_solve_block(constraints, basis, k0, min(k0 + _BLOCK, n))
                            for k0 in range(0, n, _BLOCK)], axis=1)

    if normalize == "anchor":
        scale = X[N]
    else:
        scale = np.max(np.abs(X), axis=0)
    vals = np.array([(X[j] / scale).astype(float) for j in range(N + 1)])
    if normalize == "max":
        small = np.flatnonzero(np.abs(vals[N]) < gamma_min)
        if small.size:
            logger.warning(
                "%d stencil columns have |gamma_N| below %g (first at k=%d)",
                small.size, gamma_min, small[0],
            )
    image = BandedMatrix.from_diagonals((n + N, n), {-j: vals[j] for j in range(N + 1)})
    return Stencil(basis, constraints, X, image, normalize)


# ----------------------------------------------------------------------
# test-space constraints
# ----------------------------------------------------------------------

def dual_test_constraints(constraints: Sequence[LinearConstraint], N: int | None = None,
                          override: Sequence[LinearConstraint] | None = None) -> list:
    """Constraints for the test space.

    Even ``N`` reuses the trial constraints. Odd ``N`` reflects the whole set
    through ``x -> -x``; paired conditions (same order at both ends) map to
    themselves, so only the unpaired ones move to the opposite endpoint.
    An explicit ``override`` is returned unchanged.
    """
    if override is not None:
        return list(override)
    constraints = list(constraints)
    N = len(constraints) if N is None else N
    if N % 2 == 0:
        return constraints
    if not all(isinstance(c, EndpointDeriv) for c in constraints):
        raise UnsupportedConstraint(
            "cannot mirror a custom constraint; pass explicit test constraints"
        )
    present = {(c.point, c.order) for c in constraints}
    stay = [c for c in constraints if (-c.point, c.order) in present]
    moved = [c.mirrored() for c in constraints if (-c.point, c.order) not in present]
    return stay + moved
