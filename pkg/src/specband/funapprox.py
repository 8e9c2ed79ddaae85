"""Finite Chebyshev-family series: construction from samples, evaluation, conversion.

Three bases are supported: Chebyshev ``T``, ultraspherical (Gegenbauer)
``C^(k)`` with integer ``k >= 1``, and Jacobi ``J^(alpha, beta)``. Values are
obtained with Clenshaw's backward recurrence driven by each basis' three-term
recurrence ``P_{j+1} = (A_j x + B_j) P_j - C_j P_{j-1}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Union

import numpy as np
from scipy.fft import dct

from .errors import BasisMismatch, NoConvergence, NonFiniteSample

__all__ = [
    "ChebyshevT",
    "Ultraspherical",
    "Jacobi",
    "ChebSeries",
    "approximate",
    "evaluate",
    "convert_up",
    "to_chebyshev",
    "cheb_points",
    "coeffs_from_values",
    "values_from_coeffs",
    "read_coeffs",
    "write_coeffs",
]


@dataclass(frozen=True)
class ChebyshevT:
    def recurrence(self, j):
        j = np.asarray(j)
        A = np.where(j == 0, 1.0, 2.0)
        return A, np.zeros(j.shape), np.ones(j.shape)

    def tag(self) -> str:
        return "T"


@dataclass(frozen=True)
class Ultraspherical:
    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"ultraspherical order must be a positive integer, got {self.k}")

    def recurrence(self, j):
        j = np.asarray(j, dtype=float)
        lam = self.k
        A = 2.0 * (j + lam) / (j + 1.0)
        C = (j + 2.0 * lam - 1.0) / (j + 1.0)
        return A, np.zeros(j.shape), C

    def tag(self) -> str:
        return f"C {self.k}"


@dataclass(frozen=True)
class Jacobi:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > -1 and self.beta > -1):
            raise ValueError(f"Jacobi parameters must exceed -1, got ({self.alpha}, {self.beta})")

    def shifted(self, k: int) -> "Jacobi":
        return Jacobi(self.alpha + k, self.beta + k)

    def recurrence(self, j):
        j = np.asarray(j, dtype=float)
        a, b = float(self.alpha), float(self.beta)
        s = 2.0 * j + a + b
        with np.errstate(divide="ignore", invalid="ignore"):
            A = (s + 1.0) * (s + 2.0) / (2.0 * (j + 1.0) * (j + a + b + 1.0))
            B = -(b * b - a * a) * (s + 1.0) / (2.0 * (j + 1.0) * (j + a + b + 1.0) * s)
            C = (j + a) * (j + b) * (s + 2.0) / ((j + 1.0) * (j + a + b + 1.0) * s)
        # j = 0 has removable 0/0 forms when a + b in {0, -1}
        A = np.where(j == 0, (a + b + 2.0) / 2.0, A)
        B = np.where(j == 0, (a - b) / 2.0, B)
        C = np.where(j == 0, 0.0, C)
        return A, B, C

    def tag(self) -> str:
        return f"J {_fmt_param(self.alpha)} {_fmt_param(self.beta)}"


Basis = Union[ChebyshevT, Ultraspherical, Jacobi]


def _fmt_param(p) -> str:
    if isinstance(p, Fraction):
        return str(p)
    return repr(float(p))


@dataclass(frozen=True, eq=False)
class ChebSeries:
    """Coefficients of a function in one of the supported polynomial bases.

    ``coeffs[j]`` multiplies the basis element of degree ``j``. The array is
    copied and made read-only on construction.
    """

    coeffs: np.ndarray
    basis: Basis = field(default_factory=ChebyshevT)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).ravel()
        if c.size == 0:
            c = np.zeros(1)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def __len__(self):
        return self.coeffs.size

    def __call__(self, x):
        return evaluate(self, x)

    def __repr__(self):
        return f"ChebSeries({self.basis.tag()!r}, n={len(self)})"

    @property
    def degree(self) -> int:
        nz = np.flatnonzero(self.coeffs)
        return int(nz[-1]) if nz.size else 0

    def trim(self, tol: float = 0.0) -> "ChebSeries":
        """Drop trailing coefficients with magnitude <= ``tol * max|c|``."""
        c = self.coeffs
        scale = np.max(np.abs(c)) if c.size else 0.0
        keep = np.flatnonzero(np.abs(c) > tol * scale)
        if keep.size == 0:
            return ChebSeries(np.zeros(1), self.basis)
        return ChebSeries(c[: keep[-1] + 1], self.basis)

    def padded(self, size: int) -> np.ndarray:
        """Coefficients zero-padded (or truncated) to ``size`` entries."""
        out = np.zeros(size)
        n = min(size, self.coeffs.size)
        out[:n] = self.coeffs[:n]
        return out


# ----------------------------------------------------------------------
# Chebyshev grids and the cosine transform
# ----------------------------------------------------------------------

def cheb_points(M: int) -> np.ndarray:
    """Chebyshev points of the second kind ``cos(pi*j/M)``, j = 0..M (from +1 down to -1)."""
    if M == 0:
        return np.array([1.0])
    x = np.sin(np.pi * np.arange(-M, M + 1, 2) / (2 * M))[::-1]
    return x


def coeffs_from_values(values: np.ndarray) -> np.ndarray:
    """Chebyshev-T coefficients of the interpolant through samples at ``cheb_points(M)``.

    Works along the last axis. Uses a type-I DCT, O(M log M).
    """
    values = np.asarray(values, dtype=float)
    M = values.shape[-1] - 1
    if M == 0:
        return values.copy()
    c = dct(values, type=1, axis=-1) / M
    c[..., 0] /= 2
    c[..., -1] /= 2
    return c


def values_from_coeffs(coeffs: np.ndarray, M: int | None = None) -> np.ndarray:
    """Values of a T series at ``cheb_points(M)``; inverse of :func:`coeffs_from_values`."""
    coeffs = np.asarray(coeffs, dtype=float)
    n = coeffs.shape[-1]
    if M is None:
        M = max(n - 1, 1)
    if n > M + 1:
        raise ValueError("grid too coarse for the series (aliasing)")
    c = np.zeros(coeffs.shape[:-1] + (M + 1,))
    c[..., :n] = coeffs
    y = dct(c, type=1, axis=-1)
    sign = (-1.0) ** np.arange(M + 1)
    return 0.5 * (y + c[..., :1] + sign * c[..., -1:])


def _sample(f: Callable, x: np.ndarray) -> np.ndarray:
    try:
        y = np.asarray(f(x), dtype=float)
        if y.shape != x.shape:
            y = np.broadcast_to(y, x.shape).astype(float)
    except (TypeError, ValueError):
        y = np.array([float(f(float(xi))) for xi in x])
    if not np.all(np.isfinite(y)):
        bad = x[~np.isfinite(y)][0]
        raise NonFiniteSample(f"non-finite sample at x={bad!r}")
    return y


def approximate(f: Callable, tol: float = 1e-14, max_degree: int = 2**16) -> ChebSeries:
    """Adaptive Chebyshev interpolant of ``f`` on [-1, 1].

    The grid is doubled (8, 16, 32, ...) until the last ``max(3, n/32)``
    coefficients all fall below ``tol * max|c|``; the result is then trimmed
    at the same threshold.

    Raises
    ------
    NoConvergence
        If ``max_degree`` is reached without the tail test passing.
    NonFiniteSample
        If ``f`` returns a non-finite value.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = 8
    while True:
        c = coeffs_from_values(_sample(f, cheb_points(n)))
        scale = np.max(np.abs(c))
        tail = max(3, n // 32)
        if scale == 0.0:
            return ChebSeries(np.zeros(1))
        if np.all(np.abs(c[-tail:]) < tol * scale):
            return ChebSeries(c).trim(tol)
        if 2 * n > max_degree:
            raise NoConvergence(f"tail test failed at degree {n} (max_degree={max_degree})")
        n *= 2


def evaluate(s: ChebSeries, x):
    """Value of the series at ``x`` (scalar or array) by Clenshaw's recurrence."""
    x = np.asarray(x, dtype=float)
    c = s.coeffs
    n = c.size
    A, B, C = s.basis.recurrence(np.arange(n + 1))
    b1 = np.zeros(x.shape)
    b2 = np.zeros(x.shape)
    for j in range(n - 1, -1, -1):
        b1, b2 = c[j] + (A[j] * x + B[j]) * b1 - C[j + 1] * b2, b1
    if b1.ndim == 0:
        return float(b1)
    return b1


def _chain(source: Basis, target: Basis):
    """Yield the single-step conversions leading from ``source`` to ``target``."""
    if isinstance(target, ChebyshevT):
        if isinstance(source, ChebyshevT):
            return []
    elif isinstance(target, Ultraspherical):
        if isinstance(source, ChebyshevT):
            return list(range(0, target.k))
        if isinstance(source, Ultraspherical) and source.k <= target.k:
            return list(range(source.k, target.k))
    elif isinstance(target, Jacobi) and isinstance(source, Jacobi):
        shift = target.alpha - source.alpha
        if shift == target.beta - source.beta and shift >= 0 and float(shift).is_integer():
            return [source.shifted(i) for i in range(int(shift))]
    raise BasisMismatch(f"no conversion chain from {source.tag()} to {target.tag()}")


def convert_up(s: ChebSeries, target: Basis) -> ChebSeries:
    """Re-express ``s`` in a higher basis through the banded conversion operators."""
    from .chebops import conv_op
    from .jacobiops import jacobi_conv_op

    steps = _chain(s.basis, target)
    c = s.coeffs.copy()
    for step in steps:
        if isinstance(step, Jacobi):
            op = jacobi_conv_op(0, step.alpha, step.beta, c.size)
        else:
            op = conv_op(step, c.size)
        c = op @ c
    return ChebSeries(c, target)


def to_chebyshev(s: ChebSeries) -> ChebSeries:
    """Re-express any series in the Chebyshev-T basis (exact for polynomials, up to rounding)."""
    if isinstance(s.basis, ChebyshevT):
        return s
    M = max(len(s) - 1, 1)
    c = coeffs_from_values(evaluate(s, cheb_points(M)))
    return ChebSeries(c[: len(s)])


# ----------------------------------------------------------------------
# coefficient files
# ----------------------------------------------------------------------

def _parse_basis(line: str) -> Basis:
    parts = line.split()
    if len(parts) < 2 or parts[0] != "basis":
        raise ValueError(f"expected 'basis <tag>' header, got {line!r}")
    tag = parts[1:]
    if tag == ["T"]:
        return ChebyshevT()
    if tag[0] == "C" and len(tag) == 2:
        return Ultraspherical(int(tag[1]))
    if tag[0] == "J" and len(tag) == 3:
        return Jacobi(*(Fraction(t) if "/" in t else float(t) for t in tag[1:]))
    raise ValueError(f"unknown basis tag {' '.join(tag)!r}")


def write_coeffs(path, s: ChebSeries) -> None:
    lines = [f"basis {s.basis.tag()}"] + [repr(float(v)) for v in s.coeffs]
    Path(path).write_text("\n".join(lines) + "\n")


def read_coeffs(path) -> ChebSeries:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{path}: empty coefficient file")
    basis = _parse_basis(lines[0])
    return ChebSeries(np.array([float(v) for v in lines[1:]]), basis)
