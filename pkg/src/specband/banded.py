"""Banded matrices in LAPACK ``gb`` storage, with products and O(n) direct solvers.

Entry ``(i, j)`` of a matrix with bandwidths ``(lower, upper)`` lives at
``data[upper + i - j, j]``; row ``upper - d`` of ``data`` therefore holds the
``d``-th diagonal (``d = j - i``) indexed by column. This is the layout
consumed by ``?gbtrf``/``?gbtrs``.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from scipy.linalg import lapack

from .errors import DimensionMismatch, Singular

__all__ = ["BandedMatrix", "band_mul", "band_add", "band_lu_solve", "band_qr_solve"]


class BandedMatrix:
    """Rectangular banded matrix.

    Parameters
    ----------
    shape : (int, int)
    lower, upper : int
        Bandwidths. They are clipped to ``rows - 1`` and ``cols - 1``.
    data : ndarray, shape (lower + upper + 1, cols), optional
        Band storage. Entries that fall outside the matrix are zeroed.
    """

    __slots__ = ("shape", "lower", "upper", "data")

    def __init__(self, shape, lower, upper, data=None):
        rows, cols = (int(s) for s in shape)
        if rows < 1 or cols < 1:
            raise DimensionMismatch(f"empty banded matrix {shape}")
        if lower < 0 or upper < 0:
            raise ValueError("bandwidths must be nonnegative")
        lo, up = min(int(lower), rows - 1), min(int(upper), cols - 1)
        if data is None:
            data = np.zeros((lo + up + 1, cols))
        else:
            data = np.asarray(data, dtype=float)
            if data.shape != (lower + upper + 1, cols):
                raise DimensionMismatch(
                    f"band data shape {data.shape} != {(lower + upper + 1, cols)}"
                )
            data = data[upper - up: upper + lo + 1].copy()
            _zero_outside(data, rows, lo, up)
        self.shape = (rows, cols)
        self.lower = lo
        self.upper = up
        self.data = data

    # -- construction ---------------------------------------------------

    @classmethod
    def _adopt(cls, shape, lower, upper, data):
        """Wrap band storage without copying; the caller guarantees it is in-range and zero outside."""
        out = cls.__new__(cls)
        out.shape = tuple(shape)
        out.lower, out.upper = lower, upper
        out.data = data
        return out

    @classmethod
    def zeros(cls, shape, lower=0, upper=0):
        return cls(shape, lower, upper)

    @classmethod
    def identity(cls, n, cols=None):
        cols = n if cols is None else cols
        return cls.from_diagonals((n, cols), {0: np.ones(min(n, cols))})

    @classmethod
    def from_diagonals(cls, shape, diagonals):
        """Build from ``{offset: values}``; ``values[t]`` is entry ``(t - min(d, 0), t + max(d, 0))``."""
        rows, cols = shape
        offsets = [d for d in diagonals if -rows < d < cols]
        lower = max([0] + [-d for d in offsets])
        upper = max([0] + offsets)
        A = cls(shape, lower, upper)
        for d in offsets:
            vals = np.broadcast_to(np.asarray(diagonals[d], dtype=float), (A.diag_len(d),))
            A.set_diag(d, vals)
        return A

    @classmethod
    def from_dense(cls, M, lower=None, upper=None):
        M = np.asarray(M, dtype=float)
        rows, cols = M.shape
        if lower is None or upper is None:
            i, j = np.nonzero(M)
            lower = int(max(0, (i - j).max())) if i.size else 0
            upper = int(max(0, (j - i).max())) if i.size else 0
        A = cls((rows, cols), lower, upper)
        for d in range(-A.lower, A.upper + 1):
            A.set_diag(d, np.diagonal(M, d))
        return A

    # -- access ---------------------------------------------------------

    @property
    def rows(self):
        return self.shape[0]

    @property
    def cols(self):
        return self.shape[1]

    @property
    def bandwidths(self):
        return (self.lower, self.upper)

    def diag_len(self, d):
        rows, cols = self.shape
        if d >= 0:
            return max(0, min(rows, cols - d))
        return max(0, min(rows + d, cols))

    def diag(self, d):
        """The ``d``-th diagonal as a 1-D copy (zeros if outside the band)."""
        n = self.diag_len(d)
        if not -self.lower <= d <= self.upper:
            return np.zeros(n)
        c0 = max(d, 0)
        return self.data[self.upper - d, c0: c0 + n].copy()

    def set_diag(self, d, values):
        if not -self.lower <= d <= self.upper:
            raise IndexError(f"diagonal {d} outside band ({self.lower}, {self.upper})")
        c0 = max(d, 0)
        self.data[self.upper - d, c0: c0 + self.diag_len(d)] = values

    def to_dense(self):
        M = np.zeros(self.shape)
        for d in range(-self.lower, self.upper + 1):
            n = self.diag_len(d)
            if n:
                r0, c0 = max(-d, 0), max(d, 0)
                M[np.arange(r0, r0 + n), np.arange(c0, c0 + n)] = self.diag(d)
        return M

    def copy(self):
        B = BandedMatrix.__new__(BandedMatrix)
        B.shape, B.lower, B.upper, B.data = self.shape, self.lower, self.upper, self.data.copy()
        return B

    def __repr__(self):
        return f"BandedMatrix(shape={self.shape}, bandwidths=({self.lower}, {self.upper}))"

    # -- structural operations -------------------------------------------

    def trim(self, tol=0.0):
        """Drop outer diagonals whose entries are all ``<= tol`` in magnitude."""
        mag = np.abs(self.data).max(axis=1) if self.data.size else np.zeros(0)
        nz = np.flatnonzero(mag > tol)
        if nz.size == 0:
            return BandedMatrix(self.shape, 0, 0)
        top, bottom = nz[0], nz[-1]
        up = self.upper - top
        lo = bottom - self.upper
        up, lo = max(up, 0), max(lo, 0)
        return self.with_bandwidths(lo, up)

    def with_bandwidths(self, lower, upper):
        """Re-embed in a band of the given widths (dropping diagonals that fall outside)."""
        out = BandedMatrix(self.shape, lower, upper)
        for d in range(max(-self.lower, -out.lower), min(self.upper, out.upper) + 1):
            out.data[out.upper - d] = self.data[self.upper - d]
        return out

    def truncate(self, rows, cols=None):
        """Leading ``rows x cols`` block."""
        cols = rows if cols is None else cols
        out = BandedMatrix((rows, cols), self.lower, self.upper)
        lo, up = out.lower, out.upper
        out.data[:] = self.data[self.upper - up: self.upper + lo + 1, :cols]
        _zero_outside(out.data, rows, lo, up)
        return out

    @property
    def T(self):
        rows, cols = self.shape
        out = BandedMatrix((cols, rows), self.upper, self.lower)
        for d in range(-self.lower, self.upper + 1):
            n = self.diag_len(d)
            if n:
                out.set_diag(-d, self.diag(d))
        return out

    def scale_rows(self, s):
        """``diag(s) @ self``."""
        s = np.asarray(s, dtype=float)
        if s.shape != (self.rows,):
            raise DimensionMismatch("row scaling length mismatch")
        out = self.copy()
        for b in range(self.lower + self.upper + 1):
            j0, j1, shift = _band_row_span(b, self.upper, self.rows, self.cols)
            if j1 > j0:
                out.data[b, j0:j1] *= s[j0 + shift: j1 + shift]
        return out

    def scale_cols(self, s):
        s = np.asarray(s, dtype=float)
        if s.shape != (self.cols,):
            raise DimensionMismatch("column scaling length mismatch")
        out = self.copy()
        out.data *= s[None, :]
        return out

    def row_abs_max(self) -> np.ndarray:
        """Largest stored magnitude in each row."""
        out = np.zeros(self.rows)
        for b in range(self.lower + self.upper + 1):
            j0, j1, shift = _band_row_span(b, self.upper, self.rows, self.cols)
            if j1 > j0:
                seg = out[j0 + shift: j1 + shift]
                np.maximum(seg, np.abs(self.data[b, j0:j1]), out=seg)
        return out

    def norm_inf(self):
        rs = np.zeros(self.rows)
        for b in range(self.lower + self.upper + 1):
            j0, j1, shift = _band_row_span(b, self.upper, self.rows, self.cols)
            if j1 > j0:
                rs[j0 + shift: j1 + shift] += np.abs(self.data[b, j0:j1])
        return float(rs.max())

    # -- arithmetic ---------------------------------------------------------

    def __matmul__(self, other):
        if isinstance(other, BandedMatrix):
            return band_mul(self, other)
        x = np.asarray(other, dtype=float)
        if x.shape[0] != self.cols:
            raise DimensionMismatch(f"matvec: {self.shape} @ {x.shape}")
        y = np.zeros((self.rows,) + x.shape[1:])
        for d in range(-self.lower, self.upper + 1):
            n = self.diag_len(d)
            if n:
                r0, c0 = max(-d, 0), max(d, 0)
                v = self.data[self.upper - d, c0: c0 + n]
                y[r0: r0 + n] += v.reshape((n,) + (1,) * (x.ndim - 1)) * x[c0: c0 + n]
        return y

    def __add__(self, other):
        return band_add(self, other)

    def __sub__(self, other):
        return band_add(self, other, -1.0)

    def __mul__(self, c):
        out = self.copy()
        out.data *= float(c)
        return out

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    # -- debugging dump -------------------------------------------------------

    def dump(self, path):
        """Write ``rows, cols, lower, upper`` as little-endian int64 followed by the band (float64)."""
        with open(path, "wb") as fh:
            fh.write(struct.pack("<4q", self.rows, self.cols, self.lower, self.upper))
            fh.write(np.ascontiguousarray(self.data, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path):
        raw = Path(path).read_bytes()
        rows, cols, lower, upper = struct.unpack("<4q", raw[:32])
        data = np.frombuffer(raw[32:], dtype="<f8").reshape(lower + upper + 1, cols)
        return cls((rows, cols), lower, upper, data)


def _row_index_grid(lower, upper, cols):
    """Row index ``i`` of every band slot: ``i = b - upper + j``."""
    b = np.arange(lower + upper + 1)[:, None]
    j = np.arange(cols)[None, :]
    return b - upper + j


def _band_row_span(b, upper, rows, cols):
    """Columns ``[j0, j1)`` of band row ``b`` that fall inside the matrix, and the row shift."""
    shift = b - upper
    return max(0, -shift), max(min(cols, rows - shift), 0), shift


def _zero_outside(data, rows, lower, upper):
    cols = data.shape[1]
    for b in range(lower + upper + 1):
        j0, j1, _ = _band_row_span(b, upper, rows, cols)
        data[b, :j0] = 0.0
        data[b, max(j1, j0):] = 0.0


def band_add(A, B, beta=1.0):
    """``A + beta * B`` with the union of the two bands."""
    if A.shape != B.shape:
        raise DimensionMismatch(f"add: {A.shape} vs {B.shape}")
    lo, up = max(A.lower, B.lower), max(A.upper, B.upper)
    out = BandedMatrix(A.shape, lo, up)
    out.data[up - A.upper: up + A.lower + 1] += A.data
    out.data[up - B.upper: up + B.lower + 1] += beta * B.data
    return out


def band_mul(A, B):
    """Product of two banded matrices, O(n * diagonals(A) * diagonals(B)).

    Diagonal ``da`` of ``A`` times diagonal ``db`` of ``B`` lands on diagonal
    ``da + db`` of the product: ``C[k-da, j] += A[k-da, k] B[k, j]`` with
    ``k = j - db``, a shifted elementwise product of two band rows.
    """
    if A.cols != B.rows:
        raise DimensionMismatch(f"band_mul: {A.shape} @ {B.shape}")
    rows, cols = A.rows, B.cols
    C = BandedMatrix((rows, cols), A.lower + B.lower, A.upper + B.upper)
    lc, uc = C.lower, C.upper
    buf = np.empty(cols)
    for db in range(-B.lower, B.upper + 1):
        brow = B.data[B.upper - db]
        j0, j1 = max(0, db), min(cols, A.cols + db)
        if j0 >= j1:
            continue
        for da in range(-A.lower, A.upper + 1):
            d = da + db
            if not -lc <= d <= uc:
                continue
            t = np.multiply(A.data[A.upper - da, j0 - db: j1 - db], brow[j0:j1], out=buf[: j1 - j0])
            C.data[uc - d, j0:j1] += t
    _zero_outside(C.data, rows, lc, uc)
    return C


def band_lu_solve(A, b):
    """Solve ``A x = b`` by banded LU with partial pivoting (LAPACK ``gbtrf``/``gbtrs``).

    Raises
    ------
    Singular
        If a pivot is exactly zero or smaller than ``n * ulp`` times the largest
        entry of its column of ``A`` (the column scale keeps the test invariant
        under diagonal scaling, which PG matrices exercise heavily).
    """
    n = _check_square(A, b)
    kl, ku = A.lower, A.upper
    ab = np.zeros((2 * kl + ku + 1, n), order="F")
    ab[kl:] = A.data
    lu, piv, info = lapack.dgbtrf(ab, kl, ku, overwrite_ab=1)
    if info < 0:
        raise ValueError(f"dgbtrf: illegal argument {-info}")
    pivots = lu[kl + ku]
    small = np.flatnonzero(np.abs(pivots) <= _pivot_tolerance(A))
    if info > 0 or small.size:
        where = info - 1 if info > 0 else int(small[0])
        raise Singular(f"banded LU: pivot {where} is below n*ulp*(column scale)")
    x, info = lapack.dgbtrs(lu, kl, ku, np.asarray(b, dtype=float), piv)
    if info != 0:
        raise ValueError(f"dgbtrs: info={info}")
    return x


def band_qr_solve(A, b):
    """Solve ``A x = b`` by Givens QR on the band; R has upper bandwidth ``lower + upper``."""
    n = _check_square(A, b)
    kl, ku = A.lower, A.upper
    w = kl + ku + 1  # row width of R
    # W[i, c - i + kl] = A[i, c] for c in [i - kl, i + ku + kl]
    W = np.zeros((n, 2 * kl + ku + 1))
    for d in range(-kl, ku + 1):
        m = A.diag_len(d)
        r0 = max(-d, 0)
        W[r0: r0 + m, d + kl] = A.diag(d)
    y = np.array(b, dtype=float)
    for j in range(n):
        for i in range(j + 1, min(j + kl + 1, n)):
            s = i - j
            xi = W[i, kl - s]  # A[i, j]
            if xi == 0.0:
                continue
            xj = W[j, kl]
            r = np.hypot(xj, xi)
            c, sn = xj / r, xi / r
            width = min(w, n - j)
            rj = W[j, kl: kl + width].copy()
            ri = W[i, kl - s: kl - s + width].copy()
            W[j, kl: kl + width] = c * rj + sn * ri
            W[i, kl - s: kl - s + width] = -sn * rj + c * ri
            y[j], y[i] = c * y[j] + sn * y[i], -sn * y[j] + c * y[i]
    diag = W[:, kl]
    small = np.flatnonzero(np.abs(diag) <= _pivot_tolerance(A))
    if small.size:
        raise Singular(f"banded QR: R[{small[0]}, {small[0]}] is below n*ulp*(column scale)")
    x = np.zeros(n)
    for j in range(n - 1, -1, -1):
        width = min(w, n - j)
        x[j] = (y[j] - W[j, kl + 1: kl + width] @ x[j + 1: j + width]) / diag[j]
    return x


def _pivot_tolerance(A):
    return A.rows * np.finfo(float).eps * np.abs(A.data).max(axis=0)


def _check_square(A, b):
    if A.rows != A.cols:
        raise DimensionMismatch(f"square matrix required, got {A.shape}")
    b = np.asarray(b)
    if b.shape[0] != A.rows:
        raise DimensionMismatch(f"rhs length {b.shape[0]} != {A.rows}")
    return A.rows
