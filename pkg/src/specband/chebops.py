"""Truncated ultraspherical operators: differentiation, conversion, multiplication.

Every constructor returns the ``size x size`` leading block of the infinite
operator (square truncation). Multiplication operators are assembled so that
the block is exact: wherever an intermediate step would read past the
truncation edge, the work is done on a padded block and cut back afterwards.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from .banded import BandedMatrix, _row_index_grid
from .funapprox import ChebSeries, ChebyshevT, Ultraspherical, convert_up

logger = logging.getLogger(__name__)

__all__ = [
    "diff_op",
    "conv_op",
    "mult_x_op",
    "mult_op_T",
    "mult_op_C1",
    "mult_op_k",
    "mult_op_recurrence",
    "conv_coefficients",
]


def diff_op(k: int, size: int) -> BandedMatrix:
    """``D_k``: T coefficients to the coefficients of the k-th derivative in C^(k)."""
    if k < 1:
        raise ValueError("differentiation order must be >= 1")
    n = max(size - k, 0)
    D = BandedMatrix((size, size), 0, k)
    if n:
        D.set_diag(k, 2.0 ** (k - 1) * math.factorial(k - 1) * (k + np.arange(n, dtype=float)))
    return D


def conv_coefficients(k: int, size: int):
    """Diagonal and second-superdiagonal entries of ``S_k`` (C^(k) -> C^(k+1)), by row.

    ``main[i] = S[i, i]`` and ``sup2[i] = S[i, i + 2]``.
    """
    i = np.arange(size, dtype=float)
    if k == 0:
        main = np.full(size, 0.5)
        main[0] = 1.0
        sup2 = np.full(size, -0.5)
    else:
        main = k / (k + i)
        sup2 = -k / (k + i + 2.0)
    return main, sup2


def conv_op(k: int, size: int) -> BandedMatrix:
    """``S_k``: C^(k) coefficients to C^(k+1) coefficients (``k = 0`` means from T)."""
    if k < 0:
        raise ValueError("conversion order must be >= 0")
    main, sup2 = conv_coefficients(k, size)
    return BandedMatrix.from_diagonals((size, size), {0: main, 2: sup2[: max(size - 2, 0)]})


def mult_x_op(k: int, size: int) -> BandedMatrix:
    """Multiplication by ``x`` in C^(k) (``k = 0`` means T)."""
    j = np.arange(max(size - 1, 0), dtype=float)
    if k == 0:
        sub = np.full(j.size, 0.5)
        if j.size:
            sub[0] = 1.0
        sup = np.full(j.size, 0.5)
    else:
        sub = (j + 1.0) / (2.0 * (k + j))
        sup = (2.0 * k + j) / (2.0 * (k + j + 1.0))
    return BandedMatrix.from_diagonals((size, size), {-1: sub, 1: sup})


def _toeplitz_hankel(a: np.ndarray, size: int, hankel_shift: int, hankel_sign: float) -> BandedMatrix:
    """``(T + sign * H) / 2`` with Toeplitz ``T[i, j] = a_|i-j|`` (``2 a_0`` on the diagonal)
    and Hankel ``H[i, j] = a_{i+j+shift}`` (row 0 of H is zero when ``shift = 0``)."""
    m = a.size - 1
    A = BandedMatrix((size, size), m, m)
    lo, up = A.lower, A.upper
    i = _row_index_grid(lo, up, size)
    j = np.broadcast_to(np.arange(size)[None, :], i.shape)
    d = np.abs(i - j)
    valid = (i >= 0) & (i < size)
    toe = np.where(d == 0, 2.0 * a[0], a[np.minimum(d, m)])
    h_idx = i + j + hankel_shift
    h_ok = valid & (h_idx <= m)
    if hankel_shift == 0:
        h_ok &= i > 0
    hank = np.where(h_ok, a[np.minimum(h_idx, m)], 0.0)
    A.data[:] = np.where(valid, 0.5 * (toe + hankel_sign * hank), 0.0)
    return A


def _check_size(a: ChebSeries, size: int):
    m = len(a) - 1
    if size <= 2 * m:
        logger.debug("operator size %d is not larger than 2*deg(a)=%d", size, 2 * m)
    return m


def _t_coeffs(a) -> np.ndarray:
    if isinstance(a, ChebSeries):
        if not isinstance(a.basis, ChebyshevT):
            raise ValueError("multiplication operators take Chebyshev-T coefficients")
        return a.trim().coeffs
    return np.trim_zeros(np.atleast_1d(np.asarray(a, dtype=float)), "b") if np.any(a) else np.zeros(1)


def mult_op_T(a, size: int) -> BandedMatrix:
    """``M_0[a]``: multiplication by ``a`` acting on T coefficients (Toeplitz-plus-Hankel)."""
    c = _t_coeffs(a)
    _check_size(ChebSeries(c), size)
    return _toeplitz_hankel(c, size, hankel_shift=0, hankel_sign=1.0)


def mult_op_C1(a, size: int) -> BandedMatrix:
    """``M_1[a]`` in C^(1), built directly from the T coefficients of ``a`` (Toeplitz-minus-Hankel)."""
    c = _t_coeffs(a)
    _check_size(ChebSeries(c), size)
    return _toeplitz_hankel(c, size, hankel_shift=2, hankel_sign=-1.0)


def mult_op_k(a, k: int, size: int) -> BandedMatrix:
    """``M_k[a]`` in C^(k) via ``S_{k-1}...S_1 M_1[a] S_1^{-1}...S_{k-1}^{-1}``.

    Each similarity step touches only the (m, m) band, O(m * size); the whole
    build is O(k * m * size). ``a`` holds Chebyshev-T coefficients.

    Only the lower half of the band is carried through the steps: the lower
    half of ``S_j X S_j^{-1}`` depends on the lower half of ``X`` alone.
    Multiplication is self-adjoint under the C^(k) weight, so
    ``M[r, c] h_r = M[c, r] h_c`` supplies the upper half at the end. Solving
    for the upper half directly sums terms with weights up to ``(j + c) / j``
    and loses about a digit per step.
    """
    if k == 0:
        return mult_op_T(a, size)
    if k == 1:
        return mult_op_C1(a, size)
    c = _t_coeffs(a)
    m = c.size - 1
    if m == 0:
        return BandedMatrix.identity(size) * c[0]
    _check_size(ChebSeries(c), size)
    # each step spoils the last two rows; pad so the leading block stays exact
    P = max(size + 2 * (k - 1), m + 1)
    low = _c1_lower(c, P)
    for j in range(1, k):
        low = _similarity_step(low, j, P)
    if m >= size:
        return _assemble_band(low, k, P).truncate(size)
    return _assemble_band(low, k, size)


def _assemble_band(low: list, k: int, size: int) -> BandedMatrix:
    """``size x size`` block from the lower diagonals, the upper half by weighted reflection."""
    m = len(low) - 1
    data = np.empty((2 * m + 1, size))
    rho = _norm_step(k, size)
    ratio = np.ones(size)
    data[m] = low[0][:size]
    for d in range(1, m + 1):
        n = size - d
        ratio = ratio[:n] * rho[d - 1:]  # h_{c+d} / h_c
        data[m + d, :n] = low[d][:n]
        data[m + d, n:] = 0.0
        np.multiply(low[d][:n], ratio, out=data[m - d, d:])
        data[m - d, :d] = 0.0
    return BandedMatrix._adopt((size, size), m, m, data)


def _c1_lower(a: np.ndarray, size: int) -> list:
    """Lower diagonals of ``M_1[a]``, each of length ``size``: entry ``d`` holds ``M[c+d, c]``.

    Slots with ``c + d >= size`` lie outside the matrix and are zero.
    """
    m = a.size - 1
    out = []
    for d in range(m + 1):
        diag = np.empty(size)
        diag[: size - d] = a[0] if d == 0 else 0.5 * a[d]
        diag[size - d:] = 0.0
        # Hankel part a_{2c+d+2} reaches only the first few columns
        h = np.arange(d + 2, m + 1, 2)[: size - d]
        diag[: h.size] -= 0.5 * a[h]
        out.append(diag)
    return out


def _norm_step(lam: int, size: int, dtype=np.float64) -> np.ndarray:
    """``h_{i+1} / h_i`` for the C^(lam) squared norms, i = 0..size-2."""
    i = np.arange(max(size - 1, 0), dtype=dtype)
    return (i + 2.0 * lam) * (i + lam) / ((i + 1.0) * (i + lam + 1.0))


def _similarity_step(low: list, j: int, size: int) -> list:
    """Lower diagonals of ``S_j X S_j^{-1}`` from those of ``X`` (``j >= 1``).

    With ``r = c + d``: ``Y[r, c] = S[r, r] X[r, c] + S[r, r+2] X[r+2, c]``, and
    ``X' S = Y`` gives ``X'[r, c] = (Y[r, c] - S[c-2, c] X'[r, c-2]) / S[c, c]``,
    where ``X'[r, c-2]`` lies on diagonal ``d + 2``. For ``j >= 1`` the entries
    are ``S[r, r] = j/(j+r)`` and ``S[r, r+2] = -j/(j+r+2)``, so

        X'[r, c] = (j+c) (X[r, c]/(j+r) - X[r+2, c]/(j+r+2)) + X'[r, c-2],

    and ``X[r+2, c]/(j+r+2)`` is the scaled diagonal ``d + 2`` at the same ``c``.
    Every diagonal is stored at full length ``size``; the slots past the
    matrix edge only ever feed rows at or beyond ``size - 2``, which the
    caller's padding discards. ``low`` is scaled in place.
    """
    m = len(low) - 1
    inv = 1.0 / (j + np.arange(size + m, dtype=float))
    w = j + np.arange(size, dtype=float)
    out = [None] * (m + 1)
    for d in range(m, -1, -1):
        t = np.multiply(low[d], inv[d: d + size], out=low[d])
        y = out[d] = np.empty(size)
        if d + 2 <= m:
            np.subtract(t, low[d + 2], out=y)
            np.multiply(y, w, out=y)
            np.add(y[2:], out[d + 2][:-2], out=y[2:])
            low[d + 2] = None  # last use; lets the next allocation reuse warm memory
        else:
            np.multiply(t, w, out=y)
    return out


def mult_op_recurrence(a: ChebSeries, k: int, size: int, dtype=np.float64) -> BandedMatrix:
    """``M_k[a]`` by the three-term recurrence over ``M_k[C_j^(k)]`` (T_j when ``k = 0``).

    Reference construction, O(m^2 * size). ``a`` may be given in T or already
    in C^(k). The recurrence runs on a block padded by ``m + 1`` so that the
    returned leading block is exact. For ``k >= 1`` it is carried out on the
    orthonormally scaled polynomials, whose recurrence is symmetric and does
    not suffer from the ``j^(2k-1)`` growth of ``C_j^(k)``.

    Parameters
    ----------
    dtype
        Working precision of the recurrence. Rows near the top still lose a
        few digits to cancellation (``p_j(X)`` has norm growing like
        ``j^(k-1/2)``), so accuracy checks may pass ``np.longdouble``.
    """
    target = ChebyshevT() if k == 0 else Ultraspherical(k)
    if not isinstance(a, ChebSeries):
        a = ChebSeries(a)
    ak = convert_up(a, target).trim().coeffs
    m = ak.size - 1
    if m == 0:
        return BandedMatrix.identity(size) * ak[0]
    padded = size + m + 1
    X = mult_x_op(k, padded)
    sub, sup = X.diag(-1).astype(dtype), X.diag(1).astype(dtype)
    if k == 0:
        s = None
        coef = ak.astype(dtype)
        two = dtype(2)
        # T_1 = x T_0, T_{j+1} = 2x T_j - T_{j-1}
        steps = [(1, 0)] + [(two, 1)] * (m - 1)
    else:
        # scaled coordinates v_hat = diag(s) v, s_i = sqrt(h_i / h_0): symmetric X_hat
        s = np.sqrt(np.concatenate(([1.0], np.cumprod(_norm_step(k, padded, dtype)))))
        beta = np.sqrt(sub * sup)
        sub = sup = beta
        coef = ak.astype(dtype) * s[: m + 1]
        # p_{j+1} = (x p_j - beta_j p_{j-1}) / beta_{j+1}, with beta_j = X_hat[j, j-1]
        steps = [(1 / beta[0], 0)] + [(1 / beta[j], beta[j - 1] / beta[j]) for j in range(1, m)]
    r = _row_index_grid(m, m, padded)
    sub_g = np.where((r >= 1) & (r < padded), sub[np.clip(r - 1, 0, padded - 2)], 0)
    sup_g = np.where((r >= 0) & (r < padded - 1), sup[np.clip(r, 0, padded - 2)], 0)

    def step(cur, prev, j, scale, back):
        # cur = p_j(X) occupies band rows m-j..m+j. X[r, r-1] reads band row
        # b-1 and X[r, r+1] reads band row b+1, so p_{j+1} occupies one more
        # row on each side; it is written over prev, which is no longer needed.
        lo, hi = m - j - 1, m + j + 2
        nxt = prev
        nxt[lo:hi] *= -back
        nxt[lo + 1: hi] += scale * sub_g[lo + 1: hi] * cur[lo: hi - 1]
        nxt[lo: hi - 1] += scale * sup_g[lo: hi - 1] * cur[lo + 1: hi]
        return nxt

    one = np.zeros((2 * m + 1, padded), dtype=dtype)
    one[m] = 1
    scale, _ = steps[0]
    cur = step(one.copy(), np.zeros_like(one), 0, scale, 0)
    prev = one
    out = coef[0] * prev + coef[1] * cur
    for j in range(1, m):
        scale, back = steps[j]
        prev, cur = cur, step(cur, prev, j, scale, back)
        lo, hi = m - j - 1, m + j + 2
        out[lo:hi] += coef[j + 1] * cur[lo:hi]
    if s is not None:
        # M = diag(s)^-1 M_hat diag(s)
        rc = np.clip(r, 0, padded - 1)
        out = out / s[rc] * s[None, :]
    full = BandedMatrix((padded, padded), m, m, out.astype(np.float64))
    return full.truncate(size)
