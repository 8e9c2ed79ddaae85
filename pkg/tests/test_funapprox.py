import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.polynomial import chebyshev as npcheb
from scipy.special import eval_gegenbauer, eval_jacobi, jv

from specband.errors import BasisMismatch, NoConvergence, NonFiniteSample
from specband.funapprox import (
    ChebSeries,
    ChebyshevT,
    Jacobi,
    Ultraspherical,
    approximate,
    cheb_points,
    coeffs_from_values,
    convert_up,
    evaluate,
    read_coeffs,
    to_chebyshev,
    values_from_coeffs,
    write_coeffs,
)


def test_approximate_x_squared():
    s = approximate(lambda x: x**2)
    np.testing.assert_allclose(s.coeffs, [0.5, 0.0, 0.5], atol=1e-15)


def test_approximate_reproduces_t5():
    s = approximate(lambda x: np.cos(5 * np.arccos(x)))
    expected = np.zeros(6)
    expected[5] = 1.0
    np.testing.assert_allclose(s.coeffs, expected, atol=1e-14)


def test_approximate_cos_matches_bessel_expansion():
    # cos(x) = J_0(1) + 2 sum_{k>=1} (-1)^k J_{2k}(1) T_{2k}(x)
    s = approximate(np.cos)
    assert np.all(np.abs(s.coeffs[1::2]) < 1e-15)
    for j in range(0, len(s), 2):
        ref = (1 if j == 0 else 2) * (-1) ** (j // 2) * jv(j, 1.0)
        assert abs(s.coeffs[j] - ref) < 1e-15


def test_approximate_errors():
    with pytest.raises(NonFiniteSample), np.errstate(divide="ignore"):
        approximate(lambda x: 1.0 / x)  # x = 0 is a sample point
    with pytest.raises(NoConvergence):
        approximate(np.abs, max_degree=64)
    with pytest.raises(ValueError):
        approximate(np.sin, tol=0.0)


def test_approximate_zero_function():
    s = approximate(lambda x: 0 * x)
    assert len(s) == 1 and s.coeffs[0] == 0.0


@pytest.mark.parametrize("d", [0, 1, 5, 17, 40])
def test_approximate_polynomial_degree_is_exact(d, rng):
    c = rng.standard_normal(d + 1)
    c[-1] = 1.0 + abs(c[-1])
    s = approximate(lambda x: npcheb.chebval(x, c))
    assert len(s) == d + 1
    np.testing.assert_allclose(s.coeffs, c, atol=1e-13)


def test_evaluate_examples():
    assert evaluate(ChebSeries([0, 1]), 0.5) == 0.5
    assert evaluate(ChebSeries([0, 1], Ultraspherical(1)), 0.5) == 1.0
    s = approximate(np.exp)
    assert abs(evaluate(s, 0.3) - math.exp(0.3)) < 1e-13


def test_evaluate_t_n_at_endpoints():
    for n in (0, 1, 2, 3, 10, 101, 1000, 10_000):
        c = np.zeros(n + 1)
        c[n] = 1.0
        s = ChebSeries(c)
        assert abs(s(1.0) - 1.0) < 1e-12
        assert abs(s(-1.0) - (-1.0) ** n) < 1e-12


def test_evaluate_matches_scipy_families(rng):
    x = rng.uniform(-1, 1, 9)
    c = rng.standard_normal(12)
    for lam in (1, 2, 5):
        ref = sum(cj * eval_gegenbauer(j, lam, x) for j, cj in enumerate(c))
        np.testing.assert_allclose(ChebSeries(c, Ultraspherical(lam))(x), ref, rtol=1e-12, atol=1e-12)
    for a, b in ((0, 0), (-0.5, -0.5), (1.5, 0.25), (-0.3, 2.0)):
        ref = sum(cj * eval_jacobi(j, a, b, x) for j, cj in enumerate(c))
        np.testing.assert_allclose(ChebSeries(c, Jacobi(a, b))(x), ref, rtol=1e-12, atol=1e-12)


def test_convert_up_examples():
    s = convert_up(ChebSeries([1, 0, 0]), Ultraspherical(2))
    np.testing.assert_array_equal(s.coeffs, [1, 0, 0])
    s = convert_up(ChebSeries([0, 0, 1]), Ultraspherical(1))
    np.testing.assert_allclose(s.coeffs, [-0.5, 0, 0.5])
    x = np.linspace(-1, 1, 5)
    np.testing.assert_allclose(s(x), 2 * x**2 - 1, atol=1e-15)


def test_convert_up_rejects_downward_chains():
    with pytest.raises(BasisMismatch):
        convert_up(ChebSeries([1.0], Ultraspherical(3)), Ultraspherical(2))
    with pytest.raises(BasisMismatch):
        convert_up(ChebSeries([1.0], Ultraspherical(1)), ChebyshevT())
    with pytest.raises(BasisMismatch):
        convert_up(ChebSeries([1.0], Jacobi(0, 0)), Jacobi(1, 2))


@given(
    deg=st.integers(0, 100),
    target=st.sampled_from([1, 2, 3, 6]),
    seed=st.integers(0, 2**32 - 1),
)
def test_conversion_round_trip_t_to_c(deg, target, seed):
    r = np.random.default_rng(seed)
    s = ChebSeries(r.standard_normal(deg + 1))
    x = r.uniform(-1, 1, 10)
    up = convert_up(s, Ultraspherical(target))
    scale = max(1.0, np.max(np.abs(s(x))))
    np.testing.assert_allclose(up(x), s(x), atol=1e-12 * scale * max(1, deg))


@given(deg=st.integers(0, 60), seed=st.integers(0, 2**32 - 1),
       ab=st.sampled_from([(0.0, 0.0), (-0.5, -0.5), (0.5, 1.5), (2.0, -0.25)]),
       shift=st.integers(1, 3))
def test_conversion_round_trip_jacobi(deg, seed, ab, shift):
    r = np.random.default_rng(seed)
    src = Jacobi(*ab)
    s = ChebSeries(r.standard_normal(deg + 1), src)
    x = r.uniform(-1, 1, 10)
    up = convert_up(s, src.shifted(shift))
    scale = max(1.0, np.max(np.abs(s(x))))
    np.testing.assert_allclose(up(x), s(x), rtol=1e-12, atol=1e-12 * scale)


def test_to_chebyshev_from_ultraspherical(rng):
    c = rng.standard_normal(15)
    s = ChebSeries(c, Ultraspherical(3))
    t = to_chebyshev(s)
    x = np.linspace(-1, 1, 11)
    np.testing.assert_allclose(t(x), s(x), rtol=1e-12, atol=1e-10)


def test_cosine_transform_round_trip(rng):
    for M in (1, 2, 7, 64, 257):
        c = rng.standard_normal(M + 1)
        np.testing.assert_allclose(coeffs_from_values(values_from_coeffs(c, M)), c, atol=1e-13)
    x = cheb_points(8)
    assert x[0] == 1.0 and x[-1] == -1.0


def test_series_invariants():
    s = ChebSeries([1.0, 2.0, 0.0, 0.0])
    assert len(s.trim()) == 2
    assert s.degree == 1
    with pytest.raises(ValueError):
        s.coeffs[0] = 3.0
    with pytest.raises(ValueError):
        Ultraspherical(0)
    with pytest.raises(ValueError):
        Jacobi(-1.0, 0.0)


@pytest.mark.parametrize("basis", [ChebyshevT(), Ultraspherical(4), Jacobi(-0.5, 1.25)])
def test_coefficient_file_round_trip(tmp_path, basis, rng):
    s = ChebSeries(rng.standard_normal(7) / 3.0, basis)
    path = tmp_path / "s.coeffs"
    write_coeffs(path, s)
    assert path.read_text().splitlines()[0] == f"basis {basis.tag()}"
    back = read_coeffs(path)
    assert back.basis == basis
    np.testing.assert_array_equal(back.coeffs, s.coeffs)
