import json
import math
import time

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from numpy.polynomial import chebyshev as npcheb
from scipy.special import gammaln

from specband.chebops import conv_op, diff_op, mult_op_T
from specband.errors import SingularStencil, UnliftableConstraints
from specband.funapprox import ChebSeries, ChebyshevT, Ultraspherical
from specband.pgsolve import (
    OdeProblem, assemble_A, assemble_L, export_solution, l2_error, lift, omega_diag, project_rhs,
    solve, write_diagnostics,
)
from specband.recombine import EndpointDeriv as E, build_stencil, dual_test_constraints

from oracles import cc_matrix, cheb_values, gegenbauer_values, pg_matrix_oracle

DIRICHLET = [E(-1, 0), E(1, 0)]


def stencils(problem, n, normalize="max"):
    p, hom = lift(problem.constraints)
    N = problem.order
    R = build_stencil(hom, ChebyshevT(), n, normalize=normalize)
    tests = dual_test_constraints(hom, N, override=problem.test_constraints)
    Q = build_stencil([c.homogeneous() for c in tests], Ultraspherical(N), n, normalize=normalize)
    return R, Q


# ---------------------------------------------------------------- omega

def test_omega_first_entry():
    assert omega_diag(2, 1)[0] == pytest.approx(3 * math.pi / 8, rel=1e-15)
    assert omega_diag(1, 1)[0] == pytest.approx(math.pi / 2, rel=1e-15)


@pytest.mark.parametrize("N", [1, 2, 3, 6, 10])
def test_omega_matches_gamma_formula(N):
    j = np.arange(400)
    log_d = (math.log(math.pi) + (1 - 2 * N) * math.log(2) + gammaln(j + 2 * N)
             - gammaln(j + 1) - np.log(j + N) - 2 * gammaln(N))
    np.testing.assert_allclose(omega_diag(N, 400), np.exp(log_d), rtol=1e-12)


@pytest.mark.parametrize("N", [1, 2, 3])
def test_omega_are_gegenbauer_norms(N):
    # x = cos(t): the weighted integral becomes a trigonometric polynomial in t,
    # integrated exactly by the trapezoid rule
    size = 8
    t = np.pi * (np.arange(256) + 0.5) / 256
    x = np.cos(t)
    P = np.stack([gegenbauer_values(np.eye(size)[j], N, x) for j in range(size)], axis=1)
    G = P.T @ ((np.sin(t) ** (2 * N) * np.pi / 256)[:, None] * P)
    np.testing.assert_allclose(np.diag(G), omega_diag(N, size), rtol=1e-13)
    assert np.max(np.abs(G - np.diag(np.diag(G)))) < 1e-12 * np.max(G)


def test_omega_no_overflow():
    d = omega_diag(3, 100_000)
    assert np.all(np.isfinite(d)) and np.all(d > 0)


# ---------------------------------------------------------------- lift

def test_lift_examples():
    p, hom = lift([E(-1, 0, 1.0), E(1, 0, 1.0)])
    np.testing.assert_array_equal(p.coeffs, [1.0])
    assert all(c.value == 0 for c in hom)
    p, _ = lift([E(-1, 0, 1.0), E(1, 0, 1.0), E(1, 1, 0.0)])
    np.testing.assert_array_equal(p.coeffs, [1.0])
    p, hom = lift(DIRICHLET)
    assert not np.any(p.coeffs) and hom == DIRICHLET


@given(values=st.lists(st.integers(-50, 50), min_size=3, max_size=3))
def test_lift_meets_values(values):
    cons = [E(-1, 0, values[0]), E(1, 1, values[1]), E(-1, 2, values[2])]
    p, _ = lift(cons)
    assert len(p) <= 3
    for c in cons:
        assert c.apply(p) == pytest.approx(c.value, abs=1e-12)


def test_lift_escalates_and_fails():
    # u'(1) = 1, u''(1) = 1 needs degree 2 even though N = 2
    p, _ = lift([E(1, 1, 1.0), E(1, 2, 1.0)])
    assert E(1, 1).apply(p) == pytest.approx(1) and E(1, 2).apply(p) == pytest.approx(1)
    with pytest.raises(UnliftableConstraints):
        lift([E(1, 0, 1.0), E(1, 0, 2.0)])


# ---------------------------------------------------------------- L

def test_assemble_L_second_derivative():
    problem = OdeProblem([0, 0, 1], [0], DIRICHLET)
    L = assemble_L(problem, 8).trim(0.0)
    assert L.bandwidths == (0, 2)
    np.testing.assert_array_equal(L.diag(2), [4, 6, 8, 10, 12, 14])
    assert not np.any(L.diag(0)) and not np.any(L.diag(1))


def test_assemble_L_first_order():
    problem = OdeProblem([1, 1], [0], [E(1, 0)])
    L = assemble_L(problem, 6).to_dense()
    np.testing.assert_allclose(np.diag(L), [1, 0.5, 0.5, 0.5, 0.5, 0.5])
    np.testing.assert_allclose(np.diag(L, 1), [1, 2, 3, 4, 5])
    np.testing.assert_allclose(np.diag(L, 2), -0.5)


def test_assemble_L_airy_like():
    eps = 1e-3
    problem = OdeProblem([[0, -1], 0, eps], [0], DIRICHLET)
    size = 30
    P = size + 10
    expected = (diff_op(2, P) * eps + conv_op(1, P) @ conv_op(0, P) @ mult_op_T([0, -1], P)).truncate(size)
    np.testing.assert_allclose(assemble_L(problem, size).to_dense(), expected.to_dense(), atol=1e-15)
    np.testing.assert_allclose(assemble_L(problem, size, nested=False).to_dense(), expected.to_dense(),
                               atol=1e-15)


@given(seed=st.integers(0, 2**32 - 1), N=st.integers(1, 5))
def test_nested_equals_plain(seed, N):
    r = np.random.default_rng(seed)
    coeffs = [r.standard_normal(r.integers(1, 6)) for _ in range(N + 1)]
    problem = OdeProblem(coeffs, [1.0], [E(1, p) for p in range(N)])
    a = assemble_L(problem, 40).to_dense()
    b = assemble_L(problem, 40, nested=False).to_dense()
    assert np.max(np.abs(a - b)) <= 1e-12 * np.max(np.abs(a))


@pytest.mark.parametrize("N", [1, 2, 3])
def test_assemble_L_applies_the_operator(N, rng):
    coeffs = [rng.standard_normal(3) for _ in range(N + 1)]
    problem = OdeProblem(coeffs, [0], [E(1, p) for p in range(N)])
    u = rng.standard_normal(12)
    size = 30
    Lu = assemble_L(problem, size) @ np.pad(u, (0, size - 12))
    x = np.cos(np.linspace(0, np.pi, 40))
    ref = sum(npcheb.chebval(x, a) * cheb_values(u, x, k) for k, a in enumerate(coeffs))
    np.testing.assert_allclose(gegenbauer_values(Lu, N, x), ref, atol=1e-10 * np.max(np.abs(ref)))


# ---------------------------------------------------------------- A and f

def test_A_entry_for_dirichlet_laplacian():
    problem = OdeProblem([0, 0, 1], [1.0], DIRICHLET)
    R, Q = stencils(problem, 1, normalize="anchor")
    A = assemble_A(problem, R, Q, 1)
    assert A.to_dense()[0, 0] == pytest.approx(-15 * math.pi, rel=1e-14)
    f = project_rhs(problem.rhs, Q, 1)
    assert f[0] == pytest.approx(-15 * math.pi / 4, rel=1e-14)


def test_zero_operator_rejected():
    with pytest.raises(ValueError):
        OdeProblem([0, 0, 0], [1.0], DIRICHLET)


def test_project_rhs_zero():
    problem = OdeProblem([0, 0, 1], [0.0], DIRICHLET)
    _, Q = stencils(problem, 5)
    assert not np.any(project_rhs(problem.rhs, Q, 5))


def test_A_first_derivative_against_quadrature():
    problem = OdeProblem([0, 1], [0], [E(1, 0)])
    n = 8
    R, Q = stencils(problem, n)
    A = assemble_A(problem, R, Q, n).to_dense()
    ref = pg_matrix_oracle(problem, R.image.to_dense(), Q.image.to_dense(), n)
    assert np.max(np.abs(A - ref)) < 1e-8


def test_project_rhs_against_quadrature(rng):
    problem = OdeProblem([0, 0, 1], rng.standard_normal(10), DIRICHLET)
    n = 16
    _, Q = stencils(problem, n)
    Qd = Q.image.to_dense()
    psi = lambda x: np.stack([gegenbauer_values(Qd[:, i], 2, x) for i in range(n)], axis=1)
    g = lambda x: npcheb.chebval(x, problem.rhs.coeffs)[:, None]
    ref = cc_matrix(psi, g, lambda x: np.clip(1 - x * x, 0, None) ** 1.5)[:, 0]
    np.testing.assert_allclose(project_rhs(problem.rhs, Q, n), ref, atol=1e-9)


def _random_problem(r):
    N = int(r.integers(1, 4))
    coeffs = [r.standard_normal(r.integers(1, 6)) for _ in range(N + 1)]
    coeffs[-1][0] += 3.0
    pool = [E(s, p) for p in range(N) for s in (-1, 1)]
    idx = r.choice(len(pool), N, replace=False)
    return OdeProblem(coeffs, r.standard_normal(4), [pool[i] for i in sorted(idx)])


@given(seed=st.integers(0, 2**32 - 1))
def test_A_matches_quadrature_oracle(seed):
    r = np.random.default_rng(seed)
    problem = _random_problem(r)
    n = int(r.integers(1, 13))
    try:
        R, Q = stencils(problem, n)
    except SingularStencil:
        assume(False)
    A = assemble_A(problem, R, Q, n).to_dense()
    ref = pg_matrix_oracle(problem, R.image.to_dense(), Q.image.to_dense(), n)
    assert np.max(np.abs(A - ref)) < 1e-8


# ---------------------------------------------------------------- solve

def test_solve_poisson_exact():
    problem = OdeProblem([0, 0, 1], [2.0], DIRICHLET)
    sol = solve(problem, 4)
    np.testing.assert_allclose(sol.u.coeffs[:3], [-0.5, 0, 0.5], atol=1e-14)
    assert np.max(np.abs(sol.u.coeffs[3:])) < 1e-14
    x = np.linspace(-1, 1, 11)
    np.testing.assert_allclose(sol(x), x * x - 1, atol=1e-14)


def test_solve_third_order_manufactured(bundled):
    sol = solve(bundled["taylor"], 40)
    assert l2_error(sol.u, lambda x: np.exp((x * x - 1) / 2)) < 1e-12


@pytest.mark.parametrize("method", ["pg", "pg-usq"])
def test_usq_and_pg_agree(bundled, method):
    sol = solve(bundled["taylor"], 48, method=method)
    assert sol.diagnostics["error_if_reference"] < 1e-12


@pytest.mark.parametrize("name", ["poisson", "taylor", "airy", "tenth"])
def test_bandwidths_independent_of_n(bundled, name):
    problem = bundled[name]
    method = "pg-usq" if name == "tenth" else "pg"
    seen = {tuple(solve(problem, n, method=method).diagnostics["bandwidths"]) for n in (256, 512, 1024, 2048)}
    assert len(seen) == 1
    lo, up = seen.pop()
    m, N = problem.m, problem.order
    assert lo <= m + N and up <= m + 3 * N


@pytest.mark.parametrize("name", ["poisson", "taylor", "tenth"])
def test_constraints_and_residual(bundled, name):
    problem = bundled[name]
    for n in (32, 100):
        sol = solve(problem, n, method="pg-usq" if name == "tenth" else "pg")
        scale = np.max(np.abs(sol(np.linspace(-1, 1, 201))))
        for c in problem.constraints:
            assert abs(c.apply(sol.u) - c.value) <= 1e-10 * max(scale, 1.0)
        A = sol.A
        bound = n * np.finfo(float).eps * A.norm_inf() * np.max(np.abs(sol.v))
        assert sol.diagnostics["residual"] <= bound


def test_spectral_convergence():
    u = lambda x: np.exp(np.sin(3 * x))
    g = lambda x: (9 * np.cos(3 * x) ** 2 - 9 * np.sin(3 * x) + 3 * x * np.cos(3 * x) + 1) * u(x)
    problem = OdeProblem.from_functions([1.0, lambda x: x, 1.0], g,
                                        [E(-1, 0, u(-1.0)), E(1, 0, u(1.0))], exact=u)
    errs = [solve(problem, n).diagnostics["error_if_reference"] for n in (8, 16, 32, 64)]
    rates = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert rates[0] < rates[1] < rates[2]
    assert errs[-1] < 1e-13


def test_lu_and_qr_paths_agree(bundled):
    a = solve(bundled["taylor"], 64)
    b = solve(bundled["taylor"], 64, solver="qr")
    np.testing.assert_allclose(a.u.coeffs, b.u.coeffs, atol=1e-13)


def test_method_rejected():
    with pytest.raises(ValueError):
        solve(OdeProblem([0, 1], [1], [E(1, 0)]), 4, method="spectral")


@pytest.mark.slow
def test_linear_time_airy(bundled):
    problem = bundled["airy"]
    solve(problem, 10_000)

    def t(n):
        runs = []
        for _ in range(5):
            d = solve(problem, n).diagnostics
            runs.append(d["t_construct_s"] + d["t_solve_s"])
        return float(np.median(runs))

    times = [t(n) for n in (100_000, 200_000, 400_000)]
    assert times[1] / times[0] <= 2.5 and times[2] / times[1] <= 2.5


# ---------------------------------------------------------------- error and export

def test_l2_error_examples():
    u = ChebSeries([0.3, -1.0, 2.0])
    assert l2_error(u, u) < 1e-14
    assert l2_error(ChebSeries([0.0, 1.0]), ChebSeries([0.0])) == pytest.approx(math.sqrt(2 / 3), rel=1e-14)
    assert l2_error(ChebSeries([0.0, 0.0, 1.0]), lambda x: 0 * x) == pytest.approx(math.sqrt(14 / 15), rel=1e-14)
    assert l2_error(ChebSeries([1.0]), np.cos) == pytest.approx(
        math.sqrt(3 - 4 * math.sin(1) + math.sin(2) / 2), rel=1e-12)


def test_export(tmp_path):
    problem = OdeProblem([0, 0, 1], [2.0], DIRICHLET, exact=lambda x: x * x - 1)
    sol = solve(problem, 6)
    paths = export_solution(tmp_path / "sol", sol)
    assert all(p.exists() for p in map(type(tmp_path), paths))
    write_diagnostics(tmp_path / "d.jsonl", sol)
    write_diagnostics(tmp_path / "d.jsonl", sol)
    lines = (tmp_path / "d.jsonl").read_text().splitlines()
    assert len(lines) == 2
    rec = json.loads(lines[0])
    assert {"n", "bandwidths", "t_construct_s", "t_solve_s", "residual", "error_if_reference"} <= set(rec)
    assert rec["error_if_reference"] < 1e-14
