"""Command-line driver: ``specband solve | convergence | mulbench``.

Problem files are plain ``key = value`` text with repeated ``[bc]`` (and
optional ``[test_bc]``) sections; ``#`` starts a comment::

    order = 2
    coeff.2 = 1
    coeff.0 = 0          # missing coefficients are zero
    rhs = 2
    exact = x^2 - 1      # optional: report the L2 error against it
    n = 16
    method = pg          # pg | pg-usq | tau | pg-jacobi

    [bc]
    point = -1
    deriv = 0
    value = 0

    [bc]
    point = 1
    deriv = 0
    value = 0

Other keys: ``alpha``/``beta`` (Jacobi parameters), ``tol`` (coefficient
approximation tolerance), ``reference`` (file of solution samples at the
points cos(pi j / M), j = 0..M, resolved relative to the problem file).
Names of the bundled problems (``poisson``, ``taylor``, ``airy``, ``tenth``)
may be given instead of a path.
"""

from __future__ import annotations

import argparse
import csv
import importlib.resources
import json
import logging
import os
import statistics
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import exprparse
from .chebops import mult_op_k, mult_op_recurrence
from .errors import ExprSyntaxError, NonFiniteSample, ProblemFileError, SpecbandError
from .funapprox import ChebSeries, approximate, coeffs_from_values
from .pgsolve import OdeProblem, export_solution, l2_error, solve
from .recombine import EndpointDeriv

logger = logging.getLogger("specband")

METHODS = ("pg", "pg-usq", "tau", "pg-jacobi")
BUNDLED = ("poisson", "taylor", "airy", "tenth")

EXIT_OK, EXIT_SOLVER, EXIT_INPUT = 0, 1, 2


# ----------------------------------------------------------------------
# problem files
# ----------------------------------------------------------------------

@dataclass
class ProblemFile:
    order: int
    coeffs: dict
    rhs: str
    bcs: list
    test_bcs: list | None = None
    exact: str | None = None
    reference: Path | None = None
    n: int | None = None
    method: str = "pg"
    alpha: float = -0.5
    beta: float = -0.5
    tol: float = 1e-14
    source: Path | None = None
    extra: dict = field(default_factory=dict)


def resolve_problem_path(name) -> Path:
    """A path on disk, or the bundled problem of that name."""
    p = Path(name)
    if p.exists():
        return p
    stem = p.name[: -len(".prob")] if p.name.endswith(".prob") else p.name
    if stem in BUNDLED and p.parent == Path("."):
        with importlib.resources.as_file(importlib.resources.files("specband") / "data" / f"{stem}.prob") as q:
            return Path(q)
    raise ProblemFileError(f"no such problem file: {name}")


def _number(text, line, what):
    try:
        return float(exprparse.evaluate(exprparse.parse(text), 0.0))
    except ExprSyntaxError as exc:
        raise ProblemFileError(f"{what}: {exc}", line) from None


def _integer(text, line, what):
    try:
        return int(text)
    except ValueError:
        raise ProblemFileError(f"{what} must be an integer, got {text!r}", line) from None


def parse_problem_text(text: str, source: Path | None = None) -> ProblemFile:
    top: dict = {}
    sections: list = []  # (name, {key: (value, line)}, line)
    current = top
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ProblemFileError(f"malformed section header {raw.strip()!r}", lineno)
            name = line[1:-1].strip()
            if name not in ("bc", "test_bc"):
                raise ProblemFileError(f"unknown section [{name}]", lineno)
            current = {}
            sections.append((name, current, lineno))
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ProblemFileError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = key.strip(), value.strip()
        if key in current:
            raise ProblemFileError(f"duplicate key {key!r}", lineno)
        current[key] = (value, lineno)

    if "order" not in top:
        raise ProblemFileError("missing key 'order'")
    order = _integer(*top["order"], "order")
    if order < 1:
        raise ProblemFileError("order must be >= 1", top["order"][1])

    coeffs = {}
    for key, (value, lineno) in top.items():
        if key.startswith("coeff."):
            k = _integer(key[6:], lineno, "coefficient index")
            if not 0 <= k <= order:
                raise ProblemFileError(f"coefficient index {k} outside 0..{order}", lineno)
            coeffs[k] = (value, lineno)
    if order not in coeffs:
        raise ProblemFileError(f"missing leading coefficient coeff.{order}")

    def bc_list(kind):
        out = []
        for name, body, lineno in sections:
            if name != kind:
                continue
            stray = sorted(set(body) - {"point", "deriv", "value"})
            if stray:
                raise ProblemFileError(f"unknown key {stray[0]!r} in [{kind}]", body[stray[0]][1])
            for needed in ("point", "deriv"):
                if needed not in body:
                    raise ProblemFileError(f"[{kind}] needs '{needed}'", lineno)
            point = _integer(*body["point"], "point")
            if point not in (-1, 1):
                raise ProblemFileError("point must be -1 or 1", body["point"][1])
            deriv = _integer(*body["deriv"], "deriv")
            value = _number(*body["value"], "value") if "value" in body else 0.0
            out.append(EndpointDeriv(point, deriv, value))
        return out

    bcs = bc_list("bc")
    if len(bcs) != order:
        raise ProblemFileError(f"order {order} needs {order} [bc] sections, found {len(bcs)}")
    test_bcs = bc_list("test_bc") or None
    if test_bcs is not None and len(test_bcs) != order:
        raise ProblemFileError(f"[test_bc] must list {order} conditions, found {len(test_bcs)}")

    def get(key, default=None):
        return top[key][0] if key in top else default

    pf = ProblemFile(order=order, coeffs=coeffs, rhs=get("rhs", "0"), bcs=bcs, test_bcs=test_bcs,
                     exact=get("exact"), source=source)
    if "reference" in top:
        ref = Path(top["reference"][0])
        if source is not None and not ref.is_absolute():
            ref = source.parent / ref
        pf.reference = ref
    if "n" in top:
        pf.n = _integer(*top["n"], "n")
    if "method" in top:
        pf.method = top["method"][0]
        if pf.method not in METHODS:
            raise ProblemFileError(f"method must be one of {', '.join(METHODS)}", top["method"][1])
    for key in ("alpha", "beta", "tol"):
        if key in top:
            setattr(pf, key, _number(*top[key], key))
    known = {"order", "rhs", "exact", "reference", "n", "method", "alpha", "beta", "tol"}
    pf.extra = {k: v for k, (v, _) in top.items() if k not in known and not k.startswith("coeff.")}
    if pf.extra:
        first = min(pf.extra, key=lambda k: top[k][1])
        raise ProblemFileError(f"unknown key {first!r}", top[first][1])
    return pf


def load_problem_file(name) -> ProblemFile:
    path = resolve_problem_path(name)
    return parse_problem_text(path.read_text(), source=path)


def _expr_function(text):
    e = exprparse.parse(text)
    return lambda x: exprparse.evaluate(e, x)


def build_problem(pf: ProblemFile, tol: float | None = None) -> OdeProblem:
    """Turn a problem file into an ``OdeProblem``, approximating each expression adaptively."""
    tol = pf.tol if tol is None else tol
    coeffs = []
    for k in range(pf.order + 1):
        if k in pf.coeffs:
            text, _ = pf.coeffs[k]
            coeffs.append(approximate(_expr_function(text), tol=tol))
        else:
            coeffs.append(ChebSeries([0.0]))
    rhs = approximate(_expr_function(pf.rhs), tol=tol)
    exact = None
    if pf.reference is not None:
        exact = ChebSeries(coeffs_from_values(np.loadtxt(pf.reference)))
    elif pf.exact is not None:
        exact = _expr_function(pf.exact)
    return OdeProblem(tuple(coeffs), rhs, tuple(pf.bcs), test_constraints=pf.test_bcs, exact=exact,
                      name=pf.source.stem if pf.source else "")


def dispatch(problem: OdeProblem, n: int, method: str, alpha=-0.5, beta=-0.5, workers=None):
    if method in ("pg", "pg-usq"):
        return solve(problem, n, method=method, workers=workers)
    if method == "tau":
        from .usbaseline import tau_solve
        return tau_solve(problem, n)
    if method == "pg-jacobi":
        from .jacobiops import jacobi_solve
        return jacobi_solve(problem, n, alpha, beta)
    raise ValueError(f"unknown method {method!r}")


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------

def _settings(pf: ProblemFile, args):
    method = args.method or ("pg-jacobi" if args.basis == "jacobi" else None) or pf.method
    if args.basis == "jacobi" and method != "pg-jacobi":
        raise ProblemFileError("--basis jacobi requires method pg-jacobi")
    alpha = pf.alpha if args.alpha is None else args.alpha
    beta = pf.beta if args.beta is None else args.beta
    return method, alpha, beta


def run_solve(args) -> int:
    pf = load_problem_file(args.problem)
    problem = build_problem(pf, args.tol)
    n = args.n or pf.n
    if n is None:
        raise ProblemFileError("no n given (use --n or an 'n' key)")
    method, alpha, beta = _settings(pf, args)
    sol = dispatch(problem, n, method, alpha, beta, args.parallel)
    record = {"problem": problem.name, **sol.diagnostics}
    if args.out:
        coeff_path, diag_path = export_solution(args.out, sol)
        record["coeffs_file"] = coeff_path
        record["diagnostics_file"] = diag_path
    print(json.dumps(record))
    return EXIT_OK


def _median_time(fn, repeats: int):
    fn()  # warm-up
    times, out = [], None
    for _ in range(repeats):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return statistics.median(times), out


def _int_list(text: str) -> list:
    """``"16,32,64"`` or ``"start:stop:step"`` (stop inclusive)."""
    if ":" in text:
        start, stop, step = (int(t) for t in text.split(":"))
        return list(range(start, stop + 1, step))
    return [int(t) for t in text.split(",") if t.strip()]


def _writer(path):
    fh = open(path, "w", newline="") if path else sys.stdout
    return fh, csv.writer(fh, lineterminator="\n")


def run_convergence(args) -> int:
    """CSV rows ``n, error, t_construct, t_solve, bandwidth_lower, bandwidth_upper``."""
    pf = load_problem_file(args.problem)
    problem = build_problem(pf, args.tol)
    method, alpha, beta = _settings(pf, args)
    fh, w = _writer(args.csv)
    try:
        w.writerow(["n", "error", "t_construct", "t_solve", "bandwidth_lower", "bandwidth_upper"])
        for n in _int_list(args.n_list):
            runs = [dispatch(problem, n, method, alpha, beta, args.parallel) for _ in range(args.repeats + 1)][1:]
            d = runs[-1].diagnostics
            tc = statistics.median(r.diagnostics["t_construct_s"] for r in runs)
            ts = statistics.median(r.diagnostics["t_solve_s"] for r in runs)
            bw = d["bandwidths"] or [None, None]
            err = d["error_if_reference"]
            w.writerow([n, "" if err is None else f"{err:.6e}", f"{tc:.6e}", f"{ts:.6e}", bw[0], bw[1]])
            fh.flush()
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def run_mulbench(args) -> int:
    """CSV rows ``k, m, n, t_fast, t_recur, ratio`` for random ``a`` of degree ``m``."""
    rng = np.random.default_rng(args.seed)
    fh, w = _writer(args.csv)
    try:
        w.writerow(["k", "m", "n", "t_fast", "t_recur", "ratio"])
        for k in _int_list(args.k):
            for m in _int_list(args.m):
                a = ChebSeries(rng.standard_normal(m + 1))
                for n in _int_list(args.n):
                    t_fast, _ = _median_time(lambda: mult_op_k(a, k, n), args.repeats)
                    t_rec, _ = _median_time(lambda: mult_op_recurrence(a, k, n), args.repeats)
                    w.writerow([k, m, n, f"{t_fast:.6e}", f"{t_rec:.6e}", f"{t_rec / t_fast:.3f}"])
                    fh.flush()
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


# ----------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------

def _add_problem_options(p):
    p.add_argument("problem", help="problem file, or a bundled name: " + ", ".join(BUNDLED))
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--basis", choices=("chebyshev", "jacobi"), default="chebyshev")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--tol", type=float, help="coefficient approximation tolerance")
    p.add_argument("--parallel", type=int, metavar="WORKERS", help="build stencil columns in parallel")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specband",
        description="Banded Petrov-Galerkin spectral solver for linear ODEs on [-1, 1].",
        epilog=__doc__.split("\n\n", 1)[1] + "\nExpression grammar:\n" + exprparse.__doc__.split("Grammar", 1)[1],
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one problem")
    _add_problem_options(p)
    p.add_argument("--n", type=int)
    p.add_argument("--out", help="write <OUT>.coeffs and append to <OUT>.jsonl")
    p.set_defaults(func=run_solve)

    p = sub.add_parser("convergence", help="error and timing over a list of n")
    _add_problem_options(p)
    p.add_argument("--n", dest="n_list", default="8,16,32,64", help="comma list or start:stop:step")
    p.add_argument("--csv", help="output file (default stdout)")
    p.add_argument("--repeats", type=int, default=5)
    p.set_defaults(func=run_convergence)

    p = sub.add_parser("mulbench", help="time fast vs recurrence multiplication operators")
    p.add_argument("--k", default="2,10")
    p.add_argument("--m", default="32,64,128")
    p.add_argument("--n", default="10000")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--csv", help="output file (default stdout)")
    p.set_defaults(func=run_mulbench)
    return parser


def _error_record(exc: BaseException) -> str:
    rec = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ExprSyntaxError):
        rec["offset"] = exc.offset
        rec["expected"] = list(exc.expected)
    if isinstance(exc, ProblemFileError):
        rec["line"] = exc.line
    return json.dumps(rec)


def main(argv=None) -> int:
    level = os.environ.get("SPECBAND_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ExprSyntaxError, ProblemFileError, NonFiniteSample, OSError, ValueError) as exc:
        print(_error_record(exc), file=sys.stderr)
        return EXIT_INPUT
    except SpecbandError as exc:
        print(_error_record(exc), file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
