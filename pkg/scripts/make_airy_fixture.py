"""Generate the Airy reference fixture with mpmath.

Samples u(x) = Ai(x / eps**(1/3)) at the Chebyshev points cos(pi*j/M),
j = 0..M, at 30 significant digits and writes them rounded to doubles.
"""

import argparse
from pathlib import Path

import mpmath
import numpy as np


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--eps", default="1e-9")
    parser.add_argument("--points", type=int, default=2**15)
    parser.add_argument(
        "--out",
        type=Path,
        default=Path(__file__).resolve().parents[1] / "src/specband/data/airy_reference.txt",
    )
    args = parser.parse_args()

    mpmath.mp.dps = 30
    scale = mpmath.mpf(args.eps) ** (-mpmath.mpf(1) / 3)
    M = args.points
    with open(args.out, "w") as fh:
        fh.write(f"# Ai(x*eps^(-1/3)), eps={args.eps}, x_j=cos(pi*j/{M}), j=0..{M}\n")
        for j in range(M + 1):
            x = mpmath.cos(mpmath.pi * j / M)
            fh.write(repr(float(mpmath.airyai(scale * x))) + "\n")
    print(np.loadtxt(args.out)[[0, -1]])


if __name__ == "__main__":
    main()
