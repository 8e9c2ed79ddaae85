"""Banded Petrov-Galerkin spectral solver for linear ODEs on [-1, 1]."""

from .errors import *  # noqa: F401,F403
from .funapprox import ChebSeries, ChebyshevT, Jacobi, Ultraspherical, approximate, evaluate
from .banded import BandedMatrix, band_lu_solve, band_qr_solve
from .recombine import EndpointDeriv, Custom, Stencil, build_stencil
from .pgsolve import OdeProblem, PgSolution, solve, l2_error

__version__ = "0.1.0"
