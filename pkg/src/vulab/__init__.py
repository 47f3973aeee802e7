"""vulab: a desk-scale numerical laboratory for VU decompositions of
structured nonsmooth functions (tilt stability, localized U-Lagrangians,
second-order subjets, Moreau envelopes and manifold traces)."""

from . import (cli, envelope, errors, manifold, oracle, solvers, subjets,
               tilt, ulagrangian, vu)

__version__ = "0.1.0"

__all__ = ["cli", "envelope", "errors", "manifold", "oracle", "solvers",
           "subjets", "tilt", "ulagrangian", "vu", "__version__"]
