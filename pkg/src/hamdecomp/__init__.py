"""hamdecomp: certified atom decompositions under area-preserving plane maps.

The package builds explicit decompositions of compactly supported smooth
functions into pullbacks of a fixed three-atom family by Hamiltonian plane
maps, tracks the l1 coefficient mass of every decomposition, and turns the
construction into certified upper bounds for invariant norms together with
sup-norm dominance checks.
"""

from .expr import ExprError, ExprFn, K_MAX, differentiate, parse_expr

__version__ = "0.1.0"

__all__ = [
    "ExprError",
    "ExprFn",
    "K_MAX",
    "differentiate",
    "parse_expr",
    "__version__",
]
