"""Singularities and impasse points of scalar quasi-linear ordinary differential equations."""
from .expr import parse, evaluate, diff, simplify, to_str
from .jet import (JetPoint, ImplicitEq, QuasiLinearEq, contact_trans, contact_vert,
                  formal_derivative, compute_h, prolong)
from .kernel import BACKEND

__version__ = "0.1.0"

__all__ = ["parse", "evaluate", "diff", "simplify", "to_str", "JetPoint", "ImplicitEq",
           "QuasiLinearEq", "contact_trans", "contact_vert", "formal_derivative", "compute_h",
           "prolong", "BACKEND", "__version__"]
