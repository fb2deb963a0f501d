"""Numerical verification tools for Calabi and centroaffine surface geometry."""
from .errors import *  # noqa: F401,F403
from .evaluate import eval_values, jet_eval
from .jet import Jet, multi_indices
from .program import Program, parse, serialize
from .quadrature import QuadratureResult, quad_integrate

__version__ = "0.1.0"
