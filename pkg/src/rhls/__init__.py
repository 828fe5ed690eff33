"""Numerical laboratory for the reverse Hardy-Littlewood-Sobolev inequality.

Radial densities on R^N, the interaction energy with kernel |x-y|^lam, the
relaxed minimization of the reverse HLS quotient, closed-form constants and
the aggregation-diffusion gradient flow.
"""
from .params import Existence, Params, Regime, SignClass, Validity, alpha, classify

__version__ = "0.1.0"

__all__ = ["Params", "Regime", "Validity", "SignClass", "Existence", "alpha", "classify", "__version__"]
