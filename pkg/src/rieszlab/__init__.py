"""rieszlab: a numerical laboratory for rank-one flow towers and
generalized Riesz products on the real line.

Modules
-------
tower       cutting-and-stacking towers for four spacer families
trigpoly    real-frequency trigonometric polynomials and Dirichlet kernels
fejerquad   oscillation-aware quadrature against the Fejer weight
riesz       partial Riesz products, word multisets, ratio diagnostics
criteria    singularity / absolute-continuity diagnostics
stochastic  keyed randomness, CLT experiments, KS machinery
expsum      exponential-staircase sums and stationary-phase bounds
labcli      config-driven experiment runner
"""

from . import criteria, expsum, fejerquad, riesz, stochastic, tower, trigpoly

__all__ = ["criteria", "expsum", "fejerquad", "riesz", "stochastic",
           "tower", "trigpoly"]
__version__ = "0.1.0"
