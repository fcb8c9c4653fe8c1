"""Integral equations u = I_alpha(u^p) on locally conformally flat quotients
Omega(Gamma)/Gamma of the sphere, discretized on a fundamental domain."""
from .geometry import (CylinderMetric, DiscretizedManifold, RoundMetric, SolutionField,
                       build_chart, pushdown, unfold)
from .kernel import KernelMatrix, TailToleranceError, assemble
from .mobius import (INF, KleinianGroup, MoebiusMap, apply, compose, deriv_euclidean,
                     dilation_group, exponent_estimate, inverse, load_group,
                     poincare_partial_sum, trivial_group)
from .riesz import ProblemSpec, Tolerances, bubble, riesz_constant
from .solver import SolveReport, apply_I, apply_P, solve, yamabe_alpha

__version__ = "0.1.0"
