"""Fake-stationary simulation of scaled stochastic Volterra equations.

Modules
-------
specfun
    Mittag-Leffler functions, resolvent densities, gamma and beta helpers.
kernel
    Convolution kernels, resolvent tables and product-integration convolution.
stabilizer
    Series and discrete solutions of the variance-stabilizing equation.
sde
    Covariance assembly, LDL^T factorization and the semi-integrated Euler scheme.
stats
    Moment estimators, fake-regime targets, long-run autocovariance, confluence.
cli
    ``fakestat`` command line front end.
"""

from .kernel import (
    AccuracyError,
    Constant,
    Fractional,
    Gamma,
    ResolventTable,
    TimeGrid,
    build_resolvent,
    convolve,
    resolvent_residual,
)
from .sde import (
    ConstantSigma,
    IndefiniteError,
    Normal,
    PathEnsemble,
    Point,
    SimConfig,
    SimulationError,
    TanhDegenerate,
    Trinomial,
    Uniform,
    assemble_covariance,
    ldl_factorize,
    simulate,
)
from .specfun import ConvergenceError, e_alpha, mittag_leffler
from .stabilizer import PrecisionError, StabilizerFunction, build_stabilizer, stabilizer_series
from .stats import confluence, empirical_autocov, fake_regime_targets, longrun_autocov, moments

__version__ = "0.1.0"

__all__ = [
    "AccuracyError",
    "Constant",
    "ConstantSigma",
    "ConvergenceError",
    "Fractional",
    "Gamma",
    "IndefiniteError",
    "Normal",
    "PathEnsemble",
    "Point",
    "PrecisionError",
    "ResolventTable",
    "SimConfig",
    "SimulationError",
    "StabilizerFunction",
    "TanhDegenerate",
    "TimeGrid",
    "Trinomial",
    "Uniform",
    "assemble_covariance",
    "build_resolvent",
    "build_stabilizer",
    "confluence",
    "convolve",
    "e_alpha",
    "empirical_autocov",
    "fake_regime_targets",
    "ldl_factorize",
    "longrun_autocov",
    "mittag_leffler",
    "moments",
    "resolvent_residual",
    "simulate",
    "stabilizer_series",
]
