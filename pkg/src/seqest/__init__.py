"""Optimal sequential estimation for linear models.

Subpackages and modules:

* :mod:`seqest.core` -- recursive least squares and Fisher information
* :mod:`seqest.conditional` -- stopping on the realized information matrix
* :mod:`seqest.scalar_dp`, :mod:`seqest.planar_dp` -- unconditional stopping rules by dynamic programming
* :mod:`seqest.ltsnet` -- decentralized estimation with level-triggered sampling
* :mod:`seqest.harness` -- Monte-Carlo experiments and the ``seqest`` command
"""

from . import exceptions
from .conditional import (
    SequentialLeastSquares,
    StoppingConfig,
    StopReport,
    run_conditional,
    should_stop,
    statistic,
    stopping_times,
)
from .core import (
    AccuracyFn,
    FisherState,
    NoiseModel,
    Observation,
    accuracy,
    batch_ls,
    crlb,
    information,
    rls_fit,
    rls_step,
)
from .planar_dp import PlanarStoppingRule, calibrate_lambda, extract_surface, value_iteration_2d
from .quadrature import Quadrature, gauss_hermite, gaussian_grid
from .scalar_dp import (
    UnconditionalScalarRule,
    calibrate_threshold,
    check_value_properties,
    extract_threshold,
    value_iteration_scalar,
)

__version__ = "0.1.0"

__all__ = [
    "AccuracyFn", "FisherState", "NoiseModel", "Observation", "PlanarStoppingRule", "Quadrature",
    "SequentialLeastSquares", "StopReport", "StoppingConfig", "UnconditionalScalarRule",
    "accuracy", "batch_ls", "calibrate_lambda", "calibrate_threshold", "check_value_properties",
    "crlb", "exceptions", "extract_surface", "extract_threshold", "gauss_hermite", "gaussian_grid",
    "information", "rls_fit", "rls_step", "run_conditional", "should_stop", "statistic",
    "stopping_times", "value_iteration_2d", "value_iteration_scalar",
]
