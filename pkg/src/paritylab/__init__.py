"""Sparse-parity separation lab: a ReLU6 network trained by gradient descent
against fixed-embedding linear methods, plus executable versions of the
supporting lemmas."""
from .errors import (
    CapacityError,
    ConfigError,
    IdxParseError,
    InvalidInputError,
    NumericError,
    ParityLabError,
    ScheduleError,
    SeparatorInfeasibleError,
)
from .net import TwoLayerNet, init_symmetric, population_gradient
from .parity import EXACT, Empirical, MonteCarlo, ParityTask, hardness_bound
from .train import standard_schedule, train

__version__ = "0.1.0"
