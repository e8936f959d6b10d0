"""Stochastic subgrid closure of the two-layer Lorenz 96 system.

A quantized softmax network (QSN) predicts, per output site, a probability
mass function over bins of the subgrid tendency; the reduced model draws a
bin from it and resamples a recorded training value from that bin.
"""

from qsn.errors import (
    ConfigurationError,
    DegenerateFeatureError,
    InsufficientDataError,
    NumericalError,
    QSNError,
)
from qsn.l96 import (
    BIMODAL,
    UNIMODAL,
    FullState,
    L96Params,
    Trajectory,
    coupling_r,
    generate_trajectory,
    rhs_macro,
    rhs_micro,
)

__version__ = "0.1.0"

__all__ = [
    "BIMODAL",
    "UNIMODAL",
    "ConfigurationError",
    "DegenerateFeatureError",
    "FullState",
    "InsufficientDataError",
    "L96Params",
    "NumericalError",
    "QSNError",
    "Trajectory",
    "coupling_r",
    "generate_trajectory",
    "rhs_macro",
    "rhs_micro",
]
