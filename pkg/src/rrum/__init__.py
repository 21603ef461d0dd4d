"""Bayesian estimation of the Reduced RUM by Metropolis-within-Gibbs sampling."""

__version__ = "0.1.0"

from .errors import ValidationError  # noqa: E402
from .model import ItemParams, irf, params_from_slip_guess  # noqa: E402
from .patterns import (  # noqa: E402
    QMatrix,
    check_complete,
    enumerate_patterns,
    index_to_pattern,
    load_matrix_csv,
    pattern_to_index,
    save_matrix_csv,
)
from .sampler import ChainConfig, ChainDraws, run_chain  # noqa: E402
from .simulator import SimConfig, simulate  # noqa: E402

__all__ = [
    "ChainConfig",
    "ChainDraws",
    "ItemParams",
    "QMatrix",
    "SimConfig",
    "ValidationError",
    "check_complete",
    "enumerate_patterns",
    "index_to_pattern",
    "irf",
    "load_matrix_csv",
    "params_from_slip_guess",
    "pattern_to_index",
    "run_chain",
    "save_matrix_csv",
    "simulate",
]
