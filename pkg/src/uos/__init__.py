"""Recovery of signals from unlabeled, order-preserving linear samples."""
from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .core import (InvalidArgumentError, OrderedSelection, SignalPair, UosInstance,
                   apply_selection, cost, gaussian_matrix, lift_up, make_instance, parse_snr,
                   random_selection, signal_distance, similarity)
from .matching import DpTable, backtrack, fill_table, project_selection
from .altmin import (AltMinConfig, SolveReport, altmin_solve, certify, genie_init,
                     solve_with_restarts)

__all__ = [
    "__version__",
    "InvalidArgumentError",
    "OrderedSelection",
    "SignalPair",
    "UosInstance",
    "apply_selection",
    "cost",
    "gaussian_matrix",
    "lift_up",
    "make_instance",
    "parse_snr",
    "random_selection",
    "signal_distance",
    "similarity",
    "DpTable",
    "backtrack",
    "fill_table",
    "project_selection",
    "AltMinConfig",
    "SolveReport",
    "altmin_solve",
    "certify",
    "genie_init",
    "solve_with_restarts",
]
