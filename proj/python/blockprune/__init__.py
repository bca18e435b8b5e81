"""Block-wise post-training pruning of linear layers."""

from ._core import (
    DEFAULT_DAMPING,
    DEFAULT_OUTLIER_FRACTION,
    ConfigError,
    DataError,
    DimensionError,
    Error,
    NumericalError,
    constrained_lsq,
    hessian,
    loss,
    prune,
    read_tensor,
    row_norms,
    row_update,
    write_tensor,
)

__all__ = [
    "DEFAULT_DAMPING",
    "DEFAULT_OUTLIER_FRACTION",
    "ConfigError",
    "DataError",
    "DimensionError",
    "Error",
    "NumericalError",
    "constrained_lsq",
    "hessian",
    "loss",
    "prune",
    "read_tensor",
    "row_norms",
    "row_update",
    "write_tensor",
]
