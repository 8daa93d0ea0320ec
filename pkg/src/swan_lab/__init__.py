"""Numerical laboratory for space-weight antisymmetric graph neural ODEs."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    CapacityError,
    ConfigError,
    DisconnectedGraphError,
    GraphError,
    NumericError,
    ShapeError,
    SwanLabError,
)
from .graph import Graph, ShiftOperator  # noqa: F401
from .model import Hyper, Variant, init_params, model_forward  # noqa: F401
from .tensor import EigenSpectrum, eigen, expm, kron, matmul, vec  # noqa: F401
