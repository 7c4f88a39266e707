"""Compositional stability certificates for structure-preserving power-system DAEs."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .kernels import BACKEND  # noqa: F401
