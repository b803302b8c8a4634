"""
Shared library modules for the cartsim safe-control simulator.
"""

from . import filters
from . import models
from . import policies
from . import utils

__all__ = ["filters", "models", "policies", "utils"]
