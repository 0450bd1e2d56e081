"""Free-surface compressible Navier-Stokes simulator on a flattened chart."""
from __future__ import annotations

from .errors import ConfigError, ContractError, HealthError, PhysicalValidityError

__version__ = "0.1.0"

__all__ = ["ConfigError", "ContractError", "HealthError", "PhysicalValidityError", "__version__"]
