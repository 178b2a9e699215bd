"""Tightly-coupled UWB-IMU toolkit: sensor simulation, observability and
temporal-offset identifiability analysis, determinant-lemma verification, and
an error-state Kalman filter that estimates the inter-sensor temporal offset
and lever arm alongside the navigation states."""

__version__ = "0.1.0"

from .errors import ConfigError, NumericalFailure

__all__ = ["ConfigError", "NumericalFailure", "__version__"]
