"""Monte Carlo and numerical checks for the tail of the maximum of a critical
weighted branching process, R = max over vertices of L(v) B(v)."""

from .model import CalibrationError, CriticalModel, calibrate_critical, validate_assumptions
from .tree_sim import SimConfig, simulate_R_batch

__all__ = ["CalibrationError", "CriticalModel", "SimConfig", "calibrate_critical", "simulate_R_batch",
           "validate_assumptions"]
__version__ = "0.1.0"
