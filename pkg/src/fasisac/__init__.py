"""
SCNR maximization for a MIMO ISAC base station whose receive antennas can
move inside a square region.

The precoder and the antenna positions are optimized alternately, each by
minorize-maximize iterations; three fixed-geometry baselines and a Monte-Carlo
harness are included.
"""
from .ao import SolverConfig, SolveTrace, check_constraints, solve
from .baselines import BaselineResult, run_aps, run_fpa, run_rula
from .exceptions import (ConfigError, DegenerateDeltaError, FasIsacError, InfeasibleError,
                         NoFeasibleAngleError)
from .model import ArrayGeometry, Channels, Scenario

__version__ = "0.1.0"

__all__ = [
    "ArrayGeometry", "Scenario", "Channels", "SolverConfig", "SolveTrace", "solve",
    "check_constraints", "BaselineResult", "run_fpa", "run_rula", "run_aps",
    "FasIsacError", "InfeasibleError", "DegenerateDeltaError", "NoFeasibleAngleError",
    "ConfigError",
]
