"""
.. include:: ../README.md
"""
from .network import NetworkSpec, TargetSpec, ValidatedNetwork, target_params, validate
from .splitting import LevelScheme, SplitOutcome, build_levels, estimate, run_splitting
from .exact import overflow_probability

__all__ = [
    "LevelScheme",
    "NetworkSpec",
    "SplitOutcome",
    "TargetSpec",
    "ValidatedNetwork",
    "build_levels",
    "estimate",
    "overflow_probability",
    "run_splitting",
    "target_params",
    "validate",
]
__version__ = "0.1.0"
