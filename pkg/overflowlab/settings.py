import logging
import os
from dataclasses import dataclass, replace
from typing import Mapping, Optional

_LOGGER = logging.getLogger(__name__)

MAX_STATES_ENV = "OVERFLOWLAB_MAX_STATES"


@dataclass(frozen=True)
class SolverSettings:
    """
    Knobs of the exact first-passage solver.

    Parameters:
        max_states: Largest state space `enumerate_states` accepts
        tolerance: Relative residual at which Gauss-Seidel stops
        max_sweeps: Gauss-Seidel sweep limit
        direct_limit: Systems with at most this many unknowns are solved directly
        max_cap_doublings: How often non-target truncation caps may be doubled
    """

    max_states: int = 5_000_000
    tolerance: float = 1e-12
    max_sweeps: int = 1_000_000
    direct_limit: int = 2000
    max_cap_doublings: int = 12

    @classmethod
    def from_env(cls, environ: Optional[Mapping[str, str]] = None, **overrides) -> "SolverSettings":
        environ = os.environ if environ is None else environ
        settings = cls(**overrides)
        raw = environ.get(MAX_STATES_ENV)
        if raw:
            try:
                max_states = int(raw)
            except ValueError:
                raise ValueError(f"{MAX_STATES_ENV} must be an integer, got {raw!r}")
            if max_states <= 0:
                raise ValueError(f"{MAX_STATES_ENV} must be positive, got {max_states}")
            _LOGGER.debug("State limit overridden from environment: %d", max_states)
            settings = replace(settings, max_states=max_states)
        return settings
