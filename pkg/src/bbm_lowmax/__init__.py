"""Rate functions, oracles and simulations for branching Brownian motion
conditioned on a low maximum."""

from .rates import (
    RHO,
    SQRT2,
    DomainError,
    RateEvaluation,
    Region,
    RegimeLabel,
    RegimeThresholds,
    Theorem,
    psi,
    psi1,
    psi2,
    psi3,
    psi4,
    rate,
    thresholds,
    typical_max,
)

__version__ = "0.1.0"
