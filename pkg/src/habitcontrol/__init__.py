"""Optimal consumption and investment with addictive habits under a filtered drift.

The package covers Kalman-Bucy filtering of a hidden Ornstein-Uhlenbeck
drift, closed-form solutions of the associated Riccati systems, the explicit
value function and feedback policies, and a Monte-Carlo verification harness.
"""

__version__ = "0.1.0"

from habitcontrol.errors import (  # noqa: E402
    ConfigError,
    DomainError,
    ExplosionError,
    HabitControlError,
    NumericError,
    PolicyError,
    SingularityError,
)
from habitcontrol.params import (  # noqa: E402
    ModelParams,
    RateFunction,
    Regime,
    check_admissibility,
    classify_regime,
    load_config,
)

__all__ = [
    "__version__",
    "ConfigError",
    "DomainError",
    "ExplosionError",
    "HabitControlError",
    "NumericError",
    "PolicyError",
    "SingularityError",
    "ModelParams",
    "RateFunction",
    "Regime",
    "check_admissibility",
    "classify_regime",
    "load_config",
]
