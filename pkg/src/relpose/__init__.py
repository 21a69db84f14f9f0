"""Relative pose-velocity estimation between two IMU-equipped rigid bodies."""

from relpose.errors import (
    ConfigError,
    DegenerateRange,
    InsufficientTrace,
    LeadingBlockSingular,
    NonPositiveP,
    NonSkewInput,
    NonUnitInput,
    RelposeError,
    SingularGamma,
    SingularLambdaPi,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DegenerateRange",
    "InsufficientTrace",
    "LeadingBlockSingular",
    "NonPositiveP",
    "NonSkewInput",
    "NonUnitInput",
    "RelposeError",
    "SingularGamma",
    "SingularLambdaPi",
]
