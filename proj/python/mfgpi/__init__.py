"""Regenerative policy iteration for finite-horizon mean-field games."""

from ._mfgpi import (
    METRICS_HEADER,
    CompatibilityError,
    ConfigError,
    DivergenceError,
    IntegrationError,
    MeasureError,
    MetricError,
    MfgpiError,
    Reference,
    ReferenceError,
    RunConfig,
    Session,
    ShapeError,
    evaluate,
    export_reference,
    relative_cost,
    relative_errors,
    rk_integrate,
    run,
)

__all__ = [
    "METRICS_HEADER",
    "CompatibilityError",
    "ConfigError",
    "DivergenceError",
    "IntegrationError",
    "MeasureError",
    "MetricError",
    "MfgpiError",
    "Reference",
    "ReferenceError",
    "RunConfig",
    "Session",
    "ShapeError",
    "evaluate",
    "export_reference",
    "relative_cost",
    "relative_errors",
    "rk_integrate",
    "run",
]
