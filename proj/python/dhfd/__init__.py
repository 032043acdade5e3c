"""Early fault detection for district heating substations."""

from ._dhfd import (
    Error,
    attribute,
    detect,
    earliness,
    evaluate,
    f_beta,
    latent_dim,
    run_criticality,
    synth,
    train,
    tune,
    validate,
    validate_window,
)

__all__ = [
    "Error",
    "attribute",
    "detect",
    "earliness",
    "evaluate",
    "f_beta",
    "latent_dim",
    "run_criticality",
    "synth",
    "train",
    "tune",
    "validate",
    "validate_window",
]
