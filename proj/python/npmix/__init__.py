"""Kernel-weighted mixtures of Gaussian graphical models."""

from ._core import (
    AllInitializationsFailed,
    DegenerateScatter,
    DimensionMismatch,
    EmptyGrid,
    InvalidInput,
    NpmixError,
    NotPositiveDefinite,
    adjacent_identity_rate,
    finite_mixture_fit,
    fit,
    glasso,
    kernel_constants,
    kkt_residual,
    presets,
    report,
    sample,
    select,
    semiparametric_fit,
    time_varying_fit,
    truth,
)

__all__ = [name for name in dir() if not name.startswith("_")]
