"""Scan-adaptive Cartesian undersampling design for dynamic (cine) MRI."""

from .types import (
    CineSeries,
    CoilSensitivities,
    MultiCoilKSpace,
    RbIcdParams,
    ReconParams,
    SamplingMask,
    validate_pairing,
)

__version__ = "0.1.0"

__all__ = [
    "CineSeries",
    "CoilSensitivities",
    "MultiCoilKSpace",
    "RbIcdParams",
    "ReconParams",
    "SamplingMask",
    "validate_pairing",
]
