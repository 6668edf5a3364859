"""Sparse-view spectral CT reconstruction toolkit."""

from .core import (DomainError, EnergyGrid, NumericalFailure, ScaleReference, SpectralImage, SpectralSinogram,
                   rescale_from_unit, scale_to_unit, sinogram_from_counts)
from .projector import ScanGeometry, parallel_geometry

__version__ = "0.1.0"

__all__ = [
    "DomainError", "EnergyGrid", "NumericalFailure", "ScaleReference", "ScanGeometry", "SpectralImage",
    "SpectralSinogram", "parallel_geometry", "rescale_from_unit", "scale_to_unit", "sinogram_from_counts",
]
