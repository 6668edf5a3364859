"""Shared domain types, energy grid and attenuation scaling helpers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_MU_CAP = 20.0
CADMIUM_MAX_ATTENUATION = 7.66  # cm^-1, Cd at 26 keV


class DomainError(ValueError):
    """Input outside the mathematical domain of an operation."""


class NumericalFailure(RuntimeError):
    """A solver or training loop produced non-finite or diverging values."""


@dataclass(frozen=True)
class EnergyGrid:
    """Channel midpoint energies in keV."""

    energies_keV: tuple[float, ...]

    def __post_init__(self):
        e = np.asarray(self.energies_keV, dtype=float)
        if e.ndim != 1 or e.size < 1:
            raise ValueError("energy grid needs at least one channel")
        if np.any(np.diff(e) <= 0):
            raise ValueError("energies must be strictly increasing")
        object.__setattr__(self, "energies_keV", tuple(float(v) for v in e))

    @classmethod
    def uniform(cls, num_channels: int = 32, low: float = 20.0, high: float = 108.2) -> "EnergyGrid":
        if num_channels == 1:
            return cls((low,))
        return cls(tuple(np.linspace(low, high, num_channels)))

    @property
    def num_channels(self) -> int:
        return len(self.energies_keV)

    @property
    def energies(self) -> np.ndarray:
        return np.asarray(self.energies_keV)

    def nearest_channel(self, energy_keV: float) -> int:
        return int(np.argmin(np.abs(self.energies - energy_keV)))


@dataclass
class SpectralImage:
    """S x N x N attenuation map in cm^-1."""

    data: np.ndarray
    pixel_size_cm: float = 0.1

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3:
            raise ValueError(f"expected S x H x W array, got shape {self.data.shape}")
        if self.pixel_size_cm <= 0:
            raise ValueError("pixel_size_cm must be positive")

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass
class SpectralSinogram:
    """S x V x D line integrals with their view angles."""

    data: np.ndarray
    angles_rad: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        self.angles_rad = np.asarray(self.angles_rad, dtype=np.float64)
        if self.data.ndim != 3:
            raise ValueError(f"expected S x V x D array, got shape {self.data.shape}")
        if self.angles_rad.shape != (self.data.shape[1],):
            raise ValueError("one angle per view required")
        if np.any(self.angles_rad < 0) or np.any(self.angles_rad >= 2 * np.pi):
            raise ValueError("angles must lie in [0, 2pi)")

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def views(self) -> int:
        return self.data.shape[1]

    @property
    def bins(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class ScaleReference:
    max_attenuation: float = CADMIUM_MAX_ATTENUATION

    def __post_init__(self):
        if not self.max_attenuation > 0:
            raise DomainError("max_attenuation must be strictly positive")


def sinogram_from_counts(transmitted, incident, mu_cap: float = DEFAULT_MU_CAP) -> np.ndarray:
    """Line integrals ``-ln(I / I0)`` from photon counts.

    Zero transmitted counts would give an infinite line integral; those
    entries are set to ``mu_cap`` instead so downstream FFT filtering
    stays finite.
    """
    transmitted = np.asarray(transmitted, dtype=np.float64)
    incident = np.asarray(incident, dtype=np.float64)
    if transmitted.shape != incident.shape:
        raise ValueError(f"shape mismatch: {transmitted.shape} vs {incident.shape}")
    if np.any(incident <= 0):
        raise DomainError("incident counts must be positive")
    if np.any(transmitted < 0):
        raise DomainError("transmitted counts must be non-negative")
    with np.errstate(divide="ignore"):
        mu = -np.log(transmitted / incident)
    return np.minimum(mu, mu_cap)


def _check_finite(data: np.ndarray):
    if not np.all(np.isfinite(data)):
        raise DomainError("non-finite attenuation values")


def scale_to_unit(img: SpectralImage, ref: ScaleReference = ScaleReference()) -> SpectralImage:
    # no clipping here: values above the reference pass through
    _check_finite(img.data)
    return SpectralImage(img.data / ref.max_attenuation, img.pixel_size_cm)


def rescale_from_unit(img: SpectralImage, ref: ScaleReference = ScaleReference()) -> SpectralImage:
    _check_finite(img.data)
    return SpectralImage(img.data * ref.max_attenuation, img.pixel_size_cm)

