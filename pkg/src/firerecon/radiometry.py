"""Black-body emission, gray absorption and spectral-to-RGB integration."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .color import XYZ_TO_RGB
from .errors import ConfigError, DomainError, ShapeError

# CODATA 2018 (exact SI values).
PLANCK_H = 6.62607015e-34  # J s
LIGHT_C = 299792458.0  # m / s
BOLTZMANN_K = 1.380649e-23  # J / K
WIEN_B = 2.897771955e-3  # m K

CMF_ASSET = "cie1931_2deg_5nm.csv"


@dataclass(frozen=True)
class SpectralBins:
    """Uniform wavelength bins; ``centers`` and ``widths`` in metres."""

    lambda_min: float = 380e-9
    lambda_max: float = 780e-9
    n_bins: int = 40

    def __post_init__(self):
        if not self.lambda_min < self.lambda_max:
            raise ConfigError("lambda_min must be smaller than lambda_max")
        if self.n_bins < 3:
            raise ConfigError("at least 3 spectral bins are required")
        if self.lambda_min <= 0:
            raise ConfigError("wavelengths must be positive")

    @property
    def width(self) -> float:
        return (self.lambda_max - self.lambda_min) / self.n_bins

    @property
    def centers(self) -> np.ndarray:
        return self.lambda_min + (np.arange(self.n_bins) + 0.5) * self.width


@dataclass(frozen=True)
class PhysicalRanges:
    t_min: float = 300.0
    t_max: float = 2300.0
    d_min: float = 0.01e27
    d_max: float = 500e27
    s_min: float = 0.01
    s_max: float = 1000.0

    def __post_init__(self):
        for lo, hi in (("t_min", "t_max"), ("d_min", "d_max"), ("s_min", "s_max")):
            a, b = getattr(self, lo), getattr(self, hi)
            if not 0 < a < b:
                raise ConfigError(f"need 0 < {lo} < {hi}, got {a}, {b}")

    @property
    def temperature(self) -> tuple[float, float]:
        return (self.t_min, self.t_max)

    @property
    def density(self) -> tuple[float, float]:
        return (self.d_min, self.d_max)

    @property
    def exposure(self) -> tuple[float, float]:
        return (self.s_min, self.s_max)


@dataclass(frozen=True)
class AbsorptionModel:
    sigma_a: float = 5e-29  # m^2 per particle

    def __post_init__(self):
        if not self.sigma_a > 0:
            raise ConfigError("absorption cross-section must be positive")


def planck_radiance(temperature, wavelength):
    """Black-body spectral radiance in W sr^-1 m^-3 (per metre of wavelength)."""
    t = np.asarray(temperature, dtype=np.float64)
    lam = np.asarray(wavelength, dtype=np.float64)
    if np.any(t <= 0) or np.any(lam <= 0):
        raise DomainError("temperature and wavelength must be positive")
    x = PLANCK_H * LIGHT_C / (lam * BOLTZMANN_K * t)
    with np.errstate(over="ignore"):
        out = 2.0 * PLANCK_H * LIGHT_C**2 / lam**5 / np.expm1(x)
    return out


def absorption_coefficient(density, model: AbsorptionModel = AbsorptionModel()):
    """Absorption coefficient in m^-1 of a gray absorber of the given number density."""
    d = np.asarray(density, dtype=np.float64)
    if np.any(d < 0):
        raise DomainError("density must be non-negative")
    kappa = model.sigma_a * d
    return float(kappa) if kappa.ndim == 0 else kappa


@lru_cache(maxsize=1)
def cmf_table() -> np.ndarray:
    """CIE 1931 2 degree colour matching functions: columns nm, x_bar, y_bar, z_bar."""
    text = resources.files("firerecon").joinpath("data", CMF_ASSET).read_text()
    rows = [line for line in text.splitlines() if line and not line.startswith(("#", "wave"))]
    return np.array([[float(v) for v in row.split(",")] for row in rows])


def cmf_at(wavelength) -> np.ndarray:
    """Colour matching functions at ``wavelength`` (m), shape ``(..., 3)``; zero outside the table."""
    table = cmf_table()
    nm = np.asarray(wavelength, dtype=np.float64) * 1e9
    return np.stack(
        [np.interp(nm, table[:, 0], table[:, c], left=0.0, right=0.0) for c in (1, 2, 3)],
        axis=-1,
    )


@lru_cache(maxsize=16)
def _rgb_weights(bins: SpectralBins) -> np.ndarray:
    xyz = cmf_at(bins.centers) * bins.width
    w = xyz @ XYZ_TO_RGB.T
    w.setflags(write=False)
    return w


def rgb_weights(bins: SpectralBins) -> np.ndarray:
    """``(n_bins, 3)`` matrix mapping per-bin radiance to linear sRGB.

    Midpoint rule in wavelength followed by the XYZ to linear-sRGB matrix.
    """
    return _rgb_weights(bins)


def spectrum_to_rgb(radiance, bins: SpectralBins) -> np.ndarray:
    """Linear RGB of per-bin spectral radiance (last axis = bins)."""
    radiance = np.asarray(radiance, dtype=np.float64)
    if radiance.shape[-1:] != (bins.n_bins,):
        raise ShapeError(f"expected {bins.n_bins} spectral bins, got shape {radiance.shape}")
    return np.sum(radiance[..., :, None] * rgb_weights(bins), axis=-2)


def blackbody_rgb(temperature, bins: SpectralBins) -> np.ndarray:
    """Linear RGB of black-body radiance, shape ``temperature.shape + (3,)``."""
    t = np.asarray(temperature, dtype=np.float64)
    return spectrum_to_rgb(planck_radiance(t[..., None], bins.centers), bins)
