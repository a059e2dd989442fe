"""Analytic flames with known ground truth, plus the matching camera rig.

Each recipe samples smooth, compactly supported temperature and density
fields on the grid.  The accompanying colour volume stands in for a
tomographic reconstruction from display-encoded photographs: before sRGB
encoding its red channel is the normalised density and the green/blue
channels fall off with temperature, so the largest channel equals the red one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .color import srgb_encode
from .errors import ConfigError
from .radiometry import PhysicalRanges
from .render import CameraView, FireVolume, RenderConfig, centered_origin
from .voxelgrid import EMPTY_DENSITY, EMPTY_TEMPERATURE, GridDims, RgbVolume, xyz_to_flat

RECIPES = ("gaussian-plume", "candle-ellipsoid", "two-lobe")

#: display level of the brightest goal pixel when the exposure is calibrated
TARGET_PEAK = 0.9


@dataclass(frozen=True)
class SyntheticRecipe:
    kind: str = "gaussian-plume"
    dims: tuple[int, int, int] = (32, 32, 32)
    seed: int = 0
    ranges: PhysicalRanges = PhysicalRanges()
    extent: float = 0.2  # metres along the largest axis
    peak_temperature: float = 1650.0
    base_temperature: float = 1150.0
    peak_density: float = 60e27

    def __post_init__(self):
        if self.kind not in RECIPES:
            raise ConfigError(f"unknown recipe {self.kind!r}; choose one of {', '.join(RECIPES)}")
        if len(self.dims) != 3 or any(int(n) != n or n < 8 for n in self.dims):
            raise ConfigError(f"synthetic grids need at least 8 voxels per axis, got {self.dims}")
        r = self.ranges
        if not r.t_min <= self.base_temperature <= self.peak_temperature <= r.t_max:
            raise ConfigError("recipe temperatures must lie inside the physical range")
        if not r.d_min < self.peak_density <= r.d_max:
            raise ConfigError("recipe peak density must lie inside the physical range")

    @property
    def voxel_size(self) -> float:
        return self.extent / max(self.dims)


@dataclass
class SyntheticFlame:
    volume: FireVolume
    exposure: float
    rgb: RgbVolume
    recipe: SyntheticRecipe = field(default_factory=SyntheticRecipe)


def _bump(q, cut=4.0):
    """Gaussian-like bump in squared radius ``q`` reaching exactly 0 at ``q = cut``."""
    floor = np.exp(-cut / 2)
    return np.clip((np.exp(-q / 2) - floor) / (1 - floor), 0.0, None)


def _coords(dims):
    nx, ny, nz = dims
    x = (np.arange(nx) + 0.5) / nx * 2 - 1
    y = (np.arange(ny) + 0.5) / ny
    z = (np.arange(nz) + 0.5) / nz * 2 - 1
    return np.meshgrid(x, y, z, indexing="ij")


def _plume(X, Y, Z, rng):
    shear = 0.25 + 0.1 * rng.uniform(-1, 1)
    cx = shear * (Y - 0.2) ** 2 + 0.05 * rng.uniform(-1, 1)
    cz = 0.05 * rng.uniform(-1, 1)
    sigma = 0.16 + 0.14 * Y
    q = ((X - cx) ** 2 + (Z - cz) ** 2) / sigma**2
    vertical = _bump(((Y - 0.42) / 0.2) ** 2)
    dens = _bump(q) * vertical
    heat = np.exp(-q / 2) * _bump(((Y - 0.35) / 0.22) ** 2, cut=6.0)
    return dens, heat


def _candle(X, Y, Z, rng):
    a = 0.42 * (1 + 0.05 * rng.uniform(-1, 1))
    b = 0.36 * (1 + 0.05 * rng.uniform(-1, 1))
    yc = 0.45 + 0.02 * rng.uniform(-1, 1)
    r2 = (X / a) ** 2 + ((Y - yc) / b) ** 2 + (Z / a) ** 2
    dens = np.clip(1 - r2, 0.0, None) ** 1.5
    heat = np.clip(1 - r2, 0.0, None) * (1.0 - 0.4 * np.clip((Y - yc) / b, 0.0, 1.0))
    return dens, heat


def _two_lobe(X, Y, Z, rng):
    dens = np.zeros_like(X)
    heat = np.zeros_like(X)
    centers = [(-0.3, 0.38, -0.32), (0.28, 0.55, 0.34)]
    amps = [(1.0, 1.0), (0.75, 0.7)]
    for (cx, cy, cz), (ad, ah) in zip(centers, amps):
        cx, cy, cz = (c + 0.04 * rng.uniform(-1, 1) for c in (cx, cy, cz))
        q = ((X - cx) ** 2 + (Z - cz) ** 2) / 0.3**2 + ((Y - cy) / 0.22) ** 2
        dens = np.maximum(dens, ad * _bump(q))
        heat = np.maximum(heat, ah * np.exp(-q / 2))
    return dens, heat


_GENERATORS = {"gaussian-plume": _plume, "candle-ellipsoid": _candle, "two-lobe": _two_lobe}


def standard_views(volume: FireVolume, azimuths=(0.0, 90.0), width=160, height=120, fov_deg=30.0):
    """Orbit cameras around the volume centre, far enough to frame the whole grid."""
    extent = float(np.max(volume.extent))
    return [
        CameraView.orbit(volume.center, 3.0 * extent, az, width, height, fov_deg, name=f"az{az:g}")
        for az in azimuths
    ]


def calibrate_exposure(volume: FireVolume, views, render: RenderConfig = RenderConfig(), ranges=PhysicalRanges()):
    """Exposure mapping the brightest rendered channel to :data:`TARGET_PEAK` (3 significant digits)."""
    peak = max(float(render.render(volume, v).max()) for v in views)
    if peak <= 0:
        return 1.0
    s = TARGET_PEAK / peak
    s = float(f"{s:.3g}")
    return float(np.clip(s, ranges.s_min, ranges.s_max))


def generate_synthetic(recipe: SyntheticRecipe = SyntheticRecipe(), render: RenderConfig = RenderConfig()) -> SyntheticFlame:
    """Ground-truth flame, its calibrated exposure and the matching colour volume."""
    rng = np.random.default_rng(recipe.seed)
    dims = GridDims(*recipe.dims)
    X, Y, Z = _coords(recipe.dims)
    shape, heat = _GENERATORS[recipe.kind](X, Y, Z, rng)
    r = recipe.ranges
    density = recipe.peak_density * shape
    occ = density > r.d_min
    temperature = recipe.base_temperature + (recipe.peak_temperature - recipe.base_temperature) * np.clip(heat, 0, 1)
    temperature = np.where(occ, np.clip(temperature, r.t_min, r.t_max), EMPTY_TEMPERATURE)
    density = np.where(occ, np.minimum(density, r.d_max), EMPTY_DENSITY)

    h = recipe.voxel_size
    volume = FireVolume.from_fields(
        dims, xyz_to_flat(temperature), xyz_to_flat(density), xyz_to_flat(occ), h, centered_origin(dims, h)
    )

    red = np.where(occ, shape / shape.max(), 0.0)
    tn = (temperature - r.t_min) / (r.t_max - r.t_min)
    green = np.where(occ, red * tn, 0.0)
    blue = 0.25 * green * red
    rgb = RgbVolume.from_xyz(srgb_encode(np.stack([red, green, blue], axis=-1)))

    views = standard_views(volume, azimuths=(0.0,), width=80, height=60)
    exposure = calibrate_exposure(volume, views, render, r)
    return SyntheticFlame(volume, exposure, rgb, recipe)


def render_goals(flame: FireVolume, views, exposure: float, render: RenderConfig = RenderConfig(), ranges=PhysicalRanges()):
    """Attach encoded renders of ``flame`` as goal images to ``views``."""
    from .render import apply_exposure_and_encode

    return [v.with_goal(apply_exposure_and_encode(render.render(flame, v), exposure, ranges)) for v in views]
