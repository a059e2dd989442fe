"""Forward model: pinhole cameras and emission-absorption ray marching.

Images are plain ``(H, W, 3)`` float arrays, row 0 at the top.  HDR images
hold linear RGB radiance; LDR images hold sRGB-encoded values in [0, 1].

Camera convention: the pose maps camera to world coordinates; in camera space
x points right, y points down and z along the optical axis.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .color import srgb_encode
from .errors import ConfigError
from .radiometry import (
    AbsorptionModel,
    PhysicalRanges,
    SpectralBins,
    absorption_coefficient,
    blackbody_rgb,
    planck_radiance,
)
from .voxelgrid import EMPTY_DENSITY, EMPTY_TEMPERATURE, GridDims, VoxelGrid3

TERMINATION_TRANSMITTANCE = 1e-4
REINHARD_EPS = 1e-6
DEFAULT_KEY = 0.18

_LUMA = np.array([0.2126, 0.7152, 0.0722])


@dataclass
class CameraView:
    width: int
    height: int
    focal: float
    cx: float
    cy: float
    pose: np.ndarray = field(default_factory=lambda: np.hstack([np.eye(3), np.zeros((3, 1))]))
    goal: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ConfigError("image size must be positive")
        if not self.focal > 0:
            raise ConfigError("focal length must be positive")
        self.pose = np.asarray(self.pose, dtype=np.float64).reshape(3, 4)
        r = self.pose[:, :3]
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-9) or np.linalg.det(r) <= 0:
            raise ConfigError("camera pose rotation must be orthonormal and right-handed")
        if self.goal is not None:
            self.goal = np.asarray(self.goal, dtype=np.float64)
            if self.goal.shape != (self.height, self.width, 3):
                raise ConfigError(
                    f"goal image shape {self.goal.shape} does not match camera {self.height}x{self.width}"
                )

    @property
    def rotation(self) -> np.ndarray:
        return self.pose[:, :3]

    @property
    def position(self) -> np.ndarray:
        return self.pose[:, 3]

    def with_goal(self, goal) -> "CameraView":
        return CameraView(self.width, self.height, self.focal, self.cx, self.cy, self.pose, goal, self.name)

    @classmethod
    def look_at(cls, eye, target, width, height, fov_deg=40.0, up=(0.0, 1.0, 0.0), name=""):
        """Camera at ``eye`` looking at ``target`` with a horizontal field of view."""
        eye, target, up = (np.asarray(v, dtype=np.float64) for v in (eye, target, up))
        forward = target - eye
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, up)
        if np.linalg.norm(right) < 1e-12:
            raise ConfigError("view direction is parallel to the up vector")
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        pose = np.column_stack([right, down, forward, eye])
        focal = 0.5 * width / np.tan(np.radians(fov_deg) / 2)
        return cls(width, height, focal, (width - 1) / 2, (height - 1) / 2, pose, name=name)

    @classmethod
    def orbit(cls, center, distance, azimuth_deg, width, height, fov_deg=40.0, elevation_deg=0.0, name=""):
        """Camera on a horizontal circle around ``center``; azimuth 0 looks along -z."""
        az, el = np.radians(azimuth_deg), np.radians(elevation_deg)
        offset = distance * np.array([np.sin(az) * np.cos(el), np.sin(el), np.cos(az) * np.cos(el)])
        center = np.asarray(center, dtype=np.float64)
        return cls.look_at(center + offset, center, width, height, fov_deg, name=name)


def generate_ray(view: CameraView, x: int, y: int) -> tuple[np.ndarray, np.ndarray]:
    """World-space ray through the centre of pixel ``(x, y)``."""
    if not (0 <= x < view.width and 0 <= y < view.height):
        raise IndexError(f"pixel ({x}, {y}) outside {view.width}x{view.height} image")
    d = np.array([(x - view.cx) / view.focal, (y - view.cy) / view.focal, 1.0])
    d = view.rotation @ d
    return view.position.copy(), d / np.linalg.norm(d)


def generate_rays(view: CameraView) -> tuple[np.ndarray, np.ndarray]:
    """Origins and unit directions for every pixel, row-major, shape ``(H*W, 3)``."""
    ys, xs = np.mgrid[0 : view.height, 0 : view.width]
    d = np.stack(
        [(xs.ravel() - view.cx) / view.focal, (ys.ravel() - view.cy) / view.focal, np.ones(xs.size)],
        axis=1,
    )
    d = d @ view.rotation.T
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return np.broadcast_to(view.position, d.shape).copy(), d


@dataclass
class FireVolume:
    """Temperature (K) and density (particles / m^3) grids placed in the world."""

    temperature: VoxelGrid3
    density: VoxelGrid3
    voxel_size: float
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        if self.temperature.dims != self.density.dims:
            raise ConfigError("temperature and density grids differ in size")
        if not self.voxel_size > 0:
            raise ConfigError("voxel size must be positive")

    @property
    def dims(self) -> GridDims:
        return self.temperature.dims

    @property
    def occupied(self) -> np.ndarray:
        return self.density.occupied

    @property
    def extent(self) -> np.ndarray:
        return self.voxel_size * np.array(self.dims.shape_xyz, dtype=np.float64)

    @property
    def center(self) -> np.ndarray:
        return self.origin + 0.5 * self.extent

    @classmethod
    def from_fields(cls, dims: GridDims, temperature, density, occupied, voxel_size, origin=None) -> "FireVolume":
        """Build from flat yzx arrays; unoccupied voxels get the empty values."""
        occupied = np.asarray(occupied, dtype=bool)
        temperature = np.where(occupied, temperature, EMPTY_TEMPERATURE)
        density = np.where(occupied, density, EMPTY_DENSITY)
        return cls(
            VoxelGrid3(dims, temperature, occupied),
            VoxelGrid3(dims, density, occupied.copy()),
            voxel_size,
            np.zeros(3) if origin is None else origin,
        )

    @classmethod
    def empty(cls, dims: GridDims, voxel_size: float, origin=None) -> "FireVolume":
        occ = np.zeros(dims.total, dtype=bool)
        return cls(
            VoxelGrid3.filled(dims, EMPTY_TEMPERATURE, occ),
            VoxelGrid3.filled(dims, EMPTY_DENSITY, occ),
            voxel_size,
            np.zeros(3) if origin is None else origin,
        )

    def with_fields(self, temperature=None, density=None) -> "FireVolume":
        """Copy with replaced flat value arrays (occupancy and placement kept)."""
        t = self.temperature.values if temperature is None else np.asarray(temperature, dtype=np.float64)
        d = self.density.values if density is None else np.asarray(density, dtype=np.float64)
        occ = self.occupied
        return FireVolume(
            VoxelGrid3(self.dims, t.copy(), occ.copy()),
            VoxelGrid3(self.dims, d.copy(), occ.copy()),
            self.voxel_size,
            self.origin.copy(),
        )

    def check_ranges(self, ranges: PhysicalRanges) -> bool:
        occ = self.occupied
        t, d = self.temperature.values[occ], self.density.values[occ]
        return bool(
            np.all((t >= ranges.t_min) & (t <= ranges.t_max)) and np.all((d >= 0) & (d <= ranges.d_max))
        )


def centered_origin(dims: GridDims, voxel_size: float, base_y: float | None = None) -> np.ndarray:
    """Grid corner placing the volume centre at the world origin (or its base at ``base_y``)."""
    extent = voxel_size * np.array(dims.shape_xyz, dtype=np.float64)
    origin = -0.5 * extent
    if base_y is not None:
        origin[1] = base_y
    return origin


@dataclass(frozen=True)
class RenderConfig:
    """Settings of the forward model shared by rendering and energy evaluation."""

    bins: SpectralBins = SpectralBins()
    step: float | None = None  # metres; None means half a voxel
    model: AbsorptionModel = AbsorptionModel()
    interpolation: str = "nearest"

    def step_for(self, volume: "FireVolume") -> float:
        return volume.voxel_size / 2 if self.step is None else self.step

    def render(self, volume: "FireVolume", view: "CameraView", threads=None) -> np.ndarray:
        return render_image(volume, view, self.bins, self.step_for(volume), self.model, self.interpolation, threads)


# --------------------------------------------------------------------------- sampling


def intersect_box(origins, dirs, lo, hi):
    """Slab test; returns entry and exit distances clipped to ``t >= 0`` (``t0 >= t1`` on miss)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        ta = (lo - origins) * inv
        tb = (hi - origins) * inv
    ta = np.where(np.isnan(ta), -np.inf, ta)
    tb = np.where(np.isnan(tb), np.inf, tb)
    t0 = np.max(np.minimum(ta, tb), axis=-1)
    t1 = np.min(np.maximum(ta, tb), axis=-1)
    return np.maximum(t0, 0.0), t1


@dataclass
class RaySamples:
    """Padded per-ray march samples for the rays that hit the volume box.

    ``voxel`` holds flat voxel indices (``-1`` for padding), ``length`` the
    step length of each sample, ``ray`` the index of each row's ray.
    """

    ray: np.ndarray
    voxel: np.ndarray
    length: np.ndarray
    points: np.ndarray | None = None


def march_samples(volume: FireVolume, origins, dirs, step: float, t_max=None, keep_points=False) -> RaySamples:
    """Sample positions of the fixed-step march for many rays at once.

    Segment ``k`` of a ray spans ``[t0 + k*step, min(t0 + (k+1)*step, t1)]``
    and is sampled at its midpoint with nearest-voxel lookup.
    """
    if not step > 0:
        raise ConfigError("march step must be positive")
    lo, hi = volume.origin, volume.origin + volume.extent
    t0, t1 = intersect_box(origins, dirs, lo, hi)
    if t_max is not None:
        t1 = np.minimum(t1, t_max)
    hit = np.flatnonzero(t1 > t0)
    if hit.size == 0:
        empty = np.zeros((0, 0))
        return RaySamples(hit, empty.astype(np.int64), empty, empty.reshape(0, 0, 3) if keep_points else None)
    t0, t1 = t0[hit], t1[hit]
    n = np.ceil((t1 - t0) / step - 1e-9).astype(np.int64)
    n = np.maximum(n, 1)
    s_max = int(n.max())
    k = np.arange(s_max)
    a = t0[:, None] + k[None, :] * step
    b = np.minimum(a + step, t1[:, None])
    valid = k[None, :] < n[:, None]
    mid = 0.5 * (a + b)
    length = np.where(valid, b - a, 0.0)
    pts = origins[hit, None, :] + mid[..., None] * dirs[hit, None, :]
    dims = volume.dims
    ijk = np.floor((pts - lo) / volume.voxel_size).astype(np.int64)
    ijk = np.clip(ijk, 0, np.array(dims.shape_xyz) - 1)
    flat = ijk[..., 1] + dims.ny * (ijk[..., 2] + dims.nz * ijk[..., 0])
    flat = np.where(valid, flat, -1)
    return RaySamples(hit, flat, length, pts if keep_points else None)


def composite_weights(tau: np.ndarray) -> np.ndarray:
    """Per-sample emission weights ``T_before * kappa * ds`` for optical depths ``tau``.

    Samples reached with transmittance below the termination threshold get
    zero weight, which reproduces the early exit of the sequential march.
    """
    acc = np.cumsum(tau, axis=-1)
    before = np.exp(-(acc - tau))
    return np.where(before >= TERMINATION_TRANSMITTANCE, before * tau, 0.0)


def accumulate(weights: np.ndarray, colors: np.ndarray) -> np.ndarray:
    """Weighted sum of per-sample colours along each ray."""
    return np.sum(weights[..., None] * colors, axis=-2)


def composite_transmittance(tau: np.ndarray) -> np.ndarray:
    return np.exp(-np.sum(tau, axis=-1))


# --------------------------------------------------------------------------- marching


def march_ray(
    volume: FireVolume,
    origin,
    direction,
    bins: SpectralBins,
    step: float,
    model: AbsorptionModel = AbsorptionModel(),
    background=None,
    return_transmittance=False,
):
    """Spectral radiance along one ray, integrated front to back.

    Reference implementation of the emission-absorption march: per sample
    ``L += T * kappa * B(T_voxel) * ds`` then ``T *= exp(-kappa * ds)``,
    stopping once ``T`` falls below 1e-4.  ``background`` is per-bin radiance
    entering from behind the volume.
    """
    origin = np.asarray(origin, dtype=np.float64).reshape(1, 3)
    direction = np.asarray(direction, dtype=np.float64).reshape(1, 3)
    samples = march_samples(volume, origin, direction, step)
    radiance = np.zeros(bins.n_bins)
    trans = 1.0
    if samples.ray.size:
        temp, dens = volume.temperature.values, volume.density.values
        centers = bins.centers
        for vox, ds in zip(samples.voxel[0], samples.length[0]):
            if vox < 0:
                break
            kappa = absorption_coefficient(dens[vox], model)
            if kappa > 0:
                radiance += trans * kappa * planck_radiance(temp[vox], centers) * ds
                trans *= np.exp(-kappa * ds)
            if trans < TERMINATION_TRANSMITTANCE:
                break
    if background is not None:
        radiance = radiance + trans * np.asarray(background, dtype=np.float64)
    if return_transmittance:
        return radiance, trans
    return radiance


def voxel_colors(volume: FireVolume, bins: SpectralBins) -> np.ndarray:
    """Linear RGB of the black-body emission of every voxel, zero where empty."""
    out = np.zeros((volume.dims.total, 3))
    live = volume.occupied & (volume.density.values > 0)
    out[live] = blackbody_rgb(volume.temperature.values[live], bins)
    return out


def _trilinear(values: np.ndarray, dims: GridDims, u: np.ndarray) -> np.ndarray:
    """Interpolate a flat yzx field at continuous voxel coordinates ``u`` (centres at integers)."""
    shape = np.array(dims.shape_xyz)
    u = np.clip(u, 0.0, shape - 1.0)
    i0 = np.minimum(np.floor(u).astype(np.int64), shape - 1)
    i1 = np.minimum(i0 + 1, shape - 1)
    f = u - i0
    out = np.zeros(u.shape[:-1])
    for cx in (0, 1):
        x = i1[..., 0] if cx else i0[..., 0]
        wx = f[..., 0] if cx else 1 - f[..., 0]
        for cy in (0, 1):
            y = i1[..., 1] if cy else i0[..., 1]
            wy = f[..., 1] if cy else 1 - f[..., 1]
            for cz in (0, 1):
                z = i1[..., 2] if cz else i0[..., 2]
                wz = f[..., 2] if cz else 1 - f[..., 2]
                out += wx * wy * wz * values[y + dims.ny * (z + dims.nz * x)]
    return out


def render_rays(
    volume: FireVolume,
    origins,
    dirs,
    bins: SpectralBins,
    step: float,
    model: AbsorptionModel = AbsorptionModel(),
    interpolation: str = "nearest",
    t_max=None,
    colors=None,
):
    """Linear RGB radiance and transmittance for a batch of rays.

    Uses linearity of the colour integration: with a gray absorber the
    per-sample weights are wavelength independent, so integrating RGB of each
    voxel's emission equals converting the integrated spectrum.
    """
    n = len(origins)
    rgb = np.zeros((n, 3))
    trans = np.ones(n)
    samples = march_samples(volume, origins, dirs, step, t_max=t_max, keep_points=interpolation == "trilinear")
    if samples.ray.size == 0:
        return rgb, trans
    valid = samples.voxel >= 0
    if interpolation == "nearest":
        dens = volume.density.values
        if colors is None:
            colors = voxel_colors(volume, bins)
        vox = np.where(valid, samples.voxel, 0)
        tau = absorption_coefficient(np.where(valid, dens[vox], 0.0), model) * samples.length
        w = composite_weights(tau)
        rgb[samples.ray] = accumulate(w, colors[vox])
    elif interpolation == "trilinear":
        u = (samples.points - volume.origin) / volume.voxel_size - 0.5
        # empty voxels hold zero density, so interpolation fades out at the flame boundary
        d = np.where(valid, _trilinear(volume.density.values, volume.dims, u), 0.0)
        t = _trilinear(volume.temperature.values, volume.dims, u)
        tau = absorption_coefficient(np.maximum(d, 0.0), model) * samples.length
        w = composite_weights(tau)
        live = w > 0
        c = np.zeros(w.shape + (3,))
        c[live] = blackbody_rgb(np.maximum(t[live], 1.0), bins)
        rgb[samples.ray] = accumulate(w, c)
    else:
        raise ConfigError(f"unknown interpolation {interpolation!r}")
    trans[samples.ray] = composite_transmittance(tau)
    return rgb, trans


def _thread_count(threads):
    if threads is None:
        threads = int(os.environ.get("FIRERECON_THREADS", "1"))
    return max(1, int(threads))


def render_image(
    volume: FireVolume,
    view: CameraView,
    bins: SpectralBins = SpectralBins(),
    step: float | None = None,
    model: AbsorptionModel = AbsorptionModel(),
    interpolation: str = "nearest",
    threads: int | None = None,
) -> np.ndarray:
    """HDR linear-RGB image of the volume; ``step`` defaults to half a voxel."""
    step = volume.voxel_size / 2 if step is None else step
    origins, dirs = generate_rays(view)
    colors = voxel_colors(volume, bins) if interpolation == "nearest" else None
    n_threads = _thread_count(threads)
    chunks = np.array_split(np.arange(len(origins)), max(1, n_threads * 4) if n_threads > 1 else 1)

    def work(idx):
        return render_rays(volume, origins[idx], dirs[idx], bins, step, model, interpolation, colors=colors)[0]

    if n_threads > 1:
        with ThreadPoolExecutor(n_threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    rgb = np.concatenate(parts, axis=0)
    return np.maximum(rgb, 0.0).reshape(view.height, view.width, 3)


def apply_exposure_and_encode(img, s: float, ranges: PhysicalRanges = PhysicalRanges()) -> np.ndarray:
    """Linear gain ``s``, clamp to [0, 1], sRGB encode."""
    if not ranges.s_min <= s <= ranges.s_max:
        raise ConfigError(f"exposure {s} outside [{ranges.s_min}, {ranges.s_max}]")
    return srgb_encode(np.clip(np.asarray(img, dtype=np.float64) * s, 0.0, 1.0))


def luminance(img) -> np.ndarray:
    return np.asarray(img, dtype=np.float64) @ _LUMA


def reinhard_linear(img, key: float = DEFAULT_KEY) -> np.ndarray:
    """Global Reinhard operator, display-linear output (before encoding)."""
    if not key > 0:
        raise ConfigError("Reinhard key value must be positive")
    img = np.maximum(np.asarray(img, dtype=np.float64), 0.0)
    if img.size == 0:
        raise ConfigError("cannot tone map an empty image")
    lw = luminance(img)
    if not np.any(lw > 0):
        return np.zeros_like(img)
    log_avg = np.exp(np.mean(np.log(REINHARD_EPS + lw)))
    scaled = key * lw / log_avg
    ld = scaled / (1.0 + scaled)
    ratio = np.divide(ld, lw, out=np.zeros_like(lw), where=lw > 0)
    return img * ratio[..., None]


def tonemap_reinhard(img, key: float = DEFAULT_KEY) -> np.ndarray:
    return srgb_encode(np.clip(reinhard_linear(img, key), 0.0, 1.0))
