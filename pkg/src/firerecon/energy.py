"""Objective: Lab appearance term, 18-neighbour smoothness term and their weighted sum."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .color import lab_distance, rgb_to_lab
from .errors import ConfigError, ShapeError
from .radiometry import PhysicalRanges
from .render import CameraView, FireVolume, RenderConfig, apply_exposure_and_encode
from .voxelgrid import VoxelGrid3, neighbor_table


@dataclass(frozen=True)
class EnergyWeights:
    w_am: float = 1.0
    w_sm: float = 10.0

    def __post_init__(self):
        if self.w_am < 0 or self.w_sm < 0:
            raise ConfigError("energy weights must be non-negative")
        if self.w_am == 0 and self.w_sm == 0:
            raise ConfigError("at least one energy weight must be positive")


@dataclass
class EnergyBreakdown:
    appearance: list[float]
    smoothness: dict[str, float]
    weights: EnergyWeights = field(default_factory=EnergyWeights)

    @property
    def e_am(self) -> float:
        return float(sum(self.appearance))

    @property
    def e_sm(self) -> float:
        return float(sum(self.smoothness.values()))

    @property
    def total(self) -> float:
        return self.weights.w_am * self.e_am + self.weights.w_sm * self.e_sm


def appearance_term(cg, cam) -> float:
    """Sum over pixels of the Lab distance between two encoded images (unweighted)."""
    cg, cam = np.asarray(cg, dtype=np.float64), np.asarray(cam, dtype=np.float64)
    if cg.shape != cam.shape:
        raise ShapeError(f"image shapes differ: {cg.shape} vs {cam.shape}")
    return float(np.sum(lab_distance(rgb_to_lab(cg), rgb_to_lab(cam))))


def smoothness_values(values: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Per-voxel sums ``sum_j |v_j - v_i|`` over the occupied neighbours in ``table``."""
    nb = values[np.maximum(table, 0)]
    return np.sum(np.where(table >= 0, np.abs(nb - values[:, None]), 0.0), axis=1)


def smoothness_term(field: VoxelGrid3) -> float:
    """Sum of |v_i - v_j| over occupied voxels and their occupied 18-neighbours; each pair counts twice.

    Unoccupied neighbours are skipped, and boundary voxels simply have fewer terms.
    """
    table = neighbor_table(field.occupied, field.dims)
    return float(np.sum(smoothness_values(field.occupied_values(), table)))


def normalized_field(field: VoxelGrid3, lo: float, hi: float) -> VoxelGrid3:
    """Field affinely mapped so ``[lo, hi]`` becomes ``[0, 1]``."""
    return VoxelGrid3(field.dims, (field.values - lo) / (hi - lo), field.occupied)


def smoothness_breakdown(volume: FireVolume, ranges: PhysicalRanges, include_density: bool) -> dict[str, float]:
    out = {"temperature": smoothness_term(normalized_field(volume.temperature, *ranges.temperature))}
    if include_density:
        out["density"] = smoothness_term(normalized_field(volume.density, *ranges.density))
    return out


def total_energy(
    volume: FireVolume,
    views: list[CameraView],
    s: float,
    weights: EnergyWeights = EnergyWeights(),
    render: RenderConfig = RenderConfig(),
    ranges: PhysicalRanges = PhysicalRanges(),
    include_density: bool = False,
) -> EnergyBreakdown:
    """Render every view, compare with its goal and add the smoothness terms.

    Smoothness is measured on range-normalised fields so that temperatures in
    kelvin and densities in particles per cubic metre share one scale.
    ``include_density`` adds the density term (free per-voxel densities).
    """
    if not views:
        raise ConfigError("at least one view with a goal image is required")
    appearance = []
    for k, view in enumerate(views):
        if view.goal is None:
            raise ConfigError(f"view {view.name or k} has no goal image")
        img = apply_exposure_and_encode(render.render(volume, view), s, ranges)
        appearance.append(appearance_term(img, view.goal))
    return EnergyBreakdown(appearance, smoothness_breakdown(volume, ranges, include_density), weights)
