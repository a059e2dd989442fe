"""Incremental energy evaluation for the optimizer.

Rendering is linear in the per-voxel emission colours once densities are
fixed, and a change to one cluster only touches the rays that cross it.  The
evaluator therefore caches, per view, the march samples of every ray hitting
the volume (restricted to occupied voxels), their compositing weights, the
linear pixel colours and the per-pixel Lab distances, and re-evaluates only
the affected rays for a cluster proposal.  Every cached quantity is computed
by the same row-wise routines as a full refresh, so an incremental state and
a fresh :meth:`EnergyEvaluator.refresh` agree exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .color import lab_distance, rgb_to_lab, srgb_encode
from .energy import EnergyBreakdown, EnergyWeights
from .errors import ConfigError
from .radiometry import PhysicalRanges, blackbody_rgb
from .render import (
    CameraView,
    FireVolume,
    RenderConfig,
    accumulate,
    composite_weights,
    generate_rays,
    march_samples,
)
from .voxelgrid import neighbor_table


class _ViewCache:
    """March samples and cached image state of one goal view."""

    def __init__(self, view: CameraView, volume: FireVolume, local: np.ndarray, n_occ: int, step: float):
        origins, dirs = generate_rays(view)
        samples = march_samples(volume, origins, dirs, step)
        self.n_pixels = view.width * view.height
        vox = local[samples.voxel] if samples.ray.size else np.zeros((0, 1), dtype=np.int64)
        keep = vox < n_occ
        counts = keep.sum(axis=1)
        rows = counts > 0
        order = np.argsort(~keep[rows], axis=1, kind="stable")
        width = int(counts.max()) if counts.size and counts.max() > 0 else 1
        length = np.where(keep, samples.length, 0.0) if samples.ray.size else np.zeros_like(vox, float)
        self.vox = np.take_along_axis(vox[rows], order, axis=1)[:, :width]
        self.length = np.take_along_axis(length[rows], order, axis=1)[:, :width]
        self.pixels = samples.ray[rows] if samples.ray.size else np.zeros(0, dtype=np.int64)

        # voxel -> rows incidence (CSR over occupied-local voxel ids)
        r_idx = np.repeat(np.arange(len(self.pixels)), self.vox.shape[1]).reshape(self.vox.shape)
        live = self.vox < n_occ
        pairs = np.unique(np.stack([self.vox[live], r_idx[live]], axis=1), axis=0)
        self.inc_rows = pairs[:, 1] if pairs.size else np.zeros(0, dtype=np.int64)
        self.inc_ptr = np.zeros(n_occ + 1, dtype=np.int64)
        if pairs.size:
            np.cumsum(np.bincount(pairs[:, 0], minlength=n_occ), out=self.inc_ptr[1:])

        self.goal_lab = rgb_to_lab(view.goal.reshape(-1, 3))
        self.w = np.zeros(self.vox.shape)
        self.lin = np.zeros((self.n_pixels, 3))
        self.dist = np.zeros(self.n_pixels)

    def rows_for(self, a: int, b: int) -> np.ndarray:
        return np.unique(self.inc_rows[self.inc_ptr[a] : self.inc_ptr[b]])

    def weights(self, rows, kappa):
        return composite_weights(kappa[self.vox[rows]] * self.length[rows])

    def ray_rgb(self, rows, w, colors):
        return np.maximum(accumulate(w, colors[self.vox[rows]]), 0.0)

    def pixel_dist(self, pixels, lin, s):
        enc = srgb_encode(np.clip(lin * s, 0.0, 1.0))
        return lab_distance(rgb_to_lab(enc), self.goal_lab[pixels])


@dataclass
class ClusterContext:
    """Rays and smoothness rows affected by changing one cluster."""

    members: slice
    rows: list[np.ndarray]
    smooth_rows: np.ndarray


@dataclass
class Proposal:
    breakdown: EnergyBreakdown
    _commit: Callable[[], None]

    @property
    def energy(self) -> float:
        return self.breakdown.total

    def commit(self) -> None:
        self._commit()


class EnergyEvaluator:
    """Cached total energy over occupied-voxel parameter vectors.

    ``temperature`` and ``density`` are vectors over the yzx-ordered occupied
    voxels.  ``include_density`` adds density smoothness to the total.
    """

    def __init__(
        self,
        volume: FireVolume,
        views: list[CameraView],
        exposure: float,
        weights: EnergyWeights = EnergyWeights(),
        render: RenderConfig = RenderConfig(),
        ranges: PhysicalRanges = PhysicalRanges(),
        include_density: bool = False,
    ):
        if not views:
            raise ConfigError("at least one view with a goal image is required")
        for k, v in enumerate(views):
            if v.goal is None:
                raise ConfigError(f"view {v.name or k} has no goal image")
        if render.interpolation != "nearest":
            raise ConfigError("incremental evaluation requires nearest-voxel lookup")
        self.template = volume
        self.weights = weights
        self.render = render
        self.ranges = ranges
        self.include_density = include_density
        self.occ_flat = np.flatnonzero(volume.occupied)
        self.n_occ = self.occ_flat.size
        if self.n_occ == 0:
            raise ConfigError("no occupied voxels: nothing to optimize")
        local = np.full(volume.dims.total + 1, self.n_occ, dtype=np.int64)
        local[self.occ_flat] = np.arange(self.n_occ)
        step = render.step_for(volume)
        self.views = [_ViewCache(v, volume, local, self.n_occ, step) for v in views]
        self.table = neighbor_table(volume.occupied, volume.dims)
        self.t = volume.temperature.values[self.occ_flat].copy()
        self.d = volume.density.values[self.occ_flat].copy()
        self.s = float(exposure)
        self.evaluations = 0
        self.refresh()

    # ------------------------------------------------------------------ helpers
    def _colors(self, t) -> np.ndarray:
        c = np.zeros((self.n_occ + 1, 3))
        c[: self.n_occ] = blackbody_rgb(t, self.render.bins)
        return c

    def _kappa(self, d) -> np.ndarray:
        k = np.zeros(self.n_occ + 1)
        k[: self.n_occ] = self.render.model.sigma_a * d
        return k

    def _tnorm(self, t):
        lo, hi = self.ranges.temperature
        return (t - lo) / (hi - lo)

    def _dnorm(self, d):
        lo, hi = self.ranges.density
        return (d - lo) / (hi - lo)

    def _breakdown(self, dists, s_t, s_d) -> EnergyBreakdown:
        smooth = {"temperature": float(np.sum(s_t))}
        if self.include_density:
            smooth["density"] = float(np.sum(s_d))
        return EnergyBreakdown([float(np.sum(d)) for d in dists], smooth, self.weights)

    # ------------------------------------------------------------------ state
    def refresh(self) -> EnergyBreakdown:
        """Recompute every cached quantity from the current parameters."""
        self.colors = self._colors(self.t)
        self.kappa = self._kappa(self.d)
        for vc in self.views:
            rows = np.arange(len(vc.pixels))
            vc.w = vc.weights(rows, self.kappa)
            vc.lin = np.zeros((vc.n_pixels, 3))
            vc.lin[vc.pixels] = vc.ray_rgb(rows, vc.w, self.colors)
            vc.dist = vc.pixel_dist(np.arange(vc.n_pixels), vc.lin, self.s)
        all_rows = np.arange(self.n_occ)
        self.s_t = _smooth_subset(self._tnorm(self.t), self.table, all_rows)
        self.s_d = _smooth_subset(self._dnorm(self.d), self.table, all_rows)
        self.current = self._breakdown([vc.dist for vc in self.views], self.s_t, self.s_d)
        return self.current

    @property
    def energy(self) -> float:
        return self.current.total

    def volume(self) -> FireVolume:
        t = self.template.temperature.values.copy()
        d = self.template.density.values.copy()
        t[self.occ_flat] = self.t
        d[self.occ_flat] = self.d
        return self.template.with_fields(t, d)

    def linear_images(self) -> list[np.ndarray]:
        return [vc.lin.copy() for vc in self.views]

    def context(self, members: slice) -> ClusterContext:
        a, b = members.start, members.stop
        rows = [vc.rows_for(a, b) for vc in self.views]
        nb = self.table[a:b]
        smooth = np.unique(np.concatenate([np.arange(a, b), nb[nb >= 0]]))
        return ClusterContext(members, rows, smooth)

    # ------------------------------------------------------------------ proposals
    def _finish(self, dists, s_t, s_d, apply) -> Proposal:
        self.evaluations += 1
        bd = self._breakdown(dists, s_t, s_d)

        def commit():
            apply()
            self.current = bd

        return Proposal(bd, commit)

    def propose_temperature(self, ctx: ClusterContext, value: float) -> Proposal:
        t = self.t.copy()
        t[ctx.members] = value
        colors = self.colors.copy()
        colors[ctx.members] = blackbody_rgb(np.full(1, value), self.render.bins)[0]
        updates, dists = [], []
        for vc, rows in zip(self.views, ctx.rows):
            lin = vc.ray_rgb(rows, vc.w[rows], colors)
            pix = vc.pixels[rows]
            dist = vc.dist.copy()
            dist[pix] = vc.pixel_dist(pix, lin, self.s)
            updates.append((pix, lin))
            dists.append(dist)
        s_t = self.s_t.copy()
        s_t[ctx.smooth_rows] = _smooth_subset(self._tnorm(t), self.table, ctx.smooth_rows)

        def apply():
            self.t, self.colors, self.s_t = t, colors, s_t
            for vc, (pix, lin), dist in zip(self.views, updates, dists):
                vc.lin[pix] = lin
                vc.dist = dist

        return self._finish(dists, s_t, self.s_d, apply)

    def propose_density(self, ctx: ClusterContext, value: float) -> Proposal:
        d = self.d.copy()
        d[ctx.members] = value
        kappa = self.kappa.copy()
        kappa[ctx.members] = self.render.model.sigma_a * value
        updates, dists = [], []
        for vc, rows in zip(self.views, ctx.rows):
            w = vc.weights(rows, kappa)
            lin = vc.ray_rgb(rows, w, self.colors)
            pix = vc.pixels[rows]
            dist = vc.dist.copy()
            dist[pix] = vc.pixel_dist(pix, lin, self.s)
            updates.append((rows, w, pix, lin))
            dists.append(dist)
        s_d = self.s_d.copy()
        s_d[ctx.smooth_rows] = _smooth_subset(self._dnorm(d), self.table, ctx.smooth_rows)

        def apply():
            self.d, self.kappa, self.s_d = d, kappa, s_d
            for vc, (rows, w, pix, lin), dist in zip(self.views, updates, dists):
                vc.w[rows] = w
                vc.lin[pix] = lin
                vc.dist = dist

        return self._finish(dists, self.s_t, s_d, apply)

    def propose_exposure(self, s: float) -> Proposal:
        dists = [vc.pixel_dist(np.arange(vc.n_pixels), vc.lin, s) for vc in self.views]

        def apply():
            self.s = float(s)
            for vc, dist in zip(self.views, dists):
                vc.dist = dist

        return self._finish(dists, self.s_t, self.s_d, apply)

    def propose_densities(self, d: np.ndarray) -> Proposal:
        """Replace every occupied density at once (global density factor)."""
        d = np.asarray(d, dtype=np.float64).copy()
        kappa = self._kappa(d)
        updates, dists = [], []
        for vc in self.views:
            rows = np.arange(len(vc.pixels))
            w = vc.weights(rows, kappa)
            lin = np.zeros((vc.n_pixels, 3))
            lin[vc.pixels] = vc.ray_rgb(rows, w, self.colors)
            updates.append((w, lin))
            dists.append(vc.pixel_dist(np.arange(vc.n_pixels), lin, self.s))
        s_d = _smooth_subset(self._dnorm(d), self.table, np.arange(self.n_occ))

        def apply():
            self.d, self.kappa, self.s_d = d, kappa, s_d
            for vc, (w, lin), dist in zip(self.views, updates, dists):
                vc.w, vc.lin, vc.dist = w, lin, dist

        return self._finish(dists, self.s_t, s_d, apply)

    def set_temperatures(self, t: np.ndarray) -> EnergyBreakdown:
        self.t = np.asarray(t, dtype=np.float64).copy()
        return self.refresh()

    def set_densities(self, d: np.ndarray) -> EnergyBreakdown:
        self.d = np.asarray(d, dtype=np.float64).copy()
        return self.refresh()


def _smooth_subset(values, table, rows):
    sub = table[rows]
    nb = values[np.maximum(sub, 0)]
    return np.sum(np.where(sub >= 0, np.abs(nb - values[rows, None]), 0.0), axis=1)
