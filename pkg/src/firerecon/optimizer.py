"""Clustered coordinate descent over temperatures, densities and exposure.

Two modes:

``full``
    Per-voxel temperatures and densities are both free; each outer iteration
    sweeps one of the two fields, alternating.
``simplified``
    Densities are a frozen shape (the normalised red channel of the colour
    volume) times one global factor; only temperatures are swept per
    cluster, and the factor is line-searched like the exposure.

Clusters are contiguous runs of the yzx-ordered occupied voxels.  Every
voxel of a cluster shares the cluster's value once a candidate for that
cluster is accepted; children of a refined cluster inherit its values.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .energy import EnergyBreakdown, EnergyWeights
from .errors import ConfigError, ModeError
from .evaluator import EnergyEvaluator
from .radiometry import PhysicalRanges
from .render import CameraView, FireVolume, RenderConfig
from .voxelgrid import (
    DEFAULT_THRESHOLD,
    EMPTY_DENSITY,
    EMPTY_TEMPERATURE,
    ClusterMap,
    RgbVolume,
    apply_sparse_threshold,
    init_clusters,
    refine_clusters,
)

logger = logging.getLogger(__name__)

FULL = "full"
SIMPLIFIED = "simplified"


@dataclass(frozen=True)
class OptimizerConfig:
    ranges: PhysicalRanges = PhysicalRanges()
    weights: EnergyWeights = EnergyWeights()
    render: RenderConfig = RenderConfig()
    mode: str = SIMPLIFIED
    n_samples: int = 10
    sigma0: float = 0.1
    refine_period: int = 4
    max_iterations: int = 60
    plateau_tol: float = 1e-3
    patience: int = 3
    seed: int = 0
    exposure_candidates: int = 13
    threshold: float = DEFAULT_THRESHOLD
    #: density of a voxel whose normalised red channel is 1 at factor 1 (simplified mode)
    density_reference: float = 50e27
    clustering: bool = True
    #: optional cap on energy evaluations (render budget); None means unlimited
    max_evaluations: int | None = None
    record_timing: bool = True

    def __post_init__(self):
        if self.mode not in (FULL, SIMPLIFIED):
            raise ConfigError(f"mode must be {FULL!r} or {SIMPLIFIED!r}, got {self.mode!r}")
        if self.n_samples < 1:
            raise ConfigError("n_samples must be at least 1")
        if not 0 < self.sigma0 <= 1:
            raise ConfigError("sigma0 must lie in (0, 1]")
        if self.patience < 1:
            raise ConfigError("patience must be at least 1")
        if self.refine_period < 1 or self.max_iterations < 0:
            raise ConfigError("refine_period must be >= 1 and max_iterations >= 0")
        if self.exposure_candidates < 1:
            raise ConfigError("exposure_candidates must be at least 1")
        if not self.density_reference > 0:
            raise ConfigError("density_reference must be positive")

    @property
    def factor_range(self) -> tuple[float, float]:
        return (self.ranges.d_min / self.density_reference, self.ranges.d_max / self.density_reference)


@dataclass
class TraceRecord:
    iteration: int
    total: float
    e_am: float
    e_sm: float
    clusters: int
    exposure: float
    density_factor: float
    ms: float

    FIELDS = ("iteration", "total", "e_am", "e_sm", "clusters", "exposure", "density_factor", "ms")

    def row(self) -> list:
        return [getattr(self, f) for f in self.FIELDS]


@dataclass
class Acceptance:
    """One accepted update: which parameter moved and the new total energy."""

    iteration: int
    level: int
    kind: str
    energy: float


@dataclass
class OptimizerState:
    evaluator: EnergyEvaluator
    config: OptimizerConfig
    clusters: ClusterMap
    rng: np.random.Generator
    density_factor: float = 1.0
    density_shape: np.ndarray | None = None
    iteration: int = 0
    active: str = "temperature"
    scores: np.ndarray = field(default_factory=lambda: np.zeros(0))
    trace: list[TraceRecord] = field(default_factory=list)
    accepted: list[Acceptance] = field(default_factory=list)
    snapshots: list[np.ndarray] = field(default_factory=list)
    started: float = field(default_factory=time.perf_counter)
    exhausted: bool = False

    @property
    def exposure(self) -> float:
        return self.evaluator.s

    @property
    def energy(self) -> float:
        return self.evaluator.energy

    @property
    def breakdown(self) -> EnergyBreakdown:
        return self.evaluator.current

    @property
    def volume(self) -> FireVolume:
        return self.evaluator.volume()

    @property
    def evaluations(self) -> int:
        return self.evaluator.evaluations

    @property
    def n_free_parameters(self) -> int:
        n = self.evaluator.n_occ
        return n + 2 if self.config.mode == SIMPLIFIED else 2 * n + 1

    def budget_left(self) -> bool:
        cap = self.config.max_evaluations
        if cap is not None and self.evaluations >= cap:
            self.exhausted = True
        return not self.exhausted

    def record(self) -> TraceRecord:
        bd = self.breakdown
        ms = (time.perf_counter() - self.started) * 1e3 if self.config.record_timing else 0.0
        rec = TraceRecord(
            self.iteration, bd.total, bd.e_am, bd.e_sm, self.clusters.count, self.exposure, self.density_factor, ms
        )
        self.trace.append(rec)
        self.snapshots.append(self.evaluator.t.copy())
        return rec


def sample_value(current: float, lo: float, hi: float, k: int, sigma0: float, rng: np.random.Generator) -> float:
    """Gaussian proposal around ``current`` with spread ``sigma0 * (hi - lo) / k``, clamped."""
    sigma = sigma0 * (hi - lo) / max(k, 1)
    return float(np.clip(rng.normal(current, sigma), lo, hi))


def log_exposure_grid(ranges: PhysicalRanges, k: int) -> np.ndarray:
    return np.geomspace(ranges.s_min, ranges.s_max, k)


def _assign_cluster_means(values: np.ndarray, clusters: ClusterMap) -> np.ndarray:
    out = values.copy()
    for c in range(clusters.count):
        sl = clusters.members(c)
        out[sl] = values[sl].mean()
    return out


def initialize(
    rgb: RgbVolume,
    config: OptimizerConfig,
    views: list[CameraView],
    voxel_size: float,
    origin=None,
) -> OptimizerState:
    """Initial fields, clusters and exposure from a reconstructed colour volume."""
    ranges = config.ranges
    rgb = rgb.normalized()
    occ = apply_sparse_threshold(rgb, config.threshold)
    n = int(occ.sum())
    if n == 0:
        raise ConfigError("colour volume has no voxel above the sparse threshold")
    rng = np.random.default_rng(config.seed)
    shape = None
    factor = 1.0
    if config.mode == FULL:
        t = rng.uniform(ranges.t_min, ranges.t_max, n)
        d = rng.uniform(ranges.d_min, ranges.d_max, n)
    else:
        red = rgb.r[occ]
        shape = red / red.max() if red.max() > 0 else np.ones(n)
        t = ranges.t_min + (ranges.t_max - ranges.t_min) * np.clip(rgb.max_channel()[occ], 0.0, 1.0)
        d = _factor_densities(shape, factor, config)

    clusters = init_clusters(occ) if config.clustering else ClusterMap.singletons(n)
    t = _assign_cluster_means(t, clusters)
    if config.mode == FULL:
        d = _assign_cluster_means(d, clusters)

    dims = rgb.dims
    temp = np.full(dims.total, EMPTY_TEMPERATURE)
    dens = np.full(dims.total, EMPTY_DENSITY)
    temp[occ], dens[occ] = t, d
    volume = FireVolume.from_fields(dims, temp, dens, occ, voxel_size, origin)

    evaluator = EnergyEvaluator(
        volume, views, ranges.s_min, config.weights, config.render, ranges, include_density=config.mode == FULL
    )
    best = None
    for s in log_exposure_grid(ranges, config.exposure_candidates):
        p = evaluator.propose_exposure(float(s))
        if best is None or p.energy < best.energy:
            best = p
    best.commit()

    state = OptimizerState(evaluator, config, clusters, rng, factor, shape)
    state.scores = np.full(clusters.count, state.energy)
    state.record()
    logger.info("initialised %d occupied voxels, exposure %.4g, energy %.6g", n, state.exposure, state.energy)
    return state


def _factor_densities(shape, factor, config: OptimizerConfig) -> np.ndarray:
    r = config.ranges
    return np.clip(factor * config.density_reference * shape, r.d_min, r.d_max)


def _accept(state: OptimizerState, kind: str, energy: float) -> None:
    state.accepted.append(Acceptance(state.iteration, state.clusters.level, kind, energy))


def sweep_field(state: OptimizerState, field_name: str, views=None, config=None) -> OptimizerState:
    """One pass over all clusters of ``field_name`` ("temperature" or "density")."""
    config = config or state.config
    ev = state.evaluator
    if field_name == "temperature":
        lo, hi = config.ranges.temperature
        values, propose = (lambda: ev.t), ev.propose_temperature
    elif field_name == "density":
        if config.mode != FULL:
            raise ModeError("per-voxel densities are only free in full mode")
        lo, hi = config.ranges.density
        values, propose = (lambda: ev.d), ev.propose_density
    else:
        raise ConfigError(f"unknown field {field_name!r}")
    k = max(state.iteration, 1)
    cmap = state.clusters
    for c in range(cmap.count):
        members = cmap.members(c)
        ctx = ev.context(members)
        current = float(values()[members].mean())
        score = ev.energy
        for _ in range(config.n_samples):
            if not state.budget_left():
                return state
            v = sample_value(current, lo, hi, k, config.sigma0, state.rng)
            p = propose(ctx, v)
            if p.energy < score:
                p.commit()
                score = p.energy
                current = v
                state.scores[c] = score
                _accept(state, field_name, score)
    return state


def _log_line_search(state: OptimizerState, current: float, lo: float, hi: float, evaluate, kind: str) -> float:
    config = state.config
    k = max(state.iteration, 1)
    log_lo, log_hi = np.log(lo), np.log(hi)
    log_cur = np.log(current)
    for _ in range(config.n_samples):
        if not state.budget_left():
            break
        cand = float(np.exp(sample_value(log_cur, log_lo, log_hi, k, config.sigma0, state.rng)))
        cand = min(max(cand, lo), hi)
        p, score = evaluate(cand)
        if score < _score_for(state, kind):
            p.commit()
            log_cur = np.log(cand)
            current = cand
            _accept(state, kind, state.energy)
    return current


def _score_for(state: OptimizerState, kind: str) -> float:
    bd = state.breakdown
    return bd.weights.w_am * bd.e_am if kind == "exposure" else bd.total


def estimate_exposure(state: OptimizerState, views=None, config=None) -> float:
    """Log-space search on the exposure; only the appearance term is compared."""
    ev = state.evaluator
    ranges = state.config.ranges

    def evaluate(s):
        p = ev.propose_exposure(s)
        return p, p.breakdown.weights.w_am * p.breakdown.e_am

    return _log_line_search(state, ev.s, ranges.s_min, ranges.s_max, evaluate, "exposure")


def estimate_density_factor(state: OptimizerState, views=None, config=None) -> float:
    """Log-space search on the global density multiplier (simplified mode only)."""
    if state.config.mode != SIMPLIFIED or state.density_shape is None:
        raise ModeError("the density factor only exists in simplified mode")
    ev = state.evaluator
    lo, hi = state.config.factor_range

    def evaluate(f):
        p = ev.propose_densities(_factor_densities(state.density_shape, f, state.config))
        return p, p.energy

    state.density_factor = _log_line_search(state, state.density_factor, lo, hi, evaluate, "density_factor")
    return state.density_factor


def run(
    state: OptimizerState, views=None, config=None, callback=None
) -> tuple[FireVolume, float, list[TraceRecord]]:
    """Outer loop until the iteration cap, the evaluation budget or a plateau.

    A plateau only ends the run once clustering cannot refine any further,
    since a refinement opens new degrees of freedom.  A run whose energy is
    exactly zero stops immediately.  ``callback(state)`` runs after every
    recorded iteration (checkpointing).
    """
    config = config or state.config
    stall = 0
    prev = state.energy
    while state.iteration < config.max_iterations and state.energy > 0 and state.budget_left():
        state.iteration += 1
        if config.mode == FULL:
            state.active = "temperature" if state.iteration % 2 == 1 else "density"
        sweep_field(state, state.active)
        if config.mode == SIMPLIFIED:
            estimate_density_factor(state)
        estimate_exposure(state)
        if state.iteration % config.refine_period == 0:
            refined = refine_clusters(state.clusters)
            if refined.count != state.clusters.count:
                stall = 0
            state.clusters = refined
        state.evaluator.refresh()
        state.scores = np.full(state.clusters.count, state.energy)
        rec = state.record()
        logger.info(
            "iter %d energy %.6g (am %.6g, sm %.6g) clusters %d s=%.4g f=%.4g evals %d",
            rec.iteration, rec.total, rec.e_am, rec.e_sm, rec.clusters, rec.exposure,
            rec.density_factor, state.evaluations,
        )
        if callback is not None:
            callback(state)
        rel = (prev - state.energy) / prev if prev > 0 else 0.0
        prev = state.energy
        stall = stall + 1 if rel < config.plateau_tol else 0
        if stall >= config.patience and state.clusters.saturated:
            break
    return state.volume, state.exposure, state.trace


def with_config(config: OptimizerConfig, **changes) -> OptimizerConfig:
    return replace(config, **changes)
