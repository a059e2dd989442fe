import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from firerecon.errors import ConfigError, ModeError
from firerecon.optimizer import (
    FULL,
    SIMPLIFIED,
    OptimizerConfig,
    estimate_density_factor,
    estimate_exposure,
    initialize,
    log_exposure_grid,
    run,
    sample_value,
    sweep_field,
)
from firerecon.radiometry import PhysicalRanges
from firerecon.render import CameraView, FireVolume, apply_exposure_and_encode, centered_origin, render_image
from firerecon.voxelgrid import ClusterMap, GridDims, RgbVolume, apply_sparse_threshold

from conftest import synthetic_problem


def init_problem(cfg=OptimizerConfig(), **kw):
    flame, views = synthetic_problem(**kw)
    state = initialize(flame.rgb, cfg, views, flame.volume.voxel_size, flame.volume.origin)
    return flame, views, state


class TestConfig:
    @pytest.mark.parametrize(
        "kw", [{"n_samples": 0}, {"sigma0": 0.0}, {"sigma0": 1.5}, {"patience": 0}, {"mode": "fast"}]
    )
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            OptimizerConfig(**kw)


class TestSampling:
    def test_sigma_halves(self):
        draws = {}
        for k in (1, 2):
            rng = np.random.default_rng(0)
            draws[k] = np.array([sample_value(0.5, -1e9, 1e9, k, 0.1, rng) for _ in range(5)])
        # same normal deviates, spread scaled by 1/k
        assert np.allclose((draws[2] - 0.5), (draws[1] - 0.5) / 2)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0, 1), st.integers(1, 50), st.floats(0.01, 1), st.integers(0, 2**31))
    def test_within_range(self, cur, k, sigma0, seed):
        v = sample_value(cur, 0.0, 1.0, k, sigma0, np.random.default_rng(seed))
        assert 0.0 <= v <= 1.0

    def test_concentrates(self):
        rng = np.random.default_rng(1)
        k, sigma = 1000, 0.1 * 2000 / 1000
        draws = np.array([sample_value(1300.0, 300, 2300, k, 0.1, rng) for _ in range(1000)])
        assert draws.std() < 2 * sigma
        assert abs(draws.mean() - 1300.0) < 3 * sigma

    def test_exposure_grid(self):
        g = log_exposure_grid(PhysicalRanges(), 13)
        assert g[0] == pytest.approx(0.01) and g[-1] == pytest.approx(1000.0)
        assert np.allclose(np.diff(np.log10(g)), 5 / 12)


class TestInitialize:
    def test_simplified(self):
        flame, views, st_ = init_problem()
        n = int(apply_sparse_threshold(flame.rgb.normalized()).sum())
        assert st_.n_free_parameters == n + 2
        assert st_.clusters.count == 2 and st_.clusters.level == 0
        t = st_.evaluator.t
        assert np.all((t >= 300) & (t <= 2300))
        # cluster value = mean of member voxels
        assert len(np.unique(t[st_.clusters.members(0)])) == 1
        assert st_.exposure in log_exposure_grid(PhysicalRanges(), 13)
        assert len(st_.trace) == 1 and st_.trace[0].iteration == 0

    def test_uniform_red_gives_unit_shape(self):
        dims = GridDims(4, 4, 4)
        rgb = RgbVolume(dims, np.full(64, 0.3), np.zeros(64), np.zeros(64))
        vol = FireVolume.empty(dims, 0.01, centered_origin(dims, 0.01))
        v = CameraView.orbit(vol.center, 0.2, 0.0, 8, 6, 30.0).with_goal(np.zeros((6, 8, 3)))
        st_ = initialize(rgb, OptimizerConfig(), [v], 0.01, vol.origin)
        assert np.array_equal(st_.density_shape, np.ones(64))

    def test_full_mode(self):
        flame, views, st_ = init_problem(OptimizerConfig(mode=FULL))
        n = int(apply_sparse_threshold(flame.rgb.normalized()).sum())
        assert st_.n_free_parameters == 2 * n + 1
        assert np.all((st_.evaluator.d >= 0.01e27) & (st_.evaluator.d <= 500e27))

    def test_empty(self):
        dims = GridDims(2, 2, 2)
        z = np.zeros(8)
        v = CameraView.orbit((0, 0, 0), 1.0, 0, 4, 4).with_goal(np.zeros((4, 4, 3)))
        with pytest.raises(ConfigError):
            initialize(RgbVolume(dims, z, z, z), OptimizerConfig(), [v], 0.01)


def two_voxel_state():
    dims = GridDims(1, 2, 1)
    occ = np.ones(2, bool)
    h = 0.02
    truth = FireVolume.from_fields(dims, np.array([1500.0, 1750.0]), np.full(2, 60e27), occ, h, centered_origin(dims, h))
    v = CameraView.orbit(truth.center, 0.2, 0.0, 12, 16, 30.0)
    v = v.with_goal(apply_exposure_and_encode(render_image(truth, v), 0.02))
    rgb = RgbVolume(dims, np.ones(2), np.full(2, 0.5), np.zeros(2))
    cfg = OptimizerConfig(density_reference=60e27)
    st_ = initialize(rgb, cfg, [v], h, truth.origin)
    st_.clusters = ClusterMap(0, np.array([0, 2]))
    st_.evaluator.propose_exposure(0.02).commit()
    return st_


class TestSweep:
    def test_matches_grid_search(self):
        st_ = two_voxel_state()
        ev = st_.evaluator
        ctx = ev.context(slice(0, 2))
        grid = np.linspace(300, 2300, 4001)
        best = min(ev.propose_temperature(ctx, float(t)).energy for t in grid)
        ev.evaluations = 0
        for k in range(1, 201):
            st_.iteration = k
            sweep_field(st_, "temperature")
        assert st_.energy <= 1.05 * best

    def test_equal_candidate_rejected(self):
        st_ = two_voxel_state()
        cfg = OptimizerConfig(sigma0=1e-12, density_reference=60e27)
        st_.config = cfg
        st_.iteration = 10**9  # spread ~ 0: candidates equal the current value
        before = st_.energy
        n_acc = len(st_.accepted)
        sweep_field(st_, "temperature")
        assert st_.energy == before
        assert len(st_.accepted) == n_acc

    def test_non_increasing(self):
        _, _, st_ = init_problem()
        e = [st_.energy]
        for k in range(1, 4):
            st_.iteration = k
            sweep_field(st_, "temperature")
            e.append(st_.energy)
        assert all(b <= a for a, b in zip(e, e[1:]))
        acc = [a.energy for a in st_.accepted]
        assert all(b < a for a, b in zip(acc, acc[1:]))

    def test_density_sweep_needs_full_mode(self):
        _, _, st_ = init_problem()
        with pytest.raises(ModeError):
            sweep_field(st_, "density")
        with pytest.raises(ModeError):
            cfg = OptimizerConfig(mode=FULL)
            _, _, full = init_problem(cfg)
            estimate_density_factor(full)


class TestLineSearches:
    def frozen_state(self, s_true=3.7, f_true=1.0):
        """Truth temperatures and density shape, with the scale ``f_true`` left to recover."""
        flame, views = synthetic_problem()
        truth = flame.volume
        occ = truth.occupied
        views = [v.with_goal(apply_exposure_and_encode(render_image(truth, v), s_true)) for v in views]
        mask = occ.astype(float)
        cfg = OptimizerConfig(density_reference=60e27 / f_true)
        st_ = initialize(RgbVolume(truth.dims, mask, mask, mask), cfg, views, truth.voxel_size, truth.origin)
        st_.density_shape = truth.density.values[occ] / 60e27
        st_.evaluator.set_temperatures(truth.temperature.values[occ])
        st_.evaluator.set_densities(truth.density.values[occ] / f_true)
        return st_, truth

    def test_exposure_recovery(self):
        st_, _ = self.frozen_state(s_true=3.7)
        am = st_.breakdown.e_am
        for k in range(1, 40):
            st_.iteration = k
            estimate_exposure(st_)
            assert st_.breakdown.e_am <= am
            am = st_.breakdown.e_am
        assert abs(st_.exposure - 3.7) / 3.7 < 0.05

    def test_density_factor_recovery(self):
        st_, truth = self.frozen_state(s_true=3.7, f_true=2.0)
        st_.evaluator.propose_exposure(3.7).commit()
        e = st_.energy
        for k in range(1, 40):
            st_.iteration = k
            estimate_density_factor(st_)
            assert st_.energy <= e
            e = st_.energy
        assert abs(st_.density_factor - 2.0) / 2.0 < 0.10

    def test_exposure_at_bound_unchanged(self):
        st_, _ = self.frozen_state(s_true=1000.0)
        st_.evaluator.propose_exposure(1000.0).commit()
        st_.iteration = 1
        before = st_.breakdown.e_am
        estimate_exposure(st_)
        assert st_.exposure == 1000.0 or st_.breakdown.e_am < before


class TestRun:
    def test_self_target_exits_immediately(self):
        dims = GridDims(6, 6, 6)
        n = dims.total
        rgb = RgbVolume(dims, np.full(n, 0.8), np.full(n, 0.4), np.zeros(n))
        h = 0.01
        origin = centered_origin(dims, h)
        cam = CameraView.orbit(np.zeros(3), 0.25, 30.0, 16, 12, 30.0)
        cfg = OptimizerConfig()
        probe = initialize(rgb, cfg, [cam.with_goal(np.zeros((12, 16, 3)))], h, origin)
        s = float(log_exposure_grid(cfg.ranges, 13)[9])
        goal = apply_exposure_and_encode(render_image(probe.volume, cam), s)
        st_ = initialize(rgb, cfg, [cam.with_goal(goal)], h, origin)
        assert st_.energy == 0.0
        _, _, trace = run(st_)
        assert len(trace) == 1 and st_.iteration == 0

    def test_monotone_and_cluster_doubling(self):
        _, _, st_ = init_problem(OptimizerConfig(max_iterations=24), n=10, width=32, height=24)
        _, _, trace = run(st_)
        totals = [r.total for r in trace]
        assert all(b <= a for a, b in zip(totals, totals[1:]))
        acc = [a.energy for a in st_.accepted]
        assert all(b < a for a, b in zip(acc, acc[1:]))
        counts = []
        for r in trace:
            if not counts or counts[-1] != r.clusters:
                counts.append(r.clusters)
        n = st_.evaluator.n_occ
        assert counts == [min(2 ** (i + 1), n) for i in range(len(counts))]
        its = [r.iteration for r in trace]
        assert its == sorted(set(its))
        assert st_.volume.check_ranges(st_.config.ranges)

    def test_deterministic(self):
        cfg = OptimizerConfig(max_iterations=6, record_timing=False)
        t1 = run(init_problem(cfg, n=8, width=24, height=18)[2])[2]
        t2 = run(init_problem(cfg, n=8, width=24, height=18)[2])[2]
        assert [r.row() for r in t1] == [r.row() for r in t2]

    def test_full_mode_alternates(self):
        cfg = OptimizerConfig(mode=FULL, max_iterations=4, n_samples=3)
        _, _, st_ = init_problem(cfg, n=8, width=24, height=18)
        run(st_)
        kinds = {a.iteration: set() for a in st_.accepted}
        for a in st_.accepted:
            kinds[a.iteration].add(a.kind)
        for it, ks in kinds.items():
            field = "temperature" if it % 2 == 1 else "density"
            assert ks <= {field, "exposure"}

    def test_evaluation_budget(self):
        cfg = OptimizerConfig(max_iterations=50, max_evaluations=300)
        _, _, st_ = init_problem(cfg, n=8, width=24, height=18)
        run(st_)
        assert st_.evaluations <= 300 + 13
        assert st_.exhausted

    def test_callback(self):
        seen = []
        _, _, st_ = init_problem(OptimizerConfig(max_iterations=3), n=8, width=24, height=18)
        run(st_, callback=lambda s: seen.append(s.iteration))
        assert seen == [1, 2, 3]
