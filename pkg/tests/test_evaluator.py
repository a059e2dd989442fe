import numpy as np
import pytest

from firerecon.energy import EnergyWeights, total_energy
from firerecon.errors import ConfigError
from firerecon.evaluator import EnergyEvaluator
from firerecon.render import CameraView, FireVolume, RenderConfig, apply_exposure_and_encode, centered_origin, render_image
from firerecon.voxelgrid import GridDims, init_clusters, refine_clusters


def setup(seed=0, n=8, include_density=False):
    rng = np.random.default_rng(seed)
    dims = GridDims(n, n + 2, n)
    occ = rng.random(dims.total) < 0.6
    truth = FireVolume.from_fields(
        dims, rng.uniform(1300, 1900, dims.total), rng.uniform(10e27, 80e27, dims.total), occ, 0.01,
        centered_origin(dims, 0.01),
    )
    views = []
    for k, az in enumerate((0.0, 70.0)):
        v = CameraView.orbit(truth.center, 0.35, az, 20, 15, 30.0, 10.0 * k)
        views.append(v.with_goal(apply_exposure_and_encode(render_image(truth, v), 0.5)))
    start = truth.with_fields(
        np.where(occ, rng.uniform(1000, 2000, dims.total), 300.0), np.where(occ, 30e27, 0.0)
    )
    ev = EnergyEvaluator(start, views, 0.4, EnergyWeights(), RenderConfig(), include_density=include_density)
    return ev, views


def reference(ev, views):
    return total_energy(ev.volume(), views, ev.s, ev.weights, ev.render, ev.ranges, ev.include_density)


@pytest.mark.parametrize("include_density", [False, True])
def test_initial_matches_full_render(include_density):
    ev, views = setup(include_density=include_density)
    ref = reference(ev, views)
    assert ev.energy == pytest.approx(ref.total, rel=1e-9)
    assert ev.current.appearance == pytest.approx(ref.appearance, rel=1e-9)


def test_incremental_proposals_match_full_evaluation():
    ev, views = setup(seed=1, include_density=True)
    rng = np.random.default_rng(0)
    clusters = refine_clusters(refine_clusters(init_clusters(np.ones(ev.n_occ, bool))))
    for step in range(30):
        c = int(rng.integers(clusters.count))
        ctx = ev.context(clusters.members(c))
        if step % 3 == 0:
            p = ev.propose_density(ctx, float(rng.uniform(1e27, 100e27)))
        elif step % 3 == 1:
            p = ev.propose_temperature(ctx, float(rng.uniform(900, 2200)))
        else:
            p = ev.propose_exposure(float(rng.uniform(0.1, 2.0)))
        before = ev.energy
        if rng.random() < 0.5:
            p.commit()
            assert ev.energy == p.energy
        else:
            assert ev.energy == before
        ref = reference(ev, views)
        assert abs(ev.energy - ref.total) <= 1e-6 * ref.total
    committed = ev.energy
    ev.refresh()
    assert ev.energy == committed


def test_proposal_does_not_mutate_until_commit():
    ev, _ = setup(seed=2)
    t0 = ev.t.copy()
    ctx = ev.context(slice(0, 5))
    p = ev.propose_temperature(ctx, 2100.0)
    assert np.array_equal(ev.t, t0)
    p.commit()
    assert np.all(ev.t[:5] == 2100.0) and np.array_equal(ev.t[5:], t0[5:])


def test_global_density_proposal():
    ev, views = setup(seed=3)
    p = ev.propose_densities(ev.d * 1.7)
    p.commit()
    assert ev.energy == pytest.approx(reference(ev, views).total, rel=1e-9)


def test_evaluation_counter():
    ev, _ = setup(seed=4)
    ctx = ev.context(slice(0, 3))
    for _ in range(5):
        ev.propose_temperature(ctx, 1500.0)
    ev.propose_exposure(1.0)
    assert ev.evaluations == 6


def test_requires_goals_and_nearest():
    ev, views = setup()
    vol = ev.volume()
    with pytest.raises(ConfigError):
        EnergyEvaluator(vol, [], 1.0)
    with pytest.raises(ConfigError):
        EnergyEvaluator(vol, views, 1.0, render=RenderConfig(interpolation="trilinear"))
