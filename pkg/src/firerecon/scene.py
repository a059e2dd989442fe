"""Direct lighting of simple Lambertian geometry by a fire volume.

The flame acts as a many-point light: each lighting sample is an occupied
voxel emitting ``kappa * RGB(B(T)) * h^3`` W/sr, attenuated by the volume on
the way to the surface.  The baseline replaces the flame (as a light) by a
small spherical emitter of the same total intensity, while the flame itself
stays visible to the camera.

Scene documents are JSON::

    {
      "quads": [{"corner": [x, y, z], "edge1": [...], "edge2": [...], "albedo": [r, g, b]}],
      "sphere": {"center": [x, y, z], "radius": r, "intensity": [r, g, b]},   # optional
      "volume_offset": [dx, dy, dz],                                          # optional
      "camera": {"eye": [...], "target": [...], "width": w, "height": h, "fov_deg": f},
      "samples": n, "seed": s, "mode": "volume" | "baseline"
    }
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError
from .radiometry import AbsorptionModel, SpectralBins, absorption_coefficient
from .render import (
    CameraView,
    FireVolume,
    composite_transmittance,
    generate_rays,
    luminance,
    march_samples,
    render_rays,
    voxel_colors,
)

VOLUME = "volume"
BASELINE = "baseline"
_EPS = 1e-6


@dataclass(frozen=True)
class Quad:
    """Parallelogram ``corner + u*edge1 + v*edge2`` for ``u, v`` in [0, 1]."""

    corner: tuple
    edge1: tuple
    edge2: tuple
    albedo: tuple = (0.8, 0.8, 0.8)

    def __post_init__(self):
        a = np.asarray(self.albedo, dtype=np.float64)
        if a.shape != (3,) or np.any(a < 0) or np.any(a > 1):
            raise ConfigError("quad albedo must be three values in [0, 1]")
        if np.linalg.norm(np.cross(self.edge1, self.edge2)) == 0:
            raise ConfigError("quad edges must not be parallel")

    @property
    def normal(self) -> np.ndarray:
        n = np.cross(np.asarray(self.edge1, float), np.asarray(self.edge2, float))
        return n / np.linalg.norm(n)

    def intersect(self, origins, dirs) -> np.ndarray:
        """Ray parameter of the hit, ``inf`` on miss."""
        c = np.asarray(self.corner, float)
        e1, e2 = np.asarray(self.edge1, float), np.asarray(self.edge2, float)
        n = np.cross(e1, e2)
        denom = dirs @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            t = ((c - origins) @ n) / denom
        p = origins + t[:, None] * dirs - c
        # solve p = u*e1 + v*e2 in the plane via the dual basis
        g = np.array([[e1 @ e1, e1 @ e2], [e1 @ e2, e2 @ e2]])
        uv = np.linalg.solve(g, np.stack([p @ e1, p @ e2])).T
        ok = (np.abs(denom) > 1e-15) & (t > _EPS) & np.all((uv >= 0) & (uv <= 1), axis=1)
        return np.where(ok, t, np.inf)


@dataclass(frozen=True)
class SphereLight:
    center: tuple
    radius: float
    intensity: tuple  # radiant intensity per channel, W/sr

    def __post_init__(self):
        if not self.radius > 0:
            raise ConfigError("sphere radius must be positive")

    @property
    def radiance(self) -> np.ndarray:
        """Uniform surface radiance giving the stated intensity: ``I / (pi r^2)``."""
        return np.asarray(self.intensity, float) / (np.pi * self.radius**2)


@dataclass
class SceneDemo:
    volume: FireVolume
    quads: list[Quad] = field(default_factory=list)
    sphere: SphereLight | None = None
    mode: str = VOLUME

    def __post_init__(self):
        if self.mode not in (VOLUME, BASELINE):
            raise ConfigError(f"scene mode must be {VOLUME!r} or {BASELINE!r}")
        if self.mode == BASELINE and self.sphere is None:
            raise ConfigError("baseline mode needs a sphere emitter")


def voxel_intensities(volume: FireVolume, bins: SpectralBins, model: AbsorptionModel) -> np.ndarray:
    """Radiant intensity (W/sr, linear RGB) of every occupied voxel, ignoring self-absorption."""
    occ = np.flatnonzero(volume.occupied)
    kappa = absorption_coefficient(volume.density.values[occ], model)
    return kappa[:, None] * voxel_colors(volume, bins)[occ] * volume.voxel_size**3


def equivalent_sphere(volume: FireVolume, radius: float, bins=SpectralBins(), model=AbsorptionModel()) -> SphereLight:
    """Sphere at the emission-weighted centroid radiating the volume's total intensity."""
    inten = voxel_intensities(volume, bins, model)
    w = np.maximum(luminance(inten), 0.0)
    pos = _voxel_centers(volume)
    center = (w @ pos) / w.sum() if w.sum() > 0 else volume.center
    return SphereLight(tuple(center), radius, tuple(np.maximum(inten.sum(axis=0), 0.0)))


def _voxel_centers(volume: FireVolume, idx=None) -> np.ndarray:
    idx = np.flatnonzero(volume.occupied) if idx is None else idx
    d = volume.dims
    y = idx % d.ny
    z = (idx // d.ny) % d.nz
    x = idx // (d.ny * d.nz)
    return volume.origin + (np.stack([x, y, z], axis=-1) + 0.5) * volume.voxel_size


def _light_samples(scene: SceneDemo, n: int, rng, bins, model):
    """Shared light samples: positions, per-sample intensity / pdf weights and emitter normals."""
    if scene.mode == VOLUME:
        occ = np.flatnonzero(scene.volume.occupied)
        if occ.size == 0:
            return np.zeros((0, 3)), np.zeros((0, 3)), None
        inten = voxel_intensities(scene.volume, bins, model)
        strata = np.floor((np.arange(n) + rng.random(n)) / n * occ.size).astype(np.int64)
        strata = np.minimum(strata, occ.size - 1)
        jitter = rng.random((n, 3)) - 0.5
        pos = _voxel_centers(scene.volume, occ[strata]) + jitter * scene.volume.voxel_size
        # pdf of each voxel is 1 / n_occ; averaging over n samples
        return pos, inten[strata] * occ.size / n, None
    s = scene.sphere
    # stratified uniform directions on the sphere (equal-area bands in z)
    u = (np.arange(n) + rng.random(n)) / n
    phi = 2 * np.pi * rng.random(n)
    z = 1 - 2 * u
    r = np.sqrt(np.maximum(0.0, 1 - z * z))
    normals = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)
    pos = np.asarray(s.center, float) + s.radius * normals
    area = 4 * np.pi * s.radius**2
    weight = np.broadcast_to(s.radiance * area / n, (n, 3))
    return pos, np.array(weight), normals


def _occluded(quads, origins, dirs, dist) -> np.ndarray:
    blocked = np.zeros(len(origins), dtype=bool)
    for q in quads:
        t = q.intersect(origins, dirs)
        blocked |= t < dist * (1 - 1e-6)
    return blocked


def irradiance(
    scene: SceneDemo,
    points,
    normals,
    n_samples: int = 256,
    seed: int = 0,
    bins: SpectralBins = SpectralBins(),
    step: float | None = None,
    model: AbsorptionModel = AbsorptionModel(),
) -> np.ndarray:
    """Direct irradiance (linear RGB, W/m^2) at surface ``points`` with unit ``normals``."""
    if n_samples < 1:
        raise ConfigError("need at least one light sample")
    points = np.atleast_2d(np.asarray(points, float))
    normals = np.atleast_2d(np.asarray(normals, float))
    rng = np.random.default_rng(seed)
    vol = scene.volume
    step = vol.voxel_size / 2 if step is None else step
    pos, weight, light_n = _light_samples(scene, n_samples, rng, bins, model)
    dens = vol.density.values
    out = np.zeros((len(points), 3))
    for j in range(len(pos)):
        to = pos[j] - points
        dist = np.linalg.norm(to, axis=1)
        dirs = to / np.maximum(dist, 1e-300)[:, None]
        cos_s = np.einsum("ij,ij->i", dirs, normals)
        if light_n is None:
            cos_l = np.ones(len(points))
        else:
            cos_l = np.maximum(-dirs @ light_n[j], 0.0)
        lit = (cos_s > 0) & (cos_l > 0) & (dist > 0)
        lit &= ~_occluded(scene.quads, points + _EPS * normals, dirs, dist)
        if not lit.any():
            continue
        idx = np.flatnonzero(lit)
        trans = np.ones(idx.size)
        if scene.mode == VOLUME:
            smp = march_samples(vol, points[idx], dirs[idx], step, t_max=dist[idx])
            if smp.ray.size:
                valid = smp.voxel >= 0
                kappa = absorption_coefficient(np.where(valid, dens[np.where(valid, smp.voxel, 0)], 0.0), model)
                trans[smp.ray] = composite_transmittance(kappa * smp.length)
        g = cos_s[idx] * cos_l[idx] * trans / dist[idx] ** 2
        out[idx] += g[:, None] * weight[j]
    return out


def render_scene_demo(
    scene: SceneDemo,
    view: CameraView,
    bins: SpectralBins = SpectralBins(),
    step: float | None = None,
    model: AbsorptionModel = AbsorptionModel(),
    n_samples: int = 256,
    seed: int = 0,
) -> np.ndarray:
    """HDR linear-RGB image: volume radiance in front of directly lit quads."""
    vol = scene.volume
    step = vol.voxel_size / 2 if step is None else step
    origins, dirs = generate_rays(view)
    n = len(origins)
    t_hit = np.full(n, np.inf)
    which = np.full(n, -1)
    for i, q in enumerate(scene.quads):
        t = q.intersect(origins, dirs)
        closer = t < t_hit
        t_hit[closer], which[closer] = t[closer], i
    hit = np.flatnonzero(which >= 0)
    surface = np.zeros((n, 3))
    if hit.size:
        pts = origins[hit] + t_hit[hit, None] * dirs[hit]
        nrm = np.array([scene.quads[i].normal for i in which[hit]])
        # two-sided quads: shade the side facing the camera
        nrm *= np.where(np.einsum("ij,ij->i", nrm, dirs[hit]) > 0, -1.0, 1.0)[:, None]
        e = irradiance(scene, pts, nrm, n_samples, seed, bins, step, model)
        albedo = np.array([scene.quads[i].albedo for i in which[hit]], dtype=float)
        surface[hit] = albedo / np.pi * e
    t_max = np.where(np.isfinite(t_hit), t_hit, np.inf)
    rgb, trans = render_rays(vol, origins, dirs, bins, step, model, t_max=t_max)
    # out-of-gamut blackbody colours can carry a slightly negative channel
    img = np.maximum(np.maximum(rgb, 0.0) + trans[:, None] * surface, 0.0)
    return img.reshape(view.height, view.width, 3)


def canonical_scene(volume: FireVolume, mode: str = VOLUME, sphere_radius: float | None = None) -> SceneDemo:
    """Flame above a floor with a small square occluder half-way down."""
    lo = volume.origin
    ext = volume.extent
    c = volume.center
    size = float(ext.max())
    floor_y = lo[1] - 0.5 * size
    floor = Quad(
        (c[0] - 3 * size, floor_y, c[2] - 3 * size), (0.0, 0.0, 6 * size), (6 * size, 0.0, 0.0), (0.8, 0.8, 0.8)
    )
    occ_y = lo[1] - 0.1 * size
    half = 0.2 * size
    occluder = Quad(
        (c[0] - half + 0.35 * size, occ_y, c[2] - half), (0.0, 0.0, 2 * half), (2 * half, 0.0, 0.0), (0.5, 0.5, 0.5)
    )
    sphere = equivalent_sphere(volume, sphere_radius or 0.02 * size)
    return SceneDemo(volume, [floor, occluder], sphere, mode)


def canonical_view(volume: FireVolume, width: int = 96, height: int = 72) -> CameraView:
    """Oblique camera framing the occluder's shadow on the floor."""
    c = volume.center
    size = float(volume.extent.max())
    floor_y = volume.origin[1] - 0.5 * size
    target = np.array([c[0] + 0.6 * size, floor_y, c[2]])
    eye = target + np.array([0.0, 1.6 * size, 2.0 * size])
    return CameraView.look_at(eye, target, width, height, fov_deg=60.0, name="scene")


def shadow_edge_gradient(img, mask=None) -> float:
    """Mean gradient magnitude of brightness-normalised luminance inside ``mask``.

    Normalising by the mean luminance makes the statistic independent of the
    light's overall power, so only the sharpness of transitions matters.
    """
    lum = luminance(np.asarray(img, float))
    ref = lum[mask].mean() if mask is not None and mask.any() else lum.mean()
    if ref <= 0:
        return 0.0
    gy, gx = np.gradient(lum / ref)
    mag = np.hypot(gx, gy)
    return float(mag[mask].mean() if mask is not None else mag.mean())


def shadow_boundary_mask(scene: SceneDemo, view: CameraView, band: int = 3) -> np.ndarray:
    """Floor pixels within ``band`` pixels of the hard shadow cast from the light centroid.

    Pixels near the occluder's silhouette or seen through the flame are left
    out, so only the shadow transition itself is measured.
    """
    light = np.asarray(scene.sphere.center if scene.sphere else scene.volume.center, float)
    origins, dirs = generate_rays(view)
    floor, occluders = scene.quads[0], scene.quads[1:]
    t = floor.intersect(origins, dirs)
    on_floor = np.isfinite(t)
    blocker = np.zeros(len(t), dtype=bool)
    for q in occluders:
        blocker |= np.isfinite(q.intersect(origins, dirs))
    _, trans = render_rays(scene.volume, origins, dirs, SpectralBins(), scene.volume.voxel_size / 2)
    blocker |= trans < 0.999
    on_floor &= ~blocker
    pts = origins + np.where(on_floor, t, 0.0)[:, None] * dirs
    to = light - pts
    dist = np.linalg.norm(to, axis=1)
    shadow = _occluded(occluders, pts, to / dist[:, None], dist) & on_floor
    shadow = shadow.reshape(view.height, view.width)
    on_floor = on_floor.reshape(view.height, view.width)
    edge = np.zeros_like(shadow)
    edge[:-1] |= shadow[:-1] != shadow[1:]
    edge[1:] |= shadow[:-1] != shadow[1:]
    edge[:, :-1] |= shadow[:, :-1] != shadow[:, 1:]
    edge[:, 1:] |= shadow[:, :-1] != shadow[:, 1:]
    edge &= on_floor
    blocker = _dilate(blocker.reshape(view.height, view.width), band + 1)
    return _dilate(edge, band) & on_floor & ~blocker


def _dilate(mask: np.ndarray, steps: int) -> np.ndarray:
    for _ in range(steps):
        g = mask.copy()
        g[1:] |= mask[:-1]
        g[:-1] |= mask[1:]
        g[:, 1:] |= mask[:, :-1]
        g[:, :-1] |= mask[:, 1:]
        mask = g
    return mask


def scene_from_dict(doc: dict, volume: FireVolume) -> tuple[SceneDemo, CameraView, int, int]:
    """Parse a scene document (see module docstring); returns scene, view, samples, seed."""
    try:
        offset = np.asarray(doc.get("volume_offset", (0.0, 0.0, 0.0)), float)
        if np.any(offset):
            volume = replace(volume, origin=volume.origin + offset)
        quads = [Quad(tuple(q["corner"]), tuple(q["edge1"]), tuple(q["edge2"]), tuple(q.get("albedo", (0.8,) * 3)))
                 for q in doc.get("quads", [])]
        sphere = None
        if doc.get("sphere"):
            s = doc["sphere"]
            sphere = SphereLight(tuple(s["center"]), float(s["radius"]), tuple(s["intensity"]))
        scene = SceneDemo(volume, quads, sphere, doc.get("mode", VOLUME))
        cam = doc.get("camera")
        view = (
            CameraView.look_at(cam["eye"], cam["target"], int(cam["width"]), int(cam["height"]),
                               float(cam.get("fov_deg", 40.0)), tuple(cam.get("up", (0.0, 1.0, 0.0))), "scene")
            if cam else canonical_view(volume)
        )
        return scene, view, int(doc.get("samples", 256)), int(doc.get("seed", 0))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed scene document: {exc}") from exc


def scene_to_dict(scene: SceneDemo, view: CameraView, samples: int = 256, seed: int = 0) -> dict:
    doc = {
        "quads": [
            {"corner": list(map(float, q.corner)), "edge1": list(map(float, q.edge1)),
             "edge2": list(map(float, q.edge2)), "albedo": list(map(float, q.albedo))}
            for q in scene.quads
        ],
        "mode": scene.mode,
        "samples": samples,
        "seed": seed,
        "camera": {
            "eye": view.position.tolist(),
            "target": (view.position + view.rotation[:, 2]).tolist(),
            "up": (-view.rotation[:, 1]).tolist(),
            "width": view.width,
            "height": view.height,
            "fov_deg": float(np.degrees(2 * np.arctan(view.width / (2 * view.focal)))),
        },
    }
    if scene.sphere:
        s = scene.sphere
        doc["sphere"] = {"center": list(map(float, s.center)), "radius": float(s.radius),
                         "intensity": list(map(float, s.intensity))}
    return doc
