"""JSON job documents for the command line tools.

A job document looks like::

    {
      "input": {"rgb_volume": "rgb.fvol"},            # or {"synthetic": {"kind": ..., "dims": [...], "seed": 0}}
      "views": [
        {"name": "front", "width": 160, "height": 120, "focal": 298.6, "cx": 79.5, "cy": 59.5,
         "pose": [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, -0.6]], "goal": "goal_front.ppm"},
        {"orbit": {"azimuth_deg": 90, "distance": 0.6, "width": 160, "height": 120, "fov_deg": 30},
         "goal": "goal_side.ppm"}
      ],
      "optimizer": {"mode": "simplified", "max_iterations": 60, "w_am": 1, "w_sm": 10, "seed": 0},
      "render": {"n_bins": 40, "lambda_min_nm": 380, "lambda_max_nm": 780, "step": null,
                 "sigma_a": 5e-29, "interpolation": "nearest"},
      "output_dir": "out",
      "checkpoint_every": 10
    }

Relative paths resolve against the directory of the document.  Poses are
3x4 row-major camera-to-world matrices (camera x right, y down, z forward).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .energy import EnergyWeights
from .errors import ConfigError
from .optimizer import OptimizerConfig
from .radiometry import AbsorptionModel, PhysicalRanges, SpectralBins
from .render import CameraView, RenderConfig
from .synthetic import SyntheticRecipe

MAX_VIEWS = 6

_OPT_KEYS = {f.name for f in fields(OptimizerConfig)} - {"ranges", "weights", "render"}


@dataclass
class ViewSpec:
    camera: CameraView
    goal_path: Path | None = None


@dataclass
class JobConfig:
    views: list[ViewSpec]
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    rgb_volume: Path | None = None
    synthetic: SyntheticRecipe | None = None
    output_dir: Path = Path("out")
    checkpoint_every: int = 0
    base_dir: Path = Path(".")

    @property
    def render(self) -> RenderConfig:
        return self.optimizer.render


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise ConfigError(f"{where}: missing required field {key!r}")
    return doc[key]


def parse_render(doc: dict | None) -> RenderConfig:
    doc = dict(doc or {})
    unknown = set(doc) - {"n_bins", "lambda_min_nm", "lambda_max_nm", "step", "sigma_a", "interpolation"}
    if unknown:
        raise ConfigError(f"render: unknown field(s) {sorted(unknown)}")
    bins = SpectralBins(
        float(doc.get("lambda_min_nm", 380.0)) * 1e-9,
        float(doc.get("lambda_max_nm", 780.0)) * 1e-9,
        int(doc.get("n_bins", 40)),
    )
    step = doc.get("step")
    if step is not None and not float(step) > 0:
        raise ConfigError("render.step must be positive")
    interp = doc.get("interpolation", "nearest")
    if interp not in ("nearest", "trilinear"):
        raise ConfigError(f"render.interpolation must be 'nearest' or 'trilinear', got {interp!r}")
    return RenderConfig(bins, None if step is None else float(step), AbsorptionModel(float(doc.get("sigma_a", 5e-29))), interp)


def render_to_dict(r: RenderConfig) -> dict:
    return {
        "n_bins": r.bins.n_bins,
        "lambda_min_nm": r.bins.lambda_min * 1e9,
        "lambda_max_nm": r.bins.lambda_max * 1e9,
        "step": r.step,
        "sigma_a": r.model.sigma_a,
        "interpolation": r.interpolation,
    }


def parse_optimizer(doc: dict | None, render: RenderConfig) -> OptimizerConfig:
    doc = dict(doc or {})
    ranges = PhysicalRanges(**doc.pop("ranges", {}))
    weights = EnergyWeights(float(doc.pop("w_am", 1.0)), float(doc.pop("w_sm", 10.0)))
    unknown = set(doc) - _OPT_KEYS
    if unknown:
        raise ConfigError(f"optimizer: unknown field(s) {sorted(unknown)}")
    try:
        return OptimizerConfig(ranges=ranges, weights=weights, render=render, **doc)
    except TypeError as exc:
        raise ConfigError(f"optimizer: {exc}") from exc


def optimizer_to_dict(c: OptimizerConfig) -> dict:
    out = {k: getattr(c, k) for k in sorted(_OPT_KEYS)}
    out["ranges"] = asdict(c.ranges)
    out["w_am"], out["w_sm"] = c.weights.w_am, c.weights.w_sm
    return out


def parse_view(doc: dict, index: int, center=(0.0, 0.0, 0.0)) -> CameraView:
    where = f"views[{index}]"
    name = doc.get("name", f"view{index}")
    if "orbit" in doc:
        o = doc["orbit"]
        return CameraView.orbit(
            o.get("center", center), float(_require(o, "distance", where + ".orbit")),
            float(o.get("azimuth_deg", 0.0)), int(_require(o, "width", where + ".orbit")),
            int(_require(o, "height", where + ".orbit")), float(o.get("fov_deg", 30.0)),
            float(o.get("elevation_deg", 0.0)), name,
        )
    w, h = int(_require(doc, "width", where)), int(_require(doc, "height", where))
    pose = np.asarray(_require(doc, "pose", where), dtype=np.float64)
    if pose.size != 12:
        raise ConfigError(f"{where}: pose must be a 3x4 matrix")
    return CameraView(
        w, h, float(_require(doc, "focal", where)), float(doc.get("cx", (w - 1) / 2)),
        float(doc.get("cy", (h - 1) / 2)), pose.reshape(3, 4), name=name,
    )


def view_to_dict(view: CameraView, goal: str | None = None) -> dict:
    out = {
        "name": view.name, "width": view.width, "height": view.height, "focal": view.focal,
        "cx": view.cx, "cy": view.cy, "pose": view.pose.tolist(),
    }
    if goal is not None:
        out["goal"] = goal
    return out


def parse_recipe(doc: dict) -> SyntheticRecipe:
    doc = dict(doc)
    if "dims" in doc:
        doc["dims"] = tuple(int(n) for n in doc["dims"])
    if "ranges" in doc:
        doc["ranges"] = PhysicalRanges(**doc["ranges"])
    try:
        return SyntheticRecipe(**doc)
    except TypeError as exc:
        raise ConfigError(f"synthetic: {exc}") from exc


def parse_job(doc: dict, base_dir=".") -> JobConfig:
    if not isinstance(doc, dict):
        raise ConfigError("job document must be a JSON object")
    base = Path(base_dir)
    render = parse_render(doc.get("render"))
    opt = parse_optimizer(doc.get("optimizer"), render)
    src = doc.get("input", {})
    rgb = Path(base, src["rgb_volume"]) if "rgb_volume" in src else None
    recipe = parse_recipe(src["synthetic"]) if "synthetic" in src else None
    views_doc = doc.get("views") or []
    if len(views_doc) > MAX_VIEWS:
        raise ConfigError(f"views: at most {MAX_VIEWS} views are supported, got {len(views_doc)}")
    views = [
        ViewSpec(parse_view(v, i), Path(base, v["goal"]) if v.get("goal") else None)
        for i, v in enumerate(views_doc)
    ]
    every = int(doc.get("checkpoint_every", 0))
    if every < 0:
        raise ConfigError("checkpoint_every must be >= 0")
    return JobConfig(views, opt, rgb, recipe, Path(base, doc.get("output_dir", "out")), every, base)


def load_job(path) -> JobConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_job(doc, path.parent)


def job_to_dict(job: JobConfig) -> dict:
    """Fully resolved document (every default spelled out)."""
    src = {}
    if job.rgb_volume is not None:
        src["rgb_volume"] = str(job.rgb_volume)
    if job.synthetic is not None:
        r = asdict(job.synthetic)
        r["dims"] = list(r["dims"])
        src["synthetic"] = r
    return {
        "input": src,
        "views": [view_to_dict(v.camera, str(v.goal_path) if v.goal_path else None) for v in job.views],
        "optimizer": optimizer_to_dict(job.optimizer),
        "render": render_to_dict(job.render),
        "output_dir": str(job.output_dir),
        "checkpoint_every": job.checkpoint_every,
    }
