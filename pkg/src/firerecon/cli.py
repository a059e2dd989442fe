"""``firerecon`` command line interface.

Exit codes: 0 success, 2 invalid configuration or input, 3 missing file,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis, config, io, scene, synthetic
from .errors import ConfigError, DomainError, FormatError, ModeError, ShapeError
from .optimizer import OptimizerState, initialize, run
from .render import apply_exposure_and_encode, centered_origin, tonemap_reinhard

logger = logging.getLogger("firerecon")

EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_NUMERIC = 4


class OutputDir:
    """Output directory guard: every path handed out lies inside ``root``."""

    def __init__(self, root):
        # created on first use, so a failing command leaves nothing behind
        self.root = Path(root).resolve()

    def __call__(self, *parts) -> Path:
        p = self.root.joinpath(*parts).resolve()
        if self.root != p and self.root not in p.parents:
            raise ConfigError(f"refusing to write outside the output directory: {p}")
        p.parent.mkdir(parents=True, exist_ok=True)
        return p


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _need(path) -> Path:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"file not found: {path}")
    return path


# --------------------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    out = OutputDir(args.output_dir)
    recipe = synthetic.SyntheticRecipe(kind=args.recipe, dims=tuple(args.dims), seed=args.seed)
    flame = synthetic.generate_synthetic(recipe)
    azimuths = [i * 180.0 / args.views for i in range(args.views)] if args.azimuths is None else args.azimuths
    views = synthetic.standard_views(flame.volume, azimuths, args.width, args.height)
    render = config.RenderConfig()
    io.save_volume(out("truth.fvol"), flame.volume)
    io.save_rgb_volume(out("rgb.fvol"), flame.rgb, flame.volume.voxel_size)
    view_docs = []
    for v in views:
        hdr = render.render(flame.volume, v, threads=args.threads)
        io.write_pfm(out(f"goal_{v.name}.pfm"), hdr)
        io.write_ppm(out(f"goal_{v.name}.ppm"), apply_exposure_and_encode(hdr, flame.exposure))
        view_docs.append(config.view_to_dict(v, f"goal_{v.name}.ppm"))
    job = {
        "input": {"rgb_volume": "rgb.fvol"},
        "views": view_docs,
        "optimizer": {"seed": args.seed},
        "output_dir": "optimized",
    }
    _write_json(out("job.json"), job)
    _write_json(
        out("truth.json"),
        {"exposure": flame.exposure, "recipe": recipe.kind, "dims": list(recipe.dims), "seed": recipe.seed,
         "voxel_size": recipe.voxel_size},
    )
    print(f"wrote synthetic {recipe.kind} {recipe.dims} (exposure {flame.exposure:g}) to {out.root}")
    return 0


def _load_views(path):
    job = config.load_job(_need(path))
    return job, [v.camera for v in job.views]


def cmd_render(args) -> int:
    out = OutputDir(args.output_dir)
    volume = io.load_volume(_need(args.volume))
    job, views = _load_views(args.config)
    if not views:
        raise ConfigError("views: the config lists no cameras to render")
    for v in views:
        hdr = job.render.render(volume, v, threads=args.threads)
        io.write_pfm(out(f"render_{v.name}.pfm"), hdr)
        ldr = tonemap_reinhard(hdr, args.key) if args.exposure is None else apply_exposure_and_encode(hdr, args.exposure)
        io.write_ppm(out(f"render_{v.name}.ppm"), ldr)
    print(f"rendered {len(views)} view(s) to {out.root}")
    return 0


def _job_views(job: config.JobConfig):
    if not job.views:
        raise ConfigError("views: at least one view with a goal image is required")
    views = []
    for i, spec in enumerate(job.views):
        if spec.goal_path is None:
            raise ConfigError(f"views[{i}]: missing required field 'goal'")
        views.append(spec.camera.with_goal(io.read_image(_need(spec.goal_path))))
    return views


def cmd_optimize(args) -> int:
    job = config.load_job(_need(args.config))
    if args.seed is not None:
        job.optimizer = replace(job.optimizer, seed=args.seed)
    if args.max_iterations is not None:
        job.optimizer = replace(job.optimizer, max_iterations=args.max_iterations)
    out = OutputDir(args.output_dir or job.output_dir)
    views = _job_views(job)
    if job.rgb_volume is not None:
        rgb, voxel = io.load_rgb_volume(_need(job.rgb_volume))
    elif job.synthetic is not None:
        flame = synthetic.generate_synthetic(job.synthetic, job.render)
        rgb, voxel = flame.rgb, flame.volume.voxel_size
    else:
        raise ConfigError("input: missing required field 'rgb_volume' (or 'synthetic')")
    _write_json(out("resolved_config.json"), config.job_to_dict(job))
    state = initialize(rgb, job.optimizer, views, voxel, centered_origin(rgb.dims, voxel))

    def checkpoint(st: OptimizerState):
        if job.checkpoint_every and st.iteration % job.checkpoint_every == 0:
            io.save_volume(out("checkpoints", f"iter_{st.iteration:04d}.fvol"), st.volume)

    volume, s, trace = run(state, callback=checkpoint)
    if not np.isfinite(state.energy):
        raise FloatingPointError("optimisation produced a non-finite energy")
    io.save_volume(out("final.fvol"), volume)
    analysis.write_trace_csv(out("trace.csv"), trace)
    np.savez(out("snapshots.npz"), fields=np.array(state.snapshots), energies=np.array([r.total for r in trace]))
    for v in views:
        hdr = job.render.render(volume, v, threads=args.threads)
        io.write_pfm(out(f"final_{v.name}.pfm"), hdr)
        io.write_ppm(out(f"final_{v.name}.ppm"), apply_exposure_and_encode(hdr, s, job.optimizer.ranges))
    _write_json(
        out("result.json"),
        {"exposure": s, "density_factor": state.density_factor, "initial_energy": trace[0].total,
         "final_energy": trace[-1].total, "iterations": state.iteration, "evaluations": state.evaluations},
    )
    print(f"energy {trace[0].total:.6g} -> {trace[-1].total:.6g} in {state.iteration} iterations; "
          f"exposure {s:.4g}; outputs in {out.root}")
    return 0


def cmd_analyze(args) -> int:
    out = OutputDir(args.output_dir)
    trace = analysis.read_trace_csv(_need(args.trace))
    table = analysis.export_trace_plot_data(trace)
    if args.snapshots:
        with np.load(_need(args.snapshots)) as data:
            snaps = analysis.FieldSnapshotSet(data["fields"], data["energies"])
        points, _ = analysis.classical_mds(snaps)
        table = analysis.export_trace_plot_data(trace, points)
        (out("mds.svg")).write_text(analysis.mds_svg(points, table["mds"]["radius"]))
        analysis.write_table_csv(out("mds.csv"), table["mds"])
    analysis.write_table_csv(out("convergence.csv"), table)
    print(f"analysed {len(trace)} trace records into {out.root}")
    return 0


def cmd_tonemap(args) -> int:
    out = OutputDir(args.output_dir)
    img = io.read_pfm(_need(args.image))
    name = args.name or Path(args.image).with_suffix(".ppm").name
    io.write_ppm(out(name), tonemap_reinhard(img, args.key))
    print(f"tone mapped {args.image} -> {out(name)}")
    return 0


def cmd_scene_demo(args) -> int:
    out = OutputDir(args.output_dir)
    volume = io.load_volume(_need(args.volume))
    if args.scene:
        doc = json.loads(_need(args.scene).read_text())
        sc, view, samples, seed = scene.scene_from_dict(doc, volume)
    else:
        sc = scene.canonical_scene(volume, args.mode)
        view, samples, seed = scene.canonical_view(volume, args.width, args.height), args.samples, args.seed
    samples = args.samples if args.samples is not None else samples
    img = scene.render_scene_demo(sc, view, n_samples=samples, seed=seed)
    io.write_pfm(out(f"scene_{sc.mode}.pfm"), img)
    io.write_ppm(out(f"scene_{sc.mode}.ppm"), tonemap_reinhard(img, args.key))
    _write_json(out("scene.json"), scene.scene_to_dict(sc, view, samples, seed))
    print(f"scene demo ({sc.mode}, {samples} light samples) written to {out.root}")
    return 0


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed")
    common.add_argument("--threads", type=int, default=None, help="render threads (env FIRERECON_THREADS)")
    common.add_argument("--output-dir", default=None, help="directory receiving every output file")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="firerecon", description="Volumetric fire reconstruction from images.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic flame and its goal images")
    s.add_argument("--recipe", choices=synthetic.RECIPES, default="gaussian-plume")
    s.add_argument("--dims", type=int, nargs=3, default=[32, 32, 32], metavar=("NX", "NY", "NZ"))
    s.add_argument("--views", type=int, default=2, help="number of orbit cameras spread evenly over a half circle")
    s.add_argument("--azimuths", type=float, nargs="+", default=None, help="explicit camera azimuths (degrees)")
    s.add_argument("--width", type=int, default=160)
    s.add_argument("--height", type=int, default=120)
    s.set_defaults(func=cmd_synth)

    r = sub.add_parser("render", parents=[common], help="render a fire volume from the views of a job file")
    r.add_argument("--volume", required=True, help="FVOL with temperature/density channels")
    r.add_argument("--config", required=True, help="job JSON providing the views")
    r.add_argument("--exposure", type=float, default=None, help="encode with this exposure instead of tone mapping")
    r.add_argument("--key", type=float, default=0.18, help="Reinhard key value")
    r.set_defaults(func=cmd_render)

    o = sub.add_parser("optimize", parents=[common], help="estimate temperatures, densities and exposure")
    o.add_argument("--config", required=True, help="job JSON")
    o.add_argument("--max-iterations", type=int, default=None)
    o.set_defaults(func=cmd_optimize)

    a = sub.add_parser("analyze", parents=[common], help="convergence tables and MDS of temperature snapshots")
    a.add_argument("--trace", required=True, help="trace.csv from optimize")
    a.add_argument("--snapshots", default=None, help="snapshots.npz from optimize")
    a.set_defaults(func=cmd_analyze)

    t = sub.add_parser("tonemap", parents=[common], help="Reinhard tone mapping of a PFM image")
    t.add_argument("--image", required=True)
    t.add_argument("--key", type=float, default=0.18)
    t.add_argument("--name", default=None, help="output file name (default: input name with .ppm)")
    t.set_defaults(func=cmd_tonemap)

    d = sub.add_parser("scene-demo", parents=[common], help="light a floor and occluder with a fire volume")
    d.add_argument("--volume", required=True)
    d.add_argument("--scene", default=None, help="scene JSON (default: canonical occluder scene)")
    d.add_argument("--mode", choices=(scene.VOLUME, scene.BASELINE), default=scene.VOLUME)
    d.add_argument("--samples", type=int, default=None, help="light samples per surface point (default 256)")
    d.add_argument("--width", type=int, default=160)
    d.add_argument("--height", type=int, default=120)
    d.add_argument("--key", type=float, default=0.18)
    d.set_defaults(func=cmd_scene_demo)
    return p


_DEFAULT_OUT = {"synth": "synth", "render": "render", "analyze": "analysis", "tonemap": ".", "scene-demo": "scene"}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    if args.threads is not None:
        os.environ["FIRERECON_THREADS"] = str(args.threads)
    if args.output_dir is None and args.command != "optimize":
        args.output_dir = _DEFAULT_OUT[args.command]
    if args.command in ("synth", "scene-demo") and args.seed is None:
        args.seed = 0
    if args.command == "scene-demo" and args.samples is None and args.scene is None:
        args.samples = 256
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"firerecon: error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (DomainError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"firerecon: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, FormatError, ShapeError, ModeError, ValueError, KeyError) as exc:
        print(f"firerecon: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
