import json

import numpy as np
import pytest

from firerecon.analysis import read_trace_csv
from firerecon.cli import EXIT_CONFIG, EXIT_MISSING, main
from firerecon.io import read_fvol, read_pfm


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    rc = main(["synth", "--dims", "10", "10", "10", "--width", "32", "--height", "24", "--output-dir", str(root / "s")])
    assert rc == 0
    return root


def test_synth_outputs(synth_dir):
    s = synth_dir / "s"
    for name in ("truth.fvol", "rgb.fvol", "goal_az0.pfm", "goal_az90.ppm", "job.json", "truth.json"):
        assert (s / name).is_file()
    job = json.loads((s / "job.json").read_text())
    assert len(job["views"]) == 2 and job["input"]["rgb_volume"] == "rgb.fvol"


def test_full_pipeline(synth_dir):
    s = synth_dir / "s"
    opt = synth_dir / "opt"
    assert main(["optimize", "--config", str(s / "job.json"), "--max-iterations", "3", "--output-dir", str(opt)]) == 0
    trace = read_trace_csv(opt / "trace.csv")
    assert [r.iteration for r in trace] == [0, 1, 2, 3]
    assert trace[-1].total <= trace[0].total
    result = json.loads((opt / "result.json").read_text())
    assert result["final_energy"] == trace[-1].total
    dims, chans, _ = read_fvol(opt / "final.fvol")
    assert dims.total == 1000 and len(chans) == 3
    assert (opt / "final_az0.ppm").is_file() and (opt / "resolved_config.json").is_file()

    ana = synth_dir / "ana"
    rc = main(["analyze", "--trace", str(opt / "trace.csv"), "--snapshots", str(opt / "snapshots.npz"),
               "--output-dir", str(ana)])
    assert rc == 0
    assert (ana / "convergence.csv").read_text().startswith("iteration,total,e_am,e_sm,clusters")
    assert (ana / "mds.svg").read_text().startswith("<svg")

    ren = synth_dir / "ren"
    assert main(["render", "--volume", str(opt / "final.fvol"), "--config", str(s / "job.json"),
                 "--output-dir", str(ren)]) == 0
    assert read_pfm(ren / "render_az0.pfm").shape == (24, 32, 3)
    assert main(["tonemap", "--image", str(ren / "render_az0.pfm"), "--output-dir", str(ren)]) == 0
    assert (ren / "render_az0.ppm").is_file()


def test_renders_are_byte_identical(synth_dir):
    s = synth_dir / "s"
    outs = []
    for k in range(2):
        d = synth_dir / f"twice{k}"
        assert main(["render", "--volume", str(s / "truth.fvol"), "--config", str(s / "job.json"),
                     "--output-dir", str(d)]) == 0
        outs.append((d / "render_az90.pfm").read_bytes())
    assert outs[0] == outs[1]
    goal = read_pfm(s / "goal_az90.pfm")
    # the stored truth is float32, so the re-render matches the goal to single precision
    assert np.allclose(read_pfm(synth_dir / "twice0" / "render_az90.pfm"), goal, rtol=1e-4, atol=1e-6)


def test_zero_views_is_config_error(synth_dir, capsys):
    job = json.loads((synth_dir / "s" / "job.json").read_text())
    job["views"] = []
    p = synth_dir / "s" / "noviews.json"
    p.write_text(json.dumps(job))
    assert main(["optimize", "--config", str(p), "--output-dir", str(synth_dir / "nv")]) == EXIT_CONFIG
    assert "views" in capsys.readouterr().err


def test_missing_file(synth_dir):
    out = synth_dir / "never"
    assert main(["render", "--volume", str(synth_dir / "nope.fvol"), "--config",
                 str(synth_dir / "s" / "job.json"), "--output-dir", str(out)]) == EXIT_MISSING
    assert not out.exists()


def test_unknown_optimizer_key(synth_dir, capsys):
    job = json.loads((synth_dir / "s" / "job.json").read_text())
    job["optimizer"]["temperature_guess"] = 1200
    p = synth_dir / "s" / "badkey.json"
    p.write_text(json.dumps(job))
    assert main(["optimize", "--config", str(p), "--output-dir", str(synth_dir / "bk")]) == EXIT_CONFIG
    assert "temperature_guess" in capsys.readouterr().err


def test_scene_demo_writes_inside_output_dir(synth_dir):
    out = synth_dir / "scene"
    before = {p for p in synth_dir.rglob("*") if "scene" not in p.parts}
    rc = main(["scene-demo", "--volume", str(synth_dir / "s" / "truth.fvol"), "--samples", "8", "--width", "24",
               "--height", "18", "--output-dir", str(out)])
    assert rc == 0
    assert sorted(p.name for p in out.iterdir()) == ["scene.json", "scene_volume.pfm", "scene_volume.ppm"]
    assert {p for p in synth_dir.rglob("*") if "scene" not in p.parts} == before
