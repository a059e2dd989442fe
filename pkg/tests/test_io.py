import numpy as np
import pytest

from firerecon.errors import FormatError, ShapeError
from firerecon.io import (
    load_rgb_volume,
    load_volume,
    read_fvol,
    read_image,
    read_pfm,
    read_ppm,
    save_rgb_volume,
    save_volume,
    write_fvol,
    write_pfm,
    write_ppm,
)
from firerecon.render import FireVolume, centered_origin
from firerecon.voxelgrid import GridDims, RgbVolume


def test_fvol_round_trip_lossless(tmp_path):
    dims = GridDims(3, 4, 5)
    rng = np.random.default_rng(0)
    chans = [rng.random(dims.total).astype(np.float32) * 1000 for _ in range(3)]
    write_fvol(tmp_path / "a.fvol", dims, chans, 0.00625)
    d, back, h = read_fvol(tmp_path / "a.fvol")
    assert d == dims and h == np.float32(0.00625)
    for a, b in zip(chans, back):
        assert np.array_equal(a.astype(np.float64), b)
    write_fvol(tmp_path / "b.fvol", d, back, h)
    assert (tmp_path / "a.fvol").read_bytes() == (tmp_path / "b.fvol").read_bytes()


def test_fvol_header_layout(tmp_path):
    write_fvol(tmp_path / "a.fvol", GridDims(2, 1, 1), [np.array([1.0, 2.0])], 0.5)
    raw = (tmp_path / "a.fvol").read_bytes()
    assert raw[:4] == b"FVOL"
    assert np.frombuffer(raw[4:20], "<u4").tolist() == [2, 1, 1, 1]
    assert np.frombuffer(raw[20:24], "<f4")[0] == 0.5
    assert np.frombuffer(raw[24:], "<f4").tolist() == [1.0, 2.0]


def test_fvol_errors(tmp_path):
    p = tmp_path / "bad.fvol"
    p.write_bytes(b"XVOL" + bytes(20))
    with pytest.raises(FormatError):
        read_fvol(p)
    p.write_bytes(b"FV")
    with pytest.raises(FormatError):
        read_fvol(p)
    write_fvol(p, GridDims(2, 2, 2), [np.zeros(8)], 1.0)
    p.write_bytes(p.read_bytes()[:-4])
    with pytest.raises(FormatError):
        read_fvol(p)
    with pytest.raises(ShapeError):
        write_fvol(p, GridDims(2, 2, 2), [np.zeros(7)], 1.0)


def test_volume_helpers(tmp_path):
    dims = GridDims(4, 5, 3)
    rng = np.random.default_rng(1)
    occ = rng.random(dims.total) < 0.5
    vol = FireVolume.from_fields(
        dims, rng.uniform(1000, 2000, dims.total).astype(np.float32), np.full(dims.total, 40e27, np.float32),
        occ, 0.01, centered_origin(dims, 0.01),
    )
    save_volume(tmp_path / "v.fvol", vol)
    back = load_volume(tmp_path / "v.fvol")
    assert np.array_equal(back.occupied, occ)
    assert np.array_equal(back.temperature.values[occ], vol.temperature.values[occ])
    assert np.allclose(back.origin, vol.origin)
    rgb = RgbVolume(dims, rng.random(dims.total), rng.random(dims.total), rng.random(dims.total))
    save_rgb_volume(tmp_path / "c.fvol", rgb, 0.01)
    rgb2, h = load_rgb_volume(tmp_path / "c.fvol")
    assert np.allclose(rgb2.g, rgb.g, rtol=1e-7) and h == pytest.approx(0.01)


def test_pfm_round_trip(tmp_path):
    img = np.random.default_rng(2).random((7, 5, 3)).astype(np.float32) * 50
    write_pfm(tmp_path / "a.pfm", img)
    assert np.array_equal(read_pfm(tmp_path / "a.pfm"), img)
    assert (tmp_path / "a.pfm").read_bytes().startswith(b"PF\n5 7\n-1.0\n")
    assert np.array_equal(read_image(tmp_path / "a.pfm"), img)


def test_pfm_is_bottom_up(tmp_path):
    img = np.zeros((2, 1, 3), np.float32)
    img[0] = 1.0  # top row
    write_pfm(tmp_path / "a.pfm", img)
    data = np.frombuffer((tmp_path / "a.pfm").read_bytes()[-24:], "<f4")
    assert data.tolist() == [0, 0, 0, 1, 1, 1]


def test_ppm_round_trip(tmp_path):
    img = np.random.default_rng(3).integers(0, 256, (4, 6, 3)) / 255.0
    write_ppm(tmp_path / "a.ppm", img)
    assert np.array_equal(read_ppm(tmp_path / "a.ppm"), img)
    assert (tmp_path / "a.ppm").read_bytes().startswith(b"P6\n6 4\n255\n")


def test_image_errors(tmp_path):
    p = tmp_path / "x.ppm"
    p.write_bytes(b"P3\n1 1\n255\n0 0 0\n")
    with pytest.raises(FormatError):
        read_ppm(p)
    with pytest.raises(ShapeError):
        write_pfm(tmp_path / "g.pfm", np.zeros((3, 3)))
    q = tmp_path / "x.png"
    q.write_bytes(b"\x89PNG")
    with pytest.raises(FormatError):
        read_image(q)
