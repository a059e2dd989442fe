"""Binary file formats: FVOL volumes, PFM (HDR) and PPM (LDR) images.

FVOL layout, all little-endian::

    b"FVOL" | u32 nx | u32 ny | u32 nz | u32 channels | f32 voxel_size | f32 data

The data block holds ``channels`` consecutive channels, each ``nx*ny*nz``
values in yzx order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, ShapeError
from .voxelgrid import GridDims

FVOL_MAGIC = b"FVOL"
_FVOL_HEADER = struct.Struct("<4sIIIIf")


def write_fvol(path, dims: GridDims, channels, voxel_size: float) -> None:
    channels = [np.asarray(c, dtype="<f4").reshape(-1) for c in channels]
    for c in channels:
        if c.size != dims.total:
            raise ShapeError(f"channel has {c.size} values, grid holds {dims.total}")
    header = _FVOL_HEADER.pack(FVOL_MAGIC, dims.nx, dims.ny, dims.nz, len(channels), voxel_size)
    with open(path, "wb") as fh:
        fh.write(header)
        for c in channels:
            fh.write(c.tobytes())


def read_fvol(path) -> tuple[GridDims, list[np.ndarray], float]:
    """Returns ``(dims, channels, voxel_size)``; channels come back as float64."""
    raw = Path(path).read_bytes()
    if len(raw) < _FVOL_HEADER.size:
        raise FormatError(f"{path}: truncated FVOL header")
    magic, nx, ny, nz, nc, voxel = _FVOL_HEADER.unpack_from(raw)
    if magic != FVOL_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    dims = GridDims(nx, ny, nz)
    expected = _FVOL_HEADER.size + 4 * nc * dims.total
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=_FVOL_HEADER.size).reshape(nc, dims.total)
    return dims, [data[c].astype(np.float64) for c in range(nc)], float(voxel)


def write_pfm(path, image: np.ndarray) -> None:
    """Colour PFM, little-endian (negative scale), scanlines bottom-up."""
    image = np.asarray(image, dtype="<f4")
    if image.ndim != 3 or image.shape[2] != 3:
        raise ShapeError(f"PFM expects an (H, W, 3) image, got {image.shape}")
    h, w, _ = image.shape
    with open(path, "wb") as fh:
        fh.write(f"PF\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(np.ascontiguousarray(image[::-1]).tobytes())


def _read_tokens(raw: bytes, count: int) -> tuple[list[bytes], int]:
    """Whitespace-separated header tokens (``#`` comments skipped) and the data offset."""
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated image header")
        tokens.append(raw[start:pos])
    return tokens, pos + 1


def read_pfm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    try:
        (magic, w, h, scale), offset = _read_tokens(raw, 4)
        w, h, scale = int(w), int(h), float(scale)
    except (ValueError, IndexError) as exc:
        raise FormatError(f"{path}: malformed PFM header") from exc
    if magic not in (b"PF", b"Pf"):
        raise FormatError(f"{path}: not a PFM file")
    nc = 3 if magic == b"PF" else 1
    dtype = "<f4" if scale < 0 else ">f4"
    count = w * h * nc
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
    if data.size != count:
        raise FormatError(f"{path}: truncated PFM payload")
    img = data.reshape(h, w, nc)[::-1].astype(np.float64)
    if nc == 1:
        img = np.repeat(img, 3, axis=2)
    return img


def write_ppm(path, image: np.ndarray) -> None:
    """Binary P6 with maxval 255; ``image`` holds encoded values in [0, 1]."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ShapeError(f"PPM expects an (H, W, 3) image, got {image.shape}")
    h, w, _ = image.shape
    data = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_ppm(path) -> np.ndarray:
    """Returns encoded values in [0, 1] as an ``(H, W, 3)`` float array."""
    raw = Path(path).read_bytes()
    try:
        (magic, w, h, maxval), offset = _read_tokens(raw, 4)
        w, h, maxval = int(w), int(h), int(maxval)
    except (ValueError, IndexError) as exc:
        raise FormatError(f"{path}: malformed PPM header") from exc
    if magic != b"P6":
        raise FormatError(f"{path}: only binary P6 PPM is supported")
    dtype = np.uint8 if maxval < 256 else ">u2"
    count = w * h * 3
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
    if data.size != count:
        raise FormatError(f"{path}: truncated PPM payload")
    return data.reshape(h, w, 3).astype(np.float64) / maxval


def read_image(path) -> np.ndarray:
    suffix = Path(path).suffix.lower()
    if suffix == ".pfm":
        return read_pfm(path)
    if suffix in (".ppm", ".pnm"):
        return read_ppm(path)
    raise FormatError(f"{path}: unsupported image type {suffix!r} (expected .ppm or .pfm)")


def save_volume(path, volume) -> None:
    """FireVolume as a 3-channel FVOL: temperature, density, occupancy (0/1)."""
    write_fvol(
        path,
        volume.dims,
        [volume.temperature.values, volume.density.values, volume.occupied.astype(np.float64)],
        volume.voxel_size,
    )


def load_volume(path, origin=None):
    """Inverse of :func:`save_volume`; the grid is centred on the world origin unless ``origin`` is given."""
    from .render import FireVolume, centered_origin

    dims, ch, voxel = read_fvol(path)
    if len(ch) not in (2, 3):
        raise FormatError(f"{path}: a fire volume needs 2 or 3 channels, found {len(ch)}")
    occ = ch[2] > 0.5 if len(ch) == 3 else ch[1] > 0
    origin = centered_origin(dims, voxel) if origin is None else origin
    return FireVolume.from_fields(dims, ch[0], ch[1], occ, voxel, origin)


def save_rgb_volume(path, rgb, voxel_size: float) -> None:
    write_fvol(path, rgb.dims, [rgb.r, rgb.g, rgb.b], voxel_size)


def load_rgb_volume(path):
    """Returns ``(RgbVolume, voxel_size)`` from a 3-channel FVOL."""
    from .voxelgrid import RgbVolume

    dims, ch, voxel = read_fvol(path)
    if len(ch) != 3:
        raise FormatError(f"{path}: an RGB volume needs 3 channels, found {len(ch)}")
    return RgbVolume(dims, ch[0], ch[1], ch[2]), voxel
