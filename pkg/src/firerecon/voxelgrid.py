"""Dense voxel fields with an occupancy mask, yzx ordering and cluster partitions.

Flat storage follows the yzx convention: ``y`` is the fastest axis, then ``z``,
then ``x``, i.e. ``index = y + ny * (z + nz * x)``.  A C-ordered array of shape
``(nx, nz, ny)`` therefore flattens to exactly this order, which is how the
helpers below convert between flat and 3D views.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError

#: Designated value of unoccupied voxels, per physical quantity.
EMPTY_TEMPERATURE = 300.0
EMPTY_DENSITY = 0.0

DEFAULT_THRESHOLD = 0.01

# Face (Manhattan 1) and edge (Manhattan 2) offsets; the 8 corners are excluded.
OFFSETS18 = tuple(
    (dx, dy, dz)
    for dx, dy, dz in itertools.product((-1, 0, 1), repeat=3)
    if 0 < abs(dx) + abs(dy) + abs(dz) <= 2
)


@dataclass(frozen=True)
class GridDims:
    nx: int
    ny: int
    nz: int

    def __post_init__(self):
        for name in ("nx", "ny", "nz"):
            v = getattr(self, name)
            if int(v) != v or v <= 0:
                raise ConfigError(f"grid dimension {name} must be a positive integer, got {v!r}")

    @property
    def total(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def shape_xyz(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)


def linear_index(x, y, z, dims: GridDims):
    """Flat yzx index of voxel ``(x, y, z)``.  Accepts scalars or integer arrays."""
    x, y, z = np.asarray(x), np.asarray(y), np.asarray(z)
    if (
        np.any(x < 0) or np.any(x >= dims.nx)
        or np.any(y < 0) or np.any(y >= dims.ny)
        or np.any(z < 0) or np.any(z >= dims.nz)
    ):
        raise IndexError(f"voxel ({x}, {y}, {z}) outside grid {dims.shape_xyz}")
    idx = y + dims.ny * (z + dims.nz * x)
    return int(idx) if idx.ndim == 0 else idx


def decode_index(index, dims: GridDims):
    """Inverse of :func:`linear_index`; returns ``(x, y, z)``."""
    index = np.asarray(index)
    if np.any(index < 0) or np.any(index >= dims.total):
        raise IndexError(f"flat index {index} outside grid of {dims.total} voxels")
    y = index % dims.ny
    rest = index // dims.ny
    z = rest % dims.nz
    x = rest // dims.nz
    if index.ndim == 0:
        return int(x), int(y), int(z)
    return x, y, z


def neighbors18(index: int, dims: GridDims) -> list[int]:
    """In-bounds face and edge neighbours of a voxel, as flat indices."""
    x, y, z = decode_index(index, dims)
    out = []
    for dx, dy, dz in OFFSETS18:
        i, j, k = x + dx, y + dy, z + dz
        if 0 <= i < dims.nx and 0 <= j < dims.ny and 0 <= k < dims.nz:
            out.append(linear_index(i, j, k, dims))
    return out


def neighbor_table(occupied: np.ndarray, dims: GridDims) -> np.ndarray:
    """Occupied-local 18-neighbourhood table.

    Row ``i`` lists, in :data:`OFFSETS18` order, the positions (within the
    yzx-ordered list of occupied voxels) of the occupied neighbours of the
    ``i``-th occupied voxel; missing or unoccupied neighbours are ``-1``.
    """
    occupied = np.asarray(occupied, dtype=bool)
    flat = np.flatnonzero(occupied)
    local = np.full(dims.total, -1, dtype=np.int64)
    local[flat] = np.arange(flat.size)
    x, y, z = decode_index(flat, dims) if flat.size else (flat, flat, flat)
    table = np.full((flat.size, len(OFFSETS18)), -1, dtype=np.int64)
    for k, (dx, dy, dz) in enumerate(OFFSETS18):
        i, j, l = x + dx, y + dy, z + dz
        ok = (i >= 0) & (i < dims.nx) & (j >= 0) & (j < dims.ny) & (l >= 0) & (l < dims.nz)
        nb = np.full(flat.size, -1, dtype=np.int64)
        nb[ok] = local[j[ok] + dims.ny * (l[ok] + dims.nz * i[ok])]
        table[:, k] = nb
    return table


@dataclass
class VoxelGrid3:
    """Flat scalar field in yzx order with its occupancy mask."""

    dims: GridDims
    values: np.ndarray
    occupied: np.ndarray = field(default=None)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if self.values.size != self.dims.total:
            raise ShapeError(f"expected {self.dims.total} values, got {self.values.size}")
        if self.occupied is None:
            self.occupied = np.ones(self.dims.total, dtype=bool)
        self.occupied = np.asarray(self.occupied, dtype=bool).reshape(-1)
        if self.occupied.size != self.dims.total:
            raise ShapeError("occupancy mask length does not match grid")

    @classmethod
    def from_xyz(cls, array, occupied=None) -> "VoxelGrid3":
        """Build from an array indexed ``[x, y, z]``."""
        array = np.asarray(array, dtype=np.float64)
        dims = GridDims(*array.shape)
        occ = None
        if occupied is not None:
            occ = xyz_to_flat(np.asarray(occupied, dtype=bool))
        return cls(dims, xyz_to_flat(array), occ)

    @classmethod
    def filled(cls, dims: GridDims, value: float, occupied=None) -> "VoxelGrid3":
        return cls(dims, np.full(dims.total, float(value)), occupied)

    def to_xyz(self) -> np.ndarray:
        return flat_to_xyz(self.values, self.dims)

    def occupied_indices(self) -> np.ndarray:
        return np.flatnonzero(self.occupied)

    def occupied_values(self) -> np.ndarray:
        return self.values[self.occupied]

    def __getitem__(self, xyz):
        return self.values[linear_index(*xyz, self.dims)]

    def copy(self) -> "VoxelGrid3":
        return VoxelGrid3(self.dims, self.values.copy(), self.occupied.copy())


def xyz_to_flat(array: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(array).transpose(0, 2, 1)).reshape(-1)


def flat_to_xyz(values: np.ndarray, dims: GridDims) -> np.ndarray:
    return np.asarray(values).reshape(dims.nx, dims.nz, dims.ny).transpose(0, 2, 1)


@dataclass
class RgbVolume:
    """Reconstructed colour volume; three channels sharing one grid."""

    dims: GridDims
    r: np.ndarray
    g: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        for name in ("r", "g", "b"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1)
            if arr.size != self.dims.total:
                raise ShapeError(f"channel {name} has {arr.size} values, expected {self.dims.total}")
            setattr(self, name, arr)

    @classmethod
    def from_xyz(cls, rgb) -> "RgbVolume":
        """Build from an ``(nx, ny, nz, 3)`` array."""
        rgb = np.asarray(rgb, dtype=np.float64)
        dims = GridDims(*rgb.shape[:3])
        return cls(dims, *(xyz_to_flat(rgb[..., c]) for c in range(3)))

    def normalized(self) -> "RgbVolume":
        """Channels jointly rescaled so the largest value is 1 (no-op for black volumes)."""
        peak = max(self.r.max(), self.g.max(), self.b.max())
        if peak <= 0:
            return RgbVolume(self.dims, self.r.copy(), self.g.copy(), self.b.copy())
        return RgbVolume(self.dims, self.r / peak, self.g / peak, self.b / peak)

    def max_channel(self) -> np.ndarray:
        return np.maximum(np.maximum(self.r, self.g), self.b)


def apply_sparse_threshold(rgb: RgbVolume, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """Occupancy mask: a voxel is kept iff its largest channel reaches ``threshold``."""
    if not 0.0 <= threshold <= 1.0:
        raise ConfigError(f"sparse threshold must lie in [0, 1], got {threshold}")
    return rgb.max_channel() >= threshold


@dataclass(frozen=True)
class ClusterMap:
    """Partition of the yzx-ordered occupied voxel list into contiguous runs.

    ``starts`` has ``count + 1`` entries; cluster ``c`` owns occupied positions
    ``starts[c]:starts[c + 1]``.
    """

    level: int
    starts: np.ndarray

    @property
    def count(self) -> int:
        return len(self.starts) - 1

    @property
    def n_voxels(self) -> int:
        return int(self.starts[-1])

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.starts)

    @property
    def assignment(self) -> np.ndarray:
        return np.repeat(np.arange(self.count), self.sizes)

    @property
    def saturated(self) -> bool:
        return self.count == self.n_voxels

    def members(self, c: int) -> slice:
        return slice(int(self.starts[c]), int(self.starts[c + 1]))

    @classmethod
    def singletons(cls, n_voxels: int) -> "ClusterMap":
        """One cluster per voxel, i.e. clustering disabled."""
        if n_voxels < 1:
            raise ConfigError("cannot cluster an empty occupancy")
        level = max(0, int(np.ceil(np.log2(n_voxels))) - 1)
        return cls(level, np.arange(n_voxels + 1))


def _split_runs(starts: np.ndarray) -> np.ndarray:
    out = [int(starts[0])]
    for a, b in zip(starts[:-1], starts[1:]):
        size = int(b - a)
        if size > 1:
            out.append(int(a) + (size + 1) // 2)
        out.append(int(b))
    return np.asarray(out, dtype=np.int64)


def init_clusters(occupied) -> ClusterMap:
    """Level-0 partition of the occupied list into two halves (first half rounded up).

    ``occupied`` is either a boolean mask or the list of occupied flat indices;
    only its length matters since clusters index the ordered list.
    """
    occupied = np.asarray(occupied)
    n = int(occupied.sum()) if occupied.dtype == bool else int(occupied.size)
    if n < 1:
        raise ConfigError("no occupied voxels: nothing to optimize")
    return ClusterMap(0, _split_runs(np.array([0, n])))


def refine_clusters(cmap: ClusterMap) -> ClusterMap:
    """Split every cluster into two contiguous halves; no-op once saturated."""
    if cmap.saturated:
        return cmap
    return ClusterMap(cmap.level + 1, _split_runs(cmap.starts))
