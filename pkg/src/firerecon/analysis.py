"""Optimisation diagnostics: classical MDS of temperature trajectories and
convergence tables."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ShapeError

#: eigenvalues below this are treated as exactly zero
EIGEN_FLOOR = 1e-12
#: SVG circle radius (px) drawn for the largest energy of a trajectory
MAX_RADIUS_PX = 20.0


@dataclass
class FieldSnapshotSet:
    fields: np.ndarray  # (n_snapshots, n_voxels)
    energies: np.ndarray  # (n_snapshots,)

    def __post_init__(self):
        self.fields = np.atleast_2d(np.asarray(self.fields, dtype=np.float64))
        self.energies = np.asarray(self.energies, dtype=np.float64).reshape(-1)
        if self.fields.ndim != 2:
            raise ShapeError("snapshots must be a 2-D array (one flattened field per row)")
        if self.energies.size != self.fields.shape[0]:
            raise ShapeError("need one energy per snapshot")
        if not np.all(np.isfinite(self.energies)):
            raise ConfigError("snapshot energies must be finite")

    @classmethod
    def from_list(cls, fields, energies=None) -> "FieldSnapshotSet":
        lengths = {np.asarray(f).size for f in fields}
        if len(lengths) > 1:
            raise ShapeError("all snapshots must have the same length")
        arr = np.array([np.asarray(f, dtype=np.float64).ravel() for f in fields])
        return cls(arr, np.zeros(len(arr)) if energies is None else energies)

    def __len__(self):
        return self.fields.shape[0]


def distance_matrix(points) -> np.ndarray:
    p = np.asarray(points, dtype=np.float64)
    diff = p[:, None, :] - p[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def classical_mds(snapshots, dims: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Torgerson embedding of the snapshots.

    Returns:
        ``(points, eigenvalues)`` with ``points`` of shape ``(n, dims)`` and the
        retained eigenvalues in decreasing order.
    """
    x = snapshots.fields if isinstance(snapshots, FieldSnapshotSet) else np.asarray(snapshots, dtype=np.float64)
    n = x.shape[0]
    if n < 3:
        raise ConfigError(f"MDS needs at least 3 snapshots, got {n}")
    d2 = distance_matrix(x) ** 2
    j = np.eye(n) - np.full((n, n), 1.0 / n)
    b = -0.5 * j @ d2 @ j
    b = 0.5 * (b + b.T)
    vals, vecs = np.linalg.eigh(b)
    order = np.argsort(vals)[::-1][:dims]
    vals, vecs = vals[order], vecs[:, order]
    vals = np.where(vals < EIGEN_FLOOR * max(1.0, float(np.abs(vals).max(initial=0.0))), 0.0, vals)
    # deterministic sign: largest-magnitude entry of each axis is positive
    for i in range(vecs.shape[1]):
        if vecs[np.argmax(np.abs(vecs[:, i])), i] < 0:
            vecs[:, i] = -vecs[:, i]
    return vecs * np.sqrt(vals), vals


def export_trace_plot_data(trace, points=None) -> dict[str, list]:
    """Column-oriented tables for the convergence curve and the MDS sidecar.

    The sidecar radius is ``MAX_RADIUS_PX * total / max(total)``; the constant
    of proportionality is reported in ``radius_scale``.
    """
    if not trace:
        raise ConfigError("trace is empty")
    totals = np.array([r.total for r in trace], dtype=np.float64)
    table = {
        "iteration": [r.iteration for r in trace],
        "total": totals.tolist(),
        "e_am": [r.e_am for r in trace],
        "e_sm": [r.e_sm for r in trace],
        "clusters": [r.clusters for r in trace],
    }
    top = float(totals.max())
    scale = MAX_RADIUS_PX / top if top > 0 else 0.0
    sidecar = {"iteration": table["iteration"], "radius": (totals * scale).tolist(), "radius_scale": scale}
    if points is not None:
        pts = np.asarray(points, dtype=np.float64)
        if len(pts) != len(trace):
            raise ShapeError("need one MDS point per trace record")
        sidecar["x"], sidecar["y"] = pts[:, 0].tolist(), pts[:, 1].tolist()
    table["mds"] = sidecar
    return table


def write_table_csv(path, columns: dict[str, list]) -> Path:
    path = Path(path)
    names = [k for k, v in columns.items() if isinstance(v, list)]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*(columns[k] for k in names)):
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return path


def write_trace_csv(path, trace) -> Path:
    from .optimizer import TraceRecord

    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TraceRecord.FIELDS)
        for rec in trace:
            w.writerow([repr(v) if isinstance(v, float) else v for v in rec.row()])
    return path


def read_trace_csv(path):
    from .optimizer import TraceRecord

    with Path(path).open() as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        out.append(
            TraceRecord(
                int(r["iteration"]), float(r["total"]), float(r["e_am"]), float(r["e_sm"]),
                int(r["clusters"]), float(r["exposure"]), float(r["density_factor"]), float(r["ms"]),
            )
        )
    return out


def mds_svg(points, radii, size: int = 400, margin: float = 30.0) -> str:
    """Scatter of MDS points as an SVG document, circle radius from ``radii``."""
    pts = np.asarray(points, dtype=np.float64)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    xy = margin + (pts - lo) / span * (size - 2 * margin)
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    if len(xy) > 1:
        path = " ".join(f"{x:.2f},{size - y:.2f}" for x, y in xy)
        lines.append(f'<polyline points="{path}" fill="none" stroke="#999" stroke-width="1"/>')
    for i, ((x, y), r) in enumerate(zip(xy, radii)):
        lines.append(
            f'<circle cx="{x:.2f}" cy="{size - y:.2f}" r="{max(float(r), 0.5):.2f}" '
            f'fill="#e8590c" fill-opacity="0.4" stroke="#a33"><title>{i}</title></circle>'
        )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
