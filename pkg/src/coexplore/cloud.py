"""Point cloud container with provenance labels and ASCII PLY I/O.

Provenance is an int per point: 0 for static world geometry (walls, floor),
``robot_id + 1`` for points sensed off a peer robot. Clouds also carry the
sensor position each point was observed from, which the 2D grid builder uses
for free-space carving. Clouds are treated as immutable once built; the KD
tree is constructed lazily and cached.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import RigidTransform

PROV_STATIC = 0


def robot_label(robot_id: int) -> int:
    return int(robot_id) + 1


@dataclass
class PointCloud:
    points: np.ndarray
    provenance: np.ndarray | None = None
    origins: np.ndarray | None = None
    _tree: cKDTree | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(self.points)):
            raise ValueError("point coordinates must be finite")
        if self.provenance is None:
            self.provenance = np.zeros(len(self.points), dtype=np.int32)
        else:
            self.provenance = np.asarray(self.provenance, dtype=np.int32).reshape(-1)
            if len(self.provenance) != len(self.points):
                raise ValueError("provenance length mismatch")
        if self.origins is not None:
            self.origins = np.asarray(self.origins, dtype=float).reshape(-1, 3)
            if len(self.origins) != len(self.points):
                raise ValueError("origins length mismatch")

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 3)), np.zeros(0, dtype=np.int32), np.zeros((0, 3)))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def tree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self.points)
        return self._tree

    def select(self, index) -> "PointCloud":
        origins = self.origins[index] if self.origins is not None else None
        return PointCloud(self.points[index], self.provenance[index], origins)

    def transform(self, T: RigidTransform) -> "PointCloud":
        origins = T.apply(self.origins) if self.origins is not None else None
        return PointCloud(T.apply(self.points), self.provenance.copy(), origins)

    def robot_mask(self) -> np.ndarray:
        return self.provenance > PROV_STATIC


def concat(clouds: list[PointCloud]) -> PointCloud:
    clouds = [c for c in clouds if len(c)]
    if not clouds:
        return PointCloud.empty()
    pts = np.vstack([c.points for c in clouds])
    prov = np.concatenate([c.provenance for c in clouds])
    if all(c.origins is not None for c in clouds):
        origins = np.vstack([c.origins for c in clouds])
    else:
        origins = None
    return PointCloud(pts, prov, origins)


def voxel_keys(points: np.ndarray, voxel: float) -> tuple[np.ndarray, np.ndarray]:
    """Composite integer voxel key per point plus the (nv,) unique inverse."""
    cells = np.floor(points / voxel).astype(np.int64)
    cells -= cells.min(axis=0)
    dims = cells.max(axis=0) + 1
    keys = (cells[:, 0] * dims[1] + cells[:, 1]) * dims[2] + cells[:, 2]
    return keys, dims


def voxel_downsample(cloud: PointCloud, voxel: float) -> PointCloud:
    """One point per occupied voxel, placed at the centroid of the voxel's points.

    Provenance is decided by majority vote (ties go to the lowest label, so
    static wins against any robot label); origins are averaged.
    """
    if voxel <= 0:
        raise ValueError("voxel size must be positive")
    n = len(cloud)
    if n == 0:
        return PointCloud.empty()
    keys, _ = voxel_keys(cloud.points, voxel)
    uniq, inv = np.unique(keys, return_inverse=True)
    nv = len(uniq)
    counts = np.bincount(inv, minlength=nv).astype(float)
    pts = np.empty((nv, 3))
    for k in range(3):
        pts[:, k] = np.bincount(inv, weights=cloud.points[:, k], minlength=nv) / counts
    nlab = int(cloud.provenance.max()) + 1
    lab_counts = np.bincount(inv * nlab + cloud.provenance, minlength=nv * nlab).reshape(nv, nlab)
    prov = lab_counts.argmax(axis=1).astype(np.int32)
    origins = None
    if cloud.origins is not None:
        origins = np.empty((nv, 3))
        for k in range(3):
            origins[:, k] = np.bincount(inv, weights=cloud.origins[:, k], minlength=nv) / counts
    return PointCloud(pts, prov, origins)


def save_ply(cloud: PointCloud, path) -> None:
    """ASCII PLY with an extra integer provenance property per vertex."""
    n = len(cloud)
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {n}",
        "property double x",
        "property double y",
        "property double z",
        "property int provenance",
        "end_header",
    ]
    body = [
        f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r} {int(l)}"
        for p, l in zip(cloud.points, cloud.provenance)
    ]
    with open(path, "w") as f:
        f.write("\n".join(lines + body) + "\n")


def load_ply(path) -> PointCloud:
    with open(path) as f:
        if f.readline().strip() != "ply":
            raise ValueError("not a PLY file")
        n = 0
        for line in f:
            line = line.strip()
            if line.startswith("element vertex"):
                n = int(line.split()[-1])
            elif line == "end_header":
                break
        pts = np.empty((n, 3))
        prov = np.empty(n, dtype=np.int32)
        for i in range(n):
            parts = f.readline().split()
            pts[i] = [float(parts[0]), float(parts[1]), float(parts[2])]
            prov[i] = int(parts[3])
    return PointCloud(pts, prov)
