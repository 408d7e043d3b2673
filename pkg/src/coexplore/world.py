"""Synthetic 2.5D indoor worlds and the simulated depth camera.

Worlds are 2D occupancy grids extruded to a constant wall height over a floor
plane at z = 0. The depth camera is a pinhole model mounted on the robot at
``mount_height``, optical axis along the robot heading. Peer robots are
rendered as vertical cylinders when ``render_peers`` is on, which is what
produces the ghosting-trail artifact in maps built without filtering.

Camera frame convention: x right, y down, z forward. Pixel (u, v) casts
through ((u + 0.5 - cx) / fx, (v + 0.5 - cy) / fy, 1). Depth images store the
forward (optical axis) distance; the range cutoff applies to the Euclidean
ray length.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from . import kernels
from .cloud import PointCloud, robot_label
from .geometry import Pose2D

FREE, WALL = 0, 1

# body frame: x forward, y left, z up -> camera frame: x right, y down, z forward
BODY_TO_CAM = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])


class InvalidStateError(RuntimeError):
    """Robot is in an impossible state (e.g. inside a wall)."""


# ---------------------------------------------------------------------------
# world grid
# ---------------------------------------------------------------------------


@dataclass
class World:
    occupancy: np.ndarray
    res: float
    wall_height: float
    _wall_dist: np.ndarray | None = field(default=None, init=False, repr=False)

    def __post_init__(self) -> None:
        self.occupancy = np.ascontiguousarray(self.occupancy, dtype=np.uint8)
        if self.res <= 0:
            raise ValueError("resolution must be positive")
        if self.wall_height <= 0:
            raise ValueError("wall height must be positive")
        border = np.concatenate(
            [self.occupancy[0], self.occupancy[-1], self.occupancy[:, 0], self.occupancy[:, -1]]
        )
        if not np.all(border == WALL):
            raise ValueError("world boundary must be fully walled")

    @property
    def shape(self) -> tuple[int, int]:
        return self.occupancy.shape

    @property
    def bounds(self) -> tuple[float, float]:
        h, w = self.occupancy.shape
        return w * self.res, h * self.res

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return int(math.floor(y / self.res)), int(math.floor(x / self.res))

    def in_bounds(self, x: float, y: float) -> bool:
        w, h = self.bounds
        return 0.0 <= x < w and 0.0 <= y < h

    def is_free(self, x: float, y: float) -> bool:
        if not self.in_bounds(x, y):
            return False
        r, c = self.cell_of(x, y)
        return self.occupancy[r, c] == FREE

    def wall_distance(self, x: float, y: float) -> float:
        """Approximate distance (meters) from a point to the nearest wall cell."""
        if self._wall_dist is None:
            self._wall_dist = ndimage.distance_transform_edt(self.occupancy == FREE) * self.res
        if not self.in_bounds(x, y):
            return 0.0
        r, c = self.cell_of(x, y)
        return float(self._wall_dist[r, c])

    @property
    def free_area(self) -> float:
        return float(np.count_nonzero(self.occupancy == FREE)) * self.res ** 2

    @property
    def free_volume(self) -> float:
        return self.free_area * self.wall_height

    @property
    def diagonal(self) -> float:
        w, h = self.bounds
        return math.hypot(w, h)


def save_world(world: World, path) -> None:
    rows = ["".join("#" if c else "." for c in row) for row in world.occupancy]
    header = f"res={world.res!r} wall_height={world.wall_height!r}"
    with open(path, "w") as f:
        f.write(header + "\n" + "\n".join(rows) + "\n")


def load_world(path) -> World:
    with open(path) as f:
        header = f.readline()
        m = re.match(r"\s*res=([0-9.eE+-]+)\s+wall_height=([0-9.eE+-]+)\s*$", header)
        if not m:
            raise ValueError(f"bad world header: {header!r}")
        rows = [line.rstrip("\n") for line in f if line.strip()]
    grid = np.array([[1 if ch == "#" else 0 for ch in row] for row in rows], dtype=np.uint8)
    return World(grid, float(m.group(1)), float(m.group(2)))


# ---------------------------------------------------------------------------
# bundled world generators (desk-scale stand-ins for house / bookstore scenes)
# ---------------------------------------------------------------------------


def _hwall(grid, row, c0, c1, gaps=()):
    grid[row, c0:c1] = WALL
    for g0, g1 in gaps:
        grid[row, g0:g1] = FREE


def _vwall(grid, col, r0, r1, gaps=()):
    grid[r0:r1, col] = WALL
    for g0, g1 in gaps:
        grid[g0:g1, col] = FREE


def gen_house(seed: int = 0, res: float = 0.1, wall_height: float = 1.5) -> World:
    """Four-room dwelling, roughly 70 m2, doorways >= 1.2 m."""
    rng = np.random.default_rng(seed)
    H, W = 96, 76
    grid = np.zeros((H, W), dtype=np.uint8)
    grid[0], grid[-1] = WALL, WALL
    grid[:, 0], grid[:, -1] = WALL, WALL
    mid = H // 2 + int(rng.integers(-4, 5))
    door = 13
    d1 = int(rng.integers(8, W // 2 - door - 4))
    d2 = int(rng.integers(W // 2 + 4, W - door - 8))
    _hwall(grid, mid, 1, W - 1, gaps=[(d1, d1 + door), (d2, d2 + door)])
    vc_top = W // 2 + int(rng.integers(-5, 6))
    dt = int(rng.integers(mid + 6, H - door - 6))
    _vwall(grid, vc_top, mid + 1, H - 1, gaps=[(dt, dt + door)])
    vc_bot = int(W * 0.4) + int(rng.integers(-4, 5))
    db = int(rng.integers(6, mid - door - 4))
    _vwall(grid, vc_bot, 1, mid, gaps=[(db, db + door)])
    return World(grid, res, wall_height)


def gen_bookstore(seed: int = 0, res: float = 0.1, wall_height: float = 1.5) -> World:
    """Open store floor, roughly 100 m2, with shelf aisles attached to alternating walls."""
    rng = np.random.default_rng(seed)
    H, W = 100, 100
    grid = np.zeros((H, W), dtype=np.uint8)
    grid[0], grid[-1] = WALL, WALL
    grid[:, 0], grid[:, -1] = WALL, WALL
    shelf_len = 62
    rows = [26, 50, 74]
    for k, base in enumerate(rows):
        row = base + int(rng.integers(-3, 4))
        if k % 2 == 0:
            grid[row : row + 2, 1 : 1 + shelf_len] = WALL
        else:
            grid[row : row + 2, W - 1 - shelf_len : W - 1] = WALL
    # one free-standing island shelf in a seeded corner region
    ir = int(rng.integers(8, 14))
    ic = int(rng.integers(64, 78))
    grid[ir : ir + 2, ic : ic + 14] = WALL
    return World(grid, res, wall_height)


def gen_room(seed: int = 0, res: float = 0.1, wall_height: float = 1.5, size_m: float = 4.0) -> World:
    """Empty square room for smoke tests."""
    n = int(round(size_m / res))
    grid = np.zeros((n, n), dtype=np.uint8)
    grid[0], grid[-1] = WALL, WALL
    grid[:, 0], grid[:, -1] = WALL, WALL
    return World(grid, res, wall_height)


WORLD_GENERATORS = {"house": gen_house, "bookstore": gen_bookstore, "room": gen_room}


# ---------------------------------------------------------------------------
# pinhole depth camera
# ---------------------------------------------------------------------------


@dataclass
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    max_range: float
    mount_height: float
    r_ext: np.ndarray = field(default_factory=lambda: np.eye(3))
    t_ext: np.ndarray = field(default_factory=lambda: np.zeros(3))
    _rays: tuple | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        if self.max_range <= 0 or self.mount_height <= 0:
            raise ValueError("max_range and mount_height must be positive")
        self.r_ext = np.asarray(self.r_ext, dtype=float).reshape(3, 3)
        self.t_ext = np.asarray(self.t_ext, dtype=float).reshape(3)

    @classmethod
    def from_fov(
        cls,
        width: int,
        height: int,
        fov_horizontal: float,
        max_range: float,
        mount_height: float,
    ) -> "CameraModel":
        fx = (width / 2.0) / math.tan(fov_horizontal / 2.0)
        return cls(
            fx=fx,
            fy=fx,
            cx=width / 2.0,
            cy=height / 2.0,
            width=width,
            height=height,
            max_range=max_range,
            mount_height=mount_height,
        )

    @property
    def horizontal_fov(self) -> float:
        return 2.0 * math.atan(self.width / (2.0 * self.fx))

    @property
    def vertical_fov(self) -> float:
        return 2.0 * math.atan(self.height / (2.0 * self.fy))

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def pixel_rays(self) -> tuple[np.ndarray, np.ndarray]:
        """(N, 3) camera-frame ray directions with unit z, and their norms."""
        if self._rays is None:
            u = (np.arange(self.width) + 0.5 - self.cx) / self.fx
            v = (np.arange(self.height) + 0.5 - self.cy) / self.fy
            uu, vv = np.meshgrid(u, v)
            d = np.stack([uu.ravel(), vv.ravel(), np.ones(uu.size)], axis=1)
            self._rays = (d, np.linalg.norm(d, axis=1))
        return self._rays


def _rot_body_to_world(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def cam_rotation_world(pose: Pose2D, cam: CameraModel) -> np.ndarray:
    """Rotation taking camera-frame vectors into the world frame."""
    return _rot_body_to_world(pose.yaw) @ BODY_TO_CAM.T @ cam.r_ext.T


def cam_origin_world(pose: Pose2D, cam: CameraModel) -> np.ndarray:
    base = np.array([pose.x, pose.y, cam.mount_height])
    return base - cam_rotation_world(pose, cam) @ cam.t_ext


def world_to_cam(points: np.ndarray, pose: Pose2D, cam: CameraModel) -> np.ndarray:
    R = cam_rotation_world(pose, cam)
    return (np.atleast_2d(points) - cam_origin_world(pose, cam)) @ R


def cam_to_world(points: np.ndarray, pose: Pose2D, cam: CameraModel) -> np.ndarray:
    R = cam_rotation_world(pose, cam)
    return np.atleast_2d(points) @ R.T + cam_origin_world(pose, cam)


# ---------------------------------------------------------------------------
# depth rendering
# ---------------------------------------------------------------------------


@dataclass
class DepthImage:
    depths: np.ndarray  # (H, W) forward depth in meters, inf = no return
    provenance: np.ndarray  # (H, W) int32: -1 none, 0 static, robot_id + 1


def ray_cylinder(origin: np.ndarray, dirs: np.ndarray, center_xy, radius: float, z0: float, z1: float) -> np.ndarray:
    """Euclidean distance along unit rays to a capped vertical cylinder, inf if missed."""
    ox, oy, oz = origin
    px, py = center_xy
    dx, dy, dz = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    rx, ry = ox - px, oy - py
    a = dx * dx + dy * dy
    b = 2.0 * (rx * dx + ry * dy)
    c = rx * rx + ry * ry - radius * radius
    disc = b * b - 4.0 * a * c
    best = np.full(len(dirs), np.inf)
    ok = (disc > 0.0) & (a > 1e-12)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        for sign in (-1.0, 1.0):
            t = np.where(ok, (-b + sign * sq) / (2.0 * a), np.inf)
            z = oz + dz * t
            good = ok & (t > 1e-9) & (z >= z0) & (z <= z1)
            best = np.where(good & (t < best), t, best)
        for zc in (z0, z1):
            t = np.where(dz != 0.0, (zc - oz) / dz, np.inf)
            xx = ox + dx * t - px
            yy = oy + dy * t - py
            good = (t > 1e-9) & (xx * xx + yy * yy <= radius * radius)
            best = np.where(good & (t < best), t, best)
    return best


def raycast_depth(
    robot: "RobotState",
    cam: CameraModel,
    world: World,
    peers: list["RobotState"] = (),
    render_peers: bool = False,
) -> DepthImage:
    """Render one depth frame from the robot's true pose.

    Walls are extruded wall-segment columns, the floor is the z = 0 plane, and
    peers (when rendered) are vertical cylinders of radius footprint_radius
    and height 2 x mount_height. Provenance labels the surface each pixel hit.
    """
    pose = robot.pose
    if not world.is_free(pose.x, pose.y):
        raise InvalidStateError(f"robot {robot.id} is inside a wall at ({pose.x:.2f}, {pose.y:.2f})")
    dirs_cam, norms = cam.pixel_rays()
    unit_cam = dirs_cam / norms[:, None]
    R = cam_rotation_world(pose, cam)
    unit_world = unit_cam @ R.T
    origin = cam_origin_world(pose, cam)
    t_hit = kernels.raycast_grid(origin, unit_world, world.occupancy, world.res, world.wall_height, cam.max_range)
    label = np.where(np.isfinite(t_hit), 0, -1).astype(np.int32)
    if render_peers:
        for peer in peers:
            if peer.id == robot.id:
                continue
            t_peer = ray_cylinder(
                origin,
                unit_world,
                (peer.pose.x, peer.pose.y),
                peer.footprint_radius,
                0.0,
                2.0 * cam.mount_height,
            )
            t_peer = np.where(t_peer <= cam.max_range, t_peer, np.inf)
            closer = t_peer < t_hit
            t_hit = np.where(closer, t_peer, t_hit)
            label[closer] = robot_label(peer.id)
    # store forward (optical axis) depth; unit_cam z component is 1 / norm
    depth = t_hit / norms
    depth[~np.isfinite(t_hit)] = np.inf
    H, W = cam.height, cam.width
    return DepthImage(depth.reshape(H, W), label.reshape(H, W))


def depth_to_cloud(img: DepthImage, cam: CameraModel, robot_pose: Pose2D) -> PointCloud:
    """Back-project finite pixels to a world-frame cloud (one point per pixel).

    ``robot_pose`` is the pose the points are anchored to, i.e. the reported
    (odometry) pose during mapping.
    """
    dirs_cam, _ = cam.pixel_rays()
    depth = img.depths.ravel()
    mask = np.isfinite(depth)
    if not mask.any():
        return PointCloud.empty()
    p_cam = dirs_cam[mask] * depth[mask, None]
    pts = cam_to_world(p_cam, robot_pose, cam)
    prov = img.provenance.ravel()[mask].astype(np.int32)
    origin = cam_origin_world(robot_pose, cam)
    origins = np.broadcast_to(origin, pts.shape).copy()
    return PointCloud(pts, prov, origins)


# ---------------------------------------------------------------------------
# robot kinematics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RobotState:
    id: int
    pose: Pose2D
    reported: Pose2D | None = None
    linear_speed_max: float = 0.5
    angular_speed_max: float = math.pi / 4.0
    footprint_radius: float = 0.15
    odom_noise: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if self.linear_speed_max <= 0 or self.angular_speed_max <= 0:
            raise ValueError("speed limits must be positive")
        if self.footprint_radius <= 0:
            raise ValueError("footprint radius must be positive")
        if self.reported is None:
            object.__setattr__(self, "reported", self.pose)


def step_robot(
    robot: RobotState,
    path: list[tuple[float, float]],
    dt: float,
    rng: np.random.Generator,
    arrive_tol: float = 0.05,
    angle_tol: float = 0.2,
) -> tuple[RobotState, list[tuple[float, float]]]:
    """Advance one control step: rotate toward the next waypoint, then translate.

    Control is computed in the robot's believed (reported) frame; the true
    pose executes the same body twist. Odometry noise perturbs only the
    reported pose. Waypoints are popped when the reported position is within
    ``arrive_tol``. Empty path is a no-op.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not path:
        return robot, path
    rep = robot.reported
    path = list(path)
    while path and math.hypot(path[0][0] - rep.x, path[0][1] - rep.y) <= arrive_tol:
        path.pop(0)
    if not path:
        return robot, path
    wx, wy = path[0]
    dist = math.hypot(wx - rep.x, wy - rep.y)
    heading = math.atan2(wy - rep.y, wx - rep.x)
    dyaw = normalize = (heading - rep.yaw + math.pi) % (2.0 * math.pi) - math.pi
    max_turn = robot.angular_speed_max * dt
    turn = max(-max_turn, min(max_turn, dyaw))
    forward = 0.0
    if abs(dyaw) < angle_tol:
        forward = min(robot.linear_speed_max * dt, dist)
    sigma_xy, sigma_yaw = robot.odom_noise
    noise = rng.normal(0.0, 1.0, size=3)
    true_yaw = robot.pose.yaw + turn
    true_pose = Pose2D(
        robot.pose.x + forward * math.cos(true_yaw),
        robot.pose.y + forward * math.sin(true_yaw),
        true_yaw,
    )
    rep_yaw = rep.yaw + turn + sigma_yaw * noise[2]
    rep_pose = Pose2D(
        rep.x + forward * math.cos(rep_yaw) + sigma_xy * noise[0],
        rep.y + forward * math.sin(rep_yaw) + sigma_xy * noise[1],
        rep_yaw,
    )
    return replace(robot, pose=true_pose, reported=rep_pose), path


# ---------------------------------------------------------------------------
# ground truth sampling
# ---------------------------------------------------------------------------


def sample_ground_truth(world: World, density: float, seed: int = 12345) -> PointCloud:
    """Uniformly sample wall faces (adjacent to free space) and the floor.

    The total point count is ceil(density x total area); per-surface counts
    use largest-remainder allocation so areas are represented exactly to
    within one point.
    """
    if density <= 0:
        raise ValueError("density must be positive")
    occ = world.occupancy
    res = world.res
    wh = world.wall_height
    H, W = occ.shape
    surfaces = []  # (kind, row, col, direction) with area
    areas = []
    wall_face_area = res * wh
    # faces between a wall cell and a free neighbor, keyed by the free side
    for dr, dc, face in ((0, 1, "w"), (0, -1, "e"), (1, 0, "s"), (-1, 0, "n")):
        walls = occ == WALL
        shifted = np.zeros_like(walls)
        rr = slice(max(dr, 0), H + min(dr, 0))
        rr_src = slice(max(-dr, 0), H + min(-dr, 0))
        cc = slice(max(dc, 0), W + min(dc, 0))
        cc_src = slice(max(-dc, 0), W + min(-dc, 0))
        shifted[rr, cc] = occ[rr_src, cc_src] == FREE
        for r, c in zip(*np.nonzero(walls & shifted)):
            surfaces.append(("wall", int(r), int(c), face))
            areas.append(wall_face_area)
    for r, c in zip(*np.nonzero(occ == FREE)):
        surfaces.append(("floor", int(r), int(c), ""))
        areas.append(res * res)
    areas = np.asarray(areas)
    total = areas.sum()
    n_total = int(math.ceil(density * total))
    exact = areas / total * n_total
    counts = np.floor(exact).astype(np.int64)
    short = n_total - counts.sum()
    if short > 0:
        frac = exact - counts
        order = np.argsort(-frac, kind="stable")
        counts[order[:short]] += 1
    rng = np.random.default_rng(seed)
    chunks = []
    for (kind, r, c, face), n in zip(surfaces, counts):
        if n == 0:
            continue
        u = rng.random(n)
        v = rng.random(n)
        if kind == "floor":
            pts = np.column_stack([(c + u) * res, (r + v) * res, np.zeros(n)])
        else:
            z = v * wh
            if face == "w":  # free neighbor to the east -> face at x = (c+1)*res
                pts = np.column_stack([np.full(n, (c + 1) * res), (r + u) * res, z])
            elif face == "e":
                pts = np.column_stack([np.full(n, c * res), (r + u) * res, z])
            elif face == "s":  # free neighbor below (larger row) -> face at y = (r+1)*res
                pts = np.column_stack([(c + u) * res, np.full(n, (r + 1) * res), z])
            else:
                pts = np.column_stack([(c + u) * res, np.full(n, r * res), z])
        chunks.append(pts)
    pts = np.vstack(chunks) if chunks else np.zeros((0, 3))
    return PointCloud(pts, np.zeros(len(pts), dtype=np.int32))
