"""Mutual awareness: does a target robot fall inside an observer's camera FoV?

The visibility test is purely angular and range based. It treats the target
as a disc of radius R seen under the angular size alpha = arctan(R / D) and
requires the whole disc, plus a latency buffer that shrinks with distance, to
fit inside the horizontal field of view:

    |dtheta| + c / D  <=  FoV / 2 - alpha

Wall occlusion is deliberately not part of the predicate; the downstream
robot filter only removes points that actually belong to the target cluster.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import DegenerateGeometryError, Pose2D, normalize_angle


class ConfigurationError(ValueError):
    """Invalid parameter combination or robot roster."""


@dataclass(frozen=True)
class AwarenessParams:
    max_range: float
    robot_radius: float
    fov_horizontal: float
    latency_buffer: float = 0.05

    def __post_init__(self) -> None:
        if self.max_range <= 0 or self.robot_radius <= 0:
            raise ConfigurationError("max_range and robot_radius must be positive")
        if not (0.0 < self.fov_horizontal < math.pi):
            raise ConfigurationError("fov_horizontal must be in (0, pi)")
        if self.latency_buffer < 0:
            raise ConfigurationError("latency_buffer must be non-negative")
        if self.robot_radius >= self.max_range:
            raise ConfigurationError("robot_radius must be smaller than max_range")


@dataclass(frozen=True)
class VisibilityResult:
    visible: bool
    distance: float
    angular_offset: float
    angular_size: float
    in_range: bool


def check_visibility(observer: Pose2D, target: Pose2D, params: AwarenessParams) -> VisibilityResult:
    dx = target.x - observer.x
    dy = target.y - observer.y
    dist = math.hypot(dx, dy)
    if dist == 0.0:
        raise DegenerateGeometryError("observer and target positions coincide")
    theta = math.atan2(dy, dx)
    dtheta = normalize_angle(theta - observer.yaw)
    alpha = math.atan(params.robot_radius / dist)
    in_range = dist <= params.max_range
    visible = in_range and (
        abs(dtheta) + params.latency_buffer / dist <= params.fov_horizontal / 2.0 - alpha
    )
    return VisibilityResult(
        visible=visible,
        distance=dist,
        angular_offset=dtheta,
        angular_size=alpha,
        in_range=in_range,
    )


def awareness_sweep(
    robots: list[tuple[int, Pose2D]], params: AwarenessParams
) -> list[tuple[int, int, VisibilityResult]]:
    """Pairwise visibility over all ordered in-range pairs.

    The range check runs before any angle computation; out-of-range pairs are
    omitted from the result entirely.
    """
    if len(robots) < 2:
        raise ConfigurationError("awareness sweep needs at least two robots")
    ids = [rid for rid, _ in robots]
    if len(set(ids)) != len(ids):
        raise ConfigurationError("robot ids must be distinct")
    out = []
    for oid, opose in robots:
        for tid, tpose in robots:
            if tid == oid:
                continue
            if opose.distance_to(tpose) > params.max_range:
                continue
            out.append((oid, tid, check_visibility(opose, tpose, params)))
    return out


def drf_gate(observer: Pose2D, target: Pose2D, params: AwarenessParams, margin: float = math.radians(2.0)) -> bool:
    """Conservative trigger for the dynamic robot filter.

    True whenever any pixel of the target could appear in the observer's
    image: the strict visibility predicate demands the whole robot inside the
    FoV, so a target clipping the FoV edge (or so close it overflows the
    half-FoV) would be rendered yet never filtered. Distance and angle are
    widened by the target's physical extent.
    """
    dx = target.x - observer.x
    dy = target.y - observer.y
    dist = math.hypot(dx, dy)
    if dist == 0.0:
        raise DegenerateGeometryError("observer and target positions coincide")
    if dist > params.max_range + params.robot_radius:
        return False
    dtheta = normalize_angle(math.atan2(dy, dx) - observer.yaw)
    half_width = math.asin(min(params.robot_radius / dist, 1.0))
    return abs(dtheta) <= params.fov_horizontal / 2.0 + half_width + margin
