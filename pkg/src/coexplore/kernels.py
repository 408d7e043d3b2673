"""Hot numeric kernels with two interchangeable backends.

Every kernel has a scalar-loop implementation (JIT-compiled with numba when
available) and a vectorized numpy/scipy implementation. Both compute the same
per-ray / per-point recurrences, so results agree exactly for the integer
outputs and to float rounding for the accumulated ones.

Backend selection: the ``COEXPLORE_NUMBA`` environment variable ("0", "false",
"off" or "no" disables the JIT path) or :func:`set_backend` at runtime.
``benchmarks/bench_kernels.py`` compares the two paths.
"""

from __future__ import annotations

import math
import os

import numpy as np
from scipy.spatial import cKDTree

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _env_wants_numba() -> bool:
    return os.environ.get("COEXPLORE_NUMBA", "1").strip().lower() not in ("0", "false", "off", "no")


_BACKEND = "numba" if (HAVE_NUMBA and _env_wants_numba()) else "numpy"


def active_backend() -> str:
    return _BACKEND


def set_backend(name: str) -> None:
    """Switch between "numba" and "numpy" kernel implementations."""
    global _BACKEND
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not importable in this environment")
    _BACKEND = name


# ---------------------------------------------------------------------------
# depth raycasting over an extruded occupancy grid (walls + floor)
# ---------------------------------------------------------------------------


def _raycast_grid_loop(origin, dirs, occ, res, wall_height, max_range):
    n = dirs.shape[0]
    out = np.full(n, np.inf)
    H, W = occ.shape
    ox = origin[0]
    oy = origin[1]
    oz = origin[2]
    cx0 = int(math.floor(ox / res))
    cy0 = int(math.floor(oy / res))
    for i in range(n):
        dx = dirs[i, 0]
        dy = dirs[i, 1]
        dz = dirs[i, 2]
        cx = cx0
        cy = cy0
        step_x = 1 if dx > 0.0 else -1
        step_y = 1 if dy > 0.0 else -1
        if dx > 0.0:
            tmx = ((cx + 1) * res - ox) / dx
        elif dx < 0.0:
            tmx = (cx * res - ox) / dx
        else:
            tmx = np.inf
        if dy > 0.0:
            tmy = ((cy + 1) * res - oy) / dy
        elif dy < 0.0:
            tmy = (cy * res - oy) / dy
        else:
            tmy = np.inf
        tdx = res / abs(dx) if dx != 0.0 else np.inf
        tdy = res / abs(dy) if dy != 0.0 else np.inf
        t_floor = -oz / dz if dz < 0.0 else np.inf
        t_in = 0.0
        hit = np.inf
        while True:
            if cx < 0 or cx >= W or cy < 0 or cy >= H or t_in > max_range:
                break
            t_out = tmx if tmx < tmy else tmy
            if occ[cy, cx] != 0:
                z_in = oz + dz * t_in
                if z_in <= wall_height:
                    hit = t_in
                    break
                if dz < 0.0:
                    t_top = (wall_height - oz) / dz
                    if t_in <= t_top and t_top <= t_out:
                        hit = t_top
                        break
            else:
                if t_in <= t_floor and t_floor <= t_out:
                    hit = t_floor
                    break
            if tmx < tmy:
                t_in = tmx
                tmx += tdx
                cx += step_x
            else:
                t_in = tmy
                tmy += tdy
                cy += step_y
        if hit <= max_range:
            out[i] = hit
    return out


def _raycast_grid_numpy(origin, dirs, occ, res, wall_height, max_range):
    n = dirs.shape[0]
    H, W = occ.shape
    ox, oy, oz = float(origin[0]), float(origin[1]), float(origin[2])
    dx = dirs[:, 0].astype(float)
    dy = dirs[:, 1].astype(float)
    dz = dirs[:, 2].astype(float)
    cx0 = int(math.floor(ox / res))
    cy0 = int(math.floor(oy / res))
    cx = np.full(n, cx0, dtype=np.int64)
    cy = np.full(n, cy0, dtype=np.int64)
    step_x = np.where(dx > 0.0, 1, -1).astype(np.int64)
    step_y = np.where(dy > 0.0, 1, -1).astype(np.int64)
    with np.errstate(divide="ignore"):
        tmx = np.where(dx > 0.0, ((cx0 + 1) * res - ox) / dx, np.where(dx < 0.0, (cx0 * res - ox) / dx, np.inf))
        tmy = np.where(dy > 0.0, ((cy0 + 1) * res - oy) / dy, np.where(dy < 0.0, (cy0 * res - oy) / dy, np.inf))
        tdx = np.where(dx != 0.0, res / np.abs(dx), np.inf)
        tdy = np.where(dy != 0.0, res / np.abs(dy), np.inf)
        t_floor = np.where(dz < 0.0, -oz / dz, np.inf)
    t_in = np.zeros(n)
    hit = np.full(n, np.inf)
    active = np.ones(n, dtype=bool)
    while active.any():
        dead = active & ((cx < 0) | (cx >= W) | (cy < 0) | (cy >= H) | (t_in > max_range))
        active &= ~dead
        if not active.any():
            break
        t_out = np.minimum(tmx, tmy)
        safe_cx = np.clip(cx, 0, W - 1)
        safe_cy = np.clip(cy, 0, H - 1)
        wall = occ[safe_cy, safe_cx] != 0
        z_in = oz + dz * t_in
        face_hit = active & wall & (z_in <= wall_height)
        with np.errstate(divide="ignore", invalid="ignore"):
            t_top = np.where(dz < 0.0, (wall_height - oz) / dz, np.inf)
        top_hit = active & wall & ~face_hit & (dz < 0.0) & (t_in <= t_top) & (t_top <= t_out)
        floor_hit = active & ~wall & (t_in <= t_floor) & (t_floor <= t_out)
        hit[face_hit] = t_in[face_hit]
        hit[top_hit] = t_top[top_hit]
        hit[floor_hit] = t_floor[floor_hit]
        active &= ~(face_hit | top_hit | floor_hit)
        adv_x = active & (tmx < tmy)
        adv_y = active & ~adv_x
        t_in = np.where(adv_x, tmx, np.where(adv_y, tmy, t_in))
        tmx = np.where(adv_x, tmx + tdx, tmx)
        cx = np.where(adv_x, cx + step_x, cx)
        tmy = np.where(adv_y, tmy + tdy, tmy)
        cy = np.where(adv_y, cy + step_y, cy)
    hit[hit > max_range] = np.inf
    return hit


# ---------------------------------------------------------------------------
# per-point neighborhood density and variance within a closed ball
# ---------------------------------------------------------------------------


def _neighborhood_stats_loop(pts, radius):
    n = pts.shape[0]
    r2 = radius * radius
    inv = 1.0 / radius
    gx = np.empty(n, dtype=np.int64)
    gy = np.empty(n, dtype=np.int64)
    gz = np.empty(n, dtype=np.int64)
    for i in range(n):
        gx[i] = int(math.floor(pts[i, 0] * inv))
        gy[i] = int(math.floor(pts[i, 1] * inv))
        gz[i] = int(math.floor(pts[i, 2] * inv))
    minx, miny, minz = gx.min(), gy.min(), gz.min()
    nx = gx.max() - minx + 1
    ny = gy.max() - miny + 1
    nz = gz.max() - minz + 1
    keys = (gx - minx) * (ny * nz) + (gy - miny) * nz + (gz - minz)
    order = np.argsort(keys)
    skeys = keys[order]
    counts = np.zeros(n, dtype=np.int64)
    sums = np.zeros((n, 3))
    for i in range(n):
        bx = gx[i] - minx
        by = gy[i] - miny
        bz = gz[i] - minz
        for ox in range(-1, 2):
            qx = bx + ox
            if qx < 0 or qx >= nx:
                continue
            for oy in range(-1, 2):
                qy = by + oy
                if qy < 0 or qy >= ny:
                    continue
                for oz in range(-1, 2):
                    qz = bz + oz
                    if qz < 0 or qz >= nz:
                        continue
                    key = qx * (ny * nz) + qy * nz + qz
                    lo = np.searchsorted(skeys, key, side="left")
                    hi = np.searchsorted(skeys, key, side="right")
                    for t in range(lo, hi):
                        j = order[t]
                        ddx = pts[j, 0] - pts[i, 0]
                        ddy = pts[j, 1] - pts[i, 1]
                        ddz = pts[j, 2] - pts[i, 2]
                        d2 = ddx * ddx + ddy * ddy + ddz * ddz
                        if d2 <= r2:
                            counts[i] += 1
                            sums[i, 0] += pts[j, 0]
                            sums[i, 1] += pts[j, 1]
                            sums[i, 2] += pts[j, 2]
    var = np.zeros(n)
    for i in range(n):
        mx = sums[i, 0] / counts[i]
        my = sums[i, 1] / counts[i]
        mz = sums[i, 2] / counts[i]
        acc = 0.0
        bx = gx[i] - minx
        by = gy[i] - miny
        bz = gz[i] - minz
        for ox in range(-1, 2):
            qx = bx + ox
            if qx < 0 or qx >= nx:
                continue
            for oy in range(-1, 2):
                qy = by + oy
                if qy < 0 or qy >= ny:
                    continue
                for oz in range(-1, 2):
                    qz = bz + oz
                    if qz < 0 or qz >= nz:
                        continue
                    key = qx * (ny * nz) + qy * nz + qz
                    lo = np.searchsorted(skeys, key, side="left")
                    hi = np.searchsorted(skeys, key, side="right")
                    for t in range(lo, hi):
                        j = order[t]
                        ddx = pts[j, 0] - pts[i, 0]
                        ddy = pts[j, 1] - pts[i, 1]
                        ddz = pts[j, 2] - pts[i, 2]
                        d2 = ddx * ddx + ddy * ddy + ddz * ddz
                        if d2 <= r2:
                            ex = pts[j, 0] - mx
                            ey = pts[j, 1] - my
                            ez = pts[j, 2] - mz
                            acc += ex * ex + ey * ey + ez * ez
        var[i] = acc / counts[i]
    return counts, var


def _neighborhood_stats_scipy(pts, radius):
    n = pts.shape[0]
    tree = cKDTree(pts)
    pairs = tree.query_pairs(radius, output_type="ndarray")
    a, b = pairs[:, 0], pairs[:, 1]
    counts = np.ones(n, dtype=np.int64)
    np.add.at(counts, a, 1)
    np.add.at(counts, b, 1)
    sums = pts.astype(float).copy()
    np.add.at(sums, a, pts[b])
    np.add.at(sums, b, pts[a])
    means = sums / counts[:, None]
    acc = np.einsum("ij,ij->i", pts - means, pts - means)
    da = pts[b] - means[a]
    db = pts[a] - means[b]
    np.add.at(acc, a, np.einsum("ij,ij->i", da, da))
    np.add.at(acc, b, np.einsum("ij,ij->i", db, db))
    return counts, acc / counts


# ---------------------------------------------------------------------------
# free-space carving: mark grid cells crossed by sensor rays
# ---------------------------------------------------------------------------


def _carve_free_loop(occ, x0s, y0s, x1s, y1s, known):
    H, W = occ.shape
    m = x0s.shape[0]
    for k in range(m):
        x0 = x0s[k]
        y0 = y0s[k]
        x1 = x1s[k]
        y1 = y1s[k]
        steps = max(abs(x1 - x0), abs(y1 - y0))
        if steps == 0:
            if 0 <= x0 < W and 0 <= y0 < H and occ[y0, x0] == 0:
                known[y0, x0] = 1
            continue
        fx = (x1 - x0) / steps
        fy = (y1 - y0) / steps
        for s in range(steps + 1):
            x = int(round(x0 + fx * s))
            y = int(round(y0 + fy * s))
            if x < 0 or x >= W or y < 0 or y >= H:
                break
            if occ[y, x] != 0:
                break
            known[y, x] = 1
    return known


def _carve_free_numpy(occ, x0s, y0s, x1s, y1s, known):
    H, W = occ.shape
    steps = np.maximum(np.abs(x1s - x0s), np.abs(y1s - y0s))
    still = steps == 0
    if still.any():
        xs, ys = x0s[still], y0s[still]
        ok = (xs >= 0) & (xs < W) & (ys >= 0) & (ys < H)
        xs, ys = xs[ok], ys[ok]
        free = occ[ys, xs] == 0
        known[ys[free], xs[free]] = 1
    moving = ~still
    if not moving.any():
        return known
    x0 = x0s[moving]
    y0 = y0s[moving]
    stp = steps[moving]
    fx = (x1s[moving] - x0) / stp
    fy = (y1s[moving] - y0) / stp
    smax = int(stp.max())
    s = np.arange(smax + 1)
    x = np.rint(x0[:, None] + fx[:, None] * s[None, :]).astype(np.int64)
    y = np.rint(y0[:, None] + fy[:, None] * s[None, :]).astype(np.int64)
    inb = (x >= 0) & (x < W) & (y >= 0) & (y < H)
    wall = np.zeros_like(inb)
    wall[inb] = occ[y[inb], x[inb]] != 0
    stop = ~inb | wall | (s[None, :] > stp[:, None])
    first = np.where(stop.any(axis=1), stop.argmax(axis=1), smax + 1)
    valid = s[None, :] < first[:, None]
    known[y[valid], x[valid]] = 1
    return known


if HAVE_NUMBA:
    _raycast_grid_jit = numba.njit(cache=True)(_raycast_grid_loop)
    _neighborhood_stats_jit = numba.njit(cache=True)(_neighborhood_stats_loop)
    _carve_free_jit = numba.njit(cache=True)(_carve_free_loop)


def raycast_grid(origin, dirs, occ, res, wall_height, max_range) -> np.ndarray:
    """Distance along each unit ray to the first wall/floor hit, inf if none within range."""
    origin = np.asarray(origin, dtype=float)
    dirs = np.ascontiguousarray(dirs, dtype=float)
    occ = np.ascontiguousarray(occ, dtype=np.uint8)
    if _BACKEND == "numba":
        return _raycast_grid_jit(origin, dirs, occ, float(res), float(wall_height), float(max_range))
    return _raycast_grid_numpy(origin, dirs, occ, float(res), float(wall_height), float(max_range))


def neighborhood_stats(points, radius) -> tuple[np.ndarray, np.ndarray]:
    """Closed-ball neighbor count (self included) and mean squared deviation per point."""
    pts = np.ascontiguousarray(points, dtype=float)
    if pts.shape[0] == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    if _BACKEND == "numba":
        return _neighborhood_stats_jit(pts, float(radius))
    return _neighborhood_stats_scipy(pts, float(radius))


def carve_free(occ, x0s, y0s, x1s, y1s, known=None) -> np.ndarray:
    """Mark cells on the ray from (x0, y0) to (x1, y1) as seen-free, stopping at walls."""
    occ = np.ascontiguousarray(occ, dtype=np.uint8)
    if known is None:
        known = np.zeros_like(occ)
    x0s = np.ascontiguousarray(x0s, dtype=np.int64)
    y0s = np.ascontiguousarray(y0s, dtype=np.int64)
    x1s = np.ascontiguousarray(x1s, dtype=np.int64)
    y1s = np.ascontiguousarray(y1s, dtype=np.int64)
    if x0s.shape[0] == 0:
        return known
    if _BACKEND == "numba":
        return _carve_free_jit(occ, x0s, y0s, x1s, y1s, known)
    return _carve_free_numpy(occ, x0s, y0s, x1s, y1s, known)
