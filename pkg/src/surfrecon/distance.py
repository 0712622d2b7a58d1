"""Unsigned distance to a point cloud on the grid, and the normal-term weight r(x)."""

from __future__ import annotations

import numpy as np
from numba import njit

from .grid import GridSpec
from .pointcloud import PointCloud

_FAR = 1e10


@njit(cache=True)
def _solve_2d(a, b):
    if abs(a - b) >= 1.0:
        return min(a, b) + 1.0
    return 0.5 * (a + b + np.sqrt(2.0 - (a - b) ** 2))


@njit(cache=True)
def _solve_3d(a, b, c):
    # sort so that a <= b <= c
    if a > b:
        a, b = b, a
    if b > c:
        b, c = c, b
    if a > b:
        a, b = b, a
    u = a + 1.0
    if u <= b:
        return u
    u = 0.5 * (a + b + np.sqrt(2.0 - (a - b) ** 2))
    if u <= c:
        return u
    s = a + b + c
    disc = s * s - 3.0 * (a * a + b * b + c * c - 1.0)
    return (s + np.sqrt(max(disc, 0.0))) / 3.0


@njit(cache=True)
def _sweep_2d(f, fixed, si, sj):
    m, n = f.shape
    change = 0.0
    for ii in range(m):
        i = ii if si > 0 else m - 1 - ii
        for jj in range(n):
            j = jj if sj > 0 else n - 1 - jj
            if fixed[i, j]:
                continue
            a = min(f[i - 1, j] if i > 0 else _FAR, f[i + 1, j] if i < m - 1 else _FAR)
            b = min(f[i, j - 1] if j > 0 else _FAR, f[i, j + 1] if j < n - 1 else _FAR)
            if a >= _FAR and b >= _FAR:
                continue
            u = _solve_2d(a, b)
            if u < f[i, j]:
                change = max(change, f[i, j] - u) if f[i, j] < _FAR else max(change, 1.0)
                f[i, j] = u
    return change


@njit(cache=True)
def _sweep_3d(f, fixed, si, sj, sk):
    m, n, p = f.shape
    change = 0.0
    for ii in range(m):
        i = ii if si > 0 else m - 1 - ii
        for jj in range(n):
            j = jj if sj > 0 else n - 1 - jj
            for kk in range(p):
                k = kk if sk > 0 else p - 1 - kk
                if fixed[i, j, k]:
                    continue
                a = min(f[i - 1, j, k] if i > 0 else _FAR, f[i + 1, j, k] if i < m - 1 else _FAR)
                b = min(f[i, j - 1, k] if j > 0 else _FAR, f[i, j + 1, k] if j < n - 1 else _FAR)
                c = min(f[i, j, k - 1] if k > 0 else _FAR, f[i, j, k + 1] if k < p - 1 else _FAR)
                if a >= _FAR and b >= _FAR and c >= _FAR:
                    continue
                u = _solve_3d(a, b, c)
                if u < f[i, j, k]:
                    change = max(change, f[i, j, k] - u) if f[i, j, k] < _FAR else max(change, 1.0)
                    f[i, j, k] = u
    return change


def _orderings(ndim: int) -> list[tuple[int, ...]]:
    return [tuple(1 - 2 * ((code >> k) & 1) for k in range(ndim)) for code in range(2**ndim)]


def seed_sources(cloud: PointCloud, spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Exact distances at nodes within one cell of the cloud; ``inf`` elsewhere."""
    _require(cloud, spec)
    f = np.full(spec.dims, np.inf)
    hi = np.array(spec.dims) - 1
    for z in cloud.points:
        lo_idx = np.maximum(np.floor(z - 1.0).astype(int), 0)
        hi_idx = np.minimum(np.ceil(z + 1.0).astype(int), hi)
        if np.any(hi_idx < lo_idx):
            continue
        box = tuple(slice(a, b + 1) for a, b in zip(lo_idx, hi_idx))
        axes = np.meshgrid(*[np.arange(a, b + 1) for a, b in zip(lo_idx, hi_idx)], indexing="ij")
        dist = np.sqrt(sum((ax - zk) ** 2 for ax, zk in zip(axes, z)))
        np.minimum(f[box], dist, out=f[box])
    fixed = f <= 1.0
    f[~fixed] = np.inf
    return f, fixed


def eikonal_fast_sweep(cloud: PointCloud, spec: GridSpec, sweeps: int = 50, tol: float = 1e-6) -> np.ndarray:
    """Godunov fast sweeping for ``|grad f| = 1`` with ``f`` seeded on the cloud.

    One round visits all ``2**d`` axis orderings; rounds repeat until the
    largest update drops below ``tol`` or ``sweeps`` rounds have run.
    """
    if sweeps < 1:
        raise ValueError("sweeps must be positive")
    f, fixed = seed_sources(cloud, spec)
    if not fixed.any():
        raise ValueError("no grid node lies within one cell of the point cloud")
    f = np.where(np.isfinite(f), f, _FAR)
    sweep = _sweep_2d if spec.ndim == 2 else _sweep_3d
    for _ in range(sweeps):
        change = 0.0
        for order in _orderings(spec.ndim):
            change = max(change, sweep(f, fixed, *order))
        if change < tol:
            break
    return f


def brute_force_distance(cloud: PointCloud, spec: GridSpec, chunk: int = 4096) -> np.ndarray:
    """Exact ``min_z |z - x|`` at every node by direct enumeration."""
    _require(cloud, spec, inside=False)
    nodes = spec.coords().reshape(spec.ndim, -1).T
    out = np.empty(len(nodes))
    pts = cloud.points
    for start in range(0, len(nodes), chunk):
        blk = nodes[start : start + chunk]
        d2 = np.sum((blk[:, None, :] - pts[None, :, :]) ** 2, axis=2)
        out[start : start + chunk] = np.sqrt(d2.min(axis=1))
    return out.reshape(spec.dims)


def weight_field(f: np.ndarray, mode: str = "constant") -> np.ndarray:
    """Weight of the normal term: ``1`` for complete data, ``sqrt(f)`` for incomplete data."""
    if mode == "constant":
        return np.ones_like(f)
    if mode == "sqrt_f":
        return np.sqrt(np.maximum(f, 0.0))
    raise ValueError(f"unknown weight mode {mode!r}; expected 'constant' or 'sqrt_f'")


def _require(cloud: PointCloud, spec: GridSpec, inside: bool = True) -> None:
    if len(cloud) == 0:
        raise ValueError("empty point cloud")
    if cloud.dim != spec.ndim:
        raise ValueError(f"{cloud.dim}D cloud on a {spec.ndim}D grid")
    if inside and not np.all(spec.contains(cloud.points)):
        raise ValueError("point cloud extends outside the grid domain")
