"""Distances between reconstructions and references, plus shape diagnostics."""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy.spatial import cKDTree

from . import pointcloud
from .levelset import Contour, surface_components
from .pointcloud import ShapeRecipe


def densify_polyline(line: np.ndarray, spacing: float = 0.25) -> np.ndarray:
    """Insert points so consecutive samples are at most ``spacing`` apart."""
    line = np.asarray(line, dtype=float)
    if len(line) < 2:
        return line.copy()
    out = [line[:1]]
    for a, b in zip(line[:-1], line[1:]):
        n = max(int(np.ceil(np.linalg.norm(b - a) / spacing)), 1)
        w = (np.arange(1, n + 1) / n)[:, None]
        out.append(a + w * (b - a))
    return np.concatenate(out)


def resample_closed(line: np.ndarray, spacing: float = 1.0) -> np.ndarray:
    """Uniform arc-length samples of a closed polyline (first point not repeated)."""
    line = np.asarray(line, dtype=float)
    if not np.allclose(line[0], line[-1]):
        line = np.vstack([line, line[:1]])
    seg = np.linalg.norm(np.diff(line, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    n = max(int(round(s[-1] / spacing)), 3)
    t = np.arange(n) * (s[-1] / n)
    return np.column_stack([np.interp(t, s, line[:, k]) for k in range(line.shape[1])])


def sample_contour(contour: Contour, spacing: float = 0.25) -> np.ndarray:
    """Dense points on a contour: densified polylines in 2D, vertices plus edge midpoints in 3D."""
    if contour.dim == 2:
        parts = [densify_polyline(line, spacing) for line in contour.polylines]
        return np.concatenate(parts) if parts else np.zeros((0, 2))
    if contour.vertices is None or len(contour.vertices) == 0:
        return np.zeros((0, 3))
    v = contour.vertices
    f = contour.faces
    mids = [(v[f[:, a]] + v[f[:, b]]) / 2.0 for a, b in ((0, 1), (1, 2), (2, 0))]
    return np.concatenate([v, *mids, v[f].mean(axis=1)])


def sample_segments(segments: np.ndarray, spacing: float = 0.25) -> np.ndarray:
    parts = [densify_polyline(seg, spacing) for seg in np.asarray(segments, dtype=float)]
    return np.concatenate(parts) if parts else np.zeros((0, 2))


def reference_samples(recipe: ShapeRecipe, count: int = 20000) -> np.ndarray:
    """Dense, noise-free and gap-free samples of the analytic shape behind ``recipe``."""
    full = dataclasses.replace(recipe, count=count, gaps=(), corner_gap=0.0, sigma=0.0)
    return pointcloud.generate(full).points


def directed_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from every point of ``a`` to the nearest point of ``b``."""
    if len(a) == 0 or len(b) == 0:
        raise ValueError("distance to an empty point set is undefined")
    return cKDTree(b).query(a)[0]


def hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    return float(max(directed_distances(a, b).max(), directed_distances(b, a).max()))


def chamfer(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric mean nearest-neighbour distance."""
    return float(0.5 * (directed_distances(a, b).mean() + directed_distances(b, a).mean()))


def brute_force_hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def corner_error(points: np.ndarray, recipe: ShapeRecipe, radius: float = 10.0, count: int = 20000) -> float:
    """Largest gap between reconstruction and the true polygon inside discs around its corners.

    Both directions count: reference samples near a corner measured to the
    reconstruction, and reconstruction samples near a corner measured to the
    reference.
    """
    verts = pointcloud.polygon_vertices(recipe)
    if recipe.corners:
        verts = verts[list(recipe.corners)]
    ref = reference_samples(recipe, count)

    def near(pts):
        d = np.linalg.norm(pts[:, None, :] - verts[None, :, :], axis=2)
        return pts[d.min(axis=1) <= radius]

    worst = 0.0
    ref_near, rec_near = near(ref), near(points)
    if len(ref_near):
        worst = max(worst, directed_distances(ref_near, points).max())
    if len(rec_near):
        worst = max(worst, directed_distances(rec_near, ref).max())
    return float(worst)


def chord_offset(points: np.ndarray, a, b, reach: float | None = None) -> float:
    """Max perpendicular distance from chord ``ab`` over points projecting inside it.

    Only points within ``reach`` of the chord line are considered (default:
    the chord length), which keeps the far side of a closed curve out.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    axis = b - a
    length = np.linalg.norm(axis)
    axis = axis / length
    rel = np.asarray(points, dtype=float) - a
    t = rel @ axis
    perp = np.abs(rel[:, 0] * axis[1] - rel[:, 1] * axis[0])
    reach = length if reach is None else reach
    keep = (t > 0) & (t < length) & (perp <= reach)
    return float(perp[keep].max()) if np.any(keep) else 0.0


def curvature_tv(line: np.ndarray, spacing: float = 1.0) -> float:
    """Total variation of the discrete curvature along a closed polyline.

    The curve is first resampled at uniform arc length so the value does not
    depend on where marching squares happened to place its vertices.
    """
    pts = resample_closed(line, spacing)
    e = np.roll(pts, -1, axis=0) - pts
    heading = np.arctan2(e[:, 1], e[:, 0])
    turn = np.angle(np.exp(1j * (heading - np.roll(heading, 1))))
    ds = np.linalg.norm(e, axis=1)
    kappa = turn / (0.5 * (ds + np.roll(ds, 1)))
    return float(np.sum(np.abs(np.roll(kappa, -1) - kappa)))


def is_single_closed_loop(contour: Contour) -> bool:
    return contour.dim == 2 and len(contour.polylines) == 1 and len(contour.closed_loops()) == 1


def component_count(contour: Contour) -> int:
    return len(surface_components(contour))


def axial_span(contour: Contour, axis: int = 2) -> tuple[float, float]:
    v = contour.points
    return float(v[:, axis].min()), float(v[:, axis].max())
