"""PCA direction field: the smallest-variance axis of the points near every node."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridSpec
from .pointcloud import PointCloud

TIE_TOL = 1e-8
WINDOW_SLACK = 1e-9


@dataclass
class NormalField:
    p: np.ndarray  # (d, *dims), unit length at every node
    from_pca: np.ndarray  # (dims) bool; False where the radial fallback was used

    @property
    def fallback(self) -> np.ndarray:
        return ~self.from_pca


def _canonical_sign(vecs: np.ndarray) -> np.ndarray:
    """Flip each row so its first nonzero component is positive."""
    nz = np.abs(vecs) > 1e-14
    first = np.argmax(nz, axis=1)
    lead = vecs[np.arange(len(vecs)), first]
    return np.where((lead < 0)[:, None], -vecs, vecs) + 0.0


def _eig2(a, b, c):
    half = 0.5 * (a - c)
    rad = np.hypot(half, b)
    lo = 0.5 * (a + c) - rad
    hi = 0.5 * (a + c) + rad
    theta = 0.5 * np.arctan2(2.0 * b, a - c)
    vec = np.stack([-np.sin(theta), np.cos(theta)], axis=1)
    return lo, hi - lo, vec


def _eig3(m: np.ndarray):
    a11, a22, a33 = m[:, 0, 0], m[:, 1, 1], m[:, 2, 2]
    a12, a13, a23 = m[:, 0, 1], m[:, 0, 2], m[:, 1, 2]
    q = (a11 + a22 + a33) / 3.0
    p1 = a12**2 + a13**2 + a23**2
    p2 = (a11 - q) ** 2 + (a22 - q) ** 2 + (a33 - q) ** 2 + 2.0 * p1
    p = np.sqrt(p2 / 6.0)
    safe = np.where(p > 0, p, 1.0)
    b = (m - q[:, None, None] * np.eye(3)) / safe[:, None, None]
    r = np.clip(np.linalg.det(b) / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    hi = q + 2.0 * p * np.cos(phi)
    lo = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    mid = 3.0 * q - hi - lo
    shifted = m - lo[:, None, None] * np.eye(3)
    rows = shifted
    cands = np.stack(
        [np.cross(rows[:, 0], rows[:, 1]), np.cross(rows[:, 0], rows[:, 2]), np.cross(rows[:, 1], rows[:, 2])],
        axis=1,
    )
    lens = np.linalg.norm(cands, axis=2)
    best = np.argmax(lens, axis=1)
    idx = np.arange(len(m))
    vec = cands[idx, best]
    length = lens[idx, best]
    vec = vec / np.where(length > 0, length, 1.0)[:, None]
    # a double smallest eigenvalue leaves every cross product (near) zero
    gap = np.where(length > 0, mid - lo, 0.0)
    return lo, gap, vec


def smallest_eigvecs(mats: np.ndarray, tie_tol: float = TIE_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form unit eigenvectors for the minimal eigenvalue of symmetric 2x2/3x3 matrices.

    Returns ``(vecs, tied)``. Where the two smallest eigenvalues coincide
    (relative to the spectral scale) the eigenvector is not unique: those rows
    get the last coordinate axis and ``tied`` is True.
    """
    mats = np.asarray(mats, dtype=float)
    d = mats.shape[-1]
    if d == 2:
        _, gap, vec = _eig2(mats[:, 0, 0], mats[:, 0, 1], mats[:, 1, 1])
    elif d == 3:
        _, gap, vec = _eig3(mats)
    else:
        raise ValueError(f"only 2x2 and 3x3 matrices are supported, got {d}x{d}")
    scale = np.max(np.abs(mats).reshape(len(mats), -1), axis=1)
    tied = gap <= tie_tol * np.maximum(scale, np.finfo(float).tiny)
    vec = _canonical_sign(vec)
    vec[tied] = 0.0
    vec[tied, -1] = 1.0
    return vec, tied


def smallest_eigvec_sym(matrix) -> np.ndarray:
    """Unit eigenvector of the smallest eigenvalue of one symmetric matrix."""
    m = np.asarray(matrix, dtype=float)
    if not np.allclose(m, m.T):
        raise ValueError("matrix must be symmetric")
    return smallest_eigvecs(m[None])[0][0]


def window_moments(cloud: PointCloud, spec: GridSpec, lam: float, origin=None):
    """Count, coordinate sums and second-moment sums over the closed box window of every node.

    A point ``z`` lies in the window of node ``x`` when ``|z_k - x_k| <= lam``
    on every axis; along each axis that is the node range
    ``[ceil(z_k - lam), floor(z_k + lam)]``, so all window sums follow from
    corner scatters into a difference array and one cumulative sum per axis.
    """
    d = spec.ndim
    dims = np.array(spec.dims)
    origin = spec.center if origin is None else np.asarray(origin, float)
    pts = cloud.points
    # points sitting on a window edge up to rounding count as inside
    lo = np.maximum(np.ceil(pts - lam - WINDOW_SLACK).astype(int), 0)
    hi = np.minimum(np.floor(pts + lam + WINDOW_SLACK).astype(int), dims - 1)
    ok = np.all(hi >= lo, axis=1)
    pts, lo, hi = pts[ok], lo[ok], hi[ok]
    z = pts - origin
    pairs = [(k, l) for k in range(d) for l in range(k, d)]
    values = np.column_stack([np.ones(len(z))] + [z[:, k] for k in range(d)] + [z[:, k] * z[:, l] for k, l in pairs])
    acc = np.zeros((values.shape[1], *(dims + 1)))
    for code in range(2**d):
        corner = []
        sign = np.ones(len(z))
        for k in range(d):
            if (code >> k) & 1:
                corner.append(hi[:, k] + 1)
                sign = -sign
            else:
                corner.append(lo[:, k])
        for q in range(values.shape[1]):
            np.add.at(acc[q], tuple(corner), sign * values[:, q])
    for k in range(d):
        acc = np.cumsum(acc, axis=k + 1)
    acc = acc[(slice(None),) + tuple(slice(0, n) for n in dims)]
    count = acc[0]
    first = acc[1 : 1 + d]
    second = np.zeros((d, d, *spec.dims))
    for q, (k, l) in enumerate(pairs):
        second[k, l] = second[l, k] = acc[1 + d + q]
    return np.rint(count).astype(int), first, second


def radial_field(spec: GridSpec) -> np.ndarray:
    """``(x - xbar)/|x - xbar|`` about the domain center; last axis at the center itself."""
    rel = spec.coords() - spec.center.reshape((-1,) + (1,) * spec.ndim)
    length = np.sqrt(np.sum(rel * rel, axis=0))
    out = rel / np.where(length > 0, length, 1.0)
    out[-1][length == 0] = 1.0
    return out


def estimate_normals(cloud: PointCloud, spec: GridSpec, lam: float, c_p: int | None = None) -> NormalField:
    """PCA normal direction at every grid node with the radial fallback.

    Nodes whose window holds fewer than ``c_p`` points (default ``d + 1``),
    or whose covariance has a tied smallest eigenvalue, take the radial
    direction about the domain center.
    """
    d = spec.ndim
    if lam < 1:
        raise ValueError("window half-width must be >= 1")
    c_p = d + 1 if c_p is None else int(c_p)
    if c_p < 1:
        raise ValueError("c_p must be positive")
    if cloud.dim != d:
        raise ValueError(f"{cloud.dim}D cloud on a {d}D grid")
    count, first, second = window_moments(cloud, spec, lam)
    p = radial_field(spec)
    use = count >= max(c_p, 1)
    n = count[use].astype(float)
    s1 = first[:, use].T
    s2 = np.moveaxis(second[:, :, use], -1, 0)
    cov = s2 - s1[:, :, None] * s1[:, None, :] / n[:, None, None]
    vecs, tied = smallest_eigvecs(cov)
    good = np.zeros(spec.dims, dtype=bool)
    good[use] = ~tied
    flat = p[:, use]
    flat[:, ~tied] = vecs[~tied].T
    p[:, use] = flat
    return NormalField(p=p, from_pca=good)
