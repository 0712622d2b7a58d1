"""
Level-set state: initialization, smoothed delta, redistancing, energy and
zero-level extraction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from skimage import measure

from .grid import GridSpec, divergence, gradient, norm
from .pointcloud import PointCloud

GRAD_GUARD = 1e-8


@dataclass
class SolverState:
    psi: np.ndarray
    u: np.ndarray
    q: np.ndarray
    iteration: int = 0

    def copy(self) -> "SolverState":
        return SolverState(self.psi.copy(), self.u.copy(), self.q.copy(), self.iteration)


@dataclass
class Contour:
    """Zero level set: polylines in 2D, a triangle mesh in 3D."""

    dim: int
    polylines: list[np.ndarray] = field(default_factory=list)
    vertices: np.ndarray | None = None
    faces: np.ndarray | None = None

    @property
    def segments(self) -> np.ndarray:
        if self.dim != 2:
            raise ValueError("segments are only defined for 2D contours")
        segs = [np.stack([line[:-1], line[1:]], axis=1) for line in self.polylines if len(line) > 1]
        return np.concatenate(segs) if segs else np.zeros((0, 2, 2))

    @property
    def points(self) -> np.ndarray:
        if self.dim == 2:
            return np.concatenate(self.polylines) if self.polylines else np.zeros((0, 2))
        return self.vertices if self.vertices is not None else np.zeros((0, 3))

    def is_empty(self) -> bool:
        return len(self.points) == 0

    def closed_loops(self) -> list[np.ndarray]:
        return [line for line in self.polylines if len(line) > 3 and np.allclose(line[0], line[-1])]


def unit_gradient(psi: np.ndarray, guard: float = GRAD_GUARD) -> tuple[np.ndarray, np.ndarray]:
    """``(grad^c psi / max(|grad^c psi|, guard), |grad^c psi|)``."""
    g = gradient(psi, "central")
    mag = norm(g)
    return g / np.maximum(mag, guard), mag


def box_sdf(spec: GridSpec, lo, hi) -> np.ndarray:
    """Exact signed distance to the axis-aligned box ``[lo, hi]`` (negative inside)."""
    x = spec.coords()
    shape = (-1,) + (1,) * spec.ndim
    c = ((np.asarray(lo, float) + np.asarray(hi, float)) / 2.0).reshape(shape)
    h = ((np.asarray(hi, float) - np.asarray(lo, float)) / 2.0).reshape(shape)
    q = np.abs(x - c) - h
    outside = np.sqrt(np.sum(np.maximum(q, 0.0) ** 2, axis=0))
    inside = np.minimum(np.max(q, axis=0), 0.0)
    return outside + inside


def init_state(cloud: PointCloud, spec: GridSpec, pad: float = 5.0) -> SolverState:
    """Bounding box of the cloud grown by ``pad`` cells, as a signed distance function."""
    if len(cloud) == 0:
        raise ValueError("empty point cloud")
    lo, hi = cloud.bounds()
    lo, hi = lo - pad, hi + pad
    if np.any(lo < 0) or np.any(hi > np.array(spec.dims) - 1):
        raise ValueError(f"initial box [{lo}, {hi}] exceeds the grid domain {spec.dims}")
    psi = box_sdf(spec, lo, hi)
    u, _ = unit_gradient(psi)
    q = divergence(u, "central")
    return SolverState(psi=psi, u=u, q=q)


def delta_eps(psi: np.ndarray, eps: float) -> np.ndarray:
    """Smoothed Dirac delta ``eps / (pi (eps^2 + psi^2))``."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    return eps / (np.pi * (eps * eps + psi * psi))


def _one_sided(phi: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    pad = [(0, 0)] * phi.ndim
    pad[axis] = (1, 1)
    # ghost nodes by linear extrapolation, so affine distance functions stay exact at the border
    ext = np.pad(phi, pad, mode="reflect", reflect_type="odd")
    n = phi.shape[axis]
    mid = np.take(ext, np.arange(1, n + 1), axis=axis)
    back = mid - np.take(ext, np.arange(0, n), axis=axis)
    fwd = np.take(ext, np.arange(2, n + 2), axis=axis) - mid
    return back, fwd


def godunov_grad_norm(phi: np.ndarray, sign: np.ndarray) -> np.ndarray:
    """Upwind ``|grad phi|`` for a front moving along ``sign``; boundaries extrapolate linearly."""
    pos = np.zeros_like(phi)
    neg = np.zeros_like(phi)
    for axis in range(phi.ndim):
        back, fwd = _one_sided(phi, axis)
        pos += np.maximum(np.maximum(back, 0.0) ** 2, np.minimum(fwd, 0.0) ** 2)
        neg += np.maximum(np.minimum(back, 0.0) ** 2, np.maximum(fwd, 0.0) ** 2)
    return np.sqrt(np.where(sign > 0, pos, neg))


def reinitialize(psi: np.ndarray, iters: int = 3, dtau: float = 0.5) -> np.ndarray:
    """``iters`` explicit pseudo-time steps of ``phi_t = -S(psi)(|grad phi| - 1)``."""
    if iters < 0:
        raise ValueError("iters must be nonnegative")
    phi = np.array(psi, dtype=float, copy=True)
    if iters == 0:
        return phi
    s = psi / np.sqrt(psi * psi + 1.0)
    for _ in range(iters):
        phi = phi - dtau * s * (godunov_grad_norm(phi, s) - 1.0)
    return phi


def energy_terms(psi, f, p, r, eta0: float, eta1: float, eta2: float, eps: float) -> tuple[float, float, float]:
    """Distance, curvature and normal-alignment terms of the level-set energy."""
    n, mag = unit_gradient(psi)
    w = delta_eps(psi, eps) * mag
    kappa = divergence(n, "central")
    align = np.sum(p * n, axis=0)
    e_dist = eta0 * np.sum(f * f * w)
    e_curv = 0.5 * eta1 * np.sum(kappa * kappa * w)
    e_norm = 0.5 * eta2 * np.sum(r * (1.0 - align * align) * w)
    return float(e_dist), float(e_curv), float(e_norm)


def energy(state: SolverState, f, p, r, config) -> float:
    return sum(energy_terms(state.psi, f, p, r, config.eta0, config.eta1, config.eta2, config.eps))


def extract_zero_level(psi: np.ndarray) -> Contour:
    """Marching squares (2D) or marching cubes (3D) with linear interpolation."""
    psi = np.asarray(psi, dtype=float)
    if not (psi.min() < 0.0 < psi.max()):
        return Contour(dim=psi.ndim)
    if psi.ndim == 2:
        return Contour(dim=2, polylines=measure.find_contours(psi, 0.0))
    verts, faces, _, _ = measure.marching_cubes(psi, level=0.0)
    return Contour(dim=3, vertices=verts, faces=faces)


def surface_components(contour: Contour) -> list[np.ndarray]:
    """Vertex index sets of the connected pieces of a 3D contour mesh."""
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    if contour.vertices is None or len(contour.faces) == 0:
        return []
    f = contour.faces
    rows = np.concatenate([f[:, 0], f[:, 1], f[:, 2]])
    cols = np.concatenate([f[:, 1], f[:, 2], f[:, 0]])
    nv = len(contour.vertices)
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(nv, nv))
    count, labels = connected_components(graph, directed=False)
    used = np.unique(f)
    return [idx for idx in (np.flatnonzero(labels == k) for k in range(count)) if np.isin(idx, used).any()]


def write_contour_csv(contour: Contour, path) -> None:
    segs = contour.segments
    lines = ["x1,y1,x2,y2"] + [f"{a[0]:.17g},{a[1]:.17g},{b[0]:.17g},{b[1]:.17g}" for a, b in segs]
    Path(path).write_text("\n".join(lines) + "\n")


def read_contour_csv(path) -> np.ndarray:
    """Segments ``(S, 2, 2)`` from a contour CSV."""
    rows = [ln for ln in Path(path).read_text().splitlines()[1:] if ln.strip()]
    if not rows:
        return np.zeros((0, 2, 2))
    data = np.loadtxt(rows, delimiter=",", ndmin=2)
    if data.shape[1] != 4:
        raise ValueError(f"{path}: expected 4 columns per segment")
    return data.reshape(-1, 2, 2)


def write_contour_svg(contour: Contour, path, dims, cloud: PointCloud | None = None) -> None:
    w, h = dims[0], dims[1]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {w} {h}" width="{4 * w}" height="{4 * h}">']
    parts.append(f'<rect width="{w}" height="{h}" fill="white"/>')
    if cloud is not None:
        for x, y in cloud.points:
            parts.append(f'<circle cx="{x:.3f}" cy="{h - y:.3f}" r="0.5" fill="#1f77b4"/>')
    for line in contour.polylines:
        pts = " ".join(f"{x:.3f},{h - y:.3f}" for x, y in line)
        parts.append(f'<polyline points="{pts}" fill="none" stroke="#d62728" stroke-width="0.4"/>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


def write_obj(contour: Contour, path) -> None:
    lines = [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in contour.points]
    if contour.faces is not None:
        lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in contour.faces]
    Path(path).write_text("\n".join(lines) + "\n")


def read_obj(path) -> Contour:
    verts, faces = [], []
    for line in Path(path).read_text().splitlines():
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "v":
            verts.append([float(t) for t in tok[1:4]])
        elif tok[0] == "f":
            faces.append([int(t.split("/")[0]) - 1 for t in tok[1:4]])
    return Contour(dim=3, vertices=np.array(verts).reshape(-1, 3), faces=np.array(faces, dtype=int).reshape(-1, 3))
