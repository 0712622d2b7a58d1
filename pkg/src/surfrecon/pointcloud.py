"""
Point clouds: text I/O and synthetic shape generators.

Every generated shape is traced by a primary parameter ``t`` in ``[0, 1)``:
the perimeter fraction for curves, the axial fraction for the cylinder and the
rail, the major angle fraction for the torus. Gaps are closed ``t`` intervals
(``t0 > t1`` wraps through 1). Surfaces get a second parameter from a golden
ratio lattice, so samples are uniform in parameter space, not in area.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

SHAPES = ("circle", "ellipse", "square", "hexagon", "pentagon", "flower", "cylinder", "torus", "box-rail")
_POLYGON_SIDES = {"square": 4, "pentagon": 5, "hexagon": 6}
_DEFAULT_ROTATION = {"square": np.pi / 4, "pentagon": np.pi / 2, "hexagon": 0.0}
_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass
class PointCloud:
    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.size and pts.shape[1] not in (2, 3):
            raise ValueError(f"points must be 2D or 3D, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        self.points = pts

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.points.min(axis=0), self.points.max(axis=0)


@dataclass
class ShapeRecipe:
    """Parameters of a synthetic sample set.

    ``radius`` is the circumradius for polygons, the base radius for circle,
    flower and cylinder, and the major radius for the torus. ``radii`` holds
    the ellipse semi-axes, the torus tube radius ``(r,)`` or the rail cross
    section ``(width, height)``. ``length`` is the cylinder height or rail
    length. ``corner_gap`` removes samples within that arc length of the
    polygon vertices listed in ``corners`` (all vertices when empty).
    """

    shape: str
    center: tuple[float, ...] = (50.0, 50.0)
    radius: float = 30.0
    radii: tuple[float, ...] = ()
    length: float = 0.0
    petals: int = 3
    amplitude: float = 0.3
    rotation: float | None = None
    count: int = 200
    gaps: list[tuple[float, float]] = field(default_factory=list)
    corner_gap: float = 0.0
    corners: tuple[int, ...] = ()
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}; expected one of {', '.join(SHAPES)}")
        if self.count <= 0:
            raise ValueError("count must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        for t0, t1 in self.gaps:
            if not (0.0 <= t0 <= 1.0 and 0.0 <= t1 <= 1.0):
                raise ValueError(f"gap interval ({t0}, {t1}) outside [0, 1]")
        self.center = tuple(float(c) for c in self.center)
        want = 3 if self.shape in ("cylinder", "torus", "box-rail") else 2
        if len(self.center) != want:
            raise ValueError(f"{self.shape} needs a {want}D center")
        self.gaps = [tuple(map(float, g)) for g in self.gaps]

    @property
    def dim(self) -> int:
        return len(self.center)

    def to_dict(self) -> dict:
        return asdict(self)


def _in_intervals(t: np.ndarray, intervals) -> np.ndarray:
    hit = np.zeros(t.shape, dtype=bool)
    for t0, t1 in intervals:
        if t0 <= t1:
            hit |= (t >= t0) & (t <= t1)
        else:
            hit |= (t >= t0) | (t <= t1)
    return hit


def polygon_vertices(recipe: ShapeRecipe) -> np.ndarray:
    n = _POLYGON_SIDES[recipe.shape]
    rot = _DEFAULT_ROTATION[recipe.shape] if recipe.rotation is None else recipe.rotation
    ang = rot + 2.0 * np.pi * np.arange(n) / n
    return np.asarray(recipe.center) + recipe.radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)


def _polygon_points(recipe: ShapeRecipe, t: np.ndarray) -> np.ndarray:
    verts = polygon_vertices(recipe)
    n = len(verts)
    s = t * n
    k = np.minimum(np.floor(s).astype(int), n - 1)
    frac = (s - k)[:, None]
    return verts[k] * (1.0 - frac) + verts[(k + 1) % n] * frac


def corner_intervals(recipe: ShapeRecipe, width: float) -> list[tuple[float, float]]:
    """``t`` intervals covering arc length ``width`` on both sides of polygon vertices."""
    verts = polygon_vertices(recipe)
    n = len(verts)
    edge = np.linalg.norm(verts[1] - verts[0])
    dt = width / (edge * n)
    which = recipe.corners or tuple(range(n))
    out = []
    for k in which:
        tv = k / n
        out.append(((tv - dt) % 1.0, (tv + dt) % 1.0))
    return out


def _flower_radius(recipe: ShapeRecipe, theta):
    return recipe.radius * (1.0 + recipe.amplitude * np.cos(recipe.petals * theta))


def _curve_points(recipe: ShapeRecipe, t: np.ndarray) -> np.ndarray:
    c = np.asarray(recipe.center)
    theta = 2.0 * np.pi * t
    if recipe.shape == "circle":
        return c + recipe.radius * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    if recipe.shape == "ellipse":
        a, b = recipe.radii or (recipe.radius, recipe.radius / 2.0)
        rot = recipe.rotation or 0.0
        x, y = a * np.cos(theta), b * np.sin(theta)
        cr, sr = np.cos(rot), np.sin(rot)
        return c + np.stack([cr * x - sr * y, sr * x + cr * y], axis=1)
    if recipe.shape == "flower":
        rho = _flower_radius(recipe, theta)
        return c + rho[:, None] * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    return _polygon_points(recipe, t)


def _rectangle_loop(width: float, height: float, s: np.ndarray) -> np.ndarray:
    """Points on a centered ``width x height`` rectangle at perimeter fraction ``s``."""
    per = 2.0 * (width + height)
    a = s * per
    y = np.empty_like(a)
    z = np.empty_like(a)
    seg = [width, height, width, height]
    starts = np.cumsum([0.0] + seg[:-1])
    corners = [(-width / 2, -height / 2), (width / 2, -height / 2), (width / 2, height / 2), (-width / 2, height / 2)]
    dirs = [(1, 0), (0, 1), (-1, 0), (0, -1)]
    for k in range(4):
        m = (a >= starts[k]) & (a <= starts[k] + seg[k])
        d = a[m] - starts[k]
        y[m] = corners[k][0] + dirs[k][0] * d
        z[m] = corners[k][1] + dirs[k][1] * d
    return np.stack([y, z], axis=1)


def _surface_points(recipe: ShapeRecipe, t: np.ndarray, s: np.ndarray) -> np.ndarray:
    c = np.asarray(recipe.center)
    if recipe.shape == "cylinder":
        h = recipe.length or 2.0 * recipe.radius
        theta = 2.0 * np.pi * s
        z = c[2] - h / 2.0 + h * t
        return np.stack([c[0] + recipe.radius * np.cos(theta), c[1] + recipe.radius * np.sin(theta), z], axis=1)
    if recipe.shape == "torus":
        tube = recipe.radii[0] if recipe.radii else recipe.radius / 3.0
        phi = 2.0 * np.pi * t
        theta = 2.0 * np.pi * s
        ring = recipe.radius + tube * np.cos(theta)
        return np.stack([c[0] + ring * np.cos(phi), c[1] + ring * np.sin(phi), c[2] + tube * np.sin(theta)], axis=1)
    # box-rail: lateral surface of a rectangular tube running along x
    width, height = recipe.radii or (recipe.radius, recipe.radius)
    length = recipe.length or 4.0 * recipe.radius
    yz = _rectangle_loop(width, height, s)
    x = c[0] - length / 2.0 + length * t
    return np.stack([x, c[1] + yz[:, 0], c[2] + yz[:, 1]], axis=1)


def generate(recipe: ShapeRecipe) -> PointCloud:
    """Sample ``recipe.count`` points, delete gap samples, then add noise."""
    k = np.arange(recipe.count)
    t = k / recipe.count
    if recipe.dim == 2:
        pts = _curve_points(recipe, t)
    else:
        pts = _surface_points(recipe, t, (k * _GOLDEN) % 1.0)
    gaps = list(recipe.gaps)
    if recipe.corner_gap > 0:
        if recipe.shape not in _POLYGON_SIDES:
            raise ValueError("corner gaps need a polygon shape")
        gaps += corner_intervals(recipe, recipe.corner_gap)
    keep = ~_in_intervals(t, gaps)
    pts = pts[keep]
    if recipe.sigma > 0:
        rng = np.random.default_rng(recipe.seed)
        pts = pts + rng.normal(0.0, recipe.sigma, size=pts.shape)
    return PointCloud(pts)


def implicit_residual(recipe: ShapeRecipe, points: np.ndarray) -> np.ndarray:
    """Distance-like residual of ``points`` against the exact shape (0 on it)."""
    p = np.atleast_2d(points) - np.asarray(recipe.center)
    if recipe.shape == "circle":
        return np.abs(np.linalg.norm(p, axis=1) - recipe.radius)
    if recipe.shape == "ellipse":
        a, b = recipe.radii or (recipe.radius, recipe.radius / 2.0)
        rot = -(recipe.rotation or 0.0)
        x = np.cos(rot) * p[:, 0] - np.sin(rot) * p[:, 1]
        y = np.sin(rot) * p[:, 0] + np.cos(rot) * p[:, 1]
        return np.abs(np.sqrt((x / a) ** 2 + (y / b) ** 2) - 1.0) * min(a, b)
    if recipe.shape == "flower":
        theta = np.arctan2(p[:, 1], p[:, 0])
        return np.abs(np.linalg.norm(p, axis=1) - _flower_radius(recipe, theta))
    if recipe.shape in _POLYGON_SIDES:
        verts = polygon_vertices(recipe) - np.asarray(recipe.center)
        return _polyline_distance(p, np.vstack([verts, verts[:1]]))
    if recipe.shape == "cylinder":
        return np.abs(np.linalg.norm(p[:, :2], axis=1) - recipe.radius)
    if recipe.shape == "torus":
        tube = recipe.radii[0] if recipe.radii else recipe.radius / 3.0
        ring = np.linalg.norm(p[:, :2], axis=1) - recipe.radius
        return np.abs(np.hypot(ring, p[:, 2]) - tube)
    width, height = recipe.radii or (recipe.radius, recipe.radius)
    dy = np.abs(p[:, 1]) - width / 2.0
    dz = np.abs(p[:, 2]) - height / 2.0
    outside = np.hypot(np.maximum(dy, 0), np.maximum(dz, 0))
    return np.abs(outside + np.minimum(np.maximum(dy, dz), 0.0))


def _polyline_distance(p: np.ndarray, line: np.ndarray) -> np.ndarray:
    a = line[:-1][None]
    ab = (line[1:] - line[:-1])[None]
    ap = p[:, None, :] - a
    w = np.clip(np.sum(ap * ab, axis=2) / np.sum(ab * ab, axis=2), 0.0, 1.0)
    return np.min(np.linalg.norm(ap - w[..., None] * ab, axis=2), axis=1)


def save(cloud: PointCloud, path) -> None:
    lines = [" ".join(f"{v:.17g}" for v in row) for row in cloud.points]
    Path(path).write_text("\n".join(lines) + "\n")


def load(path) -> PointCloud:
    rows = []
    dim = None
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if dim is None:
            dim = len(tokens)
            if dim not in (2, 3):
                raise ValueError(f"{path}:{lineno}: expected 2 or 3 coordinates, got {dim}")
        elif len(tokens) != dim:
            raise ValueError(f"{path}:{lineno}: expected {dim} coordinates, got {len(tokens)}")
        try:
            rows.append([float(tok) for tok in tokens])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric coordinate in {line!r}") from None
    if not rows:
        raise ValueError("empty point cloud")
    return PointCloud(np.array(rows))
