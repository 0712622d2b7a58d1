"""
Periodic regular grids, finite differences and FFT-based linear solves.

Scalar fields are plain ``ndarray`` objects of shape ``spec.dims``; vector
fields carry the component axis first, shape ``(d, *spec.dims)``. Node ``i``
sits at coordinate ``x = i`` (unit spacing) and every axis wraps around.

DFT convention: ``numpy.fft.fftn`` (unnormalized forward) paired with
``numpy.fft.ifftn`` (``1/prod(dims)`` inverse). Under it a unit forward shift
``v(i) -> v(i+1)`` multiplies mode ``m`` by ``exp(1j * z)`` with
``z = 2*pi*m/N``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

SCHEMES = ("forward", "backward", "central")


@dataclass(frozen=True)
class GridSpec:
    """Periodic grid with unit spacing on ``[0, M] x [0, N] (x [0, P])``."""

    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        if len(dims) not in (2, 3):
            raise ValueError(f"grid must be 2D or 3D, got dims={dims}")
        if any(n < 4 for n in dims):
            raise ValueError(f"every grid dimension must be >= 4, got {dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def spacing(self) -> float:
        return 1.0

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    @property
    def center(self) -> np.ndarray:
        """Geometric center of the domain box."""
        return np.array(self.dims, dtype=float) / 2.0

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(d, *dims)``."""
        return np.stack(np.meshgrid(*[np.arange(n, dtype=float) for n in self.dims], indexing="ij"))

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        hi = np.array(self.dims, dtype=float) - 1.0
        return np.all((pts >= 0.0) & (pts <= hi), axis=1)


def _check_scalar(field: np.ndarray) -> np.ndarray:
    field = np.asarray(field, dtype=float)
    if field.ndim not in (2, 3):
        raise ValueError(f"scalar field must be 2D or 3D, got shape {field.shape}")
    return field


def _check_vector(vf: np.ndarray) -> np.ndarray:
    vf = np.asarray(vf, dtype=float)
    if vf.ndim - 1 != vf.shape[0]:
        raise ValueError(f"vector field needs shape (d, *dims) with d components, got {vf.shape}")
    return vf


def diff(field: np.ndarray, axis: int, scheme: str = "forward") -> np.ndarray:
    """Periodic one-step difference of ``field`` along ``axis``."""
    field = _check_scalar(field)
    if not 0 <= axis < field.ndim:
        raise ValueError(f"axis {axis} out of range for a {field.ndim}D field")
    if scheme == "forward":
        return np.roll(field, -1, axis=axis) - field
    if scheme == "backward":
        return field - np.roll(field, 1, axis=axis)
    if scheme == "central":
        return 0.5 * (np.roll(field, -1, axis=axis) - np.roll(field, 1, axis=axis))
    raise ValueError(f"unknown difference scheme {scheme!r}; expected one of {SCHEMES}")


def gradient(field: np.ndarray, scheme: str = "central") -> np.ndarray:
    field = _check_scalar(field)
    return np.stack([diff(field, k, scheme) for k in range(field.ndim)])


def divergence(vf: np.ndarray, scheme: str = "central") -> np.ndarray:
    vf = _check_vector(vf)
    return sum(diff(vf[k], k, scheme) for k in range(vf.shape[0]))


def laplacian(field: np.ndarray) -> np.ndarray:
    """Five/seven-point Laplacian ``div^-(grad^+ field)``."""
    return divergence(gradient(field, "forward"), "backward")


def norm(vf: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(vf * vf, axis=0))


@lru_cache(maxsize=32)
def _frequencies(dims: tuple[int, ...]) -> tuple[np.ndarray, ...]:
    """Broadcastable angular frequencies ``z_k = 2*pi*m/N_k`` per axis."""
    out = []
    for k, n in enumerate(dims):
        shape = [1] * len(dims)
        shape[k] = n
        z = 2.0 * np.pi * np.arange(n) / n
        z.setflags(write=False)
        out.append(z.reshape(shape))
    return tuple(out)


@lru_cache(maxsize=32)
def _laplacian_symbol(dims: tuple[int, ...]) -> np.ndarray:
    """Symbol of ``-div^-(grad^+)``: ``sum_k 4 sin^2(z_k/2)``."""
    zs = _frequencies(dims)
    sym = sum(4.0 * np.sin(z / 2.0) ** 2 for z in zs)
    sym = np.broadcast_to(sym, dims).copy()
    sym.setflags(write=False)
    return sym


def helmholtz_symbol(dims: tuple[int, ...], c: float) -> np.ndarray:
    """Fourier symbol ``w = 1 + 4c sum_k sin^2(z_k/2)`` of ``I - c*laplacian``."""
    return 1.0 + c * _laplacian_symbol(tuple(dims))


def apply_scalar_helmholtz(psi: np.ndarray, c: float) -> np.ndarray:
    return psi - c * laplacian(psi)


def _solve_scalar_complex(b: np.ndarray, c: float) -> np.ndarray:
    b = _check_scalar(b)
    if not c > 0:
        raise ValueError(f"screening coefficient must be positive, got c={c}")
    return np.fft.ifftn(np.fft.fftn(b) / helmholtz_symbol(b.shape, c))


def solve_scalar_helmholtz(b: np.ndarray, c: float) -> np.ndarray:
    """Solve ``(I - c * div^-(grad^+)) psi = b`` exactly on the periodic grid."""
    return _solve_scalar_complex(b, c).real


VECTOR_STENCILS = ("staggered", "central")


def apply_vector_system(u: np.ndarray, kappa1: float, kappa2: float, stencil: str = "staggered") -> np.ndarray:
    """``kappa1 u - kappa2 grad(div u)``; staggered pairs ``grad^+`` with ``div^-``."""
    if stencil == "staggered":
        return kappa1 * u - kappa2 * gradient(divergence(u, "backward"), "forward")
    if stencil == "central":
        return kappa1 * u - kappa2 * gradient(divergence(u, "central"), "central")
    raise ValueError(f"unknown stencil {stencil!r}; expected one of {VECTOR_STENCILS}")


def _vector_symbols(dims: tuple[int, ...], kappa1: float, kappa2: float, stencil: str) -> list[list[np.ndarray]]:
    zs = _frequencies(dims)
    if stencil == "staggered":
        outer = [np.exp(1j * z) - 1.0 for z in zs]
        inner = [1.0 - np.exp(-1j * z) for z in zs]
    elif stencil == "central":
        outer = inner = [1j * np.sin(z) for z in zs]
    else:
        raise ValueError(f"unknown stencil {stencil!r}; expected one of {VECTOR_STENCILS}")
    d = len(dims)
    a = [[None] * d for _ in range(d)]
    for k in range(d):
        for l in range(d):
            entry = -kappa2 * outer[k] * inner[l]
            if k == l:
                entry = kappa1 + entry
            a[k][l] = np.broadcast_to(entry, dims)
    return a


def _solve_vector_complex(s: np.ndarray, kappa1: float, kappa2: float, stencil: str = "staggered") -> np.ndarray:
    s = _check_vector(s)
    if not kappa1 > 0:
        raise ValueError(f"kappa1 must be positive, got {kappa1}")
    if kappa2 < 0:
        raise ValueError(f"kappa2 must be nonnegative, got {kappa2}")
    dims = s.shape[1:]
    a = _vector_symbols(dims, kappa1, kappa2, stencil)
    sh = [np.fft.fftn(s[k]) for k in range(len(dims))]
    if len(dims) == 2:
        det = a[0][0] * a[1][1] - a[0][1] * a[1][0]
        assert np.min(np.abs(det)) > 0.0
        u0 = (a[1][1] * sh[0] - a[0][1] * sh[1]) / det
        u1 = (-a[1][0] * sh[0] + a[0][0] * sh[1]) / det
        hat = [u0, u1]
    else:
        adj = adjugate3(a)
        det = a[0][0] * adj[0][0] + a[0][1] * adj[1][0] + a[0][2] * adj[2][0]
        assert np.min(np.abs(det)) > 0.0
        hat = [sum(adj[k][l] * sh[l] for l in range(3)) / det for k in range(3)]
    return np.stack([np.fft.ifftn(h) for h in hat])


def solve_vector_system(s: np.ndarray, kappa1: float, kappa2: float, stencil: str = "staggered") -> np.ndarray:
    """Solve ``(kappa1 I - kappa2 grad^+ div^-) u = s`` mode by mode.

    2D uses the explicit 2x2 inverse, 3D the adjugate over the determinant.
    ``stencil="central"`` swaps in ``grad^c div^c``, the operator whose
    right-hand sides are built from central differences.
    """
    return _solve_vector_complex(s, kappa1, kappa2, stencil).real


def adjugate3(m):
    """Adjugate of a 3x3 matrix given as nested lists of (broadcastable) arrays."""
    return [
        [
            m[1][1] * m[2][2] - m[1][2] * m[2][1],
            m[0][2] * m[2][1] - m[0][1] * m[2][2],
            m[0][1] * m[1][2] - m[0][2] * m[1][1],
        ],
        [
            m[1][2] * m[2][0] - m[1][0] * m[2][2],
            m[0][0] * m[2][2] - m[0][2] * m[2][0],
            m[0][2] * m[1][0] - m[0][0] * m[1][2],
        ],
        [
            m[1][0] * m[2][1] - m[1][1] * m[2][0],
            m[0][1] * m[2][0] - m[0][0] * m[2][1],
            m[0][0] * m[1][1] - m[0][1] * m[1][0],
        ],
    ]


def dump_field(field: np.ndarray, path, vector: bool = False) -> None:
    """Write a field as ``dims: M N [P]`` followed by row-major node values.

    Vector fields (``vector=True``) put the ``d`` components of a node on one line.
    """
    field = np.asarray(field, dtype=float)
    dims = field.shape[1:] if vector else field.shape
    lines = ["dims: " + " ".join(str(n) for n in dims)]
    if vector:
        flat = field.reshape(field.shape[0], -1).T
        lines.extend(" ".join(f"{v:.17g}" for v in row) for row in flat)
    else:
        lines.extend(f"{v:.17g}" for v in field.ravel())
    Path(path).write_text("\n".join(lines) + "\n")


def load_field(path) -> np.ndarray:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("dims:"):
        raise ValueError(f"{path}: missing 'dims:' header")
    dims = tuple(int(t) for t in lines[0].split(":", 1)[1].split())
    rows = [ln.split() for ln in lines[1:] if ln.strip()]
    if len(rows) != int(np.prod(dims)):
        raise ValueError(f"{path}: expected {int(np.prod(dims))} nodes, found {len(rows)}")
    values = np.array(rows, dtype=float)
    if values.shape[1] == 1:
        return values[:, 0].reshape(dims)
    return values.T.reshape((values.shape[1], *dims))
