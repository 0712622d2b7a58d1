"""
Four-substep operator splitting for the PCA-regularized level-set energy.

One iteration maps ``(psi, u, q)`` through

1. distance-driven ``psi`` update (frozen-coefficient screened solve), then the
   closed-form normal-alignment update of ``u`` and curvature shrink of ``q``;
2. the coupled ``u`` solve tying ``u`` to ``grad psi/|grad psi|`` and ``q`` to
   its divergence (periodic FFT), with ``q = div u``;
3. projection of ``u`` onto unit vectors;
4. the regularizing ``psi`` update driven by ``G = eta1 q^2 + s eta2 r (1 - (u.p)^2)``,
   ``s = normal_sign`` (default +1, see ``SolverConfig``),

followed by a few redistancing steps.
"""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import distance, grid, levelset, normals
from .grid import GridSpec
from .levelset import Contour, SolverState, delta_eps, unit_gradient
from .pointcloud import PointCloud

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


class DivergenceError(SolverError):
    pass


class SingularUpdateError(SolverError):
    pass


@dataclass
class SolverConfig:
    eta0: float = 1.0
    eta1: float = 2.0
    eta2: float = 1.0
    dt: float = 0.5
    gamma1: float = 100.0
    gamma2: float = 100.0
    alpha1: float = 800.0
    alpha2: float = 800.0
    beta1: float = 0.1
    beta2: float = 0.1
    eps: float = 1.0
    lam: float = 4.0
    c_p: int | None = None
    r_mode: str = "constant"
    max_iters: int = 100
    reinit_iters: int = 3
    tol: float = 1e-5
    window: int = 10
    init_pad: float = 5.0
    sweeps: int = 50
    vector_stencil: str = "staggered"
    regularizer_delta: bool = True
    normal_sign: float = 1.0
    beta_mode: str = "auto"
    check_residuals: bool = False
    stages: list[tuple[dict, int]] = field(default_factory=list)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("eta0", "eta1", "eta2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        for name in ("dt", "gamma1", "gamma2", "beta1", "beta2", "eps", "lam"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("alpha1", "alpha2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.r_mode not in ("constant", "sqrt_f"):
            raise ValueError(f"r_mode must be 'constant' or 'sqrt_f', got {self.r_mode!r}")
        if self.beta_mode not in BETA_MODES:
            raise ValueError(f"beta_mode must be one of {BETA_MODES}, got {self.beta_mode!r}")
        if self.normal_sign not in (1.0, -1.0):
            raise ValueError("normal_sign must be +1 or -1")
        if self.vector_stencil not in grid.VECTOR_STENCILS:
            raise ValueError(f"vector_stencil must be one of {grid.VECTOR_STENCILS}")
        if self.max_iters < 0 or self.reinit_iters < 0 or self.window < 1:
            raise ValueError("iteration counts must be nonnegative and window >= 1")
        if sum(n for _, n in self.stages) > self.max_iters:
            raise ValueError("stage iteration counts exceed max_iters")
        for overrides, n in self.stages:
            if n < 0:
                raise ValueError("stage iteration counts must be nonnegative")
            unknown = set(overrides) - set(STAGE_KEYS)
            if unknown:
                raise ValueError(f"stage overrides may only set {STAGE_KEYS}, got {sorted(unknown)}")

    def replace(self, **changes) -> "SolverConfig":
        return dataclasses.replace(self, **changes)

    def schedule(self) -> list[tuple["SolverConfig", int]]:
        if not self.stages:
            return [(self, self.max_iters)]
        return [(self.replace(stages=[], **overrides), n) for overrides, n in self.stages]

    @property
    def kappa1(self) -> float:
        return self.gamma1 + self.dt * self.alpha1

    @property
    def kappa2(self) -> float:
        return self.gamma2 + self.dt * self.alpha2


BETA_MODES = ("fixed", "auto")

STAGE_KEYS = ("eta0", "eta1", "eta2", "dt", "alpha1", "alpha2", "gamma1", "gamma2", "beta1", "beta2", "eps")


def _alpha_2d(dt: float, gamma1: float = 100.0) -> dict:
    return {"alpha1": 4 * gamma1 / dt, "alpha2": 4 * gamma1 / dt}


def _preset_2d(**kw) -> SolverConfig:
    base = dict(gamma1=100.0, gamma2=100.0, beta1=0.1, beta2=0.1, eps=1.0, reinit_iters=3)
    base.update(_alpha_2d(kw.get("dt", 0.5)))
    base.update(kw)
    return SolverConfig(**base)


def _preset_3d(**kw) -> SolverConfig:
    base = dict(gamma1=10.0, gamma2=10.0, alpha1=500.0, alpha2=500.0, beta1=0.1, beta2=0.1, eps=1.0, reinit_iters=3)
    base.update(kw)
    return SolverConfig(**base)


def _noisy_2d() -> SolverConfig:
    s1 = {"eta2": 1e4, "dt": 2e-3, **_alpha_2d(2e-3)}
    s2 = {"eta2": 3e4, "dt": 1e-3, **_alpha_2d(1e-3)}
    cfg = _preset_2d(eta0=50.0, eta1=1e3, eta2=1e4, dt=2e-3, lam=8.0, max_iters=600)
    cfg.stages = [(s1, 300), (s2, 300)]
    cfg.validate()
    return cfg


PRESETS = {
    "clean-2d": lambda: _preset_2d(eta0=1.0, eta1=2.0, eta2=1.0, dt=0.5, lam=4.0, max_iters=100),
    "incomplete-2d": lambda: _preset_2d(
        eta0=10.0, eta1=2e4, eta2=8e4, dt=2e-4, lam=12.0, r_mode="sqrt_f", max_iters=500
    ),
    "incomplete-2d-hexagon": lambda: _preset_2d(
        eta0=10.0, eta1=2e4, eta2=8e4, dt=2e-4, lam=12.0, r_mode="sqrt_f", max_iters=1000
    ),
    "window-2d": lambda: _preset_2d(eta0=30.0, eta1=1e4, eta2=4e4, dt=2e-4, lam=10.0, r_mode="sqrt_f", max_iters=500),
    "noisy-2d": _noisy_2d,
    "clean-3d": lambda: _preset_3d(eta0=0.1, eta1=0.1, eta2=0.2, dt=2.0, lam=8.0, max_iters=200),
    "clean-3d-fine": lambda: _preset_3d(eta0=0.1, eta1=0.05, eta2=0.05, dt=2.0, lam=8.0, eps=0.01, max_iters=200),
    "incomplete-3d": lambda: _preset_3d(
        eta0=0.01, eta1=0.0, eta2=1.0, dt=5.0, lam=12.0, r_mode="sqrt_f", max_iters=1000
    ),
    "incomplete-3d-rail": lambda: _preset_3d(
        eta0=0.01, eta1=0.0, eta2=3.0, dt=5.0, lam=10.0, r_mode="sqrt_f", max_iters=1000
    ),
    "noisy-3d": lambda: _preset_3d(eta0=0.1, eta1=0.1, eta2=1.0, dt=2.0, lam=8.0, max_iters=500),
}


def preset(name: str) -> SolverConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}") from None


def _coerce(key: str, text: str):
    fields = {f.name: f for f in dataclasses.fields(SolverConfig)}
    if key not in fields:
        raise ValueError(f"unknown config key {key!r}")
    kind = fields[key].type
    if "bool" in kind:
        if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"{key}: expected a boolean, got {text!r}")
        return text.lower() in ("true", "1", "yes")
    if "int" in kind:
        if key == "c_p" and text.lower() in ("none", ""):
            return None
        return int(float(text)) if float(text).is_integer() else int(text)
    if "float" in kind:
        return float(text)
    return text


def apply_overrides(cfg: SolverConfig, pairs: dict[str, str]) -> SolverConfig:
    """Apply ``key -> text`` settings; ``stageN.key`` and ``stageN.iters`` edit the schedule."""
    changes = {}
    stages = [(dict(o), n) for o, n in cfg.stages]
    for key, text in pairs.items():
        key = key.strip()
        if key.startswith("stage") and "." in key:
            head, sub = key.split(".", 1)
            idx = int(head[5:]) - 1
            if idx < 0:
                raise ValueError(f"stage numbers start at 1: {key}")
            while len(stages) <= idx:
                stages.append(({}, 0))
            overrides, n = stages[idx]
            if sub == "iters":
                n = int(text)
            elif sub in STAGE_KEYS:
                overrides[sub] = float(text)
            else:
                raise ValueError(f"stage overrides may only set {STAGE_KEYS} or iters, got {sub!r}")
            stages[idx] = (overrides, n)
        else:
            changes[key] = _coerce(key, text)
    if stages != cfg.stages:
        changes["stages"] = stages
        if "max_iters" not in changes:
            changes["max_iters"] = max(cfg.max_iters, sum(n for _, n in stages))
    return cfg.replace(**changes)


def parse_config_text(text: str) -> dict[str, str]:
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


def load_config(path, base: SolverConfig | None = None) -> SolverConfig:
    """Read a flat ``key = value`` file; a ``preset = name`` line picks the starting point."""
    pairs = parse_config_text(Path(path).read_text())
    name = pairs.pop("preset", None)
    start = preset(name) if name else (base or SolverConfig())
    return apply_overrides(start, pairs)


def config_text(cfg: SolverConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        if f.name == "stages":
            continue
        lines.append(f"{f.name} = {getattr(cfg, f.name)}")
    for i, (overrides, n) in enumerate(cfg.stages, start=1):
        lines.append(f"stage{i}.iters = {n}")
        lines.extend(f"stage{i}.{k} = {v!r}" for k, v in overrides.items())
    return "\n".join(lines) + "\n"


@dataclass
class Fields:
    """Data-dependent inputs fixed for the whole run."""

    f: np.ndarray
    r: np.ndarray
    normals: normals.NormalField

    @property
    def p(self) -> np.ndarray:
        return self.normals.p


def prepare_fields(cloud: PointCloud, spec: GridSpec, cfg: SolverConfig) -> Fields:
    f = distance.eikonal_fast_sweep(cloud, spec, sweeps=cfg.sweeps)
    r = distance.weight_field(f, cfg.r_mode)
    nf = normals.estimate_normals(cloud, spec, cfg.lam, cfg.c_p)
    return Fields(f=f, r=r, normals=nf)


def _check_residual(label: str, residual: float) -> None:
    if residual > 1e-10:
        raise SolverError(f"{label}: spectral solve residual {residual:.3e} exceeds 1e-10")


def _scalar_solve(b: np.ndarray, c: float, check: bool, label: str) -> np.ndarray:
    psi = grid.solve_scalar_helmholtz(b, c)
    if check:
        res = np.linalg.norm(grid.apply_scalar_helmholtz(psi, c) - b) / max(np.linalg.norm(b), 1e-300)
        _check_residual(label, res)
    return psi


def align_update(u: np.ndarray, p: np.ndarray, m: np.ndarray, gamma1: float) -> np.ndarray:
    """``(gamma1 I - m p p^T)^{-1} gamma1 u`` node by node.

    2D inverts the 2x2 matrix explicitly, 3D applies the adjugate.
    """
    d = u.shape[0]
    w = [[p[k] * p[l] for l in range(d)] for k in range(d)]
    mat = [[(gamma1 if k == l else 0.0) - m * w[k][l] for l in range(d)] for k in range(d)]
    if d == 2:
        det = mat[0][0] * mat[1][1] - mat[0][1] * mat[1][0]
        adj = [[mat[1][1], -mat[0][1]], [-mat[1][0], mat[0][0]]]
    else:
        adj = grid.adjugate3(mat)
        det = mat[0][0] * adj[0][0] + mat[0][1] * adj[1][0] + mat[0][2] * adj[2][0]
    bad = ~(det > 0)
    if np.any(bad):
        node = tuple(int(i) for i in np.argwhere(bad)[0])
        raise SingularUpdateError(
            f"alignment matrix not positive definite at node {node} (det={det[node]:.3e}); dt*eta2 too large"
        )
    return np.stack([sum(adj[k][l] * gamma1 * u[l] for l in range(d)) / det for k in range(d)])


def frozen_coefficient(beta: float, coeff: np.ndarray, mode: str) -> float:
    """Screening constant for a semi-implicit step whose explicit part diffuses with ``coeff``.

    ``auto`` lifts ``beta`` to half the largest explicit diffusion coefficient,
    the bound under which the frozen-coefficient step is unconditionally
    stable. Steady states do not depend on the constant.
    """
    if mode == "fixed":
        return beta
    return max(beta, 0.5 * float(np.max(coeff)))


def substep1(state: SolverState, f: np.ndarray, p: np.ndarray, r: np.ndarray, cfg: SolverConfig) -> SolverState:
    psi = state.psi
    n, _ = unit_gradient(psi)
    delta = delta_eps(psi, cfg.eps)
    c = cfg.dt * frozen_coefficient(cfg.beta1, cfg.eta0 * f * f * delta, cfg.beta_mode)
    b = psi - c * grid.laplacian(psi) + cfg.dt * cfg.eta0 * delta * grid.divergence(f * f * n)
    psi1 = _scalar_solve(b, c, cfg.check_residuals, "substep 1")
    _, mag = unit_gradient(psi1)
    weight = delta_eps(psi1, cfg.eps) * mag
    if cfg.eta2 > 0:
        u1 = align_update(state.u, p, cfg.dt * cfg.eta2 * r * weight, cfg.gamma1)
    else:
        u1 = state.u.copy()
    if cfg.eta1 > 0:
        q1 = cfg.gamma2 * state.q / (cfg.gamma2 + cfg.dt * cfg.eta1 * weight)
    else:
        q1 = state.q.copy()
    return SolverState(psi1, u1, q1, state.iteration)


def substep2(state: SolverState, cfg: SolverConfig) -> SolverState:
    n, _ = unit_gradient(state.psi)
    s = (cfg.gamma1 * state.u + cfg.dt * cfg.alpha1 * n) - grid.gradient(
        cfg.gamma2 * state.q + cfg.dt * cfg.alpha2 * grid.divergence(n)
    )
    u2 = grid.solve_vector_system(s, cfg.kappa1, cfg.kappa2, cfg.vector_stencil)
    if cfg.check_residuals:
        back = grid.apply_vector_system(u2, cfg.kappa1, cfg.kappa2, cfg.vector_stencil)
        _check_residual("substep 2", np.linalg.norm(back - s) / max(np.linalg.norm(s), 1e-300))
    return SolverState(state.psi, u2, grid.divergence(u2), state.iteration)


def substep3(state: SolverState) -> SolverState:
    u = state.u
    mag = grid.norm(u)
    zero = mag == 0.0
    out = u / np.where(zero, 1.0, mag)
    if np.any(zero):
        out[:, zero] = 0.0
        out[-1][zero] = 1.0
    return SolverState(state.psi, out, state.q, state.iteration)


def regularizer_weight(state: SolverState, p: np.ndarray, r: np.ndarray, cfg: SolverConfig) -> np.ndarray:
    align = np.sum(state.u * p, axis=0)
    return cfg.eta1 * state.q**2 + cfg.normal_sign * cfg.eta2 * r * (1.0 - align**2)


def substep4(state: SolverState, p: np.ndarray, r: np.ndarray, cfg: SolverConfig) -> SolverState:
    psi = state.psi
    n, _ = unit_gradient(psi)
    big_g = regularizer_weight(state, p, r, cfg)
    drive = grid.divergence(big_g * n)
    coeff = big_g
    if cfg.regularizer_delta:
        delta = delta_eps(psi, cfg.eps)
        drive = delta * drive
        coeff = delta * big_g
    c = cfg.dt * frozen_coefficient(cfg.beta2, coeff, cfg.beta_mode)
    b = psi - c * grid.laplacian(psi) + cfg.dt * drive
    psi4 = _scalar_solve(b, c, cfg.check_residuals, "substep 4")
    return SolverState(psi4, state.u, state.q, state.iteration)


def iterate(state: SolverState, flds: Fields, cfg: SolverConfig) -> SolverState:
    """One splitting step plus redistancing."""
    s = substep1(state, flds.f, flds.p, flds.r, cfg)
    s = substep2(s, cfg)
    s = substep3(s)
    s = substep4(s, flds.p, flds.r, cfg)
    s.psi = levelset.reinitialize(s.psi, cfg.reinit_iters)
    s.iteration = state.iteration + 1
    return s


@dataclass
class TraceRow:
    iteration: int
    stage: int
    e_total: float
    e_dist: float
    e_curv: float
    e_normal: float


@dataclass
class RunResult:
    state: SolverState
    trace: list[TraceRow]
    contour: Contour
    fields: Fields
    converged: bool
    seconds: float

    @property
    def final_energy(self) -> float:
        return self.trace[-1].e_total


def _record(state: SolverState, flds: Fields, cfg: SolverConfig, stage: int) -> TraceRow:
    terms = levelset.energy_terms(state.psi, flds.f, flds.p, flds.r, cfg.eta0, cfg.eta1, cfg.eta2, cfg.eps)
    return TraceRow(state.iteration, stage, sum(terms), *terms)


def relative_change(trace: list[TraceRow], window: int) -> float:
    """Mean relative energy change over the last ``window`` iterations (``inf`` if too short)."""
    if len(trace) <= window:
        return np.inf
    e = np.array([row.e_total for row in trace[-(window + 1) :]])
    scale = np.maximum(np.abs(e[1:]), 1e-300)
    return float(np.mean(np.abs(np.diff(e)) / scale))


def run(
    cloud: PointCloud,
    spec: GridSpec,
    cfg: SolverConfig,
    flds: Fields | None = None,
    callback=None,
    stop_on_convergence: bool = True,
) -> RunResult:
    """Reconstruct the zero level set from ``cloud`` following ``cfg``'s stage schedule."""
    start = time.perf_counter()
    if len(cloud) == 0:
        raise ValueError("empty point cloud")
    flds = flds or prepare_fields(cloud, spec, cfg)
    state = levelset.init_state(cloud, spec, cfg.init_pad)
    schedule = cfg.schedule()
    trace = [_record(state, flds, schedule[0][0], 0)]
    converged = False
    total = 0
    for stage, (scfg, count) in enumerate(schedule):
        stage_trace = [trace[-1]]
        converged = False
        for _ in range(count):
            if total >= cfg.max_iters:
                break
            state = iterate(state, flds, scfg)
            total += 1
            if not np.all(np.isfinite(state.psi)):
                raise DivergenceError(f"divergence at iteration {state.iteration}: reduce dt")
            row = _record(state, flds, scfg, stage)
            trace.append(row)
            stage_trace.append(row)
            if callback is not None:
                callback(state, row)
            if relative_change(stage_trace, cfg.window) < cfg.tol:
                converged = True
                if stop_on_convergence:
                    log.info("stage %d converged at iteration %d", stage, state.iteration)
                    break
    contour = levelset.extract_zero_level(state.psi)
    return RunResult(state, trace, contour, flds, converged, time.perf_counter() - start)


def write_trace_csv(trace: list[TraceRow], path) -> None:
    lines = ["iteration,stage,E_total,E_dist,E_curv,E_normal"]
    lines += [
        f"{t.iteration},{t.stage},{t.e_total:.17g},{t.e_dist:.17g},{t.e_curv:.17g},{t.e_normal:.17g}" for t in trace
    ]
    Path(path).write_text("\n".join(lines) + "\n")
