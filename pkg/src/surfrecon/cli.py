"""Command-line front end: ``generate``, ``reconstruct``, ``evaluate``, ``presets``.

Exit codes: 0 success, 2 usage or configuration error, 3 solver failure,
4 evaluation failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import grid, levelset, metrics, pointcloud, solver
from .grid import GridSpec
from .pointcloud import ShapeRecipe

EXIT_USAGE = 2
EXIT_SOLVER = 3
EXIT_EVAL = 4

DEFAULT_GRID = {2: (100, 100), 3: (50, 50, 50)}

log = logging.getLogger("surfrecon")


class UsageError(Exception):
    pass


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _key_value(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def parse_gaps(text: str | None) -> tuple[list[tuple[float, float]], float]:
    """``corners:W`` -> corner gap of arc length W; ``a-b[,c-d]`` -> parameter intervals."""
    if not text:
        return [], 0.0
    if text.startswith("corners:"):
        try:
            return [], float(text.split(":", 1)[1])
        except ValueError:
            raise UsageError(f"bad corner gap {text!r}") from None
    gaps = []
    for part in text.split(","):
        try:
            a, b = part.split("-")
            gaps.append((float(a), float(b)))
        except ValueError:
            raise UsageError(f"bad gap interval {part!r}; expected t0-t1") from None
    return gaps, 0.0


def _sidecar_path(cloud_path: Path) -> Path:
    return cloud_path.with_name(cloud_path.name + ".json")


def cmd_generate(args) -> int:
    if args.shape not in pointcloud.SHAPES:
        raise UsageError(f"unknown shape {args.shape!r}; expected one of {', '.join(pointcloud.SHAPES)}")
    gaps, corner_gap = parse_gaps(args.gaps)
    kw = dict(shape=args.shape, count=args.count, seed=args.seed, sigma=args.sigma, gaps=gaps, corner_gap=corner_gap)
    for name in ("center", "radius", "radii", "length", "petals", "amplitude", "rotation", "corners"):
        value = getattr(args, name)
        if value is not None:
            kw[name] = value
    if "center" not in kw and args.shape in ("cylinder", "torus", "box-rail"):
        kw["center"] = (25.0, 25.0, 25.0)
    try:
        recipe = ShapeRecipe(**kw)
        cloud = pointcloud.generate(recipe)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    dims = args.grid or DEFAULT_GRID[recipe.dim]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    pointcloud.save(cloud, out)
    meta = {"recipe": recipe.to_dict(), "grid": list(dims), "points": len(cloud)}
    _sidecar_path(out).write_text(json.dumps(meta, indent=2) + "\n")
    print(f"wrote {len(cloud)} points to {out}")
    return 0


def _grid_for(cloud_path: Path, cloud, requested) -> GridSpec:
    if requested:
        dims = requested
    else:
        side = _sidecar_path(cloud_path)
        dims = json.loads(side.read_text())["grid"] if side.exists() else DEFAULT_GRID[cloud.dim]
    spec = GridSpec(tuple(dims))
    if spec.ndim != cloud.dim:
        raise UsageError(f"{cloud.dim}D cloud on a {spec.ndim}D grid")
    if not np.all(spec.contains(cloud.points)):
        raise UsageError(f"point cloud extends outside the grid domain {spec.dims}")
    return spec


def build_config(args) -> tuple[solver.SolverConfig, str]:
    try:
        if args.config:
            cfg = solver.load_config(args.config)
            source = str(args.config)
        else:
            cfg = solver.preset(args.preset)
            source = args.preset
        cfg = solver.apply_overrides(cfg, dict(args.set or []))
    except (ValueError, OSError) as exc:
        raise UsageError(str(exc)) from None
    return cfg, source


def write_artifacts(out: Path, res: solver.RunResult, spec: GridSpec, cloud, dump: bool) -> list[str]:
    out.mkdir(parents=True, exist_ok=True)
    files = []
    if spec.ndim == 2:
        levelset.write_contour_csv(res.contour, out / "contour.csv")
        levelset.write_contour_svg(res.contour, out / "contour.svg", spec.dims, cloud)
        files += ["contour.csv", "contour.svg"]
    else:
        levelset.write_obj(res.contour, out / "contour.obj")
        files.append("contour.obj")
    solver.write_trace_csv(res.trace, out / "energy.csv")
    files.append("energy.csv")
    if dump:
        grid.dump_field(res.state.psi, out / "psi.txt")
        grid.dump_field(res.state.u, out / "u.txt", vector=True)
        files += ["psi.txt", "u.txt"]
    return files


def _snapshot_writer(out: Path, every: int, ndim: int):
    if not every:
        return None
    snap = out / "snapshots"
    snap.mkdir(parents=True, exist_ok=True)

    def callback(state, _row):
        if state.iteration % every:
            return
        contour = levelset.extract_zero_level(state.psi)
        if ndim == 2:
            levelset.write_contour_csv(contour, snap / f"contour_{state.iteration:05d}.csv")
        else:
            levelset.write_obj(contour, snap / f"contour_{state.iteration:05d}.obj")

    return callback


def reconstruct_one(input_path: str, out_dir: str, cfg: solver.SolverConfig, source: str, grid_dims, snapshot_every=0,
                    dump=False) -> int:
    """One full run; returns an exit code."""
    input_path = Path(input_path)
    out = Path(out_dir)
    try:
        cloud = pointcloud.load(input_path)
        spec = _grid_for(input_path, cloud, grid_dims)
    except (ValueError, OSError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out.mkdir(parents=True, exist_ok=True)
    try:
        res = solver.run(cloud, spec, cfg, callback=_snapshot_writer(out, snapshot_every, spec.ndim))
    except solver.SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    files = write_artifacts(out, res, spec, cloud, dump)
    (out / "config.txt").write_text(solver.config_text(cfg))
    files.append("config.txt")
    manifest = {
        "input": str(input_path),
        "config": source,
        "output": str(out),
        "grid": " ".join(str(n) for n in spec.dims),
        "artifacts": " ".join(files),
        "seconds": f"{res.seconds:.3f}",
        "final_energy": f"{res.final_energy:.17g}",
        "iterations": str(res.state.iteration),
        "converged": str(res.converged).lower(),
    }
    (out / "manifest").write_text("".join(f"{k}: {v}\n" for k, v in manifest.items()))
    print(f"{out}: {res.state.iteration} iterations, energy {res.final_energy:.6g}, converged={res.converged}")
    return 0


def _sweep_values(text: str) -> tuple[str, list[str]]:
    key, values = _key_value(text)
    return key, [v for v in values.split(",") if v]


def cmd_reconstruct(args) -> int:
    cfg, source = build_config(args)
    if not args.sweep:
        return reconstruct_one(args.input, args.out, cfg, source, args.grid, args.snapshot_every, args.dump)
    key, values = _sweep_values(args.sweep)
    jobs = []
    for value in values:
        try:
            sub = solver.apply_overrides(cfg, {key: value})
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        jobs.append((args.input, str(Path(args.out) / f"{key}={value}"), sub, source, args.grid, args.snapshot_every,
                     args.dump))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            codes = list(pool.map(reconstruct_one, *zip(*jobs)))
    else:
        codes = [reconstruct_one(*job) for job in jobs]
    return max(codes)


def _evaluation_points(path: Path) -> np.ndarray:
    if path.suffix == ".obj":
        return metrics.sample_contour(levelset.read_obj(path))
    if path.suffix == ".json":
        recipe = ShapeRecipe(**json.loads(path.read_text())["recipe"])
        return metrics.reference_samples(recipe)
    return metrics.sample_segments(levelset.read_contour_csv(path))


def cmd_evaluate(args) -> int:
    try:
        pts = _evaluation_points(Path(args.contour))
        ref = _evaluation_points(Path(args.reference))
    except (ValueError, OSError, KeyError, TypeError) as exc:
        print(f"evaluation failed: {exc}", file=sys.stderr)
        return EXIT_EVAL
    if len(pts) == 0 or len(ref) == 0:
        print("evaluation failed: empty contour", file=sys.stderr)
        return EXIT_EVAL
    result = {"hausdorff": metrics.hausdorff(pts, ref), "chamfer": metrics.chamfer(pts, ref)}
    text = "".join(f"{k}: {v:.17g}\n" for k, v in result.items())
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text)
    return 0


def cmd_presets(args) -> int:
    if args.show:
        try:
            sys.stdout.write(solver.config_text(solver.preset(args.show)))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        return 0
    for name in sorted(solver.PRESETS):
        print(name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="surfrecon", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic point cloud and its recipe sidecar")
    g.add_argument("--shape", required=True)
    g.add_argument("--center", type=_floats)
    g.add_argument("--radius", type=float)
    g.add_argument("--radii", type=_floats)
    g.add_argument("--length", type=float)
    g.add_argument("--petals", type=int)
    g.add_argument("--amplitude", type=float)
    g.add_argument("--rotation", type=float)
    g.add_argument("--count", type=int, default=200)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--sigma", type=float, default=0.0)
    g.add_argument("--gaps", help="corners:W or t0-t1[,t0-t1...]")
    g.add_argument("--corners", type=_ints, help="polygon vertex indices the corner gap applies to")
    g.add_argument("--grid", type=_ints, help="grid dims recorded in the sidecar")
    g.add_argument("--out", default="cloud.xyz")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("reconstruct", help="run the level-set solver on a point cloud")
    r.add_argument("--input", required=True)
    src = r.add_mutually_exclusive_group()
    src.add_argument("--preset", default="clean-2d")
    src.add_argument("--config")
    r.add_argument("--set", type=_key_value, action="append", metavar="KEY=VALUE")
    r.add_argument("--grid", type=_ints)
    r.add_argument("--out", default="run")
    r.add_argument("--snapshot-every", type=int, default=0, metavar="K")
    r.add_argument("--dump", action="store_true", help="also write the final psi and u fields")
    r.add_argument("--sweep", metavar="KEY=V1,V2,...", help="one run per value, each in OUT/KEY=VALUE")
    r.add_argument("--jobs", type=int, default=1)
    r.set_defaults(func=cmd_reconstruct)

    e = sub.add_parser("evaluate", help="Hausdorff and chamfer distance to a reference")
    e.add_argument("--contour", required=True, help="contour.csv or contour.obj")
    e.add_argument("--reference", required=True, help="recipe sidecar (.json) or a second contour")
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("presets", help="list presets or print one as a config file")
    p.add_argument("--show", metavar="NAME")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
