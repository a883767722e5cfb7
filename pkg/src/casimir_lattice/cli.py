"""Command line entry point.

    casimir-lattice torque3d    --config run.ini --out DIR
    casimir-lattice crossover2d --config run.ini --out DIR
    casimir-lattice rough2d     --config run.ini --out DIR
    casimir-lattice flat2d      --config run.ini --out DIR
    casimir-lattice validate

Every run writes CSV files (``#`` metadata lines, then a header row) and a
``manifest.json`` describing how to reproduce them.  Completed
(point, frequency node) items are checkpointed under ``DIR/checkpoints``;
``--resume`` skips them on the next invocation.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import math
import os
import platform
import sys
import time
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import NodeCache, Runner
from .config import ConfigError, RunConfig, desk_config
from .experiments import (
    DiskPairScene,
    default_angles,
    default_window,
    fit_power_law,
    run_crossover_sweep,
    run_flat_baseline,
    run_rough_ensemble,
    run_torque_sweep,
    realization_seeds,
    surface_curve,
)
from .materials import DielectricModel
from .quadrature import build_grid, select_alpha
from .scenes import generate_rough_surface, geometric_ladder

log = logging.getLogger("casimir_lattice")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2
BYTES_PER_ENTRY = 8 + 8  # value plus row index
MEMORY_WARN_FRACTION = 0.5


# ------------------------------------------------------------------ helpers


class Stage:
    """Remembers which stage of a run is executing, for error records."""

    name = "setup"


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def _relname(p: Path, out: Path) -> str:
    try:
        return str(Path(p).resolve().relative_to(out.resolve()))
    except ValueError:
        return str(p)


def write_manifest(out: Path, cfg: RunConfig, command: str, outputs: list[Path], extra: dict) -> Path:
    import numba
    import scipy

    manifest = {
        "command": command,
        "argv": sys.argv,
        "version": __version__,
        "software": {"python": platform.python_version(), "numpy": np.__version__,
                     "scipy": scipy.__version__, "numba": numba.__version__},
        "platform": platform.platform(),
        "units": f"energies in lattice units: hbar = 1, lattice constant = 1, c = {cfg.c!r}",
        "config": cfg.to_dict(),
        "config_ini": cfg.to_ini(),
        "outputs": {_relname(p, out): _sha256(p) for p in outputs if p.exists()},
        "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    manifest.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(_jsonable(manifest), indent=2, allow_nan=False) + "\n")
    return path


def _write_table(path: Path, header, rows, meta: dict) -> Path:
    with open(path, "w") as fh:
        for k, v in meta.items():
            fh.write(f"# {k}={v}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(x)) if isinstance(x, (float, np.floating)) else str(x) for x in row) + "\n")
    return path


def _runner(cfg: RunConfig, out: Path, name: str) -> Runner:
    cache = NodeCache(out / "checkpoints" / f"{name}.jsonl", resume=cfg.resume)
    return Runner(cfg.threads, cache)


def _fmt_w0(w: float) -> str:
    return "inf" if math.isinf(w) else repr(float(w))


def _window(cfg: RunConfig, r) -> tuple[float, float]:
    if cfg.fit_min is not None and cfg.fit_max is not None:
        return cfg.fit_min, cfg.fit_max
    try:
        lo, hi = default_window(r)
    except ValueError:
        lo, hi = float(np.min(r)), float(np.max(r))
    return (cfg.fit_min if cfg.fit_min is not None else lo, cfg.fit_max if cfg.fit_max is not None else hi)


# --------------------------------------------------------- resource estimate


def estimate_resources(cfg: RunConfig) -> dict:
    """Factor fill and memory from a symbolic factorization.

    The analysis runs on the configured box when it is small; larger boxes
    are extrapolated from a smaller one with the nested-dissection growth
    law (``n**(4/3)`` in 3D, ``n log n`` in 2D).
    """
    from .lattice import Lattice
    from .linalg import analyze
    from .materials import MaterialMap
    from .operators import dof_coordinates, operator_pattern

    dim = len(cfg.extent)
    kind = cfg.operator
    probe_extent = cfg.extent
    limit = 20 if dim == 3 else 256
    scaled = max(cfg.extent) > limit
    if scaled:
        probe_extent = (limit,) * dim
    lat = Lattice(probe_extent)
    pattern = operator_pattern(lat, kind)
    A = pattern.assemble(MaterialMap.vacuum(lat), 1.0)
    coords = dof_coordinates(lat, kind) if cfg.resolved_ordering == "nd" else None
    nnz = analyze(A, cfg.resolved_ordering, coords=coords).nnz
    n_small = pattern.n
    per_site = pattern.n / lat.n_sites
    n = int(per_site * np.prod(cfg.extent))
    if scaled:
        if dim == 3:
            nnz = nnz * (n / n_small) ** (4 / 3)
        else:
            nnz = nnz * (n * math.log(n)) / (n_small * math.log(n_small))
    mem = float(nnz) * BYTES_PER_ENTRY
    try:
        total = os.sysconf("SC_PAGE_SIZE") * os.sysconf("SC_PHYS_PAGES")
    except (ValueError, OSError, AttributeError):
        total = None
    return {"unknowns": n, "factor_nnz": int(nnz), "factor_bytes": int(mem), "extrapolated": scaled,
            "physical_memory": total}


def resource_warning(cfg: RunConfig) -> dict:
    est = estimate_resources(cfg)
    total = est["physical_memory"]
    gb = est["factor_bytes"] / 2**30
    if total is not None and est["factor_bytes"] > MEMORY_WARN_FRACTION * total:
        msg = (f"estimated Cholesky factor {gb:.1f} GB exceeds {MEMORY_WARN_FRACTION:.0%} of "
               f"physical memory ({total / 2**30:.1f} GB); this run is unlikely to fit")
        log.warning(msg)
        print(f"warning: {msg}", file=sys.stderr)
        est["warning"] = msg
    else:
        log.info("estimated factor memory %.2f GB", gb)
    return est


# --------------------------------------------------------------- commands


def cmd_torque3d(cfg: RunConfig, out: Path) -> dict:
    angles = np.array(cfg.angles) if cfg.angles else default_angles(16, full_turn=True)
    scene = DiskPairScene(cfg.extent, cfg.diameter, cfg.thickness, cfg.gap,
                          DielectricModel.constant(cfg.eps_a), DielectricModel.constant(cfg.eps_b))
    alpha = cfg.alpha if cfg.alpha is not None else select_alpha(cfg.gap + cfg.thickness, None, cfg.c)
    grid = build_grid(alpha, cfg.n_nodes)
    runner = _runner(cfg, out, "torque3d")
    timings: dict = {}
    Stage.name = "torque sweep"
    curve = run_torque_sweep(scene, angles, grid, cfg.operator, cfg.resolved_ordering, runner, cfg.c, timings)
    Stage.name = "output"
    meta = {"experiment": "torque3d", "alpha": repr(grid.alpha), "n_nodes": grid.n_nodes,
            "units": "lattice", "zero": "U(theta_0) = 0"}
    p1 = out / "torque_curve.csv"
    curve.to_csv(p1, meta)
    mid, tq = curve.torque()
    p2 = _write_table(out / "torque.csv", ["theta_mid", "torque"], zip(mid, tq), meta)
    return {"outputs": [p1, p2], "grid": grid.to_dict(), "failed_points": curve.failed,
            "node_seconds": timings, "checkpoint": {"computed": runner.computed, "reused": runner.reused}}


def cmd_crossover2d(cfg: RunConfig, out: Path) -> dict:
    L = cfg.extent[0]
    if cfg.extent[0] != cfg.extent[1]:
        raise ConfigError("crossover2d needs a square box")
    runner = _runner(cfg, out, "crossover2d")
    omega0 = [None if math.isinf(w) else w for w in cfg.omega0]
    timings: dict = {}
    Stage.name = "crossover sweep"
    curves = run_crossover_sweep(L, omega0, n_nodes=cfg.n_nodes, alpha=cfg.alpha, kind=cfg.operator,
                                 ordering=cfg.resolved_ordering, eps=cfg.eps, r_min=cfg.r_min,
                                 r_max=cfg.r_max, ratio=cfg.ratio, runner=runner, c=cfg.c, timings=timings)
    Stage.name = "output"
    outputs, fits, grids = [], [], {}
    for w0, curve in curves.items():
        w = math.inf if w0 is None else w0
        meta = {"experiment": "crossover2d", "omega0": _fmt_w0(w), "alpha": repr(curve.grid.alpha),
                "n_nodes": curve.grid.n_nodes, "reference_r": repr(curve.reference), "units": "lattice"}
        p = out / f"crossover_omega0_{_fmt_w0(w)}.csv"
        curve.to_csv(p, meta)
        outputs.append(p)
        grids[_fmt_w0(w)] = curve.grid.to_dict()
        win = _window(cfg, curve.r)
        try:
            f = fit_power_law(curve.r, -curve.U, win)
            fits.append((_fmt_w0(w), f.exponent, f.stderr, f.amplitude, win[0], win[1], f.n_points))
        except ValueError as err:
            log.warning("no fit for omega0=%s: %s", _fmt_w0(w), err)
            fits.append((_fmt_w0(w), "nan", "nan", "nan", win[0], win[1], 0))
    outputs.append(_write_table(out / "fit_summary.csv",
                                ["omega0", "exponent", "stderr", "amplitude", "r_lo", "r_hi", "n_points"],
                                fits, {"experiment": "crossover2d", "fit": "ln(-U) vs ln r least squares"}))
    return {"outputs": outputs, "grids": grids, "node_seconds": timings,
            "checkpoint": {"computed": runner.computed, "reused": runner.reused}}


def _surface_setup(cfg: RunConfig):
    L = cfg.extent[0]
    if cfg.extent[0] != cfg.extent[1]:
        raise ConfigError("surface runs need a square box")
    r_max = cfg.r_max if cfg.r_max is not None else L / 5
    ladder = geometric_ladder(cfg.r_min, r_max, cfg.ratio)
    alpha = cfg.alpha if cfg.alpha is not None else select_alpha(math.sqrt(ladder[0] * ladder[-1]), None, cfg.c)
    grid = build_grid(alpha, cfg.n_nodes)
    model = DielectricModel.constant(cfg.eps)
    fill = None if cfg.fill is None else int(cfg.fill)
    return L, ladder, grid, model, fill


def cmd_flat2d(cfg: RunConfig, out: Path) -> dict:
    L, ladder, grid, model, fill = _surface_setup(cfg)
    runner = _runner(cfg, out, "flat2d")
    Stage.name = "flat baseline"
    r, U, secs = run_flat_baseline(L, ladder, grid, model, model, cfg.operator, cfg.resolved_ordering,
                                   runner, cfg.c, fill)
    Stage.name = "output"
    meta = {"experiment": "flat2d", "alpha": repr(grid.alpha), "n_nodes": grid.n_nodes, "units": "lattice"}
    p = _write_table(out / "flat_curve.csv", ["r", "U", "U_scaled"], zip(r, U, -U * r**3), meta)
    win = _window(cfg, r)
    try:
        f = fit_power_law(r, -U, win)
        row = ("U_flat", f.exponent, f.stderr, f.amplitude, win[0], win[1])
    except ValueError as err:
        log.warning("no fit for U_flat: %s", err)
        row = ("U_flat", "nan", "nan", "nan", win[0], win[1])
    pf = _write_table(out / "fit_summary.csv", ["quantity", "exponent", "stderr", "amplitude", "r_lo", "r_hi"],
                      [row], meta)
    return {"outputs": [p, pf], "grid": grid.to_dict(), "node_seconds": {"flat": secs},
            "checkpoint": {"computed": runner.computed, "reused": runner.reused}}


def cmd_rough2d(cfg: RunConfig, out: Path, replay: int | None = None) -> dict:
    L, ladder, grid, model, fill = _surface_setup(cfg)
    runner = _runner(cfg, out, "rough2d")
    real_dir = out / "realizations"
    real_dir.mkdir(exist_ok=True)
    seeds = realization_seeds(cfg.seed, cfg.realizations, cfg.antithetic)
    meta = {"experiment": "rough2d", "alpha": repr(grid.alpha), "n_nodes": grid.n_nodes, "units": "lattice"}

    def persist(i, seed, negate, scene, r, U):
        m = dict(meta, index=i, seed=seed, negate=int(negate))
        _write_table(real_dir / f"energies_{i:05d}.csv", ["r", "U"], zip(r, U), m)
        _write_table(real_dir / f"heights_{i:05d}.csv", ["x", "h"], enumerate(scene.heights.tolist()), m)

    if replay is not None:
        if not 0 <= replay < len(seeds):
            raise ConfigError(f"--replay index {replay} outside 0..{len(seeds) - 1}")
        seed, negate = seeds[replay]
        Stage.name = f"realization {replay}"
        scene = generate_rough_surface(L, seed, fill, model, negate=negate)
        r, U, _ = surface_curve(scene, ladder, grid, model, cfg.operator, cfg.resolved_ordering, runner,
                                cfg.c, prefix=f"rough-{seed}-{int(negate)}-")
        persist(replay, seed, negate, scene, r, U)
        return {"outputs": [real_dir / f"energies_{replay:05d}.csv"], "replay": replay,
                "seeds": [{"index": replay, "seed": seed, "negate": negate}]}

    Stage.name = "flat baseline"
    r_flat, U_flat, _ = run_flat_baseline(L, ladder, grid, model, model, cfg.operator, cfg.resolved_ordering,
                                          runner, cfg.c, fill)
    Stage.name = "ensemble"
    res = run_rough_ensemble(L, cfg.realizations, ladder, grid, cfg.seed, model, model, cfg.operator,
                             cfg.resolved_ordering, runner, cfg.c, cfg.antithetic, fill,
                             on_realization=persist, flat=(r_flat, U_flat))
    Stage.name = "output"
    pseeds = _write_table(out / "seeds.csv", ["index", "seed", "negate", "status"],
                          [(i, s, int(n), "ok" if any(u["index"] == i for u in res.seeds) else "failed")
                           for i, (s, n) in enumerate(seeds)], {"base_seed": cfg.seed})
    pagg = out / "rough_aggregate.csv"
    res.to_csv(pagg, dict(meta, realizations=res.count, requested=cfg.realizations))
    win = _window(cfg, res.r)
    rows = []
    for name, y in (("mean", -res.mean), ("U_flat", -res.U_flat), ("sigma", res.sigma), ("deltaU", res.deltaU)):
        try:
            f = fit_power_law(res.r, y, win)
            rows.append((name, f.exponent, f.stderr, f.amplitude, win[0], win[1]))
        except ValueError as err:
            log.warning("no fit for %s: %s", name, err)
            rows.append((name, "nan", "nan", "nan", win[0], win[1]))
    pfit = _write_table(out / "fit_summary.csv", ["quantity", "exponent", "stderr", "amplitude", "r_lo", "r_hi"],
                        rows, dict(meta, realizations=res.count))
    return {"outputs": [pagg, pfit, pseeds], "grid": grid.to_dict(), "effective_count": res.count,
            "seeds": res.seeds, "failed_points": res.failed,
            "checkpoint": {"computed": runner.computed, "reused": runner.reused}}


def cmd_validate(fault: str | None = None) -> int:
    from .validation import format_table, run_checks

    checks = run_checks(fault)
    print(format_table(checks))
    failed = [c.name for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return EXIT_FAILED if failed else EXIT_OK


# ------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="casimir-lattice", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("torque3d", "torque between quadrant disks (3D)"),
                        ("crossover2d", "retarded / non-retarded crossover of a particle pair (2D)"),
                        ("rough2d", "particle above random rough surfaces (2D)"),
                        ("flat2d", "particle above a flat surface (2D baseline)")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", type=Path, help="INI run configuration (default: desk-scale settings)")
        s.add_argument("--out", type=Path, help="output directory")
        s.add_argument("--threads", type=int, help="worker threads (default: available CPUs)")
        s.add_argument("--resume", action="store_true", help="reuse checkpointed results in --out")
        s.add_argument("--ng", type=int, help="number of Gauss-Legendre nodes")
        s.add_argument("--alpha", type=float, help="frequency scale of the quadrature map")
        s.add_argument("--seed", type=int, help="base random seed")
        s.add_argument("--estimate-only", action="store_true",
                       help="print the factor memory estimate and exit")
        if name == "rough2d":
            s.add_argument("--replay", type=int, metavar="INDEX",
                           help="recompute one realization from the recorded seeds")
    v = sub.add_parser("validate", help="cross-check the solver against dense oracles")
    v.add_argument("--inject-fault", choices=("operator_assembly", "curl_sign", "schur"),
                   help=argparse.SUPPRESS)
    return p


def _physical_cores() -> int:
    """CPUs this process may run on."""
    try:
        return len(os.sched_getaffinity(0)) or 1
    except AttributeError:
        return os.cpu_count() or 1


def load_config(args) -> RunConfig:
    cfg = RunConfig.read(args.config) if args.config else desk_config(args.command)
    if cfg.experiment != args.command:
        raise ConfigError(f"config is for experiment '{cfg.experiment}', not '{args.command}'")
    changes = {}
    if args.ng is not None:
        changes["n_nodes"] = args.ng
    if args.alpha is not None:
        changes["alpha"] = args.alpha
    if args.seed is not None:
        changes["seed"] = args.seed
    changes["threads"] = args.threads if args.threads is not None else _physical_cores()
    if args.out is not None:
        changes["out"] = str(args.out)
    changes["resume"] = bool(args.resume)
    return cfg.replace(**changes)


def _error_record(out: Path | None, err: BaseException, stage: str) -> dict:
    rec = {"status": "error", "stage": stage, "type": type(err).__name__, "message": str(err)}
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            rec["traceback"] = traceback.format_exc()
            (out / "error.json").write_text(json.dumps(rec, indent=2) + "\n")
        except OSError:
            pass
    print(json.dumps({k: v for k, v in rec.items() if k != "traceback"}), file=sys.stderr)
    return rec


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    if args.command == "validate":
        return cmd_validate(args.inject_fault)
    out = None
    Stage.name = "config"
    try:
        cfg = load_config(args)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise ConfigError(f"output directory {out} is not writable")
        Stage.name = "resource estimate"
        estimate = resource_warning(cfg)
        if args.estimate_only:
            print(json.dumps(_jsonable(estimate), indent=2))
            return EXIT_OK
        (out / "error.json").unlink(missing_ok=True)
        cfg.write(out / "config.ini")
        t0 = time.perf_counter()
        started = _dt.datetime.now(_dt.timezone.utc).isoformat()
        if args.command == "torque3d":
            extra = cmd_torque3d(cfg, out)
        elif args.command == "crossover2d":
            extra = cmd_crossover2d(cfg, out)
        elif args.command == "rough2d":
            extra = cmd_rough2d(cfg, out, getattr(args, "replay", None))
        else:
            extra = cmd_flat2d(cfg, out)
        Stage.name = "manifest"
        outputs = [Path(p) for p in extra.pop("outputs")] + [out / "config.ini"]
        extra.update({"started": started, "wall_seconds": time.perf_counter() - t0,
                      "resource_estimate": estimate, "status": "ok", "seed": cfg.seed})
        write_manifest(out, cfg, args.command, outputs, extra)
        return EXIT_OK
    except ConfigError as err:
        # the record goes to --out even when the config itself is broken
        _error_record(out if out is not None else args.out, err, Stage.name)
        return EXIT_CONFIG
    except Exception as err:  # any failed stage ends the run with a record
        _error_record(out, err, Stage.name)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
