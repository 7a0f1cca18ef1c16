"""Command-line entry point: ``elastinv {forward,synthesize,invert,gradcheck,profile}``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import ConfigError, RunConfig, load_config
from .fem import SolverError
from .inverse import Problem, cost_profile, fd_gradient_check, invert, smooth_direction
from .mesh import boundary_nodes
from .wave import BoundaryRecord, dilation, run_forward

log = logging.getLogger("elastinv")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_THRESHOLD = 2
EXIT_STALLED = 3


def _threads() -> int | None:
    raw = os.environ.get("ELASTINV_THREADS")
    return int(raw) if raw else None


def _outdir(cfg: RunConfig, args) -> Path:
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, cfg: RunConfig, command: str, **extra) -> None:
    data = {"command": command, **cfg.manifest(), **extra}
    threads = _threads()
    if threads is not None:
        data["threads"] = threads
    (out / "manifest.json").write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _load_delta(cfg: RunConfig, mesh, path):
    if not path:
        raise ConfigError("--delta PATH required")
    rec = io.read_boundary_record(path, mesh, boundary_nodes(mesh, "Top"))
    if rec.n_steps != cfg.sim.n_steps:
        raise ConfigError(f"delta has {rec.n_steps} steps, config has {cfg.sim.n_steps}")
    if not np.isclose(rec.h, cfg.sim.h, rtol=1e-6):
        raise ConfigError(f"delta time step {rec.h:g} differs from config h={cfg.sim.h:g}")
    # stored times carry 9 digits; use the configured step exactly
    return BoundaryRecord(rec.gamma_nodes, rec.x, rec.values, cfg.sim.h)


def cmd_forward(cfg: RunConfig, args) -> int:
    out = _outdir(cfg, args)
    mesh = cfg.build_mesh()
    ls = cfg.initial_levelset(mesh)
    ts, rec = run_forward(mesh, ls, cfg.material, cfg.force, cfg.sim)
    io.write_boundary_record(out / "boundary.csv", rec)
    for n in range(0, len(ts), max(cfg.frame_stride, 1)):
        d = dilation(ts.frame(n)).values
        io.write_field_csv(out / f"dilation_{n:05d}.csv", mesh, d, name="dilation")
        io.write_ppm(out / f"dilation_{n:05d}.ppm", io.rasterize(mesh, d, cfg.raster_size), -np.sqrt(2), np.sqrt(2))
    io.write_field_csv(out / "theta.csv", mesh, ls.values)
    _write_manifest(out, cfg, "forward")
    return EXIT_OK


def cmd_synthesize(cfg: RunConfig, args) -> int:
    mesh = cfg.build_mesh()
    target = cfg.target_levelset(mesh)
    out = _outdir(cfg, args)
    _, rec = run_forward(mesh, target, cfg.material, cfg.force, cfg.sim)
    io.write_boundary_record(out / "delta.csv", rec)
    io.write_field_csv(out / "theta_target.csv", mesh, target.values)
    _write_manifest(out, cfg, "synthesize")
    return EXIT_OK


def cmd_invert(cfg: RunConfig, args) -> int:
    mesh = cfg.build_mesh()
    delta = _load_delta(cfg, mesh, args.delta)
    out = _outdir(cfg, args)
    stride = max(cfg.snapshot_stride, 1)

    def snapshot(rec):
        if rec.iteration % stride == 0:
            io.write_field_csv(out / f"theta_{rec.iteration:04d}.csv", mesh, rec.theta)

    res = invert(delta, cfg.initial_levelset(mesh), cfg.material, cfg.force, cfg.sim, cfg.inverse, callback=snapshot)
    io.write_rows(out / "history.csv", "iter,cost,centroid_x,centroid_y,area,tau_accepted",
                  ([r.iteration, r.cost, float(r.centroid[0]), float(r.centroid[1]), r.area, r.tau_accepted]
                   for r in res.history))
    _write_manifest(out, cfg, "invert", delta=str(args.delta), stalled=res.stalled, converged=res.converged,
                    reason=res.reason, components=[r.components for r in res.history])
    return EXIT_STALLED if res.stalled else EXIT_OK


def cmd_gradcheck(cfg: RunConfig, args) -> int:
    mesh = cfg.build_mesh()
    ls = cfg.initial_levelset(mesh)
    target = cfg.target_levelset(mesh)
    out = _outdir(cfg, args)
    _, delta = run_forward(mesh, target, cfg.material, cfg.force, cfg.sim)
    problem = Problem(cfg.material, cfg.force, cfg.sim, delta, cfg.inverse)
    g, _ = problem.gradient(ls)
    seed = cfg.seed if args.seed is None else args.seed
    s = cfg.fd_step * np.abs(ls.values).max()
    rows, worst = [], 0.0
    for k in range(cfg.n_directions):
        a, n, rel = fd_gradient_check(ls, problem, smooth_direction(mesh, seed + k), s, g=g)
        rows.append([k, a, n, rel])
        worst = max(worst, rel)
    io.write_rows(out / "gradcheck.csv", "direction,analytic,numeric,rel_error", rows)
    threshold = args.threshold
    _write_manifest(out, cfg, "gradcheck", threshold=threshold, seed_used=seed, max_rel_error=worst)
    for r in rows:
        print(f"direction {r[0]}: analytic={r[1]:.8e} numeric={r[2]:.8e} rel_error={r[3]:.3e}")
    zero_rows = all(r[1] == 0 and r[2] == 0 for r in rows)
    if zero_rows:
        return EXIT_OK
    return EXIT_OK if worst <= threshold else EXIT_THRESHOLD


def cmd_profile(cfg: RunConfig, args) -> int:
    mesh = cfg.build_mesh()
    ls = cfg.initial_levelset(mesh)
    delta = _load_delta(cfg, mesh, args.delta)
    out = _outdir(cfg, args)
    problem = Problem(cfg.material, cfg.force, cfg.sim, delta, cfg.inverse)
    g, _ = problem.gradient(ls)
    gmax = np.abs(g.values).max()
    # tau is measured in domain units: the direction is g scaled to unit max-norm
    direction = g.values / gmax if gmax > 0 else g.values
    prof = cost_profile(ls, problem, direction, cfg.tau_grid())
    io.write_rows(out / "profile.csv", "tau,cost", prof)
    _write_manifest(out, cfg, "profile", delta=str(args.delta), gradient_max=float(gmax))
    return EXIT_OK


COMMANDS = {
    "forward": cmd_forward,
    "synthesize": cmd_synthesize,
    "invert": cmd_invert,
    "gradcheck": cmd_gradcheck,
    "profile": cmd_profile,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="elastinv", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="INI run configuration")
        sp.add_argument("--out", help="output directory (overrides [output] dir)")
        if name in ("invert", "profile"):
            sp.add_argument("--delta", required=True, help="boundary data CSV")
        if name == "gradcheck":
            sp.add_argument("--threshold", type=float, default=0.05)
            sp.add_argument("--seed", type=int, default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
