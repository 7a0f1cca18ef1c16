"""Sectioned key-value run configuration (INI syntax).

Example::

    [mesh]
    n_divisions = 40

    [material]
    E1 = 180e9
    nu1 = 0.26
    rho1 = 4e3
    E2 = 70e9
    nu2 = 0.25
    rho2 = 8e3
    eps = 0.05

    [geometry]
    initial = 0.5 0.5 0.1
    target = 0.5 0.65 0.1

Circles are ``cx cy r`` with an optional trailing ``+``/``-`` sign, several
separated by ``;``.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .inverse import InverseConfig
from .levelset import Circle, LevelSet, signed_distance_circles
from .material import MaterialModel, Phase
from .mesh import TAGS, Mesh, generate_mesh, load_mesh
from .wave import ForceParams, SimConfig


class ConfigError(ValueError):
    pass


def parse_circles(text: str) -> list[Circle]:
    circles = []
    for chunk in text.split(";"):
        parts = chunk.split()
        if not parts:
            continue
        sign = 1
        if parts[-1] in "+-":
            sign = -1 if parts.pop() == "-" else 1
        if len(parts) != 3:
            raise ConfigError(f"circle needs 'cx cy r', got {chunk.strip()!r}")
        cx, cy, r = map(float, parts)
        circles.append(Circle((cx, cy), r, sign))
    return circles


def format_circles(circles) -> str:
    return "; ".join(f"{c.center[0]:g} {c.center[1]:g} {c.radius:g} {'+' if c.sign > 0 else '-'}" for c in circles)


@dataclass
class RunConfig:
    n_divisions: int = 40
    mesh_file: str | None = None
    material: MaterialModel = field(default_factory=MaterialModel)
    force: ForceParams = field(default_factory=ForceParams)
    sim: SimConfig = field(default_factory=SimConfig)
    inverse: InverseConfig = field(default_factory=InverseConfig)
    initial: list = field(default_factory=lambda: [Circle((0.5, 0.5), 0.1)])
    target: list | None = None
    output_dir: str = "out"
    seed: int = 0
    n_directions: int = 5
    fd_step: float = 1e-3  # relative to max |theta|
    profile_taus: tuple = (-0.01, 0.01, 21)
    frame_stride: int = 10
    snapshot_stride: int = 1
    raster_size: int = 128

    def build_mesh(self) -> Mesh:
        if self.mesh_file:
            return load_mesh(self.mesh_file)
        return generate_mesh(self.n_divisions)

    def initial_levelset(self, mesh: Mesh) -> LevelSet:
        return signed_distance_circles(mesh, self.initial)

    def target_levelset(self, mesh: Mesh) -> LevelSet:
        if not self.target:
            raise ConfigError("geometry.target required")
        return signed_distance_circles(mesh, self.target)

    def tau_grid(self) -> np.ndarray:
        lo, hi, n = self.profile_taus
        return np.linspace(lo, hi, int(n))

    def manifest(self) -> dict:
        p1, p2 = self.material.phase1, self.material.phase2
        return {
            "mesh": {"n_divisions": self.n_divisions, "file": self.mesh_file},
            "material": {"E1": p1.E, "nu1": p1.nu, "rho1": p1.rho, "E2": p2.E, "nu2": p2.nu, "rho2": p2.rho,
                         "eps": self.material.eps},
            "force": dataclasses.asdict(self.force),
            "sim": {"h": self.sim.h, "n_steps": self.sim.n_steps, "tol": self.sim.tol,
                    **{f"bc_{k.lower()}": v for k, v in self.sim.bc.items()}},
            "inverse": dataclasses.asdict(self.inverse),
            "geometry": {"initial": format_circles(self.initial),
                         "target": format_circles(self.target) if self.target else None},
            "run": {"seed": self.seed, "n_directions": self.n_directions, "fd_step": self.fd_step,
                    "profile_taus": list(self.profile_taus), "frame_stride": self.frame_stride,
                    "snapshot_stride": self.snapshot_stride, "raster_size": self.raster_size},
            "output_dir": self.output_dir,
        }


def _typed(section, key, cast, default):
    if key not in section:
        return default
    raw = section[key].strip()
    if cast is bool:
        return section.getboolean(key)
    if default is None and raw.lower() in ("", "none"):
        return None
    return cast(raw)


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str  # keys are case sensitive (E1, l_N)
    cp.read(path)
    cfg = RunConfig()
    base = path.parent
    try:
        if cp.has_section("mesh"):
            s = cp["mesh"]
            cfg.n_divisions = _typed(s, "n_divisions", int, cfg.n_divisions)
            mf = _typed(s, "file", str, None)
            if mf:
                mf = str((base / mf) if not Path(mf).is_absolute() else Path(mf))
                if not Path(mf).exists():
                    raise ConfigError(f"mesh file not found: {mf}")
                cfg.mesh_file = mf
        if cp.has_section("material"):
            s = cp["material"]
            d1, d2 = MaterialModel().phase1, MaterialModel().phase2
            cfg.material = MaterialModel(
                Phase(_typed(s, "E1", float, d1.E), _typed(s, "nu1", float, d1.nu), _typed(s, "rho1", float, d1.rho)),
                Phase(_typed(s, "E2", float, d2.E), _typed(s, "nu2", float, d2.nu), _typed(s, "rho2", float, d2.rho)),
                _typed(s, "eps", float, 0.05),
            )
        if cp.has_section("force"):
            s = cp["force"]
            kw = {f.name: _typed(s, f.name, type(f.default), f.default) for f in dataclasses.fields(ForceParams)}
            cfg.force = ForceParams(**kw)
        if cp.has_section("sim"):
            s = cp["sim"]
            bc = {tag: _typed(s, f"bc_{tag.lower()}", str, "neumann_zero") for tag in TAGS}
            cfg.sim = SimConfig(h=_typed(s, "h", float, cfg.sim.h), n_steps=_typed(s, "n_steps", int, cfg.sim.n_steps),
                                bc=bc, tol=_typed(s, "tol", float, cfg.sim.tol))
        if cp.has_section("inverse"):
            s = cp["inverse"]
            kw = {f.name: _typed(s, f.name, type(f.default), f.default) for f in dataclasses.fields(InverseConfig)}
            cfg.inverse = InverseConfig(**kw)
        if cp.has_section("geometry"):
            s = cp["geometry"]
            if "initial" in s:
                cfg.initial = parse_circles(s["initial"])
            if "target" in s:
                cfg.target = parse_circles(s["target"]) or None
        if cp.has_section("output"):
            cfg.output_dir = _typed(cp["output"], "dir", str, cfg.output_dir)
        if cp.has_section("run"):
            s = cp["run"]
            cfg.seed = _typed(s, "seed", int, cfg.seed)
            cfg.n_directions = _typed(s, "n_directions", int, cfg.n_directions)
            cfg.fd_step = _typed(s, "fd_step", float, cfg.fd_step)
            if "profile_taus" in s:
                lo, hi, n = s["profile_taus"].split()
                cfg.profile_taus = (float(lo), float(hi), int(n))
            cfg.frame_stride = _typed(s, "frame_stride", int, cfg.frame_stride)
            cfg.snapshot_stride = _typed(s, "snapshot_stride", int, cfg.snapshot_stride)
            cfg.raster_size = _typed(s, "raster_size", int, cfg.raster_size)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return cfg
