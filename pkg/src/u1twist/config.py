"""TOML run configuration."""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["ConfigError", "RunConfig", "LatticeSpec", "ModelSpec", "TwistSpec",
           "Tolerances", "OutputSpec", "load_config", "parse_config"]

LATTICE_KINDS = ("chain", "ring", "square", "sierpinski", "edges")
COUPLING_KINDS = ("uniform", "random", "majumdar-ghosh")


class ConfigError(ValueError):
    pass


@dataclass
class LatticeSpec:
    kind: str
    size: int | None = None
    lx: int | None = None
    ly: int | None = None
    generation: int | None = None
    path: Path | None = None
    periodic: bool = False
    next_nearest: bool = False
    D: float | None = None  # None: estimate from sphere growth


@dataclass
class ModelSpec:
    kind: str = "xxz"
    spin: float = 0.5
    M: float = 0.0
    couplings: str = "uniform"
    jxy: float = 1.0
    jz: float = 1.0
    # Hubbard
    t: float = 1.0
    U: float = 0.0
    V_nn: float = 0.0
    N: int | None = None
    sz: int | None = None
    field: list[list[float]] | None = None
    max_range: int = 1


@dataclass
class TwistSpec:
    kappa: float | None = None  # None: window midpoint
    alpha: list[float] = field(default_factory=lambda: [0.05 * k for k in range(1, 11)])
    m: int | None = None
    n: int | None = None
    C1: float | None = None  # None: explicit constant
    trials: int = 100


@dataclass
class Tolerances:
    eps_deg: float | None = None
    gap_min: float = 1e-3
    quadrature_defect: float = 1e-8
    c4_fraction: float = 0.125
    resolvent_samples: int = 17


@dataclass
class OutputSpec:
    dir: Path = Path("out")
    formats: tuple[str, ...] = ("csv", "json")


@dataclass
class RunConfig:
    lattice: LatticeSpec
    model: ModelSpec
    twist: TwistSpec
    tolerance: Tolerances
    output: OutputSpec
    seed: int | None = None
    source: Path | None = None

    @property
    def needs_seed(self) -> bool:
        return self.model.kind == "xxz" and self.model.couplings == "random"


def _take(section: dict, name: str, key: str, kind, default=None, required=False):
    if key not in section:
        if required:
            raise ConfigError(f"[{name}] missing required key '{key}'")
        return default
    val = section.pop(key)
    if kind is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if kind is not None and not isinstance(val, kind) or isinstance(val, bool) and kind is not bool:
        raise ConfigError(f"[{name}] key '{key}' has the wrong type ({type(val).__name__})")
    return val


def _no_leftovers(section: dict, name: str):
    if section:
        raise ConfigError(f"[{name}] unknown key(s): {', '.join(sorted(section))}")


def _auto_or_float(section, name, key):
    val = section.pop(key, "auto")
    if val == "auto":
        return None
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"[{name}] key '{key}' must be a number or \"auto\"")
    return float(val)


def parse_config(data: dict[str, Any], base: Path | None = None) -> RunConfig:
    data = {k: (dict(v) if isinstance(v, dict) else v) for k, v in data.items()}
    base = base or Path.cwd()
    seed = data.pop("seed", None)
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int) or seed < 0):
        raise ConfigError("'seed' must be a nonnegative integer")

    lat = data.pop("lattice", None)
    if not isinstance(lat, dict):
        raise ConfigError("missing [lattice] section")
    kind = _take(lat, "lattice", "kind", str, required=True)
    if kind not in LATTICE_KINDS:
        raise ConfigError(f"[lattice] unknown kind '{kind}' (choose from {', '.join(LATTICE_KINDS)})")
    ls = LatticeSpec(kind)
    ls.size = _take(lat, "lattice", "size", int, required=kind in ("chain", "ring"))
    ls.lx = _take(lat, "lattice", "lx", int, required=kind == "square")
    ls.ly = _take(lat, "lattice", "ly", int)
    ls.generation = _take(lat, "lattice", "generation", int, required=kind == "sierpinski")
    path = _take(lat, "lattice", "path", str, required=kind == "edges")
    if path is not None:
        ls.path = (base / path).resolve()
        if not ls.path.is_file():
            raise ConfigError(f"[lattice] edge list '{path}' does not exist")
    ls.periodic = _take(lat, "lattice", "periodic", bool, default=kind == "ring")
    ls.next_nearest = _take(lat, "lattice", "next_nearest", bool, default=False)
    ls.D = _auto_or_float(lat, "lattice", "D")
    _no_leftovers(lat, "lattice")

    mod = data.pop("model", {})
    if not isinstance(mod, dict):
        raise ConfigError("[model] must be a table")
    ms = ModelSpec()
    ms.kind = _take(mod, "model", "kind", str, default="xxz")
    if ms.kind not in ("xxz", "hubbard"):
        raise ConfigError(f"[model] unknown kind '{ms.kind}'")
    if ms.kind == "xxz":
        ms.spin = _take(mod, "model", "spin", float, default=0.5)
        ms.M = _take(mod, "model", "M", float, default=0.0)
        ms.couplings = _take(mod, "model", "couplings", str, default="uniform")
        if ms.couplings not in COUPLING_KINDS:
            raise ConfigError(f"[model] unknown couplings '{ms.couplings}'")
        ms.jxy = _take(mod, "model", "jxy", float, default=1.0)
        ms.jz = _take(mod, "model", "jz", float, default=1.0)
    else:
        ms.t = _take(mod, "model", "t", float, default=1.0)
        ms.U = _take(mod, "model", "U", float, default=0.0)
        ms.V_nn = _take(mod, "model", "V_nn", float, default=0.0)
        ms.N = _take(mod, "model", "N", int, required=True)
        ms.sz = _take(mod, "model", "sz", int)
        ms.field = _take(mod, "model", "field", list)
        ms.max_range = _take(mod, "model", "max_range", int, default=1)
    _no_leftovers(mod, "model")

    tw = data.pop("twist", {})
    ts = TwistSpec()
    ts.kappa = _auto_or_float(tw, "twist", "kappa")
    alpha = _take(tw, "twist", "alpha", list)
    if alpha is not None:
        if not alpha or any(isinstance(a, bool) or not isinstance(a, (int, float)) for a in alpha):
            raise ConfigError("[twist] 'alpha' must be a nonempty list of numbers")
        ts.alpha = sorted(float(a) for a in alpha)
    if any(not 0.0 < a <= 2.0 for a in ts.alpha):
        raise ConfigError("[twist] every alpha must lie in (0, 2]")
    ts.m = _take(tw, "twist", "m", int)
    ts.n = _take(tw, "twist", "n", int)
    ts.C1 = _auto_or_float(tw, "twist", "C1")
    ts.trials = _take(tw, "twist", "trials", int, default=100)
    _no_leftovers(tw, "twist")

    tol = data.pop("tolerance", {})
    tl = Tolerances()
    tl.eps_deg = _auto_or_float(tol, "tolerance", "eps_deg")
    tl.gap_min = _take(tol, "tolerance", "gap_min", float, default=1e-3)
    tl.quadrature_defect = _take(tol, "tolerance", "quadrature_defect", float, default=1e-8)
    tl.c4_fraction = _take(tol, "tolerance", "c4_fraction", float, default=0.125)
    tl.resolvent_samples = _take(tol, "tolerance", "resolvent_samples", int, default=17)
    _no_leftovers(tol, "tolerance")
    if not 0.0 < tl.c4_fraction < 0.5:
        raise ConfigError("[tolerance] c4_fraction must lie in (0, 1/2)")

    out = data.pop("output", {})
    os_ = OutputSpec()
    d = _take(out, "output", "dir", str)
    if d is not None:
        os_.dir = base / d
    fmts = _take(out, "output", "formats", list)
    if fmts is not None:
        bad = [f for f in fmts if f not in ("csv", "json")]
        if bad:
            raise ConfigError(f"[output] unknown format(s): {bad}")
        os_.formats = tuple(fmts)
    _no_leftovers(out, "output")
    _no_leftovers(data, "top level")

    cfg = RunConfig(ls, ms, ts, tl, os_, seed)
    for v in (ms.jxy, ms.jz, ms.t, ms.U, ms.V_nn):
        if not math.isfinite(v):
            raise ConfigError("[model] couplings must be finite")
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config '{path}': {exc.strerror}") from exc
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    cfg = parse_config(data, base=path.parent)
    cfg.source = path
    return cfg
