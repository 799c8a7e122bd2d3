"""Run configuration files.

INI-style text with flat sections (parsed by :mod:`configparser`)::

    [mesh]          nx, ny, lx, ly                       (cm)
    [groups]        count, nu_min, nu_max, fold_tails    or  bounds = b0, b1, ...
    [quadrature]    n_polar, n_azimuthal                 (per quadrant)
    [time]          dt, t_end, block_len                 (ns)
    [material]      opacity = fleck_cummings | constant
                    coefficient (fleck_cummings), value (constant),
                    cv  or  cv_factor + t_ref            (cv = cv_factor a_R t_ref)
    [initial]       temperature                          (keV)
    [boundary]      left, right, bottom, top = vacuum | reflective | blackbody <T>
    [solver]        epsilon, inner_epsilon, max_outer, max_inner, drift_mean
    [output]        directory, save_every, iterates, reference

Every key is checked: unknown keys, missing required keys and invalid
values raise :class:`ConfigError` naming the offending line.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .driver import ConvergenceCriteria, Problem
from .grid import (ConfigurationError, FrequencyGroups, SpatialMesh, TimeBlockPartition,
                   build_quadrature, build_time_blocks)
from .loqd import DRIFT_MEANS
from .physics import A_RAD, ConstantOpacity, FleckCummingsOpacity, MaterialModel
from .transport import SIDES, BoundaryCondition


class ConfigError(ValueError):
    """Invalid configuration text."""


_REQUIRED = "required"

# section -> key -> default (``_REQUIRED`` when the key must be present)
SCHEMA = {
    "mesh": {"nx": _REQUIRED, "ny": _REQUIRED, "lx": _REQUIRED, "ly": _REQUIRED},
    "groups": {"count": None, "bounds": None, "nu_min": "1e-2", "nu_max": "1e2",
               "fold_tails": "true"},
    "quadrature": {"n_polar": _REQUIRED, "n_azimuthal": _REQUIRED},
    "time": {"dt": _REQUIRED, "t_end": _REQUIRED, "block_len": _REQUIRED},
    "material": {"opacity": _REQUIRED, "coefficient": "27", "value": None,
                 "cv": None, "cv_factor": "0.5917", "t_ref": "1.0"},
    "initial": {"temperature": _REQUIRED},
    "boundary": {side: _REQUIRED for side in SIDES},
    "solver": {"epsilon": "1e-14", "inner_epsilon": None, "max_outer": "200",
               "max_inner": "200", "drift_mean": "flux"},
    "output": {"directory": _REQUIRED, "save_every": "1", "iterates": "false",
               "reference": None},
}

_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


def _line_index(text: str) -> dict:
    """``(section, key) -> line number`` plus ``(section, None)`` for headers."""
    where = {}
    section = None
    for n, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip().lower()
            where.setdefault((section, None), n)
            continue
        m = _KEY_RE.match(line)
        if m and section is not None and not line[:1].isspace():
            where.setdefault((section, m.group(1).strip().lower()), n)
    return where


@dataclass
class RunConfig:
    """Validated run parameters; ``build_*`` methods create solver objects."""

    nx: int
    ny: int
    lx: float
    ly: float
    group_bounds: np.ndarray
    fold_tails: bool
    n_polar: int
    n_azimuthal: int
    dt: float
    t_end: float
    block_len: float
    opacity: str
    opacity_value: float
    cv: float
    initial_temperature: float
    boundaries: dict
    epsilon: float
    inner_epsilon: float | None
    max_outer: int
    max_inner: int
    drift_mean: str
    output_dir: Path
    save_every: int = 1
    iterates: bool = False
    reference: Path | None = None
    source_text: str = field(default="", repr=False)

    def build_problem(self) -> Problem:
        mesh = SpatialMesh(self.nx, self.ny, self.lx, self.ly)
        quad = build_quadrature(self.n_polar, self.n_azimuthal)
        groups = FrequencyGroups(self.group_bounds, self.fold_tails)
        if self.opacity == "fleck_cummings":
            law = FleckCummingsOpacity(self.opacity_value)
        else:
            law = ConstantOpacity(self.opacity_value)
        material = MaterialModel(cv=self.cv, opacity=law)
        bcs = {s: BoundaryCondition(*b) for s, b in self.boundaries.items()}
        return Problem(mesh, quad, groups, material, bcs, self.initial_temperature,
                       drift_mean=self.drift_mean)

    def build_partition(self) -> TimeBlockPartition:
        return build_time_blocks(self.dt, self.t_end, self.block_len)

    def build_criteria(self) -> ConvergenceCriteria:
        return ConvergenceCriteria(epsilon=self.epsilon, inner_epsilon=self.inner_epsilon,
                                   max_outer=self.max_outer, max_inner=self.max_inner)


class _Reader:
    """Typed access to parsed values with line-numbered error messages."""

    def __init__(self, cp, lines):
        self.cp = cp
        self.lines = lines

    def where(self, section, key=None):
        n = self.lines.get((section, key)) or self.lines.get((section, None))
        return f"line {n}: " if n else ""

    def raw(self, section, key):
        if self.cp.has_option(section, key):
            return self.cp.get(section, key).strip()
        default = SCHEMA[section][key]
        return None if default is _REQUIRED else default

    def fail(self, section, key, msg):
        raise ConfigError(f"{self.where(section, key)}[{section}] {key}: {msg}")

    def number(self, section, key, kind=float, positive=True):
        text = self.raw(section, key)
        if text is None:
            return None
        try:
            val = kind(text)
        except ValueError:
            self.fail(section, key, f"expected {'an integer' if kind is int else 'a number'}, "
                                    f"got {text!r}")
        if not np.isfinite(val):
            self.fail(section, key, f"must be finite, got {text!r}")
        if positive and not val > 0:
            self.fail(section, key, f"must be positive, got {text!r}")
        return val

    def flag(self, section, key):
        text = self.raw(section, key).lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        self.fail(section, key, f"expected a boolean, got {text!r}")


def _boundary(rd: _Reader, side):
    text = rd.raw("boundary", side)
    parts = text.split()
    kind = parts[0].lower() if parts else ""
    if kind in ("vacuum", "reflective") and len(parts) == 1:
        return (kind, None)
    if kind == "blackbody" and len(parts) == 2:
        try:
            T = float(parts[1])
        except ValueError:
            T = float("nan")
        if T > 0 and np.isfinite(T):
            return ("blackbody", T)
        rd.fail("boundary", side, f"blackbody temperature must be positive, got {parts[1]!r}")
    rd.fail("boundary", side,
            f"expected 'vacuum', 'reflective' or 'blackbody <T>', got {text!r}")


def parse_config(text: str, base_dir: Path | None = None) -> RunConfig:
    """Parse and validate configuration text.

    Relative output and reference paths are resolved against ``base_dir``
    when given.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    lines = _line_index(text)
    rd = _Reader(cp, lines)

    problems = []
    for section in cp.sections():
        if section not in SCHEMA:
            problems.append(f"{rd.where(section)}unknown section [{section}]")
            continue
        for key in cp.options(section):
            if key not in SCHEMA[section]:
                problems.append(f"{rd.where(section, key)}unknown key '{key}' in [{section}]")
    missing = [f"[{s}] {k}" for s, keys in SCHEMA.items() for k, d in keys.items()
               if d is _REQUIRED and not cp.has_option(s, k)]
    has_count = cp.has_option("groups", "count")
    has_bounds = cp.has_option("groups", "bounds")
    if not has_count and not has_bounds:
        missing.append("[groups] count (or bounds)")
    elif has_count and has_bounds:
        problems.append(f"{rd.where('groups', 'bounds')}[groups] give either count or "
                        "bounds, not both")
    if missing:
        problems.append("missing required keys: " + ", ".join(missing))
    if problems:
        raise ConfigError("; ".join(problems))

    nx = rd.number("mesh", "nx", int)
    ny = rd.number("mesh", "ny", int)
    lx = rd.number("mesh", "lx")
    ly = rd.number("mesh", "ly")

    fold = rd.flag("groups", "fold_tails")
    if cp.has_option("groups", "bounds"):
        try:
            bounds = np.array([float(v) for v in rd.raw("groups", "bounds").replace(",", " ").split()])
        except ValueError:
            rd.fail("groups", "bounds", "expected a list of numbers")
    else:
        count = rd.number("groups", "count", int)
        lo, hi = rd.number("groups", "nu_min"), rd.number("groups", "nu_max")
        if not hi > lo:
            rd.fail("groups", "nu_max", "must exceed nu_min")
        bounds = np.geomspace(lo, hi, count + 1)
    try:
        FrequencyGroups(bounds, fold)
    except ConfigurationError as exc:
        rd.fail("groups", "bounds" if cp.has_option("groups", "bounds") else "count", str(exc))

    n_polar = rd.number("quadrature", "n_polar", int)
    n_azim = rd.number("quadrature", "n_azimuthal", int)

    dt = rd.number("time", "dt")
    t_end = rd.number("time", "t_end")
    block_len = rd.number("time", "block_len")
    try:
        build_time_blocks(dt, t_end, block_len)
    except ConfigurationError as exc:
        key = "block_len" if "block" in str(exc) else "t_end"
        rd.fail("time", key, str(exc))

    opacity = rd.raw("material", "opacity").lower()
    if opacity == "fleck_cummings":
        value = rd.number("material", "coefficient")
    elif opacity == "constant":
        value = rd.number("material", "value")
        if value is None:
            rd.fail("material", "value", "constant opacity needs 'value'")
    else:
        rd.fail("material", "opacity", f"expected 'fleck_cummings' or 'constant', got {opacity!r}")
    cv = rd.number("material", "cv")
    if cv is None:
        cv = rd.number("material", "cv_factor") * A_RAD * rd.number("material", "t_ref")

    T0 = rd.number("initial", "temperature")
    boundaries = {side: _boundary(rd, side) for side in SIDES}

    eps = rd.number("solver", "epsilon")
    inner = rd.number("solver", "inner_epsilon")
    max_outer = rd.number("solver", "max_outer", int)
    max_inner = rd.number("solver", "max_inner", int)
    drift = rd.raw("solver", "drift_mean").lower()
    if drift not in DRIFT_MEANS:
        rd.fail("solver", "drift_mean", f"expected one of {DRIFT_MEANS}, got {drift!r}")

    base = Path(base_dir) if base_dir is not None else Path(".")
    out_dir = base / rd.raw("output", "directory")
    save_every = rd.number("output", "save_every", int)
    iterates = rd.flag("output", "iterates")
    ref = rd.raw("output", "reference")

    return RunConfig(
        nx=nx, ny=ny, lx=lx, ly=ly, group_bounds=bounds, fold_tails=fold,
        n_polar=n_polar, n_azimuthal=n_azim, dt=dt, t_end=t_end, block_len=block_len,
        opacity=opacity, opacity_value=value, cv=cv, initial_temperature=T0,
        boundaries=boundaries, epsilon=eps, inner_epsilon=inner, max_outer=max_outer,
        max_inner=max_inner, drift_mean=drift, output_dir=out_dir, save_every=save_every,
        iterates=iterates, reference=(base / ref) if ref else None, source_text=text,
    )


def load_config(path) -> RunConfig:
    """Read a configuration file; bare names fall back to the bundled set."""
    p = Path(path)
    if not p.exists():
        bundled = resources.files("trtblock") / "configs" / p.name
        if p.parent == Path(".") and bundled.is_file():
            return parse_config(bundled.read_text(encoding="utf-8"))
        raise ConfigError(f"configuration file not found: {path}")
    return parse_config(p.read_text(encoding="utf-8"), base_dir=p.parent)


def bundled_configs() -> list[str]:
    return sorted(f.name for f in (resources.files("trtblock") / "configs").iterdir()
                  if f.name.endswith(".cfg"))
