"""INI-driven run configuration for the command-line harness.

One file describes a whole experiment: incident wave, resonator
geometry, materials, the scale sweep, numerical knobs and output
selection. Parsing is deliberately strict: unknown sections, unknown
keys, and keys that do not apply to the selected variant are all hard
errors, so a typo cannot silently fall back to a default.

The [lattice] section fixes the slab thickness once: n1 counts cells
through the thickness at the first n2 in the list, and every other n2
scales n1 proportionally so b - a stays constant across the sweep.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass

import numpy as np

from .model import (
    CellGeometry,
    GeometryError,
    MaterialSet,
    SimpleRing,
    SlabLattice,
    SrrGeometric,
    SrrPhenomenological,
    WaveParams,
    validate_lattice,
)


class ConfigError(ValueError):
    """Unreadable, unknown or inconsistent configuration input."""


_SCHEMA = {
    "wave": {"omega", "kappa", "incident_order", "eps0", "mu0"},
    "cell": {"shape", "radius", "center", "n_segments", "vertices"},
    "materials": {
        "eps_matrix",
        "eps_interior",
        "mu_matrix",
        "mu_interior",
        "surface",
        "rho",
        "tau",
        "delta",
        "eps_gap",
        "srr_radius",
    },
    "lattice": {"n1", "n2", "margin_cells"},
    "numerics": {"refine", "m_modes", "residual_tol", "offsets", "reference_refine"},
    "output": {"directory", "fields", "averages"},
}
_REQUIRED = {"wave": ("omega",), "cell": ("shape",), "lattice": ("n1", "n2")}

_SURFACE_KEYS = {
    "none": set(),
    "ring": {"rho"},
    "srr": {"rho", "tau"},
    "srr_geometric": {"rho", "delta", "eps_gap", "srr_radius"},
}

_BOOLEANS = {
    "true": True,
    "yes": True,
    "on": True,
    "1": True,
    "false": False,
    "no": False,
    "off": False,
    "0": False,
}


class _Section:
    """Typed accessors over one section's raw strings, with located errors."""

    def __init__(self, name: str, raw: dict):
        self.name = name
        self.raw = dict(raw)

    def _parse(self, key, default, conv, what):
        text = self.raw.get(key)
        if text is None:
            return default
        try:
            return conv(text)
        except ValueError as exc:
            raise ConfigError(
                f"[{self.name}] {key} = {text!r} is not {what}"
            ) from exc

    def floatv(self, key, default=None):
        return self._parse(key, default, float, "a number")

    def intv(self, key, default=None):
        return self._parse(key, default, int, "an integer")

    def complexv(self, key, default=None):
        return self._parse(key, default, lambda s: complex(s.replace(" ", "")), "a complex number")

    def boolv(self, key, default=None):
        def conv(s):
            try:
                return _BOOLEANS[s.strip().lower()]
            except KeyError:
                raise ValueError(s) from None

        return self._parse(key, default, conv, "a boolean")

    def strv(self, key, default=None):
        value = self.raw.get(key, default)
        return value.strip() if isinstance(value, str) else value

    def floats(self, key, default=None):
        return self._parse(
            key, default, lambda s: tuple(float(p) for p in s.split(",")), "a comma list of numbers"
        )

    def ints(self, key, default=None):
        return self._parse(
            key, default, lambda s: tuple(int(p) for p in s.split(",")), "a comma list of integers"
        )

    def forbid(self, keys, reason: str):
        for key in keys:
            if key in self.raw:
                raise ConfigError(f"[{self.name}] key '{key}' does not apply {reason}")


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration; every model object is already constructed."""

    wave: WaveParams
    geometry: CellGeometry
    materials: MaterialSet
    n1_base: int
    n2_list: tuple[int, ...]
    margin_cells: int
    refine: int
    m_modes: int | None
    residual_tol: float
    offsets: tuple[float, float]
    reference_refine: int | None
    out_dir: str
    write_fields: bool
    write_averages: bool

    @property
    def reference_cell_refine(self) -> int:
        """Cell-problem refinement for the homogenized reference.

        Defaults to the strip refinement: comparing a micro solve against
        constants from the identically discretized cell problem isolates
        the finite-scale effect from the fixed cell-mesh offset.
        """
        return self.refine if self.reference_refine is None else self.reference_refine

    def lattice_for(self, n2: int) -> SlabLattice:
        """The lattice at one sweep point, thickness held fixed."""
        n1 = self.n1_base * n2
        if n1 % self.n2_list[0] != 0:
            raise ConfigError(
                f"n2 = {n2} cannot keep the slab thickness fixed: "
                f"{self.n1_base} * {n2} / {self.n2_list[0]} is not an integer"
            )
        return validate_lattice(
            SlabLattice(n1=n1 // self.n2_list[0], n2=n2, margin_cells=self.margin_cells)
        )

    def lattices(self) -> list[SlabLattice]:
        return [self.lattice_for(n2) for n2 in self.n2_list]


def _build_wave(sec: _Section) -> WaveParams:
    return WaveParams(
        omega=sec.floatv("omega"),
        kappa=sec.floatv("kappa", 0.0),
        incident_order=sec.intv("incident_order", 0),
        eps0=sec.floatv("eps0", 1.0),
        mu0=sec.floatv("mu0", 1.0),
    )


def _build_geometry(sec: _Section) -> CellGeometry:
    shape = sec.strv("shape")
    if shape == "circle":
        sec.forbid(("vertices",), "to shape = circle")
        radius = sec.floatv("radius")
        if radius is None:
            raise ConfigError("[cell] shape = circle needs a radius")
        center = sec.floats("center", (0.5, 0.5))
        if len(center) != 2:
            raise ConfigError("[cell] center needs exactly two coordinates")
        return CellGeometry.circle(
            radius, n_segments=sec.intv("n_segments", 96), center=(center[0], center[1])
        )
    if shape == "polyline":
        sec.forbid(("radius", "center", "n_segments"), "to shape = polyline")
        text = sec.strv("vertices")
        if text is None:
            raise ConfigError("[cell] shape = polyline needs vertices")
        try:
            pts = [
                [float(c) for c in chunk.split(",")]
                for chunk in text.replace("\n", ";").split(";")
                if chunk.strip()
            ]
            vertices = np.asarray(pts, dtype=float)
        except ValueError as exc:
            raise ConfigError(f"[cell] vertices: {exc}") from exc
        return CellGeometry(vertices=vertices)
    raise ConfigError(f"[cell] shape must be 'circle' or 'polyline', got {shape!r}")


def _build_surface(sec: _Section):
    kind = sec.strv("surface", "ring")
    if kind not in _SURFACE_KEYS:
        raise ConfigError(
            f"[materials] surface must be one of {sorted(_SURFACE_KEYS)}, got {kind!r}"
        )
    stray = {"rho", "tau", "delta", "eps_gap", "srr_radius"} - _SURFACE_KEYS[kind]
    sec.forbid(sorted(stray), f"to surface = {kind}")
    if kind == "none":
        return None
    if kind == "ring":
        return SimpleRing(rho=sec.floatv("rho", 1.0))
    if kind == "srr":
        return SrrPhenomenological(rho=sec.floatv("rho", 1.0), tau=sec.floatv("tau", 0.0))
    missing = [k for k in ("rho", "delta", "eps_gap", "srr_radius") if k not in sec.raw]
    if missing:
        raise ConfigError(f"[materials] surface = srr_geometric needs {', '.join(missing)}")
    return SrrGeometric(
        rho=sec.floatv("rho"),
        delta=sec.floatv("delta"),
        eps_gap=sec.floatv("eps_gap"),
        radius=sec.floatv("srr_radius"),
    )


def _build_materials(sec: _Section) -> MaterialSet:
    return MaterialSet(
        eps_matrix=sec.complexv("eps_matrix", 1.0 + 0.0j),
        eps_interior=sec.complexv("eps_interior", 1.0 + 0.0j),
        mu_matrix=sec.complexv("mu_matrix", 1.0 + 0.0j),
        mu_interior=sec.complexv("mu_interior", 1.0 + 0.0j),
        surface=_build_surface(sec),
    )


def parse_config(text: str) -> RunConfig:
    """Parse and validate configuration text; raises ConfigError on any
    unknown name, malformed value, or model-level inconsistency."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc

    for name in cp.sections():
        if name not in _SCHEMA:
            raise ConfigError(f"unknown section [{name}]")
        for key in cp[name]:
            if key not in _SCHEMA[name]:
                raise ConfigError(f"unknown key '{key}' in section [{name}]")
    for name, keys in _REQUIRED.items():
        if name not in cp:
            raise ConfigError(f"missing required section [{name}]")
        for key in keys:
            if key not in cp[name]:
                raise ConfigError(f"missing required key '{key}' in section [{name}]")

    sections = {name: _Section(name, cp[name]) for name in cp.sections()}

    def sec(name):
        return sections.get(name, _Section(name, {}))

    try:
        wave = _build_wave(sec("wave"))
        geometry = _build_geometry(sec("cell"))
        materials = _build_materials(sec("materials"))
    except (ValueError, GeometryError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc

    lat = sec("lattice")
    n2_list = lat.ints("n2")
    if len(n2_list) == 0:
        raise ConfigError("[lattice] n2 needs at least one value")
    if len(set(n2_list)) != len(n2_list):
        raise ConfigError(f"[lattice] n2 values must be distinct, got {n2_list}")

    num = sec("numerics")
    m_modes_text = num.strv("m_modes", "auto")
    if m_modes_text == "auto":
        m_modes = None
    else:
        try:
            m_modes = int(m_modes_text)
        except ValueError as exc:
            raise ConfigError("[numerics] m_modes must be 'auto' or an integer") from exc
    ref_text = num.strv("reference_refine", "match")
    if ref_text == "match":
        reference_refine = None
    else:
        try:
            reference_refine = int(ref_text)
        except ValueError as exc:
            raise ConfigError("[numerics] reference_refine must be 'match' or an integer") from exc
    offsets = num.floats("offsets", (0.05, 0.95))
    if len(offsets) != 2:
        raise ConfigError("[numerics] offsets needs exactly two values")

    out = sec("output")
    cfg = RunConfig(
        wave=wave,
        geometry=geometry,
        materials=materials,
        n1_base=lat.intv("n1"),
        n2_list=n2_list,
        margin_cells=lat.intv("margin_cells", 2),
        refine=num.intv("refine", 1),
        m_modes=m_modes,
        residual_tol=num.floatv("residual_tol", 1e-8),
        offsets=(offsets[0], offsets[1]),
        reference_refine=reference_refine,
        out_dir=out.strv("directory", "out"),
        write_fields=out.boolv("fields", True),
        write_averages=out.boolv("averages", True),
    )
    if cfg.refine < 1:
        raise ConfigError(f"[numerics] refine must be >= 1, got {cfg.refine}")
    if cfg.reference_refine is not None and cfg.reference_refine < 1:
        raise ConfigError(
            f"[numerics] reference_refine must be >= 1, got {cfg.reference_refine}"
        )
    if not cfg.residual_tol > 0.0:
        raise ConfigError(f"[numerics] residual_tol must be > 0, got {cfg.residual_tol}")
    try:
        cfg.lattices()
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path: str) -> RunConfig:
    """Read and parse a configuration file."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config(text)
