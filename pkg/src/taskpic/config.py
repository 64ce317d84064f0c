"""Simulation configuration: domain geometry, decomposition, species."""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from enum import Enum


class ConfigError(ValueError):
    """Raised when a configuration violates an invariant."""


class Mode(Enum):
    TASKS_OFF = "tasks_off"
    TASKS_ON = "tasks_on"


class BoundaryKind(Enum):
    PERIODIC = "periodic"
    REFLECTIVE = "reflective"


class DensityProfile:
    """Density profile in units of the critical density n_c."""

    def __init__(self, kind, n0, x_min=None, x_max=None):
        if kind not in ("uniform", "slab_x"):
            raise ConfigError(f"unknown density profile kind {kind!r}")
        self.kind = kind
        self.n0 = float(n0)
        self.x_min = x_min if x_min is None else float(x_min)
        self.x_max = x_max if x_max is None else float(x_max)

    @classmethod
    def uniform(cls, n0):
        return cls("uniform", n0)

    @classmethod
    def slab_x(cls, n0, x_min, x_max):
        return cls("slab_x", n0, x_min, x_max)

    def density_at(self, x):
        if self.kind == "uniform":
            return self.n0
        return self.n0 if self.x_min <= x < self.x_max else 0.0

    def __repr__(self):
        if self.kind == "uniform":
            return f"DensityProfile.uniform({self.n0})"
        return f"DensityProfile.slab_x({self.n0}, {self.x_min}, {self.x_max})"


@dataclass
class SpeciesSpec:
    """One macro-particle species.

    charge in units of e, mass in m_e, temperature in m_e*c^2.
    particles_per_cell must admit a regular s x s lattice per cell.
    """

    name: str
    charge: float
    mass: float
    density_profile: DensityProfile
    temperature: float
    particles_per_cell: int
    init_layout: str = "regular"

    def validate(self):
        if self.mass <= 0:
            raise ConfigError(f"species {self.name}: mass must be positive")
        if self.temperature < 0:
            raise ConfigError(f"species {self.name}: temperature must be non-negative")
        if self.init_layout != "regular":
            raise ConfigError(f"species {self.name}: unknown init layout {self.init_layout!r}")
        side = math.isqrt(self.particles_per_cell)
        if side * side != self.particles_per_cell or side < 1:
            raise ConfigError(
                f"species {self.name}: particles_per_cell={self.particles_per_cell} "
                "is not a perfect square (regular 2D layout)"
            )

    @property
    def lattice_side(self):
        return math.isqrt(self.particles_per_cell)


MIN_PATCH_EXTENT = 6  # order-2 stencil (3 points) + 3 ghost cells


@dataclass
class SimConfig:
    Lx_cells: int
    Ly_cells: int
    dx: float
    dy: float
    dt: float
    patches_x: int
    patches_y: int
    bin_x_size: int
    n_collections: int
    workers_per_collection: int
    mode: Mode
    n_iterations: int
    lb_period: int
    boundary_x: BoundaryKind
    boundary_y: BoundaryKind
    species_specs: list = field(default_factory=list)
    rng_seed: int = 0

    def validate(self):
        """Check every invariant; raise ConfigError naming the first violation."""
        if self.Lx_cells <= 0 or self.Ly_cells <= 0:
            raise ConfigError("grid extents must be positive")
        if self.patches_x <= 0 or self.patches_y <= 0:
            raise ConfigError("patch counts must be positive")
        if self.Lx_cells % self.patches_x != 0:
            raise ConfigError(
                f"Lx_cells={self.Lx_cells} not divisible by patches_x={self.patches_x}"
            )
        if self.Ly_cells % self.patches_y != 0:
            raise ConfigError(
                f"Ly_cells={self.Ly_cells} not divisible by patches_y={self.patches_y}"
            )
        nx = self.Lx_cells // self.patches_x
        ny = self.Ly_cells // self.patches_y
        if nx < MIN_PATCH_EXTENT or ny < MIN_PATCH_EXTENT:
            raise ConfigError(
                f"patch extent {nx}x{ny} below minimum {MIN_PATCH_EXTENT} "
                "(interpolation stencil + ghost cells)"
            )
        if self.bin_x_size <= 0 or nx % self.bin_x_size != 0:
            raise ConfigError(
                f"bin_x_size={self.bin_x_size} does not divide patch x-extent {nx}"
            )
        if self.dx <= 0 or self.dy <= 0:
            raise ConfigError("cell sizes must be positive")
        courant = self.dx * self.dy / math.hypot(self.dx, self.dy)
        if not 0 < self.dt < courant:
            raise ConfigError(
                f"dt={self.dt} violates the 2D Courant condition dt < {courant:.6g}"
            )
        if self.n_collections < 1:
            raise ConfigError("n_collections must be >= 1")
        if self.workers_per_collection < 1:
            raise ConfigError("workers_per_collection must be >= 1")
        if self.n_iterations < 0:
            raise ConfigError("n_iterations must be >= 0")
        if self.lb_period < 0:
            raise ConfigError("lb_period must be >= 0 (0 disables balancing)")
        if not self.species_specs:
            raise ConfigError("at least one species is required")
        names = set()
        for spec in self.species_specs:
            spec.validate()
            if spec.name in names:
                raise ConfigError(f"duplicate species name {spec.name!r}")
            names.add(spec.name)
        return self

    # Derived geometry helpers used throughout the engine.
    @property
    def patch_nx(self):
        return self.Lx_cells // self.patches_x

    @property
    def patch_ny(self):
        return self.Ly_cells // self.patches_y

    @property
    def n_bins(self):
        return self.patch_nx // self.bin_x_size

    @property
    def n_patches(self):
        return self.patches_x * self.patches_y

    @property
    def Lx(self):
        return self.Lx_cells * self.dx

    @property
    def Ly(self):
        return self.Ly_cells * self.dy

    @property
    def n_species(self):
        return len(self.species_specs)


def _parse_mode(text):
    try:
        return Mode(text.strip().lower())
    except ValueError:
        raise ConfigError(f"unknown mode {text!r} (expected tasks_on or tasks_off)") from None


def _parse_boundary(text):
    try:
        return BoundaryKind(text.strip().lower())
    except ValueError:
        raise ConfigError(
            f"unknown boundary {text!r} (expected periodic or reflective)"
        ) from None


def _parse_profile(text):
    """Parse 'uniform:n0' or 'slab_x:n0,x_min,x_max'."""
    kind, _, args = text.partition(":")
    kind = kind.strip().lower()
    parts = [p.strip() for p in args.split(",") if p.strip()]
    try:
        if kind == "uniform" and len(parts) == 1:
            return DensityProfile.uniform(float(parts[0]))
        if kind == "slab_x" and len(parts) == 3:
            return DensityProfile.slab_x(*map(float, parts))
    except ValueError:
        pass
    raise ConfigError(f"bad density profile {text!r}")


def load_config_file(path):
    """Load a SimConfig from an INI file.

    Sections: [grid], [decomposition], [run], [boundaries], and one
    [species:<name>] per species.  The result is validated.
    """
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    try:
        grid = parser["grid"]
        dec = parser["decomposition"]
        run = parser["run"]
        bnd = parser["boundaries"]
        species = []
        for section in parser.sections():
            if not section.startswith("species:"):
                continue
            sp = parser[section]
            species.append(
                SpeciesSpec(
                    name=section.split(":", 1)[1],
                    charge=sp.getfloat("charge"),
                    mass=sp.getfloat("mass"),
                    density_profile=_parse_profile(sp.get("density")),
                    temperature=sp.getfloat("temperature"),
                    particles_per_cell=sp.getint("particles_per_cell"),
                )
            )
        cfg = SimConfig(
            Lx_cells=grid.getint("Lx_cells"),
            Ly_cells=grid.getint("Ly_cells"),
            dx=grid.getfloat("dx"),
            dy=grid.getfloat("dy"),
            dt=grid.getfloat("dt"),
            patches_x=dec.getint("patches_x"),
            patches_y=dec.getint("patches_y"),
            bin_x_size=dec.getint("bin_x_size"),
            n_collections=dec.getint("n_collections", fallback=1),
            workers_per_collection=dec.getint("workers_per_collection", fallback=1),
            mode=_parse_mode(run.get("mode", "tasks_off")),
            n_iterations=run.getint("n_iterations"),
            lb_period=run.getint("lb_period", fallback=0),
            boundary_x=_parse_boundary(bnd.get("x", "periodic")),
            boundary_y=_parse_boundary(bnd.get("y", "periodic")),
            species_specs=species,
            rng_seed=run.getint("rng_seed", fallback=0),
        )
    except (KeyError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed config file {path}: {exc}") from exc
    return cfg.validate()
