"""taskpic: a miniature 2D3V electromagnetic particle-in-cell engine.

The macro-particle pipeline (Interpolation, Push, pre-BC, Projection,
Reduction) runs under two interchangeable execution modes: dynamically
scheduled per-patch loops ("tasks off") and a dependency-driven task graph
over (patch, species, bin) work units ("tasks on").  Both modes produce
bitwise-identical physics for any worker count, which is the backbone of
the test suite.

Normalization: lengths in c/w_r, times in 1/w_r, momenta in m_e*c,
temperatures in m_e*c^2, densities in n_c, fields in m_e*c*w_r/e,
currents in e*n_c*c, for an arbitrary reference frequency w_r.
"""

from .config import (
    BoundaryKind,
    ConfigError,
    DensityProfile,
    Mode,
    SimConfig,
    SpeciesSpec,
    load_config_file,
)
from .domain import Domain, Patch, build_domain
from .arena import ParticleArena, GatherBuffer, sort_into_bins
from .fields import FieldSet, BinSubgrid
from .runtime import DepTag, Task, TaskGraph, TraceEvent
from .scheduler import SimulationReport, run_simulation
from .balance import LoadReport, compute_loads, rebalance
from .bench import builtin_benchmarks

__all__ = [
    "BoundaryKind",
    "BinSubgrid",
    "ConfigError",
    "DensityProfile",
    "DepTag",
    "Domain",
    "FieldSet",
    "GatherBuffer",
    "LoadReport",
    "Mode",
    "ParticleArena",
    "Patch",
    "SimConfig",
    "SimulationReport",
    "SpeciesSpec",
    "Task",
    "TaskGraph",
    "TraceEvent",
    "build_domain",
    "builtin_benchmarks",
    "compute_loads",
    "load_config_file",
    "rebalance",
    "run_simulation",
    "sort_into_bins",
]

__version__ = "0.1.0"
