"""Domain construction: patches, collections, initial particle loading."""

from __future__ import annotations

import numpy as np

from .arena import GatherBuffer, ParticleArena, sort_into_bins
from .config import BoundaryKind, ConfigError
from .curve import hilbert_order, split_curve_min_max
from .fields import BinSubgrid, FieldSet
from . import kernels


class Patch:
    """One rectangular cell block with its fields, particles and buffers."""

    def __init__(self, ix, iy, config):
        self.patch_ix = ix
        self.patch_iy = iy
        self.nx = config.patch_nx
        self.ny = config.patch_ny
        self.dx = config.dx
        self.dy = config.dy
        self.cell0x = ix * self.nx
        self.cell0y = iy * self.ny
        self.xmin = self.cell0x * config.dx
        self.xmax = (self.cell0x + self.nx) * config.dx
        self.ymin = self.cell0y * config.dy
        self.ymax = (self.cell0y + self.ny) * config.dy
        self.n_bins = config.n_bins
        self.bin_x_size = config.bin_x_size
        self.is_first_x = ix == 0
        self.is_last_x = ix == config.patches_x - 1
        self.is_first_y = iy == 0
        self.is_last_y = iy == config.patches_y - 1
        self.reflective_x = config.boundary_x is BoundaryKind.REFLECTIVE
        self.reflective_y = config.boundary_y is BoundaryKind.REFLECTIVE
        self.owns_wall_x = self.is_last_x and self.reflective_x
        self.owns_wall_y = self.is_last_y and self.reflective_y
        self.fields = FieldSet(self.nx, self.ny)
        self.arenas = [ParticleArena(self.n_bins) for _ in config.species_specs]
        self.subgrids = [
            [BinSubgrid(self.bin_x_size, self.ny, b) for b in range(self.n_bins)]
            for _ in config.species_specs
        ]
        self.buffers = [GatherBuffer() for _ in config.species_specs]
        self.owner_collection = 0

    def particle_count(self, ispec=None):
        if ispec is None:
            return sum(a.n for a in self.arenas)
        return self.arenas[ispec].n

    def sort_arena(self, ispec):
        sort_into_bins(
            self.arenas[ispec], self.cell0x, self.nx, self.bin_x_size, 1.0 / self.dx
        )


class Domain:
    """All patches plus the curve ordering and collection assignment."""

    def __init__(self, config):
        self.config = config
        self.curve = hilbert_order(config.patches_x, config.patches_y)
        self.patches = [Patch(ix, iy, config) for ix, iy in self.curve]
        self._by_coord = {(p.patch_ix, p.patch_iy): p for p in self.patches}
        self.species = list(config.species_specs)

    def patch_at(self, ix, iy):
        return self._by_coord[(ix, iy)]

    def collections(self):
        """Patches grouped by owning collection, curve order within each."""
        groups = [[] for _ in range(self.config.n_collections)]
        for p in self.patches:
            groups[p.owner_collection].append(p)
        return groups

    def assign_curve_segments(self, cuts):
        for c, (start, stop) in enumerate(cuts):
            for p in self.patches[start:stop]:
                p.owner_collection = c

    def particle_count(self):
        return sum(p.particle_count() for p in self.patches)

    def sized_buffer_count(self):
        return sum(
            1
            for p in self.patches
            for b in p.buffers
            if b.state == GatherBuffer.SIZED
        )


def _lattice_positions(cfg, spec, cells_ix):
    """Positions, weights and ids for a regular per-cell lattice.

    Canonical creation order: ascending cell ix, then cell iy, then the
    in-cell lattice row-major; ids follow this order, which keeps layouts
    identical for any patch decomposition or worker count.
    """
    side = spec.lattice_side
    ppc = spec.particles_per_cell
    n_cells = len(cells_ix) * cfg.Ly_cells
    n = n_cells * ppc
    ix = np.repeat(np.asarray(cells_ix, np.int64), cfg.Ly_cells * ppc)
    iy = np.tile(np.repeat(np.arange(cfg.Ly_cells, dtype=np.int64), ppc), len(cells_ix))
    a = np.tile(np.repeat(np.arange(side), side), n_cells)
    b = np.tile(np.arange(side), n_cells * side)
    x = (ix + (a + 0.5) / side) * cfg.dx
    y = (iy + (b + 0.5) / side) * cfg.dy
    weight = np.full(n, spec.density_profile.n0 / ppc)
    ids = np.arange(n, dtype=np.int64)
    return x, y, weight, ids, ix, iy


def _thermal_momenta(spec, n, rng_seed, spec_index):
    """Seeded Gaussian momenta of variance mass * temperature, per id."""
    if spec.temperature == 0.0 or n == 0:
        z = np.zeros(n)
        return z, z.copy(), z.copy()
    rng = np.random.default_rng([rng_seed, spec_index])
    sigma = np.sqrt(spec.mass * spec.temperature)
    p = rng.normal(0.0, sigma, (n, 3))
    return p[:, 0].copy(), p[:, 1].copy(), p[:, 2].copy()


def build_domain(config):
    """Validated config -> fully initialized Domain.

    Patches go to collections as contiguous Hilbert-curve segments;
    particles are laid out on a regular per-cell lattice with seeded
    thermal momenta; fields start at zero except rho, deposited from the
    initial particles.
    """
    if not isinstance(config.mode, object):  # pragma: no cover - guard
        raise ConfigError("bad config object")
    config.validate()
    dom = Domain(config)
    cuts = split_curve_min_max([1.0] * len(dom.patches), config.n_collections)
    dom.assign_curve_segments(cuts)

    for s_idx, spec in enumerate(config.species_specs):
        if spec.density_profile.kind == "uniform":
            cells_ix = np.arange(config.Lx_cells, dtype=np.int64)
        else:
            centers = (np.arange(config.Lx_cells) + 0.5) * config.dx
            dens = np.array([spec.density_profile.density_at(c) for c in centers])
            cells_ix = np.nonzero(dens > 0.0)[0].astype(np.int64)
        x, y, weight, ids, ix, iy = _lattice_positions(config, spec, cells_ix)
        px, py, pz = _thermal_momenta(spec, len(x), config.rng_seed, s_idx)
        pidx = (ix // config.patch_nx) * config.patches_y + (iy // config.patch_ny)
        order = np.argsort(pidx, kind="stable")
        pidx = pidx[order]
        bounds = np.searchsorted(pidx, np.arange(config.n_patches + 1))
        for p in dom.patches:
            flat = p.patch_ix * config.patches_y + p.patch_iy
            sel = order[bounds[flat] : bounds[flat + 1]]
            p.arenas[s_idx] = ParticleArena(
                config.n_bins,
                x=x[sel], y=y[sel], px=px[sel], py=py[sel], pz=pz[sel],
                weight=weight[sel], id=ids[sel],
            )
            p.sort_arena(s_idx)

    _deposit_initial_rho(dom)
    return dom


def _deposit_initial_rho(dom):
    from .exchange import fold_grid_ghosts

    for p in dom.patches:
        p.fields.rho[:] = 0.0
        for s_idx, spec in enumerate(dom.species):
            a = p.arenas[s_idx]
            kernels.deposit_rho(
                a.x, a.y, a.weight, 0, a.n, p.fields.rho,
                spec.charge, 1.0 / p.dx, 1.0 / p.dy, p.cell0x, p.cell0y,
            )
    fold_grid_ghosts(dom, "rho")
