"""End-of-iteration synchronization: particle boundary conditions and
migration, current-ghost summation, field-ghost synchronization.

Ghost transfers run as two dimensional sweeps (x then y); corner data is
resolved by composition.  Reflective walls use perfect-conductor imaging:
components staggered primal along the reflected axis are odd (sign -1),
dual components are even (sign +1) -- one rule that covers E, B, J and
rho consistently.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .arena import PARTICLE_FIELDS
from .config import BoundaryKind
from .fields import EM_COMPONENTS, GHOST, STAGGER
from .kernels import FLAG_X_NEG, FLAG_X_POS, FLAG_Y_NEG, FLAG_Y_POS


@lru_cache(maxsize=None)
def _axis_ghost_map(n_patches, n_cells, periodic, dual, pix):
    """Ghost transfers along one axis for the patch at position pix.

    Returns a tuple of (local_index, owner_patch, owner_index, sign)
    entries for every array index not owned by this patch.
    """
    g = GHOST
    shape = n_cells + 1 + 2 * g
    n_total = n_cells * n_patches
    entries = []
    for i in range(shape):
        node = pix * n_cells + i - g
        sign = 1
        if periodic:
            wrapped = node % n_total
        elif dual:
            # mirror about the walls at 0 and n_total (dual sites at k+1/2)
            if node < 0:
                wrapped = -node - 1
            elif node >= n_total:
                wrapped = 2 * n_total - node - 1
            else:
                wrapped = node
        else:
            if node < 0:
                wrapped = -node
                sign = -1
            elif node > n_total:
                wrapped = 2 * n_total - node
                sign = -1
            else:
                wrapped = node
        owner = min(wrapped // n_cells, n_patches - 1)
        oi = wrapped - owner * n_cells + g
        if owner == pix and oi == i:
            continue
        entries.append((i, owner, oi, sign))
    return tuple(entries)


def _fold_axis(domain, arrays_of, dual_x, dual_y, axis):
    """Add ghost rows/columns into their owners along one axis, then zero them."""
    cfg = domain.config
    if axis == 0:
        n_p, n_c = cfg.patches_x, cfg.patch_nx
        periodic = cfg.boundary_x is BoundaryKind.PERIODIC
        dual = dual_x
    else:
        n_p, n_c = cfg.patches_y, cfg.patch_ny
        periodic = cfg.boundary_y is BoundaryKind.PERIODIC
        dual = dual_y
    for p in domain.patches:
        src = arrays_of(p)
        pix = p.patch_ix if axis == 0 else p.patch_iy
        for i, owner, oi, sign in _axis_ghost_map(n_p, n_c, periodic, dual, pix):
            tgt_patch = (
                domain.patch_at(owner, p.patch_iy)
                if axis == 0
                else domain.patch_at(p.patch_ix, owner)
            )
            tgt = arrays_of(tgt_patch)
            if axis == 0:
                if sign > 0:
                    tgt[oi, :] += src[i, :]
                else:
                    tgt[oi, :] -= src[i, :]
                src[i, :] = 0
            else:
                if sign > 0:
                    tgt[:, oi] += src[:, i]
                else:
                    tgt[:, oi] -= src[:, i]
                src[:, i] = 0


def _pull_axis(domain, arrays_of, dual_x, dual_y, axis):
    """Fill ghost rows/columns by copying from their owners along one axis."""
    cfg = domain.config
    if axis == 0:
        n_p, n_c = cfg.patches_x, cfg.patch_nx
        periodic = cfg.boundary_x is BoundaryKind.PERIODIC
        dual = dual_x
    else:
        n_p, n_c = cfg.patches_y, cfg.patch_ny
        periodic = cfg.boundary_y is BoundaryKind.PERIODIC
        dual = dual_y
    for p in domain.patches:
        dst = arrays_of(p)
        pix = p.patch_ix if axis == 0 else p.patch_iy
        for i, owner, oi, sign in _axis_ghost_map(n_p, n_c, periodic, dual, pix):
            src_patch = (
                domain.patch_at(owner, p.patch_iy)
                if axis == 0
                else domain.patch_at(p.patch_ix, owner)
            )
            src = arrays_of(src_patch)
            if axis == 0:
                dst[i, :] = sign * src[oi, :]
            else:
                dst[:, i] = sign * src[:, oi]


def fold_grid_ghosts(domain, component):
    """Sum one grid quantity's ghosts into their owners (x sweep, then y)."""
    dual_x, dual_y = STAGGER[component]
    arrays_of = lambda p: getattr(p.fields, component)
    _fold_axis(domain, arrays_of, dual_x, dual_y, 0)
    _fold_axis(domain, arrays_of, dual_x, dual_y, 1)


def sum_current_ghosts(domain):
    """Fold the fixed-point current accumulators across patch borders.

    Integer adds commute exactly, so the result is independent of the
    patch visit order.  The float J arrays are refreshed afterwards with
    ghosts left at zero.
    """
    for comp, acc in (("jx", "jx_acc"), ("jy", "jy_acc"), ("jz", "jz_acc")):
        dual_x, dual_y = STAGGER[comp]
        arrays_of = lambda p, _a=acc: getattr(p.fields, _a)
        _fold_axis(domain, arrays_of, dual_x, dual_y, 0)
        _fold_axis(domain, arrays_of, dual_x, dual_y, 1)
    for p in domain.patches:
        p.fields.currents_from_accumulators()


def sync_field_ghosts(domain):
    """Copy E and B ghost layers from neighboring interiors (or mirrors)."""
    for comp in EM_COMPONENTS:
        dual_x, dual_y = STAGGER[comp]
        arrays_of = lambda p, _c=comp: getattr(p.fields, _c)
        _pull_axis(domain, arrays_of, dual_x, dual_y, 0)
        _pull_axis(domain, arrays_of, dual_x, dual_y, 1)


class TopologyError(RuntimeError):
    """A migrating particle has no destination patch."""


def _apply_global_bc(cfg, patch, flags, x, y, px, py):
    """Wrap or mirror particles that crossed a global boundary, in place."""
    Lx, Ly = cfg.Lx, cfg.Ly
    if patch.is_last_x:
        m = (flags & FLAG_X_POS) != 0
        if cfg.boundary_x is BoundaryKind.PERIODIC:
            x[m] -= Lx
        else:
            x[m] = np.minimum(2.0 * Lx - x[m], np.nextafter(Lx, 0.0))
            px[m] = -px[m]
    if patch.is_first_x:
        m = (flags & FLAG_X_NEG) != 0
        if cfg.boundary_x is BoundaryKind.PERIODIC:
            x[m] += Lx
        else:
            x[m] = -x[m]
            px[m] = -px[m]
    if patch.is_last_y:
        m = (flags & FLAG_Y_POS) != 0
        if cfg.boundary_y is BoundaryKind.PERIODIC:
            y[m] -= Ly
        else:
            y[m] = np.minimum(2.0 * Ly - y[m], np.nextafter(Ly, 0.0))
            py[m] = -py[m]
    if patch.is_first_y:
        m = (flags & FLAG_Y_NEG) != 0
        if cfg.boundary_y is BoundaryKind.PERIODIC:
            y[m] += Ly
        else:
            y[m] = -y[m]
            py[m] = -py[m]


def apply_particle_bc_and_migrate(domain):
    """Apply flagged boundary conditions, reroute particles to the patch
    containing their final position, and re-sort every arena into
    canonical (bin, id) order.

    Arrival order cannot matter: the canonical sort makes the final
    layout a pure function of the particle set.
    """
    cfg = domain.config
    inv_dx = 1.0 / cfg.dx
    inv_dy = 1.0 / cfg.dy
    n_species = cfg.n_species
    mailboxes = {}

    for p in domain.patches:
        for s in range(n_species):
            arena = p.arenas[s]
            if arena.n == 0:
                continue
            flags = arena.flags
            if not flags.any():
                continue
            moving = np.nonzero(flags)[0]
            block = arena.take(moving)
            _apply_global_bc(
                cfg, p, flags[moving], block["x"], block["y"], block["px"], block["py"]
            )
            cells_x = np.clip(
                np.floor(block["x"] * inv_dx).astype(np.int64), 0, cfg.Lx_cells - 1
            )
            cells_y = np.clip(
                np.floor(block["y"] * inv_dy).astype(np.int64), 0, cfg.Ly_cells - 1
            )
            dest_x = cells_x // cfg.patch_nx
            dest_y = cells_y // cfg.patch_ny
            dest = dest_x * cfg.patches_y + dest_y
            order = np.argsort(dest, kind="stable")
            bounds = np.searchsorted(dest[order], np.arange(cfg.n_patches + 1))
            for flat in np.unique(dest):
                ix, iy = divmod(int(flat), cfg.patches_y)
                try:
                    domain.patch_at(ix, iy)
                except KeyError:
                    raise TopologyError(f"no patch at ({ix}, {iy})") from None
                sel = order[bounds[flat] : bounds[flat + 1]]
                mailboxes.setdefault((ix, iy, s), []).append(
                    {f: block[f][sel] for f in PARTICLE_FIELDS}
                )
            keep = np.nonzero(flags == 0)[0]
            arena.replace(**arena.take(keep))

    for p in domain.patches:
        for s in range(n_species):
            arena = p.arenas[s]
            arrivals = mailboxes.get((p.patch_ix, p.patch_iy, s))
            if arrivals:
                parts = [arena.take(np.arange(arena.n))] + arrivals
                merged = {
                    f: np.concatenate([blk[f] for blk in parts])
                    for f in PARTICLE_FIELDS
                }
                arena.replace(**merged)
            p.sort_arena(s)
