"""Grid assembly and physics diagnostics (charge, Gauss residual, energy)."""

from __future__ import annotations

import numpy as np

from .config import BoundaryKind
from .exchange import fold_grid_ghosts
from .fields import GHOST, STAGGER, owned_slices
from . import kernels


def assemble_global(domain, component):
    """Stitch one grid quantity's owned values into a single global array."""
    cfg = domain.config
    dual_x, dual_y = STAGGER[component]
    extra_x = 1 if (not dual_x and cfg.boundary_x is BoundaryKind.REFLECTIVE) else 0
    extra_y = 1 if (not dual_y and cfg.boundary_y is BoundaryKind.REFLECTIVE) else 0
    out = np.zeros((cfg.Lx_cells + extra_x, cfg.Ly_cells + extra_y))
    for p in domain.patches:
        sx, sy = owned_slices(p, component)
        nx_own = sx.stop - sx.start
        ny_own = sy.stop - sy.start
        out[
            p.cell0x : p.cell0x + nx_own, p.cell0y : p.cell0y + ny_own
        ] = getattr(p.fields, component)[sx, sy]
    return out


def deposit_charge_density(domain):
    """Recompute rho on every patch from the current particles."""
    for p in domain.patches:
        p.fields.rho[:] = 0.0
        for s_idx, spec in enumerate(domain.species):
            a = p.arenas[s_idx]
            kernels.deposit_rho(
                a.x, a.y, a.weight, 0, a.n, p.fields.rho,
                spec.charge, 1.0 / p.dx, 1.0 / p.dy, p.cell0x, p.cell0y,
            )
    fold_grid_ghosts(domain, "rho")


def gauss_residual(domain, refresh_rho=True):
    """Global (div E - rho) at primal nodes; periodic boundaries only."""
    cfg = domain.config
    if (
        cfg.boundary_x is not BoundaryKind.PERIODIC
        or cfg.boundary_y is not BoundaryKind.PERIODIC
    ):
        raise ValueError("gauss_residual supports periodic boundaries only")
    if refresh_rho:
        deposit_charge_density(domain)
    ex = assemble_global(domain, "ex")
    ey = assemble_global(domain, "ey")
    rho = assemble_global(domain, "rho")
    div = (ex - np.roll(ex, 1, axis=0)) / cfg.dx + (ey - np.roll(ey, 1, axis=1)) / cfg.dy
    return div - rho


def field_energy(domain):
    """Total electromagnetic energy over owned nodes [n_c m_e c^2 cell]."""
    total = 0.0
    for p in domain.patches:
        f = p.fields
        for comp in ("ex", "ey", "ez", "bx", "by", "bz"):
            sx, sy = owned_slices(p, comp)
            arr = getattr(f, comp)[sx, sy]
            total += 0.5 * float(np.sum(arr * arr))
    return total


def kinetic_energy(domain):
    """Total macro-particle kinetic energy [n_c m_e c^2 cell]."""
    total = 0.0
    for s_idx, spec in enumerate(domain.species):
        inv_m2 = 1.0 / (spec.mass * spec.mass)
        for p in domain.patches:
            a = p.arenas[s_idx]
            if a.n == 0:
                continue
            gam = np.sqrt(1.0 + (a.px**2 + a.py**2 + a.pz**2) * inv_m2)
            total += spec.mass * float(np.sum(a.weight * (gam - 1.0)))
    return total


def total_energy(domain):
    return field_energy(domain) + kinetic_energy(domain)


def particle_counts_by_patch(domain):
    """(species, patch_ix, patch_iy) -> count, in deterministic order."""
    rows = []
    for s_idx, spec in enumerate(domain.species):
        for p in sorted(domain.patches, key=lambda q: (q.patch_ix, q.patch_iy)):
            rows.append((spec.name, p.patch_ix, p.patch_iy, p.arenas[s_idx].n))
    return rows


def state_signature(domain):
    """Concatenated bytes of all owned fields and canonical particle arrays.

    Two runs are bitwise identical iff their signatures match; used by the
    determinism tests.
    """
    chunks = []
    for comp in ("ex", "ey", "ez", "bx", "by", "bz", "jx", "jy", "jz"):
        chunks.append(assemble_global(domain, comp).tobytes())
    for s_idx in range(len(domain.species)):
        ids = []
        fields = {f: [] for f in ("x", "y", "px", "py", "pz", "weight")}
        for p in domain.patches:
            a = p.arenas[s_idx]
            ids.append(a.id)
            for f in fields:
                fields[f].append(getattr(a, f))
        ids = np.concatenate(ids) if ids else np.zeros(0, np.int64)
        order = np.argsort(ids)
        chunks.append(ids[order].tobytes())
        for f in ("x", "y", "px", "py", "pz", "weight"):
            arr = np.concatenate(fields[f]) if fields[f] else np.zeros(0)
            chunks.append(arr[order].tobytes())
    return b"".join(chunks)
