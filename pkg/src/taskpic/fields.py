"""Staggered field storage per patch and the FDTD update.

Array layout convention, shared by every grid quantity:

* one 2D array of shape ``(nx + 1 + 2g, ny + 1 + 2g)`` per component,
  where ``nx x ny`` is the patch cell extent and ``g = 3`` the ghost width;
* local index ``i`` maps to global coordinate ``cell0 + (i - g)`` cells,
  plus half a cell for components staggered "dual" along that axis;
* the patch owns indices ``[g, g + n)`` per axis; on a reflective axis the
  last patch additionally owns the wall column/row ``g + n`` of components
  staggered primal along that axis.

Yee staggering: Ex,Jx dual-x; Ey,Jy dual-y; Ez,Jz,rho primal; Bx dual-y;
By dual-x; Bz dual-xy.

Current densities are accumulated in 64-bit fixed point (quantum
``2**-J_SCALE_BITS``) so that bin reduction and ghost summation are exact
integer adds: the final J is independent of summation order, which makes
runs bitwise reproducible across execution modes, worker counts and
patch decompositions.
"""

from __future__ import annotations

import numpy as np

GHOST = 3
J_SCALE_BITS = 44
J_SCALE = float(2**J_SCALE_BITS)
INV_J_SCALE = 1.0 / J_SCALE

# staggering flags per component: (dual_x, dual_y)
STAGGER = {
    "ex": (True, False),
    "ey": (False, True),
    "ez": (False, False),
    "bx": (False, True),
    "by": (True, False),
    "bz": (True, True),
    "jx": (True, False),
    "jy": (False, True),
    "jz": (False, False),
    "rho": (False, False),
}

EM_COMPONENTS = ("ex", "ey", "ez", "bx", "by", "bz")
J_COMPONENTS = ("jx", "jy", "jz")


def grid_shape(nx, ny):
    return (nx + 1 + 2 * GHOST, ny + 1 + 2 * GHOST)


class FieldSet:
    """Electromagnetic fields, currents and charge density of one patch."""

    def __init__(self, nx, ny):
        shape = grid_shape(nx, ny)
        self.nx = nx
        self.ny = ny
        for name in EM_COMPONENTS + J_COMPONENTS + ("rho",):
            setattr(self, name, np.zeros(shape))
        # fixed-point accumulators for the current deposition pipeline
        self.jx_acc = np.zeros(shape, np.int64)
        self.jy_acc = np.zeros(shape, np.int64)
        self.jz_acc = np.zeros(shape, np.int64)

    @property
    def shape(self):
        return self.ex.shape

    def zero_current_accumulators(self):
        self.jx_acc[:] = 0
        self.jy_acc[:] = 0
        self.jz_acc[:] = 0

    def currents_from_accumulators(self):
        """Convert the integer accumulators into the float J arrays."""
        np.multiply(self.jx_acc, INV_J_SCALE, out=self.jx)
        np.multiply(self.jy_acc, INV_J_SCALE, out=self.jy)
        np.multiply(self.jz_acc, INV_J_SCALE, out=self.jz)


class BinSubgrid:
    """Per-(species, bin) local current grid: bin cells plus ghosts."""

    def __init__(self, bin_x_size, ny, ibin):
        shape = grid_shape(bin_x_size, ny)
        self.bin_x_size = bin_x_size
        self.x_shift = ibin * bin_x_size
        self.jx = np.zeros(shape)
        self.jy = np.zeros(shape)
        self.jz = np.zeros(shape)

    def zero(self):
        self.jx[:] = 0.0
        self.jy[:] = 0.0
        self.jz[:] = 0.0


def reduce_bin_currents(patch, ispec):
    """Add all bin subgrids of one species into the patch accumulators.

    Bins are taken in ascending order; each subgrid (ghosts included) is
    quantized to fixed point once and added at its x-shift, then zeroed.
    """
    f = patch.fields
    for sub in patch.subgrids[ispec]:
        x0 = sub.x_shift
        x1 = x0 + sub.jx.shape[0]
        f.jx_acc[x0:x1, :] += np.rint(sub.jx * J_SCALE).astype(np.int64)
        f.jy_acc[x0:x1, :] += np.rint(sub.jy * J_SCALE).astype(np.int64)
        f.jz_acc[x0:x1, :] += np.rint(sub.jz * J_SCALE).astype(np.int64)
        sub.zero()


def owned_slices(patch, component):
    """(x_slice, y_slice) of the indices this patch owns for a component."""
    g = GHOST
    dual_x, dual_y = STAGGER[component]
    hi_x = g + patch.nx
    hi_y = g + patch.ny
    if not dual_x and patch.owns_wall_x:
        hi_x += 1
    if not dual_y and patch.owns_wall_y:
        hi_y += 1
    return slice(g, hi_x), slice(g, hi_y)


def maxwell_step(patch, dt):
    """Advance E and B one step: B half-step, E full step with -J, B half.

    Updates owned indices only; ghost layers are refreshed afterwards by
    the field synchronization.  Tangential E and normal B are pinned to
    zero on reflective walls (perfect conductor).
    """
    f = patch.fields
    hdtx = 0.5 * dt / patch.dx
    hdty = 0.5 * dt / patch.dy
    _half_b(f, patch, hdtx, hdty)
    _full_e(f, patch, dt)
    _half_b(f, patch, hdtx, hdty)
    _pin_walls(f, patch)


def _half_b(f, patch, hdtx, hdty):
    sx, sy = owned_slices(patch, "bx")
    f.bx[sx, sy] -= hdty * (f.ez[sx, sy.start + 1 : sy.stop + 1] - f.ez[sx, sy])
    sx, sy = owned_slices(patch, "by")
    f.by[sx, sy] += hdtx * (f.ez[sx.start + 1 : sx.stop + 1, sy] - f.ez[sx, sy])
    sx, sy = owned_slices(patch, "bz")
    f.bz[sx, sy] -= (
        hdtx * (f.ey[sx.start + 1 : sx.stop + 1, sy] - f.ey[sx, sy])
        - hdty * (f.ex[sx, sy.start + 1 : sy.stop + 1] - f.ex[sx, sy])
    )


def _full_e(f, patch, dt):
    dtx = dt / patch.dx
    dty = dt / patch.dy
    sx, sy = owned_slices(patch, "ex")
    f.ex[sx, sy] += dty * (f.bz[sx, sy] - f.bz[sx, sy.start - 1 : sy.stop - 1]) - dt * f.jx[sx, sy]
    sx, sy = owned_slices(patch, "ey")
    f.ey[sx, sy] += -dtx * (f.bz[sx, sy] - f.bz[sx.start - 1 : sx.stop - 1, sy]) - dt * f.jy[sx, sy]
    sx, sy = owned_slices(patch, "ez")
    f.ez[sx, sy] += (
        dtx * (f.by[sx, sy] - f.by[sx.start - 1 : sx.stop - 1, sy])
        - dty * (f.bx[sx, sy] - f.bx[sx, sy.start - 1 : sy.stop - 1])
        - dt * f.jz[sx, sy]
    )


def _pin_walls(f, patch):
    g = GHOST
    if patch.is_first_x and patch.reflective_x:
        f.ey[g, :] = 0.0
        f.ez[g, :] = 0.0
        f.bx[g, :] = 0.0
    if patch.owns_wall_x:
        f.ey[g + patch.nx, :] = 0.0
        f.ez[g + patch.nx, :] = 0.0
        f.bx[g + patch.nx, :] = 0.0
    if patch.is_first_y and patch.reflective_y:
        f.ex[:, g] = 0.0
        f.ez[:, g] = 0.0
        f.by[:, g] = 0.0
    if patch.owns_wall_y:
        f.ex[:, g + patch.ny] = 0.0
        f.ez[:, g + patch.ny] = 0.0
        f.by[:, g + patch.ny] = 0.0
