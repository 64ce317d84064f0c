"""Macro-particle operators: gather, Boris push, boundary flags, Esirkepov
current deposition, charge deposition.

All kernels are numba-compiled, single-threaded and GIL-free; parallelism
is imposed from outside by the schedulers.  Each kernel touches only the
particle index range ``[s0, s1)`` and its declared grid arrays, which is
exactly the footprint the task dependence tags encode.

Positions are global; grid indexing uses the nearest-node convention for
order-2 splines: primal index ``i0 = floor(x/dx + 1/2)``, displacement
``delta = x/dx - i0`` in [-1/2, 1/2), and the dual equivalents shifted by
half a cell.  fastmath stays off: runs must be bitwise reproducible.
"""

from __future__ import annotations

import os

import numpy as np
from numba import njit

from .fields import GHOST

_NUMBA_OPTS = dict(
    cache=True,
    nogil=True,
    fastmath=False,
    error_model="numpy",
    boundscheck=bool(int(os.environ.get("TASKPIC_BOUNDSCHECK", "0"))),
)

# bc flag bits (pre-BC classification, applied later by the exchange)
FLAG_STAY = 0
FLAG_X_NEG = 1
FLAG_X_POS = 2
FLAG_Y_NEG = 4
FLAG_Y_POS = 8


def spline_weights(delta):
    """Order-2 B-spline weights (w_m1, w_0, w_p1) for |delta| <= 1/2."""
    if abs(delta) > 0.5:
        raise ValueError(f"spline displacement {delta} outside [-0.5, 0.5]")
    return (
        0.5 * (0.5 - delta) ** 2,
        0.75 - delta * delta,
        0.5 * (0.5 + delta) ** 2,
    )


@njit(**_NUMBA_OPTS)
def gather_fields(x, y, s0, s1, ex, ey, ez, bx, by, bz,
                  cix, ciy, dlx, dly, epx, epy, epz, bpx, bpy, bpz,
                  inv_dx, inv_dy, cell0x, cell0y):
    """Interpolate the six field components to each particle in [s0, s1).

    Writes the particle's primal cell index/displacement and the gathered
    E and B into the per-(patch, species) buffer arrays.
    """
    g = GHOST
    for n in range(s0, s1):
        xn = x[n] * inv_dx
        yn = y[n] * inv_dy
        ip = int(xn + 0.5)
        jp = int(yn + 0.5)
        dxp = xn - ip
        dyp = yn - jp
        idu = int(xn)
        jdu = int(yn)
        dxd = xn - 0.5 - idu
        dyd = yn - 0.5 - jdu
        cix[n] = ip
        ciy[n] = jp
        dlx[n] = dxp
        dly[n] = dyp
        wxp0 = 0.5 * (0.5 - dxp) ** 2
        wxp1 = 0.75 - dxp * dxp
        wxp2 = 0.5 * (0.5 + dxp) ** 2
        wyp0 = 0.5 * (0.5 - dyp) ** 2
        wyp1 = 0.75 - dyp * dyp
        wyp2 = 0.5 * (0.5 + dyp) ** 2
        wxd0 = 0.5 * (0.5 - dxd) ** 2
        wxd1 = 0.75 - dxd * dxd
        wxd2 = 0.5 * (0.5 + dxd) ** 2
        wyd0 = 0.5 * (0.5 - dyd) ** 2
        wyd1 = 0.75 - dyd * dyd
        wyd2 = 0.5 * (0.5 + dyd) ** 2
        ap = ip - cell0x + g
        bp = jp - cell0y + g
        ad = idu - cell0x + g
        bd = jdu - cell0y + g
        epx[n] = (
            wxd0 * (wyp0 * ex[ad - 1, bp - 1] + wyp1 * ex[ad - 1, bp] + wyp2 * ex[ad - 1, bp + 1])
            + wxd1 * (wyp0 * ex[ad, bp - 1] + wyp1 * ex[ad, bp] + wyp2 * ex[ad, bp + 1])
            + wxd2 * (wyp0 * ex[ad + 1, bp - 1] + wyp1 * ex[ad + 1, bp] + wyp2 * ex[ad + 1, bp + 1])
        )
        epy[n] = (
            wxp0 * (wyd0 * ey[ap - 1, bd - 1] + wyd1 * ey[ap - 1, bd] + wyd2 * ey[ap - 1, bd + 1])
            + wxp1 * (wyd0 * ey[ap, bd - 1] + wyd1 * ey[ap, bd] + wyd2 * ey[ap, bd + 1])
            + wxp2 * (wyd0 * ey[ap + 1, bd - 1] + wyd1 * ey[ap + 1, bd] + wyd2 * ey[ap + 1, bd + 1])
        )
        epz[n] = (
            wxp0 * (wyp0 * ez[ap - 1, bp - 1] + wyp1 * ez[ap - 1, bp] + wyp2 * ez[ap - 1, bp + 1])
            + wxp1 * (wyp0 * ez[ap, bp - 1] + wyp1 * ez[ap, bp] + wyp2 * ez[ap, bp + 1])
            + wxp2 * (wyp0 * ez[ap + 1, bp - 1] + wyp1 * ez[ap + 1, bp] + wyp2 * ez[ap + 1, bp + 1])
        )
        bpx[n] = (
            wxp0 * (wyd0 * bx[ap - 1, bd - 1] + wyd1 * bx[ap - 1, bd] + wyd2 * bx[ap - 1, bd + 1])
            + wxp1 * (wyd0 * bx[ap, bd - 1] + wyd1 * bx[ap, bd] + wyd2 * bx[ap, bd + 1])
            + wxp2 * (wyd0 * bx[ap + 1, bd - 1] + wyd1 * bx[ap + 1, bd] + wyd2 * bx[ap + 1, bd + 1])
        )
        bpy[n] = (
            wxd0 * (wyp0 * by[ad - 1, bp - 1] + wyp1 * by[ad - 1, bp] + wyp2 * by[ad - 1, bp + 1])
            + wxd1 * (wyp0 * by[ad, bp - 1] + wyp1 * by[ad, bp] + wyp2 * by[ad, bp + 1])
            + wxd2 * (wyp0 * by[ad + 1, bp - 1] + wyp1 * by[ad + 1, bp] + wyp2 * by[ad + 1, bp + 1])
        )
        bpz[n] = (
            wxd0 * (wyd0 * bz[ad - 1, bd - 1] + wyd1 * bz[ad - 1, bd] + wyd2 * bz[ad - 1, bd + 1])
            + wxd1 * (wyd0 * bz[ad, bd - 1] + wyd1 * bz[ad, bd] + wyd2 * bz[ad, bd + 1])
            + wxd2 * (wyd0 * bz[ad + 1, bd - 1] + wyd1 * bz[ad + 1, bd] + wyd2 * bz[ad + 1, bd + 1])
        )


@njit(**_NUMBA_OPTS)
def boris_push(x, y, px, py, pz, s0, s1,
               epx, epy, epz, bpx, bpy, bpz, charge, mass, dt):
    """Relativistic Boris rotation with half-step electric kicks, then the
    position advance x += (p/gamma/m) dt.  Returns the index of the first
    particle whose momentum became non-finite, or -1.
    """
    qd2 = charge * dt * 0.5
    inv_m2 = 1.0 / (mass * mass)
    bad = -1
    for n in range(s0, s1):
        pxm = px[n] + qd2 * epx[n]
        pym = py[n] + qd2 * epy[n]
        pzm = pz[n] + qd2 * epz[n]
        gm = np.sqrt(1.0 + (pxm * pxm + pym * pym + pzm * pzm) * inv_m2)
        tf = qd2 / (gm * mass)
        tx = tf * bpx[n]
        ty = tf * bpy[n]
        tz = tf * bpz[n]
        sf = 2.0 / (1.0 + tx * tx + ty * ty + tz * tz)
        sx = tx * sf
        sy = ty * sf
        sz = tz * sf
        ppx = pxm + (pym * tz - pzm * ty)
        ppy = pym + (pzm * tx - pxm * tz)
        ppz = pzm + (pxm * ty - pym * tx)
        pxn = pxm + (ppy * sz - ppz * sy) + qd2 * epx[n]
        pyn = pym + (ppz * sx - ppx * sz) + qd2 * epy[n]
        pzn = pzm + (ppx * sy - ppy * sx) + qd2 * epz[n]
        gn = np.sqrt(1.0 + (pxn * pxn + pyn * pyn + pzn * pzn) * inv_m2)
        px[n] = pxn
        py[n] = pyn
        pz[n] = pzn
        adv = dt / (gn * mass)
        x[n] += pxn * adv
        y[n] += pyn * adv
        if bad < 0 and not (np.isfinite(pxn) and np.isfinite(pyn) and np.isfinite(pzn)):
            bad = n
    return bad


@njit(**_NUMBA_OPTS)
def flag_boundaries(x, y, s0, s1, flags, xmin, xmax, ymin, ymax):
    """Classify each particle against the patch bounds [min, max) per axis."""
    for n in range(s0, s1):
        f = 0
        if x[n] < xmin:
            f |= FLAG_X_NEG
        elif x[n] >= xmax:
            f |= FLAG_X_POS
        if y[n] < ymin:
            f |= FLAG_Y_NEG
        elif y[n] >= ymax:
            f |= FLAG_Y_POS
        flags[n] = f


@njit(**_NUMBA_OPTS)
def esirkepov_project(x, y, px, py, pz, weight, s0, s1, cix, ciy, dlx, dly,
                      jx, jy, jz, charge, mass, inv_dx, inv_dy,
                      dx_over_dt, dy_over_dt, sub_cell0x, sub_cell0y):
    """Charge-conserving order-2 current deposition onto a bin subgrid.

    Uses the pre-push index/displacement from the gather buffer and the
    post-push position; the in-plane currents follow the Esirkepov
    decomposition, the out-of-plane Jz uses the time-averaged form.
    Returns the index of the first particle that moved more than one cell
    (Courant violation), or -1.
    """
    g = GHOST
    s0x = np.zeros(5)
    s1x = np.zeros(5)
    s0y = np.zeros(5)
    s1y = np.zeros(5)
    inv_m2 = 1.0 / (mass * mass)
    third = 1.0 / 3.0
    sixth = 1.0 / 6.0
    for n in range(s0, s1):
        i0 = cix[n]
        j0 = ciy[n]
        xn = x[n] * inv_dx
        yn = y[n] * inv_dy
        i1 = int(xn + 0.5)
        j1 = int(yn + 0.5)
        shx = i1 - i0
        shy = j1 - j0
        if shx < -1 or shx > 1 or shy < -1 or shy > 1:
            return n
        d0x = dlx[n]
        d0y = dly[n]
        d1x = xn - i1
        d1y = yn - j1
        for k in range(5):
            s0x[k] = 0.0
            s1x[k] = 0.0
            s0y[k] = 0.0
            s1y[k] = 0.0
        s0x[1] = 0.5 * (0.5 - d0x) ** 2
        s0x[2] = 0.75 - d0x * d0x
        s0x[3] = 0.5 * (0.5 + d0x) ** 2
        s0y[1] = 0.5 * (0.5 - d0y) ** 2
        s0y[2] = 0.75 - d0y * d0y
        s0y[3] = 0.5 * (0.5 + d0y) ** 2
        s1x[1 + shx] = 0.5 * (0.5 - d1x) ** 2
        s1x[2 + shx] = 0.75 - d1x * d1x
        s1x[3 + shx] = 0.5 * (0.5 + d1x) ** 2
        s1y[1 + shy] = 0.5 * (0.5 - d1y) ** 2
        s1y[2 + shy] = 0.75 - d1y * d1y
        s1y[3 + shy] = 0.5 * (0.5 + d1y) ** 2
        qw = charge * weight[n]
        gam = np.sqrt(1.0 + (px[n] * px[n] + py[n] * py[n] + pz[n] * pz[n]) * inv_m2)
        fx = qw * dx_over_dt
        fy = qw * dy_over_dt
        fz = qw * pz[n] / (gam * mass)
        bi = i0 - 2 - sub_cell0x + g
        bj = j0 - 2 - sub_cell0y + g
        if fz != 0.0:
            for ky in range(5):
                sy0 = s0y[ky]
                sy1 = s1y[ky]
                cyx = 0.5 * (sy0 + sy1)
                za = fz * (sy0 * third + sy1 * sixth)
                zb = fz * (sy0 * sixth + sy1 * third)
                acc = 0.0
                for kx in range(4):
                    acc -= fx * (s1x[kx] - s0x[kx]) * cyx
                    jx[bi + kx, bj + ky] += acc
                    jz[bi + kx, bj + ky] += s0x[kx] * za + s1x[kx] * zb
                jz[bi + 4, bj + ky] += s0x[4] * za + s1x[4] * zb
        else:
            for ky in range(5):
                cyx = 0.5 * (s0y[ky] + s1y[ky])
                acc = 0.0
                for kx in range(4):
                    acc -= fx * (s1x[kx] - s0x[kx]) * cyx
                    jx[bi + kx, bj + ky] += acc
        for kx in range(5):
            cxy = 0.5 * (s0x[kx] + s1x[kx])
            acc = 0.0
            for ky in range(4):
                acc -= fy * (s1y[ky] - s0y[ky]) * cxy
                jy[bi + kx, bj + ky] += acc
    return -1


@njit(**_NUMBA_OPTS)
def deposit_rho(x, y, weight, s0, s1, rho, charge, inv_dx, inv_dy,
                cell0x, cell0y):
    """Order-2 charge deposition at primal nodes (init and diagnostics)."""
    g = GHOST
    for n in range(s0, s1):
        xn = x[n] * inv_dx
        yn = y[n] * inv_dy
        ip = int(xn + 0.5)
        jp = int(yn + 0.5)
        dxp = xn - ip
        dyp = yn - jp
        wx0 = 0.5 * (0.5 - dxp) ** 2
        wx1 = 0.75 - dxp * dxp
        wx2 = 0.5 * (0.5 + dxp) ** 2
        wy0 = 0.5 * (0.5 - dyp) ** 2
        wy1 = 0.75 - dyp * dyp
        wy2 = 0.5 * (0.5 + dyp) ** 2
        qw = charge * weight[n]
        a = ip - cell0x + g
        b = jp - cell0y + g
        rho[a - 1, b - 1] += qw * wx0 * wy0
        rho[a - 1, b] += qw * wx0 * wy1
        rho[a - 1, b + 1] += qw * wx0 * wy2
        rho[a, b - 1] += qw * wx1 * wy0
        rho[a, b] += qw * wx1 * wy1
        rho[a, b + 1] += qw * wx1 * wy2
        rho[a + 1, b - 1] += qw * wx2 * wy0
        rho[a + 1, b] += qw * wx2 * wy1
        rho[a + 1, b + 1] += qw * wx2 * wy2


def warmup():
    """Force-compile every kernel once (first call is slow under JIT)."""
    n = 2
    fa = np.zeros((9, 9))
    x = np.array([0.3, 0.4])
    y = np.array([0.3, 0.4])
    p = np.zeros(n)
    w = np.ones(n)
    ci = np.zeros(n, np.int64)
    dl = np.zeros(n)
    fl = np.zeros(n, np.uint8)
    buf = [np.zeros(n) for _ in range(6)]
    gather_fields(x, y, 0, n, fa, fa, fa, fa, fa, fa, ci, ci, dl, dl,
                  *buf, 1.0, 1.0, 0, 0)
    boris_push(x, y, p, p, p, 0, n, *buf, -1.0, 1.0, 0.05)
    flag_boundaries(x, y, 0, n, fl, 0.0, 2.0, 0.0, 2.0)
    esirkepov_project(x, y, p, p, p, w, 0, n, ci, ci, dl, dl,
                      fa, fa, fa, -1.0, 1.0, 1.0, 1.0, 20.0, 20.0, 0, 0)
    deposit_rho(x, y, w, 0, n, fa, -1.0, 1.0, 1.0, 0, 0)
