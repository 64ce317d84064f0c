"""Structure-of-arrays particle storage, bin bookkeeping, gather buffers."""

from __future__ import annotations

import numpy as np

# multiplier building the (bin, id) sort key; ids stay far below 2**40
_BIN_KEY_SHIFT = np.int64(1) << np.int64(40)

PARTICLE_FIELDS = ("x", "y", "px", "py", "pz", "weight", "id")


class InvariantError(RuntimeError):
    """An internal invariant was violated (e.g. a missed exchange)."""


class ParticleArena:
    """Macro-particles of one species in one patch, partitioned into bins.

    Arrays are kept in canonical order: ascending bin, then ascending
    particle id within each bin.  ``bin_offsets[k]:bin_offsets[k+1]``
    delimits bin k.
    """

    def __init__(self, n_bins, x=None, y=None, px=None, py=None, pz=None,
                 weight=None, id=None):
        self.n_bins = n_bins
        n = 0 if x is None else len(x)
        self.x = np.zeros(n) if x is None else x
        self.y = np.zeros(n) if y is None else y
        self.px = np.zeros(n) if px is None else px
        self.py = np.zeros(n) if py is None else py
        self.pz = np.zeros(n) if pz is None else pz
        self.weight = np.zeros(n) if weight is None else weight
        self.id = np.zeros(n, np.int64) if id is None else id
        self.flags = np.zeros(n, np.uint8)
        self.bin_offsets = np.zeros(n_bins + 1, np.int64)

    @property
    def n(self):
        return len(self.x)

    def bin_slice(self, ibin):
        return int(self.bin_offsets[ibin]), int(self.bin_offsets[ibin + 1])

    def arrays(self):
        return tuple(getattr(self, f) for f in PARTICLE_FIELDS)

    def take(self, index):
        """New field arrays selected by an index array (flags reset)."""
        return {f: getattr(self, f)[index] for f in PARTICLE_FIELDS}

    def replace(self, **arrays):
        for f in PARTICLE_FIELDS:
            setattr(self, f, arrays[f])
        self.flags = np.zeros(len(arrays["x"]), np.uint8)


def compute_bins(x, cell0x, nx, bin_x_size, inv_dx, check=True):
    """Bin index per particle from the patch-local cell of its position.

    Cell membership is floor(x/dx) in float arithmetic, clamped by one
    cell at the right border to absorb rounding at a patch seam.
    """
    cells = np.floor(x * inv_dx).astype(np.int64) - cell0x
    if check and cells.size:
        lo = int(cells.min())
        hi = int(cells.max())
        if lo < 0 or hi > nx:
            raise InvariantError(
                f"particle outside patch cell range [0, {nx}): saw {lo}..{hi} "
                "(missed exchange?)"
            )
    np.clip(cells, 0, nx - 1, out=cells)
    return cells // bin_x_size


def sort_into_bins(arena, cell0x, nx, bin_x_size, inv_dx):
    """Re-sort an arena into canonical (bin, ascending id) order in place.

    Idempotent permutation: the particle multiset is unchanged.  Returns
    the arena.
    """
    bins = compute_bins(arena.x, cell0x, nx, bin_x_size, inv_dx)
    key = bins * _BIN_KEY_SHIFT + arena.id
    if arena.n and np.any(key[1:] < key[:-1]):
        order = np.argsort(key)
        for f in PARTICLE_FIELDS:
            setattr(arena, f, getattr(arena, f)[order])
        arena.flags = arena.flags[order]
        bins = bins[order]
    counts = np.bincount(bins, minlength=arena.n_bins)
    arena.bin_offsets[0] = 0
    np.cumsum(counts, out=arena.bin_offsets[1:])
    return arena


class GatherBuffer:
    """Per-(patch, species) interpolation buffer with a shrink-to-1 lifecycle.

    Holds, per particle: the nearest primal node indices, the normalized
    displacements, and the six gathered field components.  Sized to the
    arena count while the pipeline runs, released to length 1 right after
    the species' current reduction to bound the memory overhead.
    """

    RELEASED = "released"
    SIZED = "sized"

    __slots__ = ("state", "cix", "ciy", "dlx", "dly",
                 "epx", "epy", "epz", "bpx", "bpy", "bpz")

    def __init__(self):
        self.state = GatherBuffer.RELEASED
        self._alloc(1)

    def _alloc(self, n):
        self.cix = np.zeros(n, np.int64)
        self.ciy = np.zeros(n, np.int64)
        self.dlx = np.zeros(n)
        self.dly = np.zeros(n)
        self.epx = np.zeros(n)
        self.epy = np.zeros(n)
        self.epz = np.zeros(n)
        self.bpx = np.zeros(n)
        self.bpy = np.zeros(n)
        self.bpz = np.zeros(n)

    @property
    def size(self):
        return len(self.cix)

    def size_for(self, n):
        if self.size != max(n, 1):
            self._alloc(max(n, 1))
        self.state = GatherBuffer.SIZED

    def release(self):
        if self.size != 1:
            self._alloc(1)
        self.state = GatherBuffer.RELEASED

    def require_sized(self, n):
        if self.state != GatherBuffer.SIZED or self.size < n:
            raise InvariantError(
                f"gather buffer is {self.state} (size {self.size}), need {n}"
            )
