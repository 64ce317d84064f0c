"""Hilbert space-filling curve ordering of the patch grid."""

from __future__ import annotations


def _d2xy(side, d):
    """Position of distance d along the Hilbert curve of a side x side grid."""
    x = y = 0
    t = d
    s = 1
    while s < side:
        rx = 1 & (t >> 1)
        ry = 1 & (t ^ rx)
        if ry == 0:
            if rx == 1:
                x = s - 1 - x
                y = s - 1 - y
            x, y = y, x
        x += s * rx
        y += s * ry
        t >>= 2
        s <<= 1
    return x, y


def hilbert_order(patches_x, patches_y):
    """All (ix, iy) patch coordinates in Hilbert-curve order.

    Works for non-square and non-power-of-two grids by walking the
    enclosing power-of-two curve and keeping in-grid positions.
    """
    side = 1
    while side < max(patches_x, patches_y):
        side <<= 1
    out = []
    for d in range(side * side):
        x, y = _d2xy(side, d)
        if x < patches_x and y < patches_y:
            out.append((x, y))
    return out


def split_curve_greedy(loads, n_segments):
    """Cut a load sequence into n contiguous segments targeting equal sums.

    Classic greedy prefix walk; every segment is non-empty as long as
    there are at least n_segments entries.  Returns a list of (start,
    stop) index pairs covering the sequence.
    """
    count = len(loads)
    if n_segments <= 0:
        raise ValueError("need at least one segment")
    total = float(sum(loads))
    cuts = []
    start = 0
    for seg in range(n_segments):
        remaining_segs = n_segments - seg
        if start >= count:
            cuts.append((start, start))
            continue
        if remaining_segs == 1:
            cuts.append((start, count))
            start = count
            continue
        target = total / remaining_segs
        stop = start
        acc = 0.0
        # leave at least one entry per remaining segment
        limit = count - (remaining_segs - 1)
        while stop < limit:
            nxt = acc + loads[stop]
            if stop > start and nxt > target and (target - acc) < (nxt - target):
                break
            acc = nxt
            stop += 1
        cuts.append((start, stop))
        total -= acc
        start = stop
    return cuts


def split_curve_min_max(loads, n_segments):
    """Cut into n contiguous segments minimizing the maximum segment sum.

    Binary search over the capacity with a greedy feasibility check; the
    returned cut is optimal for the max-load objective, so the imbalance
    ratio never exceeds that of any other contiguous partition.
    """
    count = len(loads)
    if count == 0 or n_segments >= count:
        return split_curve_greedy(loads, n_segments)
    lo = max(loads)
    hi = sum(loads)

    def fits(cap):
        segs = 1
        acc = 0.0
        for v in loads:
            if acc + v > cap and acc > 0:
                segs += 1
                acc = v
                if segs > n_segments:
                    return False
            else:
                acc += v
        return True

    for _ in range(64):
        mid = 0.5 * (lo + hi)
        if fits(mid):
            hi = mid
        else:
            lo = mid
    cap = hi
    cuts = []
    start = 0
    for seg in range(n_segments):
        if seg == n_segments - 1:
            cuts.append((start, count))
            start = count
            continue
        # max-fill up to the capacity, leaving one entry per later segment
        limit = count - (n_segments - seg - 1)
        stop = start
        acc = 0.0
        while stop < limit and (stop == start or acc + loads[stop] <= cap):
            acc += loads[stop]
            stop += 1
        cuts.append((start, stop))
        start = stop
    return cuts
