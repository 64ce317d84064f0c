"""Dynamic load balancing: periodic repartition of patches to collections."""

from __future__ import annotations

from dataclasses import dataclass

from .curve import split_curve_min_max


@dataclass
class LoadReport:
    """Per-patch and per-collection computational load snapshot.

    Load of a patch = macro-particle count + c_cell * cell count.
    """

    c_cell: float
    patch_loads: list          # along the domain curve order
    collection_loads: list
    imbalance_ratio: float


def _ratio(collection_loads):
    total = sum(collection_loads)
    if total <= 0 or not collection_loads:
        return 1.0
    mean = total / len(collection_loads)
    return max(collection_loads) / mean


def compute_loads(domain, c_cell=0.0):
    """Exact load accounting; pure read."""
    cfg = domain.config
    cell_load = c_cell * cfg.patch_nx * cfg.patch_ny
    patch_loads = [p.particle_count() + cell_load for p in domain.patches]
    coll = [0.0] * cfg.n_collections
    for p, load in zip(domain.patches, patch_loads):
        coll[p.owner_collection] += load
    return LoadReport(
        c_cell=c_cell,
        patch_loads=patch_loads,
        collection_loads=coll,
        imbalance_ratio=_ratio(coll),
    )


def rebalance(domain, report):
    """Re-cut the Hilbert curve into contiguous segments of near-equal load.

    The candidate cut minimizes the maximum segment load, so its imbalance
    ratio never exceeds the current partition's (evaluated on the same
    loads); if it somehow would, the current partition is kept.  Patch
    ownership moves in place (collections share the process address
    space), particles and fields travel with their patch.

    Returns the applied {(patch_ix, patch_iy): collection} assignment.
    """
    cfg = domain.config
    cuts = split_curve_min_max(report.patch_loads, cfg.n_collections)
    new_coll = [0.0] * cfg.n_collections
    for c, (start, stop) in enumerate(cuts):
        new_coll[c] = sum(report.patch_loads[start:stop])
    if _ratio(new_coll) <= report.imbalance_ratio:
        domain.assign_curve_segments(cuts)
    return {
        (p.patch_ix, p.patch_iy): p.owner_collection for p in domain.patches
    }
