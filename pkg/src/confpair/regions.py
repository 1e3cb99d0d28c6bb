"""Grid-region bookkeeping: flood fill over rank profiles, interior masks.

The structure results hold on connected components where every constructed
subbundle has constant rank; these helpers segment a chart grid accordingly
and provide BFS sweep orders for frame alignment.
"""

from __future__ import annotations

from collections import deque

import numpy as np


def axis_neighbors(shape: tuple[int, ...], flat_index: int) -> list[int]:
    """Flat indices of the grid points one step away along a single axis."""
    idx = list(np.unravel_index(flat_index, shape))
    out = []
    for ax, size in enumerate(shape):
        for step in (-1, 1):
            j = idx[ax] + step
            if 0 <= j < size:
                nb = idx.copy()
                nb[ax] = j
                out.append(int(np.ravel_multi_index(nb, shape)))
    return out


def label_regions(shape: tuple[int, ...], profile: np.ndarray) -> np.ndarray:
    """Connected components of equal profile values.

    `profile` is (P,) of hashable rows (use a structured view or tuples packed
    into an object array); returns integer labels (P,), -1 never used.
    """
    npts = int(np.prod(shape))
    labels = np.full(npts, -1, dtype=int)
    current = 0
    for start in range(npts):
        if labels[start] >= 0:
            continue
        ref = profile[start]
        queue = deque([start])
        labels[start] = current
        while queue:
            p = queue.popleft()
            for nb in axis_neighbors(shape, p):
                if labels[nb] < 0 and profile[nb] == ref:
                    labels[nb] = current
                    queue.append(nb)
        current += 1
    return labels


def pack_profile(columns: list[np.ndarray]) -> np.ndarray:
    """Pack per-point integer columns into a (P,) array of tuples."""
    npts = len(columns[0])
    out = np.empty(npts, dtype=object)
    for p in range(npts):
        out[p] = tuple(int(c[p]) for c in columns)
    return out


def bfs_order(shape: tuple[int, ...], mask: np.ndarray, seed: int | None = None):
    """(point, parent) pairs covering `mask` by breadth-first search.

    The first pair has parent -1.  Raises if the mask is disconnected.
    """
    flat_mask = np.asarray(mask, dtype=bool).reshape(-1)
    if seed is None:
        seeds = np.flatnonzero(flat_mask)
        if seeds.size == 0:
            return []
        seed = int(seeds[0])
    order = [(seed, -1)]
    seen = np.zeros(flat_mask.shape, dtype=bool)
    seen[seed] = True
    queue = deque([seed])
    while queue:
        p = queue.popleft()
        for nb in axis_neighbors(shape, p):
            if flat_mask[nb] and not seen[nb]:
                seen[nb] = True
                order.append((nb, p))
                queue.append(nb)
    if int(seen.sum()) != int(flat_mask.sum()):
        raise ValueError("mask is not connected; segment it first")
    return order


def interior_mask(shape: tuple[int, ...], mask: np.ndarray, margin: int) -> np.ndarray:
    """Erode `mask` by `margin` grid steps along every axis."""
    m = np.asarray(mask, dtype=bool).reshape(shape)
    out = m.copy()
    for _ in range(margin):
        eroded = out.copy()
        for ax in range(len(shape)):
            lo = np.zeros_like(out)
            hi = np.zeros_like(out)
            sl_lo = [slice(None)] * len(shape)
            sl_hi = [slice(None)] * len(shape)
            sl_lo[ax] = slice(1, None)
            sl_hi[ax] = slice(None, -1)
            lo[tuple(sl_lo)] = out[tuple(sl_hi)]
            hi[tuple(sl_hi)] = out[tuple(sl_lo)]
            eroded &= lo & hi
        out = eroded
    return out.reshape(-1)
