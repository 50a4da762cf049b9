"""Adaptive non-uniform partitioning of a box workspace.

Cells are axis-aligned boxes organized in a tree. Refinement is driven by
the straight segment from the current state to the target: every leaf the
segment touches is subdivided until it reaches the minimum side length.
Refinement is monotone (no coarsening) and preserves leaf identities of
untouched cells so per-cell bookkeeping survives re-partitioning.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Box, GeometryError, facet_id


@dataclass
class SharedFacet:
    """Shared (n-1)-dimensional rectangle between two adjacent leaves.

    ``axis``/``direction`` describe the transition as seen from the first
    cell: its exit facet is facet_id(axis, direction). lo/hi give the
    rectangle bounds; on ``axis`` they coincide at the shared plane.
    """

    axis: int
    direction: int
    lo: np.ndarray
    hi: np.ndarray

    def lengths(self) -> np.ndarray:
        return self.hi - self.lo

    def measure(self) -> float:
        s = np.delete(self.hi - self.lo, self.axis)
        return float(np.prod(s))


class PartitionTree:
    """Binary-power subdivision tree over a root box."""

    def __init__(self, root_lo, root_hi, h_min):
        lo = np.asarray(root_lo, dtype=float)
        hi = np.asarray(root_hi, dtype=float)
        self.h_min = np.asarray(h_min, dtype=float)
        if np.any(self.h_min <= 0):
            raise GeometryError("h_min must be positive per axis")
        ratio = (hi - lo) / self.h_min
        for r in ratio:
            k = round(np.log2(r))
            if k < 0 or abs(r - 2 ** k) > 1e-9 * max(1.0, r):
                raise GeometryError(
                    "root side / h_min must be a power of two on every axis"
                )
        self._next_id = 0
        self.root = self._new_box(lo, hi, depth=0)
        self.leaves: dict[int, Box] = {self.root.id: self.root}
        self.parent: dict[int, int] = {}
        self.children: dict[int, list[int]] = {}

    def _new_box(self, lo, hi, depth) -> Box:
        b = Box(lo=lo, hi=hi, id=self._next_id, depth=depth)
        self._next_id += 1
        return b

    @property
    def dim(self) -> int:
        return self.root.dim

    def locate(self, x) -> Box:
        """Leaf containing x; on internal boundaries the lower-id leaf wins."""
        x = np.asarray(x, dtype=float)
        hits = [b for b in self.leaves.values() if b.contains(x)]
        if not hits:
            raise GeometryError(f"point {x} outside the partition root")
        return min(hits, key=lambda b: b.id)

    def splittable_axes(self, cell: Box) -> list:
        tol = 1e-9
        return [k for k in range(self.dim) if cell.sides[k] > self.h_min[k] * (1 + tol)]

    def split(self, cell: Box) -> list:
        """Subdivide a leaf along every axis still above its h_min."""
        if cell.id not in self.leaves:
            raise GeometryError("can only split a leaf")
        axes = self.splittable_axes(cell)
        if not axes:
            return [cell]
        mid = cell.center
        children = []
        for code in range(2 ** len(axes)):
            lo = cell.lo.copy()
            hi = cell.hi.copy()
            for i, ax in enumerate(axes):
                if code >> i & 1:
                    lo[ax] = mid[ax]
                else:
                    hi[ax] = mid[ax]
            children.append(self._new_box(lo, hi, depth=cell.depth + 1))
        del self.leaves[cell.id]
        self.children[cell.id] = [c.id for c in children]
        for c in children:
            self.parent[c.id] = cell.id
            self.leaves[c.id] = c
        return children

    def refine_segment(self, a, b) -> list:
        """Algorithm: refine every leaf the segment a-b touches to h_min.

        Returns the ids of cells that were split (parents, in split order).
        """
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if not (self.root.contains(a) and self.root.contains(b)):
            raise GeometryError("segment endpoints must lie inside the root box")
        split_ids = []
        work = [c for c in self.leaves.values()
                if self.splittable_axes(c) and segment_intersects(c, a, b)]
        while work:
            cell = work.pop()
            if cell.id not in self.leaves:
                continue
            kids = self.split(cell)
            split_ids.append(cell.id)
            for k in kids:
                if self.splittable_axes(k) and segment_intersects(k, a, b):
                    work.append(k)
        return split_ids

    def leaf_count(self) -> int:
        return len(self.leaves)

    def total_leaf_volume(self) -> float:
        return sum(b.volume() for b in self.leaves.values())

    def snapshot(self) -> list:
        return [
            {"id": b.id, "lo": b.lo.tolist(), "hi": b.hi.tolist(), "depth": b.depth}
            for b in sorted(self.leaves.values(), key=lambda c: c.id)
        ]


def segment_intersects(c: Box, a, b, tol: float = 1e-12) -> bool:
    """Closed segment vs closed box via slab clipping."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    t0, t1 = 0.0, 1.0
    d = b - a
    for k in range(c.dim):
        if abs(d[k]) < tol:
            if a[k] < c.lo[k] - tol or a[k] > c.hi[k] + tol:
                return False
            continue
        ta = (c.lo[k] - a[k]) / d[k]
        tb = (c.hi[k] - a[k]) / d[k]
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
        if t0 > t1 + tol:
            return False
    return True


def uniform_cell_count(root_lo, root_hi, h_min) -> int:
    lo = np.asarray(root_lo, dtype=float)
    hi = np.asarray(root_hi, dtype=float)
    h = np.asarray(h_min, dtype=float)
    counts = np.rint((hi - lo) / h)
    return int(np.prod(counts))


def adjacency(tree: PartitionTree) -> dict:
    """All ordered adjacent leaf pairs with their shared facet rectangles.

    Returns {(id_a, id_b): SharedFacet seen from cell a}. A large cell next
    to k smaller neighbors across one facet produces k entries.
    """
    tol = 1e-9
    leaves = sorted(tree.leaves.values(), key=lambda b: b.id)
    out = {}
    for i, a in enumerate(leaves):
        for b in leaves[i + 1:]:
            sf = shared_facet(a, b, tol)
            if sf is None:
                continue
            out[(a.id, b.id)] = sf
            out[(b.id, a.id)] = SharedFacet(
                axis=sf.axis, direction=-sf.direction, lo=sf.lo.copy(), hi=sf.hi.copy()
            )
    return out


def shared_facet(a: Box, b: Box, tol: float = 1e-9):
    """Shared (n-1)-measure face of two boxes, or None."""
    touch_axis = None
    direction = 0
    for k in range(a.dim):
        if abs(a.hi[k] - b.lo[k]) <= tol:
            if touch_axis is not None:
                return None
            touch_axis, direction = k, +1
        elif abs(a.lo[k] - b.hi[k]) <= tol:
            if touch_axis is not None:
                return None
            touch_axis, direction = k, -1
        else:
            # must overlap with positive measure on every non-touching axis
            if a.hi[k] <= b.lo[k] + tol or b.hi[k] <= a.lo[k] + tol:
                return None
    if touch_axis is None:
        return None
    lo = np.maximum(a.lo, b.lo)
    hi = np.minimum(a.hi, b.hi)
    plane = a.hi[touch_axis] if direction > 0 else a.lo[touch_axis]
    lo[touch_axis] = plane
    hi[touch_axis] = plane
    rest = np.delete(hi - lo, touch_axis)
    if np.any(rest <= tol):
        return None
    return SharedFacet(axis=touch_axis, direction=direction, lo=lo, hi=hi)
