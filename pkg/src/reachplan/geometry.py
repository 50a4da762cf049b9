"""Polytope, box, and simplex geometry used by reachability certification.

Partition cells are axis-aligned boxes; general polytopes appear only as
truncated-pyramid subpolytopes used by the underactuated relaxation. All
facet normals are stored unit-length so norm factors in the certification
inequalities reduce to 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations
import math

import numpy as np

CONTAINMENT_TOL = 1e-9


class GeometryError(ValueError):
    pass


@dataclass
class Box:
    """Axis-aligned box [lo, hi] with a cell identity and refinement depth."""

    lo: np.ndarray
    hi: np.ndarray
    id: int = -1
    depth: int = 0

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        if self.lo.shape != self.hi.shape or self.lo.ndim != 1:
            raise GeometryError("box bounds must be 1-d arrays of equal length")
        if np.any(self.hi - self.lo <= 0):
            raise GeometryError(f"degenerate box: lo={self.lo} hi={self.hi}")

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def sides(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def volume(self) -> float:
        return float(np.prod(self.sides))

    def contains(self, x, tol: float = CONTAINMENT_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def vertex(self, code: int) -> np.ndarray:
        """Vertex whose bit k of ``code`` selects hi (1) or lo (0) on axis k."""
        v = self.lo.copy()
        for k in range(self.dim):
            if code >> k & 1:
                v[k] = self.hi[k]
        return v

    def vertices(self) -> np.ndarray:
        return np.array([self.vertex(c) for c in range(2 ** self.dim)])


def facet_id(axis: int, direction: int) -> int:
    """Facet index convention: 2*axis for the lo facet, 2*axis+1 for hi."""
    return 2 * axis + (1 if direction > 0 else 0)


def facet_axis_dir(fid: int) -> tuple[int, int]:
    return fid // 2, (1 if fid % 2 else -1)


@dataclass
class Polytope:
    """Bounded polytope: vertex list plus unit outward facet normals/offsets.

    ``facet_vertices[i]`` is the vertex-index set of facet i (the V_i sets);
    ``vertex_facets[j]`` is the facet-index set of vertex j (the W_j sets).
    ``grid_codes`` stores, for cube-like solids (boxes and truncated
    pyramids), the binary lo/hi code of each vertex so that a Kuhn
    triangulation can be formed.
    """

    vertices: np.ndarray
    normals: np.ndarray
    offsets: np.ndarray
    facet_vertices: list
    vertex_facets: list
    grid_codes: list | None = None

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_facets(self) -> int:
        return self.normals.shape[0]

    def contains(self, x, tol: float = CONTAINMENT_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(self.normals @ x - self.offsets <= tol))

    def violation(self, x) -> float:
        """Largest signed facet violation; <= 0 inside."""
        x = np.asarray(x, dtype=float)
        return float(np.max(self.normals @ x - self.offsets))

    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def validate(self, tol: float = CONTAINMENT_TOL) -> None:
        for j, v in enumerate(self.vertices):
            if np.any(self.normals @ v - self.offsets > tol):
                raise GeometryError(f"vertex {j} violates a facet halfspace")
        for i, vs in enumerate(self.facet_vertices):
            for j in vs:
                if i not in self.vertex_facets[j]:
                    raise GeometryError("incidence sets are inconsistent")


def box_to_polytope(b: Box) -> Polytope:
    """Convert a box to its 2^n-vertex, 2n-facet polytope form."""
    n = b.dim
    verts = b.vertices()
    normals = np.zeros((2 * n, n))
    offsets = np.zeros(2 * n)
    for axis in range(n):
        normals[facet_id(axis, -1), axis] = -1.0
        offsets[facet_id(axis, -1)] = -b.lo[axis]
        normals[facet_id(axis, +1), axis] = 1.0
        offsets[facet_id(axis, +1)] = b.hi[axis]
    facet_vertices = []
    for fid in range(2 * n):
        axis, d = facet_axis_dir(fid)
        bit = 1 if d > 0 else 0
        facet_vertices.append(tuple(j for j in range(2 ** n) if (j >> axis & 1) == bit))
    vertex_facets = []
    for j in range(2 ** n):
        vertex_facets.append(tuple(i for i in range(2 * n) if j in facet_vertices[i]))
    return Polytope(
        vertices=verts,
        normals=normals,
        offsets=offsets,
        facet_vertices=facet_vertices,
        vertex_facets=vertex_facets,
        grid_codes=list(range(2 ** n)),
    )


def truncated_pyramid(b: Box, axis: int, direction: int, shrink: float) -> Polytope:
    """Subpolytope of ``b`` whose facet opposite the exit facet is scaled.

    The exit facet (given by axis/direction) is kept; the opposite facet is
    scaled by ``shrink`` about its own center, and the side facets slant
    accordingly. ``shrink=1`` reproduces the box. Vertex codes match the box
    convention so the facet-id convention of :func:`box_to_polytope` carries
    over and a Kuhn triangulation applies.
    """
    if not 0 < shrink <= 1:
        raise GeometryError("shrink ratio must lie in (0, 1]")
    n = b.dim
    exit_bit = 1 if direction > 0 else 0
    center = b.center
    verts = np.empty((2 ** n, n))
    for code in range(2 ** n):
        v = b.vertex(code)
        if (code >> axis & 1) != exit_bit:
            # vertex on the opposite facet: pull cross-axes toward the center
            for k in range(n):
                if k != axis:
                    v[k] = center[k] + shrink * (v[k] - center[k])
        verts[code] = v

    normals = np.zeros((2 * n, n))
    offsets = np.zeros(2 * n)
    # axis facets are unchanged planes
    normals[facet_id(axis, -1), axis] = -1.0
    offsets[facet_id(axis, -1)] = -b.lo[axis]
    normals[facet_id(axis, +1), axis] = 1.0
    offsets[facet_id(axis, +1)] = b.hi[axis]
    facet_vertices = []
    for fid in range(2 * n):
        fax, d = facet_axis_dir(fid)
        bit = 1 if d > 0 else 0
        facet_vertices.append(tuple(j for j in range(2 ** n) if (j >> fax & 1) == bit))
    # side facets: fit the supporting hyperplane through the facet's vertices
    centroid = verts.mean(axis=0)
    for fid in range(2 * n):
        fax, d = facet_axis_dir(fid)
        if fax == axis:
            continue
        pts = verts[list(facet_vertices[fid])]
        diffs = pts[1:] - pts[0]
        _, _, vt = np.linalg.svd(diffs)
        nrm = vt[-1]
        if nrm @ (pts[0] - centroid) < 0:
            nrm = -nrm
        normals[fid] = nrm
        offsets[fid] = nrm @ pts[0]
    vertex_facets = [
        tuple(i for i in range(2 * n) if j in facet_vertices[i]) for j in range(2 ** n)
    ]
    p = Polytope(
        vertices=verts,
        normals=normals,
        offsets=offsets,
        facet_vertices=facet_vertices,
        vertex_facets=vertex_facets,
        grid_codes=list(range(2 ** n)),
    )
    p.validate(1e-7)
    return p


@dataclass
class Simplex:
    """n+1 affinely independent vertices; ids index the parent polytope."""

    vertices: np.ndarray
    vertex_ids: tuple

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    def volume(self) -> float:
        d = self.vertices[1:] - self.vertices[0]
        return abs(float(np.linalg.det(d))) / math.factorial(self.dim)

    def barycentric(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        A = (self.vertices[1:] - self.vertices[0]).T
        lam_rest = np.linalg.solve(A, x - self.vertices[0])
        return np.concatenate([[1.0 - lam_rest.sum()], lam_rest])


def triangulate(p: Polytope) -> list:
    """Kuhn triangulation of a cube-like polytope into n! simplices.

    Simplices follow monotone vertex-code paths from the all-lo vertex to
    the all-hi vertex, one per axis permutation (lexicographic order).
    """
    if p.grid_codes is None:
        raise GeometryError("triangulation requires a box-derived polytope")
    n = p.dim
    code_to_row = {c: j for j, c in enumerate(p.grid_codes)}
    simplices = []
    for perm in sorted(permutations(range(n))):
        code = 0
        ids = [code_to_row[0]]
        for ax in perm:
            code |= 1 << ax
            ids.append(code_to_row[code])
        ids = tuple(ids)
        simplices.append(Simplex(vertices=p.vertices[list(ids)], vertex_ids=ids))
    return simplices


def locate_simplex(tri: list, x, tol: float = 1e-9):
    """Return (index, barycentric coords) of the first simplex containing x.

    Ties on shared facets resolve to the lowest simplex index.
    """
    x = np.asarray(x, dtype=float)
    for idx, s in enumerate(tri):
        lam = s.barycentric(x)
        if np.all(lam >= -tol):
            return idx, lam
    raise GeometryError(f"point {x} lies outside the triangulated region")
