"""Facet-reachability certification and affine controller synthesis.

Given a local affine model on a polytope, certify (by per-vertex linear
feasibility) that some piecewise-affine feedback drives every state out
through a chosen exit facet without first crossing any other facet. When
the cell's dynamics are unknown, the same inequalities are robustified by
Lipschitz deviation bounds, either to guarantee reachability for every
model within the bounds (predictive certificate) or to rule it out for
all of them (predictive unreachability). Underactuated systems get two
relaxations: a truncated-pyramid subpolytope for facets normal to the
heading axis and a threshold-angle vertex relaxation for side facets.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .deviation import DeviationBounds
from .dynamics import AffineModel
from .geometry import (Box, Polytope, Simplex, box_to_polytope, facet_axis_dir,
                       locate_simplex, triangulate, truncated_pyramid,
                       GeometryError)
from .optim import (DELTA_STRICT, LinearFeasibilityProblem, linear_feasible,
                    maximin_lp, solve_lp)


@dataclass
class ReachCertificate:
    exit_facet: int
    controls: dict                     # vertex index -> u_j
    kind: str                          # exact | predictive | relaxed
    margins: dict                      # vertex index -> min strict-row slack
    polytope: Polytope                 # region the certificate is valid on
    relaxed_vertices: tuple = ()
    exact_vertices: tuple = ()

    def control_array(self) -> np.ndarray:
        M = self.polytope.n_vertices
        return np.array([self.controls[j] for j in range(M)])


@dataclass
class ExitTimeBound:
    T0: float
    alpha: float
    beta: float
    c1: float


def _vertex_rows(model: AffineModel, p: Polytope, j: int, exit_facet: int):
    """Exact per-vertex rows: (strict exit row, non-strict invariance rows).

    Strict: n1ᵀ(A v_j + B u + c) > 0. Non-strict: n_iᵀ(A v_j + B u + c) ≤ 0
    for every facet of the vertex other than the exit facet.
    """
    v = p.vertices[j]
    drift = model.A @ v + model.c
    n1 = p.normals[exit_facet]
    a_strict = n1 @ model.B
    b_strict = -float(n1 @ drift)
    rows_le, rhs_le = [], []
    for i in p.vertex_facets[j]:
        if i == exit_facet:
            continue
        ni = p.normals[i]
        rows_le.append(ni @ model.B)
        rhs_le.append(-float(ni @ drift))
    return a_strict, b_strict, np.array(rows_le).reshape(-1, model.B.shape[1]), np.array(rhs_le)


def _min_effort(u_star, a_st, b_st, A_le, b_le, pu: Box):
    """Cheapest controls keeping at least half the achieved exit margin.

    Solves min Σ|u_k| over the same feasible set via the split u = w⁺ - w⁻,
    which removes gratuitous control components that the margin-maximizing
    solve leaves at arbitrary box vertices.
    """
    m = u_star.size
    margin = float(a_st @ u_star - b_st)
    eye = np.eye(m)
    rows = [np.hstack([-a_st, a_st])]
    rhs = [-(b_st + 0.5 * margin)]
    if len(A_le):
        rows.append(np.hstack([A_le, -A_le]))
        rhs.extend(np.asarray(b_le, dtype=float))
    rows.append(np.hstack([eye, -eye]))
    rhs.extend(np.asarray(pu.hi, dtype=float))
    rows.append(np.hstack([-eye, eye]))
    rhs.extend(-np.asarray(pu.lo, dtype=float))
    big = float(np.max(np.abs(np.concatenate([pu.lo, pu.hi])))) + 1.0
    status, w, _ = solve_lp(np.ones(2 * m), np.vstack(rows), np.array(rhs),
                            lo=np.zeros(2 * m), hi=np.full(2 * m, big))
    if status != "optimal":
        return u_star
    return w[:m] - w[m:]


def _solve_vertex(model, p, j, exit_facet, pu: Box, maximize_margin=True):
    a_st, b_st, A_le, b_le = _vertex_rows(model, p, j, exit_facet)
    prob = LinearFeasibilityProblem(
        A_le=A_le, b_le=b_le,
        A_ge_strict=a_st.reshape(1, -1), b_ge_strict=np.array([b_st]),
        lo=pu.lo, hi=pu.hi,
    )
    u = linear_feasible(prob, maximize_margin=maximize_margin)
    if u is not None and maximize_margin:
        u = _min_effort(u, a_st, b_st, A_le, b_le, pu)
    return u


def facet_reachable(model: AffineModel, p: Polytope, exit_facet: int,
                    pu: Box, maximize_margin: bool = True) -> Optional[ReachCertificate]:
    """Exact certificate for a known affine model, or None."""
    controls, margins = {}, {}
    n1 = p.normals[exit_facet]
    for j in range(p.n_vertices):
        u = _solve_vertex(model, p, j, exit_facet, pu, maximize_margin)
        if u is None:
            return None
        controls[j] = u
        margins[j] = float(n1 @ (model.A @ p.vertices[j] + model.B @ u + model.c))
    return ReachCertificate(exit_facet=exit_facet, controls=controls, kind="exact",
                            margins=margins, polytope=p,
                            exact_vertices=tuple(range(p.n_vertices)))


def _predictive_vertex_feasible(model, bounds: DeviationBounds, p, j, exit_facet,
                                pu: Box, expanded: bool):
    """One vertex of the robustified system, over all 2^m sign patterns.

    expanded=False builds the worst-case (reachability-guaranteeing) rows;
    expanded=True builds the best-case rows whose infeasibility at a vertex
    refutes reachability for every in-bound model.
    """
    v = p.vertices[j]
    drift = model.A @ v + model.c
    margin = bounds.eps_A * float(np.linalg.norm(v)) + bounds.eps_c
    n1 = p.normals[exit_facet]
    m = model.B.shape[1]
    row_exit = n1 @ model.B
    inv_ids = [i for i in p.vertex_facets[j] if i != exit_facet]
    for pattern in itertools.product((1.0, -1.0), repeat=m):
        s = np.array(pattern)
        flip = -1.0 if expanded else 1.0
        a_st = row_exit - flip * s * bounds.eps_B
        b_st = -float(n1 @ drift) + flip * margin
        A_le, b_le = [], []
        for i in inv_ids:
            ni = p.normals[i]
            A_le.append(ni @ model.B + flip * s * bounds.eps_B)
            b_le.append(-float(ni @ drift) + (margin if expanded else -margin))
        prob = LinearFeasibilityProblem(
            A_le=np.array(A_le).reshape(-1, m), b_le=np.array(b_le),
            A_ge_strict=a_st.reshape(1, -1), b_ge_strict=np.array([b_st]),
            lo=pu.lo, hi=pu.hi, signs=list(pattern),
        )
        u = linear_feasible(prob, maximize_margin=not expanded)
        if u is not None:
            return u
    return None


def predict_reachable(model: AffineModel, bounds: DeviationBounds, p: Polytope,
                      exit_facet: int, pu: Box) -> Optional[ReachCertificate]:
    """Certificate valid for every affine model within the deviation bounds."""
    controls, margins = {}, {}
    n1 = p.normals[exit_facet]
    for j in range(p.n_vertices):
        u = _predictive_vertex_feasible(model, bounds, p, j, exit_facet, pu,
                                        expanded=False)
        if u is None:
            return None
        controls[j] = u
        v = p.vertices[j]
        worst = (float(n1 @ (model.A @ v + model.B @ u + model.c))
                 - bounds.eps_B * float(np.sum(np.abs(u)))
                 - bounds.eps_A * float(np.linalg.norm(v)) - bounds.eps_c)
        margins[j] = worst
    return ReachCertificate(exit_facet=exit_facet, controls=controls,
                            kind="predictive", margins=margins, polytope=p,
                            exact_vertices=tuple(range(p.n_vertices)))


def predict_unreachable(model: AffineModel, bounds: DeviationBounds, p: Polytope,
                        exit_facet: int, pu: Box) -> bool:
    """True iff no affine model within the bounds can reach the facet.

    Holds when some vertex is infeasible even for the outward-relaxed
    (best-case) inequality system under every control sign pattern.
    """
    for j in range(p.n_vertices):
        u = _predictive_vertex_feasible(model, bounds, p, j, exit_facet, pu,
                                        expanded=True)
        if u is None:
            return True
    return False


@dataclass
class PWAController:
    """Piecewise-affine feedback u = F_l x + g_l on a triangulated polytope."""

    simplices: list
    gains: list          # (F, g) per simplex

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        try:
            idx, _ = locate_simplex(self.simplices, x)
        except GeometryError:
            # numerical overshoot outside the polytope: fall back to the
            # least-violating simplex
            idx = max(range(len(self.simplices)),
                      key=lambda i: float(np.min(self.simplices[i].barycentric(x))))
        F, g = self.gains[idx]
        return F @ x + g


def synthesize_controller(p: Polytope, controls: dict) -> PWAController:
    """Interpolate vertex controls into an affine law per Kuhn simplex."""
    tri = triangulate(p)
    gains = []
    n = p.dim
    for s in tri:
        V = np.vstack([s.vertices.T, np.ones((1, n + 1))])   # (n+1, n+1)
        U = np.array([controls[j] for j in s.vertex_ids]).T  # (m, n+1)
        if abs(np.linalg.det(V)) < 1e-14:
            raise RuntimeError("degenerate simplex in controller synthesis")
        Fg = U @ np.linalg.inv(V)
        gains.append((Fg[:, :n], Fg[:, n]))
    return PWAController(simplices=tri, gains=gains)


def exit_time_bound(model: AffineModel, p: Polytope, controls: dict,
                    exit_facet: int, vertex_subset=None) -> ExitTimeBound:
    """Guaranteed crossing-time bound (beta - alpha) / c1 for a certificate.

    alpha/beta span the exit-normal extent of the whole polytope; c1 is the
    minimum certified outward speed, optionally restricted to a vertex
    subset (used by relaxed certificates whose zeroed vertices carry no
    outward-speed guarantee).
    """
    n1 = p.normals[exit_facet]
    proj = p.vertices @ n1
    alpha = float(np.min(proj))
    beta = float(np.max(proj))
    js = range(p.n_vertices) if vertex_subset is None else vertex_subset
    c1 = min(float(n1 @ (model.A @ p.vertices[j] + model.B @ controls[j] + model.c))
             for j in js)
    if c1 <= DELTA_STRICT / 2:
        raise ValueError(f"degenerate exit-time bound: c1 = {c1}")
    return ExitTimeBound(T0=(beta - alpha) / c1, alpha=alpha, beta=beta, c1=c1)


def robust_exit_time_bound(model: AffineModel, bounds: DeviationBounds,
                           p: Polytope, exit_facet: int, pu: Box) -> Optional[ExitTimeBound]:
    """Exit-time bound valid for every in-bound model.

    Maximizes the worst-vertex robust outward speed c1_rob over all vertex
    controls by one epigraph LP; the eps_B·‖u‖ terms are upper-bounded by
    eps_B·U_max (max vertex norm of the input box) to stay linear. Robust
    invariance rows keep the chosen controls consistent with staying in
    the polytope for every in-bound model. Returns None when c1_rob ≤ 0.
    """
    M = p.n_vertices
    m = pu.dim
    n1 = p.normals[exit_facet]
    u_max = max(float(np.linalg.norm(pu.vertex(c))) for c in range(2 ** m))
    obj_rows = np.zeros((M, M * m))
    obj_rhs = np.zeros(M)
    A_le, b_le = [], []
    for j in range(M):
        v = p.vertices[j]
        drift = model.A @ v + model.c
        margin = (bounds.eps_A * float(np.linalg.norm(v))
                  + bounds.eps_B * u_max + bounds.eps_c)
        obj_rows[j, j * m:(j + 1) * m] = n1 @ model.B
        obj_rhs[j] = -float(n1 @ drift) + margin
        for i in p.vertex_facets[j]:
            if i == exit_facet:
                continue
            ni = p.normals[i]
            row = np.zeros(M * m)
            row[j * m:(j + 1) * m] = ni @ model.B
            A_le.append(row)
            b_le.append(-float(ni @ drift) - margin)
    lo = np.tile(pu.lo, M)
    hi = np.tile(pu.hi, M)
    t, z = maximin_lp(obj_rows, obj_rhs, np.array(A_le), np.array(b_le), lo, hi)
    if t is None or t <= 0:
        return None
    proj = p.vertices @ n1
    alpha = float(np.min(proj))
    beta = float(np.max(proj))
    bnd = ExitTimeBound(T0=(beta - alpha) / t, alpha=alpha, beta=beta, c1=t)
    bnd.controls = {j: z[j * m:(j + 1) * m] for j in range(M)}
    return bnd


def relaxed_facet_reachable(model: AffineModel, cube: Box, exit_facet: int,
                            pu: Box, theta_thre: float, shrink: float = 0.5,
                            heading_axis: int = 2) -> Optional[ReachCertificate]:
    """Underactuated relaxation for a 3-d cell with a heading axis.

    Facets normal to the heading axis: certify on a truncated-pyramid
    subpolytope (opposite facet scaled by ``shrink``); the certificate is
    only valid inside that subpolytope. Side facets: vertices failing the
    exact rows are accepted with u_j = 0 when the achievable flow cone is
    within ``theta_thre`` of the exit normal on both extremes.
    """
    axis, direction = facet_axis_dir(exit_facet)
    if axis == heading_axis:
        sub = truncated_pyramid(cube, axis, direction, shrink)
        cert = facet_reachable(model, sub, exit_facet, pu)
        if cert is None:
            return None
        cert.kind = "relaxed"
        return cert

    p = box_to_polytope(cube)
    n1 = p.normals[exit_facet]
    controls, margins = {}, {}
    relaxed, exact = [], []
    u_abs = float(np.max(np.abs(np.concatenate([pu.lo, pu.hi]))))
    for j in range(p.n_vertices):
        u = _solve_vertex(model, p, j, exit_facet, pu)
        if u is not None:
            controls[j] = u
            margins[j] = float(n1 @ (model.A @ p.vertices[j] + model.B @ u + model.c))
            exact.append(j)
            continue
        v = p.vertices[j]
        drift = model.A @ v + model.c
        # most outward-pointing velocity still admissible for invariance
        rows, rhs = [], []
        for i in p.vertex_facets[j]:
            if i == exit_facet:
                continue
            rows.append(p.normals[i] @ model.B)
            rhs.append(-float(p.normals[i] @ drift))
        status, u_best, _ = solve_lp(-(n1 @ model.B), np.array(rows),
                                     np.array(rhs), pu.lo, pu.hi)
        w = drift + model.B @ u_best if status == "optimal" else drift
        outward = float(n1 @ w)
        nw = float(np.linalg.norm(w))
        if outward >= 0.0 or nw < 1e-15:
            ang = 0.0
        else:
            ang = float(np.arcsin(min(1.0, -outward / nw)))
        if ang > theta_thre + 1e-12:
            return None
        # zero control at relaxed vertices; the remaining invariance rows
        # must hold up to a tolerance commensurate with the threshold angle
        tol = np.sin(theta_thre) * max(float(np.linalg.norm(drift)), 0.05 * u_abs)
        violated = False
        for i in p.vertex_facets[j]:
            if i == exit_facet:
                continue
            if float(p.normals[i] @ drift) > tol:
                violated = True
                break
        if violated:
            return None
        controls[j] = np.zeros(pu.dim)
        margins[j] = float(n1 @ drift)
        relaxed.append(j)
    if not relaxed:
        return ReachCertificate(exit_facet=exit_facet, controls=controls,
                                kind="exact", margins=margins, polytope=p,
                                exact_vertices=tuple(exact))
    return ReachCertificate(exit_facet=exit_facet, controls=controls,
                            kind="relaxed", margins=margins, polytope=p,
                            relaxed_vertices=tuple(relaxed),
                            exact_vertices=tuple(exact))
