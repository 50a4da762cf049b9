"""Top-level mission loop: partition, identify, certify, plan, execute.

Each iteration refines the partition along the segment from the current
state to the target, identifies the current cell's local affine model if
needed, certifies reachability of the current cell's facets (exactly) and
of nearby unidentified cells (predictively), updates the reachability
graph, plans a shortest path, and executes its first edge with a
synthesized piecewise-affine controller. Inside the target cell a CLF-CBF
quadratic program takes over.
"""
from __future__ import annotations

import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import graph as gr
from .deviation import cell_pair_bounds
from .dynamics import (AffineModel, Trajectory, TrueSystem, integrate,
                       mecanum_system, unicycle_system)
from .geometry import Box, box_to_polytope, facet_axis_dir, facet_id
from .optim import STATS, SolverError, solve_lp
from .partition import PartitionTree, adjacency, uniform_cell_count
from .reach import (ReachCertificate, exit_time_bound, facet_reachable,
                    predict_reachable, predict_unreachable,
                    relaxed_facet_reachable, robust_exit_time_bound,
                    synthesize_controller)
from .sysid import CellEscape, ExcitationPlan, identify_affine
from .terminal import TerminalParams, clf_cbf_control


@dataclass
class Scenario:
    system: str                      # "mecanum" | "unicycle"
    ws_lo: np.ndarray
    ws_hi: np.ndarray
    pu_lo: np.ndarray
    pu_hi: np.ndarray
    L_df: float
    L_g: float
    h_min: np.ndarray
    C_u: float
    beta_u: float
    x_init: np.ndarray
    x_target: np.ndarray
    p_prior: float = 0.5
    theta_thre: float = 0.0          # radians; side-facet relaxation threshold
    shrink: float = 0.5              # truncated-pyramid ratio
    dt: float = 1e-3
    ident_period: float = 1e-3
    max_iters: int = 300
    retry_budget: int = 10
    stall_limit: int = 8
    wall_budget: float = 600.0       # seconds of wall time
    terminal_budget: float = 40.0    # simulated seconds for the final cell
    terminal_alpha: float = 1.0
    terminal_kappa: float = 1.0
    terminal_slack_weight: float = 1.0
    r_stop: float = 0.1
    record_stride: int = 10
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        for f in ("ws_lo", "ws_hi", "pu_lo", "pu_hi", "h_min", "x_init", "x_target"):
            setattr(self, f, np.asarray(getattr(self, f), dtype=float))
        ws = Box(lo=self.ws_lo, hi=self.ws_hi)
        if not (ws.contains(self.x_init) and ws.contains(self.x_target)):
            raise ValueError("x_init and x_target must lie inside the workspace")

    @property
    def underactuated(self) -> bool:
        return self.system == "unicycle"

    def workspace(self) -> Box:
        return Box(lo=self.ws_lo, hi=self.ws_hi)

    def pu(self) -> Box:
        return Box(lo=self.pu_lo, hi=self.pu_hi)

    def make_system(self) -> TrueSystem:
        if self.system == "mecanum":
            return mecanum_system()
        if self.system == "unicycle":
            return unicycle_system()
        raise ValueError(f"unknown system '{self.system}'")

    def to_dict(self) -> dict:
        d = {}
        for k, v in self.__dict__.items():
            d[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return d

    @staticmethod
    def from_dict(d: dict) -> "Scenario":
        return Scenario(**{k: v for k, v in d.items() if k in Scenario.__dataclass_fields__})


def builtin_scenario(name: str) -> Scenario:
    if name == "mecanum":
        return Scenario(
            system="mecanum", name="mecanum",
            ws_lo=[-8.0, -8.0], ws_hi=[8.0, 8.0],
            pu_lo=[-5.0, -5.0], pu_hi=[5.0, 5.0],
            L_df=0.03, L_g=0.03, h_min=[1.0, 1.0],
            C_u=100.0, beta_u=0.8,
            x_init=[6.5, 6.5], x_target=[-0.5, -0.5],
            terminal_kappa=20.0, terminal_slack_weight=1e6,
        )
    if name == "unicycle":
        return Scenario(
            system="unicycle", name="unicycle",
            ws_lo=[-10.0, -10.0, -np.pi], ws_hi=[10.0, 10.0, np.pi],
            pu_lo=[-10.0, -10.0], pu_hi=[10.0, 10.0],
            L_df=0.05, L_g=1.0, h_min=[1.25, 1.25, np.pi / 4],
            C_u=10.0, beta_u=1.0, theta_thre=np.deg2rad(10.0),
            x_init=[-4.375, 0.625, -np.pi / 8],
            x_target=[0.625, 0.625, -np.pi / 8],
            r_stop=0.5, terminal_budget=20.0, terminal_slack_weight=1e6,
        )
    raise ValueError(f"no built-in scenario '{name}'")


@dataclass
class MissionLog:
    events: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    traj_t: list = field(default_factory=list)
    traj_x: list = field(default_factory=list)
    traj_u: list = field(default_factory=list)
    traj_cell: list = field(default_factory=list)
    status: str = "incomplete"
    final_distance: float = float("nan")
    metrics: dict = field(default_factory=dict)

    def event(self, t: float, kind: str, **payload):
        self.events.append({"t": t, "type": kind, **payload})

    def append_traj(self, traj: Trajectory, t0: float, cell_id: int):
        n_u = traj.u.shape[0]
        for i in range(len(traj.t)):
            self.traj_t.append(t0 + traj.t[i])
            self.traj_x.append(traj.x[i])
            self.traj_u.append(traj.u[min(i, n_u - 1)] if n_u else np.zeros(0))
            self.traj_cell.append(cell_id)

    @property
    def success(self) -> bool:
        return self.status == "success"


class _Mission:
    """Mutable mission state for one run."""

    def __init__(self, scn: Scenario):
        self.scn = scn
        self.sys = scn.make_system()
        self.pu = scn.pu()
        self.ws = scn.workspace()
        self.tree = PartitionTree(scn.ws_lo, scn.ws_hi, scn.h_min)
        self.graph = gr.ReachGraph(scn.C_u, scn.beta_u, scn.p_prior)
        self.models: dict = {}        # cell id -> identified AffineModel
        self.inherited: dict = {}     # cell id -> model inherited from parent
        self.certs: dict = {}         # (src id, facet id) -> certificate or None
        self.edge_certs: dict = {}    # (src id, dst id) -> certificate
        self.pred_attempted: set = set()
        self.retries = defaultdict(int)
        self.edge_failures = defaultdict(int)
        self.soft_impossible: set = set()   # uncertifiable, not refuted
        self.escape_count = 0
        self.log = MissionLog()
        self.x = scn.x_init.copy()
        self.t = 0.0
        self.cur_id: int = -1
        self.last_model: Optional[AffineModel] = None
        self.last_u: Optional[np.ndarray] = None
        self.adj: dict = {}

    # ---------------- helpers ----------------

    def current_cell(self) -> Box:
        """Leaf the agent is in, sticky across boundary ties: once a
        transition commits to a cell, stay with it while the state remains
        inside (within tolerance)."""
        if self.cur_id in self.tree.leaves:
            c = self.tree.leaves[self.cur_id]
            if c.contains(self.x, tol=1e-7):
                return c
        c = self.tree.locate(self.x)
        self.cur_id = c.id
        return c

    def locate_after_exit(self, exit_fct: int, cell: Box):
        axis, d = facet_axis_dir(exit_fct)
        probe = self.x.copy()
        probe[axis] += d * 1e-7
        if not self.ws.contains(probe, tol=0.0):
            return None
        return self.tree.locate(probe)

    def speed_estimate(self, model: Optional[AffineModel]) -> float:
        if model is not None:
            return max(float(np.linalg.norm(model.xdot(self.x, np.zeros(self.pu.dim)))), 0.1)
        return 1.0

    def facet_measure(self, cell: Box, axis: int) -> float:
        return float(np.prod(np.delete(cell.sides, axis)))

    # ---------------- identification ----------------

    def gain_margin(self, cell: Box, need: float) -> bool:
        """Push the state toward the cell interior until every facet is at
        least ``need`` away. Returns False if the cell was escaped."""
        scn = self.scn
        steps = 0
        hold = False
        prev_margin = self._interior_margin(cell)
        while prev_margin < need and steps < 4000:
            if hold:
                # the control that carried us across the entry facet tends to
                # keep pointing into this cell, so hold it to penetrate
                u = self.last_u
            else:
                u = self._ingress_control(cell)
            traj = integrate(self.sys, lambda _x: u, self.x, cell, scn.dt,
                             5 * scn.dt, pu=self.pu, record_stride=5)
            self.log.append_traj(traj, self.t, cell.id)
            self.t += traj.t[-1]
            self.x = traj.final_state
            steps += 1
            margin = self._interior_margin(cell)
            if margin <= prev_margin + 1e-12:
                # no progress with the current candidate, switch strategy
                hold = not hold if self.last_u is not None else False
            prev_margin = margin
            if traj.exit_facet is not None:
                self.retries[cell.id] += 1
                entered = self.locate_after_exit(traj.exit_facet, cell)
                if entered is not None:
                    self.cur_id = entered.id
                self.log.event(self.t, "ingress_escape", cell=cell.id,
                               facet=int(traj.exit_facet))
                return False
        return True

    def ingress_and_identify(self, cell: Box) -> bool:
        """Move away from the entry facet if needed, then identify the cell.
        Returns False when the state escaped the cell (caller replans)."""
        scn = self.scn
        plan = ExcitationPlan.default(self.pu, self.sys.m, period=scn.ident_period,
                                      n=self.sys.n)
        if self.last_model is not None:
            m = self.last_model
            # speed actually seen during identification: drift plus the
            # excitation amplitude through the input matrix
            speed = float(np.linalg.norm(m.A @ self.x + m.c)
                          + plan.amplitude * np.linalg.norm(m.B, 2))
        else:
            speed = self.speed_estimate(self.last_model)
        need = 3.0 * len(plan.inputs) * plan.period * speed
        need = min(need, 0.25 * float(np.min(cell.sides)))
        if not self.gain_margin(cell, need):
            return False
        try:
            model = identify_affine(self.sys, self.x, plan, cell=cell)
        except CellEscape as e:
            self.x = e.state
            self.t += len(plan.inputs) * plan.period
            self.log.event(self.t, "identification_abort", cell=cell.id)
            return False
        self.t += len(plan.inputs) * plan.period
        self.x = model.final_state
        self.models[cell.id] = model
        self.log.event(self.t, "identified", cell=cell.id,
                       point=model.linearization_point.tolist())
        return True

    def _interior_margin(self, cell: Box) -> float:
        return float(min(np.min(self.x - cell.lo), np.min(cell.hi - self.x)))

    def _ingress_control(self, cell: Box) -> np.ndarray:
        """Cancel the (previously modeled) drift and creep toward the cell
        center so identification can run away from the entry facet."""
        if self.last_model is None:
            return np.zeros(self.pu.dim)
        d = cell.center - self.x
        nd = float(np.linalg.norm(d))
        v_des = d / max(nd, 1e-9) * min(1.0, nd)
        m = self.last_model
        u = np.linalg.pinv(m.B) @ (v_des - (m.A @ self.x + m.c))
        return np.clip(u, self.pu.lo, self.pu.hi)

    # ---------------- certification ----------------

    def certify_cell_facet(self, cell: Box, fct: int) -> Optional[ReachCertificate]:
        key = (cell.id, fct)
        if key in self.certs:
            return self.certs[key]
        model = self.models[cell.id]
        if self.scn.underactuated:
            cert = relaxed_facet_reachable(model, cell, fct, self.pu,
                                           self.scn.theta_thre, self.scn.shrink)
        else:
            cert = facet_reachable(model, box_to_polytope(cell), fct, self.pu)
        self.certs[key] = cert
        return cert

    def certify_current(self, cell: Box) -> int:
        """Exact/relaxed certification of the current cell's outgoing edges.
        Returns the number of edge statuses resolved."""
        resolved = 0
        for nb in list(self.graph.out.get(cell.id, ())):
            e = self.graph.edges[(cell.id, nb)]
            if e.status != gr.UNCERTAIN:
                continue
            sf = self.adj[(cell.id, nb)]
            fct = facet_id(sf.axis, sf.direction)
            cert = self.certify_cell_facet(cell, fct)
            if cert is None:
                # the relaxed condition is only sufficient, so its failure on
                # a splittable cell calls for refinement rather than a verdict
                if self.scn.underactuated and self.split_cell(cell):
                    self.log.event(self.t, "cell_split", cell=cell.id)
                    return resolved + 1
                if self.scn.underactuated:
                    # not a proof of unreachability; remember that this mark
                    # may be lifted if planning ever becomes disconnected
                    self.soft_impossible.add((cell.id, nb))
                self.graph.mark_impossible(cell.id, nb)
                resolved += 1
                continue
            self.edge_certs[(cell.id, nb)] = cert
            larger = self.facet_measure(cell, sf.axis) > sf.measure() * (1 + 1e-9)
            if larger:
                continue  # which neighbor is entered cannot be pinned down
            try:
                tb = exit_time_bound(self.models[cell.id], cert.polytope,
                                     cert.controls, fct,
                                     vertex_subset=cert.exact_vertices or None)
            except ValueError:
                continue
            # weight the edge by a typical crossing time: the closed loop is
            # affine, so the center-of-cell outward speed is the mean of the
            # certified vertex speeds, usually far above the worst vertex
            js = cert.exact_vertices or list(cert.margins.keys())
            c_mean = float(np.mean([cert.margins[j] for j in js]))
            t_est = (tb.beta - tb.alpha) / c_mean if c_mean > 0 else tb.T0
            self.graph.mark_certain(cell.id, nb, tb.T0, cert.kind, t_est=t_est)
            resolved += 1
        return resolved

    def predictive_pass(self) -> int:
        """Predictive certification on unidentified cells near identified ones."""
        if not self.models:
            return 0
        hops = {cid: 0 for cid in self.models if cid in self.tree.leaves}
        frontier = list(hops)
        for _ in range(2):
            nxt = []
            for cid in frontier:
                for nb in self.graph.out.get(cid, ()):
                    if nb not in hops:
                        hops[nb] = hops[cid] + 1
                        nxt.append(nb)
            frontier = nxt
        resolved = 0
        id_models = [(cid, m) for cid, m in self.models.items()]
        for cid, h in sorted(hops.items()):
            if h == 0 or cid in self.models:
                continue
            cell = self.tree.leaves[cid]
            src_cid, src = min(
                id_models,
                key=lambda im: float(np.linalg.norm(im[1].linearization_point - cell.center)))
            bounds = cell_pair_bounds(self.scn.L_df, self.scn.L_g,
                                      src.linearization_point, cell)
            poly = box_to_polytope(cell)
            for nb in self.graph.out.get(cid, ()):
                e = self.graph.edges[(cid, nb)]
                if e.status != gr.UNCERTAIN:
                    continue
                key = (cid, nb, src_cid)
                if key in self.pred_attempted:
                    continue
                self.pred_attempted.add(key)
                sf = self.adj[(cid, nb)]
                fct = facet_id(sf.axis, sf.direction)
                if predict_unreachable(src, bounds, poly, fct, self.pu):
                    self.graph.mark_impossible(cid, nb)
                    resolved += 1
                    continue
                larger = self.facet_measure(cell, sf.axis) > sf.measure() * (1 + 1e-9)
                if larger:
                    continue
                cert = predict_reachable(src, bounds, poly, fct, self.pu)
                if cert is None:
                    continue
                rb = robust_exit_time_bound(src, bounds, poly, fct, self.pu)
                if rb is None:
                    continue
                cert.controls = rb.controls
                self.edge_certs[(cid, nb)] = cert
                self.graph.mark_certain(cid, nb, rb.T0, "predictive")
                resolved += 1
        return resolved

    # ---------------- partition maintenance ----------------

    def refine(self) -> int:
        split_ids = self.tree.refine_segment(self.x, self.scn.x_target)
        for pid in split_ids:
            self._inherit_after_split(pid)
        if split_ids:
            self._prune_stale_edge_certs()
        return len(split_ids)

    def split_cell(self, cell: Box) -> bool:
        """Split one leaf, keeping model inheritance and cert caches tidy."""
        if not self.tree.splittable_axes(cell):
            return False
        self.tree.split(cell)
        self._inherit_after_split(cell.id)
        self._prune_stale_edge_certs()
        return True

    def _inherit_after_split(self, pid: int):
        model = self.models.pop(pid, None) or self.inherited.pop(pid, None)
        for child in self.tree.children.get(pid, ()):
            if model is not None:
                self.inherited[child] = model
        self.certs = {k: v for k, v in self.certs.items() if k[0] != pid}

    def _prune_stale_edge_certs(self):
        alive = set(self.tree.leaves)
        self.edge_certs = {k: v for k, v in self.edge_certs.items()
                           if k[0] in alive and k[1] in alive}

    def rebuild_graph(self):
        self.adj = adjacency(self.tree)
        sides = {b.id: b.sides for b in self.tree.leaves.values()}
        self.graph.rebuild(self.adj, sides)
        self._sides = sides

    # ---------------- execution ----------------

    def execute_edge(self, cell: Box, nb: int, force: bool = False) -> str:
        """Drive the plant across one edge. Returns 'moved', 'blocked',
        'outside_cert' or 'failed'."""
        scn = self.scn
        e = self.graph.edges[(cell.id, nb)]
        cert = self.edge_certs.get((cell.id, nb))
        if cert is None:
            return "blocked"
        if not force and not cert.polytope.contains(self.x, tol=1e-7):
            # relaxed certificate valid only on its subpolytope
            return "outside_cert"
        ctrl = synthesize_controller(cert.polytope, cert.controls)
        if e.status == gr.CERTAIN and e.t_bound:
            # worst-case bounds from grazing certificates can reach hours;
            # budget a generous multiple of the typical crossing time instead
            timeout = min(3.0 * e.t_bound, 20.0 * max(e.weight, scn.dt))
        else:
            l_u = float(cell.sides[e.shared.axis])
            timeout = 3.0 * l_u / self.speed_estimate(self.models.get(cell.id))
        timeout = max(timeout, 50 * scn.dt)
        traj = integrate(self.sys, ctrl, self.x, cell, scn.dt, timeout,
                         pu=self.pu, record_stride=scn.record_stride)
        self.log.append_traj(traj, self.t, cell.id)
        self.t += traj.t[-1]
        self.x = traj.final_state
        if traj.u is not None and len(traj.u):
            self.last_u = np.asarray(traj.u[-1], dtype=float)
        if cell.id in self.models:
            self.last_model = self.models[cell.id]
        if traj.exit_facet is None:
            # certificate did not carry the state across in a generous time
            # budget; disqualify the edge rather than charging the cell
            self.log.event(self.t, "traversal_timeout", cell=cell.id, to=nb)
            self.edge_failures[(cell.id, nb)] += 1
            return "blocked"
        entered = self.locate_after_exit(traj.exit_facet, cell)
        if entered is None:
            self.log.event(self.t, "workspace_exit", cell=cell.id)
            return "failed"
        # keep the same feedback law running briefly so the crossing velocity
        # carries the state clear of the shared facet before handing over
        pen = integrate(self.sys, ctrl, self.x, entered, scn.dt, 20 * scn.dt,
                        pu=self.pu, record_stride=scn.record_stride)
        self.log.append_traj(pen, self.t, entered.id)
        self.t += pen.t[-1]
        self.x = pen.final_state
        if pen.u is not None and len(pen.u):
            self.last_u = np.asarray(pen.u[-1], dtype=float)
        if pen.exit_facet is not None:
            deeper = self.locate_after_exit(pen.exit_facet, entered)
            if deeper is None:
                self.log.event(self.t, "workspace_exit", cell=entered.id)
                return "failed"
            entered = deeper
        self.cur_id = entered.id
        sf = self.adj[(cell.id, nb)]
        intended_fct = facet_id(sf.axis, sf.direction)
        if entered.id != nb or traj.exit_facet != intended_fct:
            self.edge_failures[(cell.id, nb)] += 1
            self.log.event(self.t, "unintended_exit", cell=cell.id,
                           intended=nb, actual=entered.id,
                           intended_facet=intended_fct,
                           actual_facet=int(traj.exit_facet))
        else:
            self.log.event(self.t, "edge_traversed", source=cell.id, target=nb,
                           exit_time=traj.exit_time,
                           bound=e.t_bound, status=e.status)
        return "moved"

    def centering_maneuver(self, cell: Box, duration: float):
        """Short CLF-CBF push toward the cell center to unblock planning."""
        model = self.models.get(cell.id)
        if model is None:
            return
        params = TerminalParams(alpha=4.0, kappa=self.scn.terminal_kappa,
                                slack_weight=self.scn.terminal_slack_weight,
                                r_stop=0.05 * float(np.min(cell.sides)))
        steps = max(1, int(duration / (10 * self.scn.dt)))
        for _ in range(steps):
            try:
                step = clf_cbf_control(model, self.x, cell.center, cell, self.pu, params)
            except SolverError:
                break
            traj = integrate(self.sys, lambda _x: step.u, self.x, cell,
                             self.scn.dt, 10 * self.scn.dt, pu=self.pu,
                             record_stride=self.scn.record_stride)
            self.log.append_traj(traj, self.t, cell.id)
            self.t += traj.t[-1]
            self.x = traj.final_state
            if traj.exit_facet is not None:
                entered = self.locate_after_exit(traj.exit_facet, cell)
                if entered is not None:
                    self.cur_id = entered.id
                return
        self.log.event(self.t, "centering", cell=cell.id)

    def forced_escape(self, cell: Box) -> bool:
        """Last-resort crossing when every path out of the current cell has
        been refuted. Marks from failed (sufficient-only) relaxed
        certifications are not proofs, so pick the most promising of those
        facets and push through it, re-solving a one-point feasibility LP
        as the state moves; whatever facet the state actually leaves by is
        accepted, exactly as for an unintended exit."""
        model = self.models.get(cell.id)
        if model is None or self.escape_count >= 25:
            return False
        p = box_to_polytope(cell)
        candidates = [nb for nb in self.graph.out.get(cell.id, ())
                      if (cell.id, nb) in self.soft_impossible]

        def rank(nb):
            sf = self.adj[(cell.id, nb)]
            # rotation facets first: the heading rate is directly actuated
            return (0 if sf.axis == cell.dim - 1 else 1, nb)

        u_abs = float(np.max(np.abs(np.concatenate([self.pu.lo, self.pu.hi]))))
        kappa = 2.0 * u_abs / float(np.min(cell.sides))
        for nb in sorted(candidates, key=rank):
            sf = self.adj[(cell.id, nb)]
            fct = facet_id(sf.axis, sf.direction)
            n1 = p.normals[fct]
            others = [i for i in range(2 * cell.dim) if i != fct]
            timeout = max(3.0 * float(cell.sides[sf.axis])
                          / self.speed_estimate(model), 50 * self.scn.dt)
            t_used = 0.0
            exited = False
            while t_used < timeout:
                drift = model.A @ self.x + model.c
                # barrier-style rows: approach the remaining facets no
                # faster than in proportion to the distance left to them
                rows = np.array([p.normals[i] @ model.B for i in others])
                rhs = np.array([kappa * float(p.offsets[i] - p.normals[i] @ self.x)
                                - float(p.normals[i] @ drift) for i in others])
                status, u, _ = solve_lp(-(n1 @ model.B), rows, rhs,
                                        self.pu.lo, self.pu.hi)
                if status != "optimal":
                    break
                traj = integrate(self.sys, lambda _x, u=u: u, self.x, cell,
                                 self.scn.dt, 10 * self.scn.dt, pu=self.pu,
                                 record_stride=self.scn.record_stride)
                self.log.append_traj(traj, self.t, cell.id)
                self.t += traj.t[-1]
                t_used += traj.t[-1]
                self.x = traj.final_state
                if traj.exit_facet is not None:
                    exited = True
                    break
            if not exited:
                continue
            entered = self.locate_after_exit(traj.exit_facet, cell)
            if entered is None:
                return False
            self.cur_id = entered.id
            self.escape_count += 1
            self.log.event(self.t, "forced_exploration", cell=cell.id,
                           intended=nb, actual=entered.id,
                           actual_facet=int(traj.exit_facet))
            return True
        return False

    # ---------------- terminal phase ----------------

    def terminal_phase(self, cell: Box) -> None:
        scn = self.scn
        if cell.id not in self.models:
            if not self.ingress_and_identify(cell):
                self.log.event(self.t, "terminal_escape", cell=cell.id)
                return
            cell = self.current_cell()
        # start the quadratic program from a state with real barrier margin
        if not self.gain_margin(cell, 0.2 * float(np.min(cell.sides))):
            self.log.event(self.t, "terminal_escape", cell=cell.id)
            return
        model = self.models[cell.id]
        params = TerminalParams(alpha=scn.terminal_alpha,
                                kappa=scn.terminal_kappa, r_stop=scn.r_stop,
                                slack_weight=scn.terminal_slack_weight)
        self.log.event(self.t, "terminal_phase", cell=cell.id)
        period = 10 * scn.dt
        t_phase = 0.0
        audits = []
        while t_phase < scn.terminal_budget:
            dist = float(np.linalg.norm(self.x - scn.x_target))
            if dist <= scn.r_stop:
                self.log.status = "success"
                self.log.final_distance = dist
                self.log.event(self.t, "converged", distance=dist)
                self.log.metrics["terminal_audits"] = audits
                return
            step = clf_cbf_control(model, self.x, scn.x_target, cell, self.pu, params)
            audits.append({"t": self.t, "delta": step.delta,
                           "min_barrier": step.min_barrier,
                           "kkt_stationarity": step.kkt_stationarity,
                           "kkt_complementarity": step.kkt_complementarity})
            traj = integrate(self.sys, lambda _x: step.u, self.x, cell, scn.dt,
                             period, pu=self.pu, record_stride=scn.record_stride)
            self.log.append_traj(traj, self.t, cell.id)
            self.t += traj.t[-1]
            t_phase += traj.t[-1]
            self.x = traj.final_state
            if traj.exit_facet is not None:
                self.log.event(self.t, "terminal_escape", cell=cell.id,
                               facet=int(traj.exit_facet))
                return
        dist = float(np.linalg.norm(self.x - scn.x_target))
        self.log.status = "partial"
        self.log.final_distance = dist
        self.log.event(self.t, "terminal_budget_exhausted", distance=dist)
        self.log.metrics["terminal_audits"] = audits


def run_mission(scn: Scenario) -> MissionLog:
    t_wall = time.perf_counter()
    STATS.reset()
    ms = _Mission(scn)
    log = ms.log
    log.event(0.0, "mission_start", scenario=scn.name or scn.system,
              seed=scn.seed)
    stall = 0
    prev_sig = None
    for it in range(scn.max_iters):
        if time.perf_counter() - t_wall > scn.wall_budget:
            log.status = "failure:wall_budget"
            break
        n_split = ms.refine()
        cur = ms.current_cell()
        tgt = ms.tree.locate(scn.x_target)
        if cur.id == tgt.id:
            ms.terminal_phase(cur)
            if log.status != "incomplete":
                break
            continue
        if ms.retries[cur.id] > scn.retry_budget:
            log.status = "failure:retry_budget"
            log.event(ms.t, "retry_budget_exhausted", cell=cur.id)
            break
        ms.rebuild_graph()
        if cur.id not in ms.models:
            ok = ms.ingress_and_identify(cur)
            if not ok:
                continue
            cur = ms.current_cell()
            if cur.id == tgt.id:
                ms.terminal_phase(cur)
                if log.status != "incomplete":
                    break
                continue
        ms.last_model = ms.models.get(cur.id, ms.last_model)
        n_resolved = ms.certify_current(cur)
        if cur.id not in ms.tree.leaves:
            continue  # current cell was split, replan on the new partition
        n_resolved += ms.predictive_pass()
        ms.graph.refresh_uncertain_weights(ms._sides)

        blocked: set = set()
        moved = False
        recentered: set = set()
        while True:
            avoid = blocked | {e for e, k in ms.edge_failures.items() if k >= 3}
            path, cost = ms.graph.shortest_path(cur.id, tgt.id, blocked=frozenset(avoid))
            if path is None:
                break
            snap = ms.graph.snapshot()
            snap.update({"iteration": it, "t": ms.t, "current_cell": cur.id,
                         "path": path, "cost": cost,
                         "leaf_count": ms.tree.leaf_count()})
            log.snapshots.append(snap)
            edge = (cur.id, path[1])
            outcome = ms.execute_edge(cur, path[1], force=edge in recentered)
            if outcome == "moved":
                moved = True
                # follow the certified prefix of the plan before replanning,
                # otherwise per-edge replans thrash as weights shift
                k = 1
                while k + 1 < len(path):
                    here = ms.current_cell()
                    if here.id != path[k]:
                        break
                    nxt = (path[k], path[k + 1])
                    e_nxt = ms.graph.edges.get(nxt)
                    if (e_nxt is None or e_nxt.status != gr.CERTAIN
                            or ms.edge_certs.get(nxt) is None):
                        break
                    if ms.execute_edge(here, path[k + 1]) != "moved":
                        break
                    k += 1
                break
            if outcome == "failed":
                log.status = "failure:workspace_exit"
                break
            if outcome == "outside_cert":
                # valid certificate exists but only on a subregion, so pull
                # the state toward the cell interior and retry; if still
                # outside afterwards the gains are extrapolated (the exit
                # facet may then differ from the intended one)
                if ms.edge_failures[edge] >= 2:
                    blocked.add(edge)
                    continue
                recentered.add(edge)
                ms.centering_maneuver(cur, 0.5)
                if ms.current_cell().id != cur.id:
                    moved = True
                    break
                continue
            blocked.add(edge)
        if log.status.startswith("failure"):
            break
        if path is None and not moved:
            if not blocked:
                if ms.forced_escape(cur):
                    continue
                log.status = "failure:no_path"
                log.event(ms.t, "no_path", cell=cur.id)
                break
            ms.centering_maneuver(cur, 0.2)
        sig = (cur.id, ms.tree.leaf_count(), n_resolved > 0, moved)
        if moved or n_resolved > 0 or n_split > 0:
            stall = 0
        else:
            stall += 1
            if stall > scn.stall_limit:
                log.status = "failure:stalled"
                log.event(ms.t, "stalled", cell=cur.id)
                break
        prev_sig = sig
    else:
        log.status = "failure:iteration_budget"
    if log.status == "incomplete":
        log.status = "failure:terminal_not_reached"
    dist = float(np.linalg.norm(ms.x - scn.x_target))
    if np.isnan(log.final_distance):
        log.final_distance = dist
    uniform = uniform_cell_count(scn.ws_lo, scn.ws_hi, scn.h_min)
    leafs = ms.tree.leaf_count()
    log.metrics.update({
        "leaf_count": leafs,
        "uniform_count": uniform,
        "reduction_ratio": 1.0 - leafs / uniform,
        "wall_time_s": time.perf_counter() - t_wall,
        "lp_calls": STATS.lp_calls,
        "qp_calls": STATS.qp_calls,
        "simulated_time": ms.t,
        "retry_max": max(ms.retries.values(), default=0),
        "final_state": ms.x.tolist(),
        "partition": ms.tree.snapshot(),
    })
    log.event(ms.t, "mission_end", status=log.status,
              distance=log.final_distance)
    return log
