"""Reachability graph over partition cells, entropy weights, shortest path.

Nodes are leaf cell ids. A directed edge (a, b) exists per shared facet
rectangle and carries one of three statuses: certain (transition
certified, weight = exit-time bound), impossible (refuted, excluded from
search), or uncertain (weight trades traversal cost against the expected
information gained by exploring it).
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .partition import SharedFacet

CERTAIN = "certain"
IMPOSSIBLE = "impossible"
UNCERTAIN = "uncertain"


def edge_entropy(p: float) -> float:
    """Binary Shannon entropy in nats, with 0·ln 0 = 0."""
    if p < 0.0 or p > 1.0:
        raise ValueError("probability outside [0, 1]")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -(p * math.log(p) + (1.0 - p) * math.log(1.0 - p))


def uncertain_weight(C_u: float, l_u: float, beta_u: float, eig: float) -> float:
    if C_u <= 0 or l_u <= 0 or beta_u < 0 or eig < 0:
        raise ValueError("invalid uncertain-weight parameters")
    return C_u * l_u / (1.0 + beta_u * eig)


@dataclass
class Edge:
    src: int
    dst: int
    status: str
    shared: SharedFacet
    weight: float = 0.0
    p_e: float = 0.5
    t_bound: Optional[float] = None
    cert_kind: Optional[str] = None


class ReachGraph:
    def __init__(self, C_u: float, beta_u: float, p_prior: float = 0.5):
        self.C_u = C_u
        self.beta_u = beta_u
        self.p_prior = p_prior
        self.edges: dict = {}          # (src, dst) -> Edge
        self.out: dict = {}            # src -> list of dst

    def rebuild(self, adjacency: dict, cell_sides: dict, keep_status: bool = True):
        """Reset edges from a fresh adjacency map, preserving resolved
        statuses for pairs that survived repartitioning."""
        old = self.edges if keep_status else {}
        self.edges = {}
        self.out = {}
        for (a, b), sf in adjacency.items():
            prev = old.get((a, b))
            if prev is not None and prev.status != UNCERTAIN:
                e = Edge(src=a, dst=b, status=prev.status, shared=sf,
                         weight=prev.weight, p_e=prev.p_e,
                         t_bound=prev.t_bound, cert_kind=prev.cert_kind)
            else:
                e = Edge(src=a, dst=b, status=UNCERTAIN, shared=sf, p_e=self.p_prior)
            self.edges[(a, b)] = e
            self.out.setdefault(a, []).append(b)
        for dsts in self.out.values():
            dsts.sort()
        self.refresh_uncertain_weights(cell_sides)

    def mark_certain(self, a: int, b: int, t_bound: float, kind: str,
                     t_est: Optional[float] = None):
        """t_bound is the guaranteed worst-case crossing time; t_est, when
        given, is a typical-crossing estimate used as the search weight so
        that a conservatively bounded edge is not priced out of the plan."""
        e = self.edges[(a, b)]
        if e.status == IMPOSSIBLE:
            raise RuntimeError(f"edge ({a},{b}) flips impossible -> certain")
        e.status = CERTAIN
        e.weight = t_bound if t_est is None else min(t_est, t_bound)
        e.t_bound = t_bound
        e.cert_kind = kind

    def mark_impossible(self, a: int, b: int):
        e = self.edges[(a, b)]
        if e.status == CERTAIN:
            raise RuntimeError(f"edge ({a},{b}) flips certain -> impossible")
        e.status = IMPOSSIBLE
        e.weight = 0.0

    def expected_info_gain(self, a: int, b: int) -> float:
        """p_e times the total entropy of the target node's uncertain
        outgoing edges (what resolving the target cell would teach us)."""
        e = self.edges[(a, b)]
        total = 0.0
        for dst in self.out.get(b, ()):
            e2 = self.edges[(b, dst)]
            if e2.status == UNCERTAIN:
                total += edge_entropy(e2.p_e)
        return e.p_e * total

    def refresh_uncertain_weights(self, cell_sides: dict):
        """Recompute every uncertain edge weight; l_u is the source cell's
        side length along the transition axis."""
        for (a, b), e in self.edges.items():
            if e.status != UNCERTAIN:
                continue
            l_u = float(cell_sides[a][e.shared.axis])
            e.weight = uncertain_weight(self.C_u, l_u, self.beta_u,
                                        self.expected_info_gain(a, b))

    def total_entropy(self) -> float:
        return sum(edge_entropy(e.p_e) for e in self.edges.values()
                   if e.status == UNCERTAIN)

    def status_tally(self) -> dict:
        tally = {CERTAIN: 0, IMPOSSIBLE: 0, UNCERTAIN: 0}
        for e in self.edges.values():
            tally[e.status] += 1
        return tally

    def shortest_path(self, src: int, dst: int, blocked=frozenset()):
        """Dijkstra over non-impossible edges; ties broken by the
        lexicographically smallest node-id sequence. Edges in ``blocked``
        are skipped for this query only. Returns (path, cost) or
        (None, inf)."""
        best: dict = {}
        heap = [(0.0, (src,))]
        while heap:
            d, path = heapq.heappop(heap)
            node = path[-1]
            if node in best and best[node] <= (d, path):
                continue
            best[node] = (d, path)
            if node == dst:
                return list(path), d
            for nxt in self.out.get(node, ()):
                if (node, nxt) in blocked:
                    continue
                e = self.edges[(node, nxt)]
                if e.status == IMPOSSIBLE:
                    continue
                nd = d + e.weight
                cand = (nd, path + (nxt,))
                if nxt not in best or cand < best[nxt]:
                    heapq.heappush(heap, cand)
        return None, math.inf

    def snapshot(self) -> dict:
        return {
            "edges": [
                {"source": a, "target": b, "status": e.status,
                 "weight": e.weight, "p_e": e.p_e if e.status == UNCERTAIN else None,
                 "t_bound": e.t_bound, "cert_kind": e.cert_kind}
                for (a, b), e in sorted(self.edges.items())
            ],
            "tally": self.status_tally(),
            "entropy": self.total_entropy(),
        }
