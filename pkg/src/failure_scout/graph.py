"""Mutual k-NN graph over embeddings and failure-pattern bookkeeping.

Two nodes are adjacent when each lies among the other's k nearest
neighbors.  A failure pattern is a connected component, of size at least
the evidence threshold, inside the subgraph induced by misclassified
nodes.  The same component search runs offline on ground-truth labels and
online on annotator-confirmed ones.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import ParameterError

_BLOCK = 1024  # rows of the distance matrix held at once


@dataclass(frozen=True)
class MutualKnnGraph:
    n: int
    k_nn: int
    adj: tuple[tuple[int, ...], ...]  # sorted neighbor lists, symmetric

    def neighbors(self, i: int) -> tuple[int, ...]:
        return self.adj[i]

    def edges(self):
        for i, nbrs in enumerate(self.adj):
            for j in nbrs:
                if i < j:
                    yield (i, j)

    @property
    def n_edges(self) -> int:
        return sum(len(a) for a in self.adj) // 2


def build_mutual_knn(ds: Dataset, k_nn: int) -> MutualKnnGraph:
    """Symmetric mutual k-NN adjacency, Euclidean distances.

    Distance ties are broken toward the lower sample id so the graph is
    reproducible.  k_nn = 0 yields an edgeless graph.
    """
    n = ds.n
    if not 0 <= k_nn < n:
        raise ParameterError(f"k_nn must be in [0, {n - 1}], got {k_nn}")
    x = ds.embeddings
    sq_norms = np.einsum("ij,ij->i", x, x)
    knn: list[set[int]] = []
    for start in range(0, n, _BLOCK):
        stop = min(start + _BLOCK, n)
        sq = sq_norms[start:stop, None] + sq_norms[None, :] - 2.0 * (x[start:stop] @ x.T)
        np.maximum(sq, 0.0, out=sq)
        # stable sort: equal distances keep ascending-id order
        order = np.argsort(sq, axis=1, kind="stable")
        for r, i in enumerate(range(start, stop)):
            row = order[r]
            knn.append(set(row[row != i][:k_nn].tolist()))
    adj = tuple(
        tuple(sorted(j for j in knn[i] if i in knn[j])) for i in range(n)
    )
    return MutualKnnGraph(n=n, k_nn=k_nn, adj=adj)


def connected_components(g: MutualKnnGraph, nodes: set[int]) -> list[set[int]]:
    """Components of the subgraph induced by `nodes`, ordered by smallest member."""
    seen: set[int] = set()
    out: list[set[int]] = []
    for root in sorted(nodes):
        if root in seen:
            continue
        comp = {root}
        stack = [root]
        while stack:
            u = stack.pop()
            for v in g.adj[u]:
                if v in nodes and v not in comp:
                    comp.add(v)
                    stack.append(v)
        seen |= comp
        out.append(comp)
    return out


@dataclass(frozen=True)
class PatternAssignment:
    """Per-sample pattern label: -1 for none, else 1..p."""

    pattern_of: np.ndarray
    p: int
    m_threshold: int

    def members(self, pattern_id: int) -> set[int]:
        if not 1 <= pattern_id <= self.p:
            raise ParameterError(f"pattern_id must be in 1..{self.p}")
        return set(np.flatnonzero(self.pattern_of == pattern_id).tolist())


def ground_truth_patterns(
    g: MutualKnnGraph, misclassified: np.ndarray, m_threshold: int
) -> PatternAssignment:
    """Label components of the misclassified subgraph with size >= m_threshold.

    Patterns are numbered 1..P in order of their smallest member id;
    everything else, including undersized components, gets -1.
    """
    misclassified = np.asarray(misclassified, dtype=bool)
    if misclassified.shape != (g.n,):
        raise ParameterError(f"mask length {misclassified.shape} != node count {g.n}")
    if m_threshold < 1:
        raise ParameterError("m_threshold must be >= 1")
    pattern_of = np.full(g.n, -1, dtype=np.int64)
    nodes = set(np.flatnonzero(misclassified).tolist())
    p = 0
    for comp in connected_components(g, nodes):
        if len(comp) >= m_threshold:
            p += 1
            pattern_of[sorted(comp)] = p
    return PatternAssignment(pattern_of=pattern_of, p=p, m_threshold=m_threshold)


def save_ground_truth(pa: PatternAssignment, k_nn: int, path: str | Path) -> None:
    Path(path).write_text(json.dumps({
        "k_nn": k_nn,
        "m": pa.m_threshold,
        "pattern_of": pa.pattern_of.tolist(),
    }) + "\n")


def load_ground_truth(path: str | Path) -> tuple[PatternAssignment, int]:
    rec = json.loads(Path(path).read_text())
    pattern_of = np.asarray(rec["pattern_of"], dtype=np.int64)
    p = int(pattern_of.max(initial=0))
    pa = PatternAssignment(pattern_of=pattern_of, p=p, m_threshold=int(rec["m"]))
    return pa, int(rec["k_nn"])


@dataclass(frozen=True)
class ConfirmedPattern:
    members: frozenset[int]
    round_index: int


@dataclass
class DetectionState:
    """Online confirmation bookkeeping; sets in `confirmed` stay disjoint."""

    confirmed: list[ConfirmedPattern] = field(default_factory=list)
    consumed: set[int] = field(default_factory=set)


def detect_new_patterns(
    g: MutualKnnGraph,
    state: DetectionState,
    queried_misclassified: set[int],
    m_threshold: int,
    round_index: int = 0,
) -> list[frozenset[int]]:
    """Confirm fresh components of annotator-verified misclassified nodes.

    Nodes already inside a confirmed pattern are ignored, so repeating a
    call with the same evidence confirms nothing new.
    """
    active = set(queried_misclassified) - state.consumed
    new: list[frozenset[int]] = []
    for comp in connected_components(g, active):
        if len(comp) >= m_threshold:
            members = frozenset(comp)
            state.confirmed.append(ConfirmedPattern(members, round_index))
            state.consumed |= comp
            new.append(members)
    return new
