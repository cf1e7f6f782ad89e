"""R-vine tree sequences: representation, validation, selection, Kendall's tau.

Variables are 0-based in memory.  Tree 1 nodes are the variables; nodes of
tree j >= 2 are indices into the edge list of tree j-1.  Each edge carries
its conditioned pair and conditioning set, computed from the complete unions
of its two end nodes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


class StructureClass(str, Enum):
    GENERAL = "general"
    CVINE = "cvine"
    DVINE = "dvine"


@dataclass(frozen=True)
class Edge:
    """One pair copula position in the tree sequence.

    ``nodes`` are variables for level 1, else indices into the previous
    tree's edge list.  ``union`` is the complete union A_e.
    """

    level: int
    nodes: tuple[int, int]
    conditioned: tuple[int, int]
    conditioning: tuple[int, ...]
    union: tuple[int, ...]

    @property
    def label(self) -> str:
        cond = ",".join(str(v + 1) for v in self.conditioned)
        if self.conditioning:
            return cond + ";" + ",".join(str(v + 1) for v in self.conditioning)
        return cond


def build_edge(level: int, nodes: tuple[int, int], prev_tree: list[Edge] | None) -> Edge:
    """Construct an edge, deriving its conditioned/conditioning sets."""
    i, j = sorted(nodes)
    if level == 1:
        return Edge(1, (i, j), (i, j), (), (i, j))
    ea, eb = prev_tree[i], prev_tree[j]
    if not set(ea.nodes) & set(eb.nodes):
        raise ValueError(f"proximity violation: nodes {i} and {j} of tree {level - 1} share no node")
    ua, ub = set(ea.union), set(eb.union)
    conditioning = tuple(sorted(ua & ub))
    conditioned = tuple(sorted(ua ^ ub))
    if len(conditioned) != 2:
        raise ValueError("conditioned set of an edge must have exactly two elements")
    union = tuple(sorted(ua | ub))
    return Edge(level, (i, j), conditioned, conditioning, union)


@dataclass
class RVineStructure:
    """A complete R-vine tree sequence T_1 .. T_{d-1}."""

    d: int
    trees: list[list[Edge]]

    def edge(self, level: int, index: int) -> Edge:
        return self.trees[level - 1][index]

    def all_edges(self):
        for level, tree in enumerate(self.trees, start=1):
            for index, e in enumerate(tree):
                yield level, index, e

    @classmethod
    def from_node_pairs(cls, d: int, node_pairs: list[list[tuple[int, int]]]) -> "RVineStructure":
        trees: list[list[Edge]] = []
        for lev, pairs in enumerate(node_pairs, start=1):
            prev = trees[-1] if trees else None
            trees.append([build_edge(lev, p, prev) for p in pairs])
        out = cls(d, trees)
        problem = validate(out)
        if problem is not None:
            raise ValueError(problem)
        return out

    @classmethod
    def from_edge_labels(
        cls, d: int, labels: list[list[tuple[tuple[int, int], tuple[int, ...]]]]
    ) -> "RVineStructure":
        """Build from (conditioned, conditioning) labels per level (test fixtures)."""
        trees: list[list[Edge]] = []
        for lev, level_labels in enumerate(labels, start=1):
            prev = trees[-1] if trees else None
            level_edges = []
            for conditioned, conditioning in level_labels:
                want = (tuple(sorted(conditioned)), tuple(sorted(conditioning)))
                matches = []
                for cand in _candidate_node_pairs(d, trees, lev):
                    e = build_edge(lev, cand, prev)
                    if (e.conditioned, e.conditioning) == want:
                        matches.append(e)
                if len(matches) != 1:
                    raise ValueError(f"label {want} matches {len(matches)} candidate edges at level {lev}")
                level_edges.append(matches[0])
            trees.append(level_edges)
        out = cls(d, trees)
        problem = validate(out)
        if problem is not None:
            raise ValueError(problem)
        return out


def complete_union(edge: Edge) -> tuple[int, ...]:
    return edge.union


def conditioning_set(edge: Edge) -> tuple[int, ...]:
    return edge.conditioning


def conditioned_pair(edge: Edge) -> tuple[int, int]:
    return edge.conditioned


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[ra] = rb
        return True


def validate(structure: RVineStructure) -> str | None:
    """Check the tree-sequence conditions; return a message for the first violation."""
    d = structure.d
    if d < 2:
        return "dimension must be at least 2"
    if len(structure.trees) != d - 1:
        return f"expected {d - 1} trees, found {len(structure.trees)}"
    for level, tree in enumerate(structure.trees, start=1):
        n_nodes = d if level == 1 else len(structure.trees[level - 2])
        if len(tree) != n_nodes - 1:
            return f"tree {level} must have {n_nodes - 1} edges, found {len(tree)}"
        uf = _UnionFind(n_nodes)
        seen = set()
        for idx, e in enumerate(tree):
            i, j = e.nodes
            if not (0 <= i < j < n_nodes):
                return f"tree {level} edge {idx} has invalid nodes {e.nodes}"
            if e.nodes in seen:
                return f"tree {level} repeats edge between nodes {e.nodes}"
            seen.add(e.nodes)
            if not uf.union(i, j):
                return f"tree {level} contains a cycle through nodes {e.nodes}"
            if level >= 2:
                prev = structure.trees[level - 2]
                if not set(prev[i].nodes) & set(prev[j].nodes):
                    return f"tree {level} edge {idx} violates the proximity condition"
                ref = build_edge(level, e.nodes, prev)
                if (ref.conditioned, ref.conditioning) != (e.conditioned, e.conditioning):
                    return f"tree {level} edge {idx} has inconsistent conditioned/conditioning sets"
            if len(e.conditioning) != level - 1:
                return f"tree {level} edge {idx} conditioning set must have {level - 1} elements"
    return None


# ---------------------------------------------------------------------------
# empirical Kendall's tau


def _sorted_count_inversions(a: np.ndarray) -> tuple[np.ndarray, int]:
    n = a.shape[0]
    if n <= 1:
        return a, 0
    mid = n // 2
    left, cl = _sorted_count_inversions(a[:mid])
    right, cr = _sorted_count_inversions(a[mid:])
    # pairs (i in left, j in right) with left[i] > right[j]
    cross = int(np.searchsorted(right, left, side="left").sum())
    merged = np.sort(np.concatenate([left, right]), kind="stable")
    return merged, cl + cr + cross


def empirical_kendall_tau(x, y) -> float:
    """Concordance-based tau_a = (C - D) / (n choose 2), O(n log n).

    No tie correction: pseudo data are continuous; exact ties (from clipping)
    resolve by stable input order and count as concordant.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d arrays of equal length")
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least two observations")
    order = np.argsort(x, kind="stable")
    _, discordant = _sorted_count_inversions(y[order])
    return 1.0 - 4.0 * discordant / (n * (n - 1))


# ---------------------------------------------------------------------------
# structure counting and candidate enumeration


def count_structures(d: int) -> int:
    """Number of distinct R-vine tree sequences on d variables (exact integer)."""
    if d < 2:
        raise ValueError("d must be >= 2")
    if d == 2:
        return 1
    return math.factorial(d) // 2 * 2 ** math.comb(d - 2, 2)


def _candidate_node_pairs(d: int, trees: list[list[Edge]], level: int) -> list[tuple[int, int]]:
    if level == 1:
        return [(a, b) for a in range(d) for b in range(a + 1, d)]
    prev = trees[level - 2]
    pairs = []
    for i in range(len(prev)):
        for j in range(i + 1, len(prev)):
            if set(prev[i].nodes) & set(prev[j].nodes):
                pairs.append((i, j))
    return pairs


def allowed_edges(d: int, trees: list[list[Edge]], level: int) -> list[Edge]:
    """All edges permitted at this level by the proximity condition."""
    prev = trees[level - 2] if level >= 2 else None
    return [build_edge(level, p, prev) for p in _candidate_node_pairs(d, trees, level)]


# ---------------------------------------------------------------------------
# spanning-tree selection


def _edge_sort_key(e: Edge) -> tuple:
    return (e.conditioned, e.conditioning)


def _kruskal(cands: list[Edge], weights: np.ndarray, n_nodes: int) -> list[int]:
    order = sorted(range(len(cands)), key=lambda i: (-weights[i], _edge_sort_key(cands[i])))
    uf = _UnionFind(n_nodes)
    chosen = []
    for i in order:
        a, b = cands[i].nodes
        if uf.union(a, b):
            chosen.append(i)
            if len(chosen) == n_nodes - 1:
                break
    if len(chosen) != n_nodes - 1:
        raise ValueError("candidate graph is disconnected")
    return sorted(chosen)


def _cvine_star(cands: list[Edge], weights: np.ndarray, n_nodes: int) -> list[int]:
    by_node: dict[int, list[int]] = {v: [] for v in range(n_nodes)}
    for i, e in enumerate(cands):
        a, b = e.nodes
        by_node[a].append(i)
        by_node[b].append(i)
    best_root, best_sum = None, -np.inf
    for v in range(n_nodes):
        incident = by_node[v]
        reach = {cands[i].nodes[0] if cands[i].nodes[1] == v else cands[i].nodes[1] for i in incident}
        if len(reach) != n_nodes - 1:
            continue
        s = float(sum(weights[i] for i in incident))
        if s > best_sum:
            best_root, best_sum = v, s
    if best_root is None:
        raise ValueError("no feasible star root among candidate edges")
    return sorted(by_node[best_root])


def _dvine_path(cands: list[Edge], weights: np.ndarray, n_nodes: int) -> list[int]:
    # greedy: start from the heaviest edge, extend at the endpoint owning the
    # heaviest edge to an unused node
    lookup: dict[tuple[int, int], int] = {tuple(sorted(e.nodes)): i for i, e in enumerate(cands)}
    order = sorted(range(len(cands)), key=lambda i: (-weights[i], _edge_sort_key(cands[i])))
    first = order[0]
    a, b = cands[first].nodes
    path = [a, b]
    chosen = [first]
    used = {a, b}
    while len(used) < n_nodes:
        best = None
        for endpoint_pos in (0, -1):
            v = path[endpoint_pos]
            for w in range(n_nodes):
                if w in used:
                    continue
                i = lookup.get((min(v, w), max(v, w)))
                if i is None:
                    continue
                key = (-weights[i], _edge_sort_key(cands[i]))
                if best is None or key < best[0]:
                    best = (key, i, endpoint_pos, w)
        if best is None:
            raise ValueError("cannot extend a Hamiltonian path through the candidate edges")
        _, i, endpoint_pos, w = best
        chosen.append(i)
        used.add(w)
        if endpoint_pos == 0:
            path.insert(0, w)
        else:
            path.append(w)
    return sorted(chosen)


def select_tree(
    cands: list[Edge],
    weights,
    n_nodes: int,
    structure_class: StructureClass = StructureClass.GENERAL,
    level: int = 1,
) -> list[int]:
    """Pick a spanning tree among candidate edges, maximizing total |weight|.

    Returns indices into ``cands``.  Ties break on the lexicographic edge
    label so selection is deterministic.  C-vines pick the star whose root
    has the largest incident weight sum; D-vines build the first tree as a
    greedy Hamiltonian path (higher levels are forced by proximity).
    """
    weights = np.abs(np.asarray(weights, dtype=float))
    if len(cands) != weights.shape[0]:
        raise ValueError("weights must match candidates")
    if structure_class == StructureClass.CVINE:
        return _cvine_star(cands, weights, n_nodes)
    if structure_class == StructureClass.DVINE and level == 1:
        return _dvine_path(cands, weights, n_nodes)
    return _kruskal(cands, weights, n_nodes)


# ---------------------------------------------------------------------------
# triangular-matrix form (natural sampling order)


def structure_matrix(structure: RVineStructure) -> tuple[np.ndarray, list[list[tuple[int, int]]]]:
    """Lower-triangular R-vine matrix plus the edge placed at each cell.

    ``M[j, j]`` is the diagonal variable of column j; below it, ``M[i, j]``
    is the partner in the tree of level d - i, conditioned on the entries
    underneath.  Returns (matrix with -1 padding, edge_positions) where
    ``edge_positions[j]`` lists (level, edge_index) top-to-bottom for column j.
    """
    d = structure.d
    M = np.full((d, d), -1, dtype=int)
    positions: list[list[tuple[int, int]]] = []
    remaining: list[set[int]] = [set(range(len(t))) for t in structure.trees]
    for j in range(d - 1):
        top = d - 1 - j  # 1-based level of this column's highest tree
        top_idx = remaining[top - 1]
        if len(top_idx) != 1:
            raise ValueError("invalid tree sequence: top tree not unique during matrix build")
        e_idx = next(iter(top_idx))
        e = structure.trees[top - 1][e_idx]
        x, partner = e.conditioned
        M[j, j] = x
        M[j + 1, j] = partner
        remaining[top - 1].discard(e_idx)
        col_positions = [(top, e_idx)]
        for i in range(j + 2, d):
            lev = d - i
            hits = [
                k for k in remaining[lev - 1] if x in structure.trees[lev - 1][k].conditioned
            ]
            if len(hits) != 1:
                raise ValueError("invalid tree sequence: ambiguous column fill")
            k = hits[0]
            f = structure.trees[lev - 1][k]
            a, b = f.conditioned
            M[i, j] = b if a == x else a
            remaining[lev - 1].discard(k)
            col_positions.append((lev, k))
        positions.append(col_positions)
    leftover = set(range(d)) - {int(M[j, j]) for j in range(d - 1)}
    M[d - 1, d - 1] = leftover.pop()
    positions.append([])
    return M, positions


# ---------------------------------------------------------------------------
# serialization helpers (formats documented in the CLI module)


def structure_to_dict(structure: RVineStructure) -> dict:
    return {
        "d": structure.d,
        "trees": [
            [
                {
                    "nodes": list(e.nodes),
                    "conditioned": list(e.conditioned),
                    "conditioning": list(e.conditioning),
                }
                for e in tree
            ]
            for tree in structure.trees
        ],
    }


def structure_from_dict(payload: dict) -> RVineStructure:
    d = int(payload["d"])
    trees: list[list[Edge]] = []
    for lev, tree in enumerate(payload["trees"], start=1):
        prev = trees[-1] if trees else None
        edges = []
        for spec in tree:
            e = build_edge(lev, tuple(spec["nodes"]), prev)
            if list(e.conditioned) != list(spec["conditioned"]) or list(e.conditioning) != list(
                spec["conditioning"]
            ):
                raise ValueError(f"edge sets in serialized structure are inconsistent at level {lev}")
            edges.append(e)
        trees.append(edges)
    out = RVineStructure(d, trees)
    problem = validate(out)
    if problem is not None:
        raise ValueError(problem)
    return out
