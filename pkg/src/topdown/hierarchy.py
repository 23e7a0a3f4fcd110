"""Tree hierarchy, coherence checking, aggregation, and children proportions.

A hierarchy is a rooted tree over named series. Node ids are dense integers
assigned deterministically (breadth-first, names sorted within each level),
so the same edge list always produces the same ordering regardless of the
order edges arrive in. Children within a family are ordered
lexicographically by name.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np


class HierarchyError(ValueError):
    """Structural problem in the hierarchy definition or a panel mismatch."""


@dataclass(frozen=True)
class Family:
    """A parent node together with its ordered children."""

    parent_id: int
    child_ids: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.child_ids)


@dataclass(frozen=True, eq=False)
class HierarchyTree:
    """Immutable rooted tree over dense integer node ids.

    Attributes:
        node_names: name of each node; index position is the node id.
        parent_of: parent id per node, None for the root.
        root_id: id of the unique root.
        level_of: depth per node, root at level 0.
        children_of: ordered (lexicographic by name) child ids per node.
    """

    node_names: tuple[str, ...]
    parent_of: tuple[Optional[int], ...]
    root_id: int
    level_of: tuple[int, ...]
    children_of: tuple[tuple[int, ...], ...]
    name_to_id: dict = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.node_names)

    @property
    def n_levels(self) -> int:
        return max(self.level_of) + 1

    @property
    def leaf_ids(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.n_nodes) if not self.children_of[i])

    @property
    def internal_ids(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.n_nodes) if self.children_of[i])

    def is_leaf(self, node_id: int) -> bool:
        return not self.children_of[node_id]

    def families(self) -> list[Family]:
        """All (parent, children) families, parents in id (BFS) order."""
        return [Family(p, self.children_of[p]) for p in self.internal_ids]

    def level_members(self, level: int) -> tuple[int, ...]:
        return tuple(i for i in range(self.n_nodes) if self.level_of[i] == level)


@dataclass(frozen=True)
class AggregationMatrix:
    """Binary mapping from leaf values to all node values (rows sum leaves)."""

    S: np.ndarray
    leaf_ids: tuple[int, ...]

    @property
    def n_leaves(self) -> int:
        return self.S.shape[1]


@dataclass(frozen=True)
class SeriesPanel:
    """T x N matrix of observed values, columns ordered by tree node id."""

    values: np.ndarray
    time_index: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        t = np.asarray(self.time_index)
        object.__setattr__(self, "time_index", t)
        if v.ndim != 2:
            raise ValueError("panel values must be a T x N matrix")
        if len(t) != v.shape[0]:
            raise ValueError("time index length must match the panel rows")
        if not np.all(np.isfinite(v)):
            raise ValueError("panel values must be finite")
        if len(t) > 1 and not np.all(t[1:] > t[:-1]):
            raise ValueError("time index must be strictly increasing")

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_series(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class CoherenceReport:
    """Per-(internal node, time) coherence flags plus the worst violation."""

    passed: np.ndarray          # (T, n_internal) booleans
    internal_ids: tuple[int, ...]
    rel_violation: np.ndarray   # (T, n_internal) relative violations
    rel_tol: float

    @property
    def ok(self) -> bool:
        return bool(self.passed.all())

    @property
    def max_violation(self) -> float:
        return float(self.rel_violation.max()) if self.rel_violation.size else 0.0

    def failures(self) -> list[tuple[int, int, float]]:
        """(node_id, time_idx, relative violation) for every failing cell."""
        out = []
        t_idx, n_idx = np.nonzero(~self.passed)
        for t, j in zip(t_idx, n_idx):
            out.append((self.internal_ids[j], int(t), float(self.rel_violation[t, j])))
        return out


@dataclass(frozen=True)
class Proportions:
    """Children proportions over time plus degenerate (zero-parent) flags."""

    values: np.ndarray       # (T, C) rows on the simplex
    degenerate: np.ndarray   # (T,) True where the children summed to zero


def build_tree(edges: Iterable[tuple[str, str]]) -> HierarchyTree:
    """Build a HierarchyTree from (child_name, parent_name) pairs.

    Node ids are assigned breadth-first from the root with names sorted
    within each level, which makes the ordering independent of the edge
    order. Raises HierarchyError on cycles, multiple roots, a node with
    two parents, or an empty edge list.
    """
    parent_name: dict[str, str] = {}
    names: set[str] = set()
    n_edges = 0
    for child, parent in edges:
        n_edges += 1
        child, parent = str(child), str(parent)
        if child == parent:
            raise HierarchyError(f"cycle detected: self edge at {child!r}")
        names.add(child)
        names.add(parent)
        if child in parent_name and parent_name[child] != parent:
            raise HierarchyError(
                f"node {child!r} has two parents: "
                f"{parent_name[child]!r} and {parent!r}")
        parent_name[child] = parent
    if n_edges == 0:
        raise HierarchyError("edge list is empty")

    roots = sorted(names - set(parent_name))
    if not roots:
        raise HierarchyError("cycle detected: no root node")
    if len(roots) > 1:
        raise HierarchyError(f"multiple roots: {roots}")
    root = roots[0]

    children_names: dict[str, list[str]] = {n: [] for n in names}
    for child, parent in parent_name.items():
        children_names[parent].append(child)
    for lst in children_names.values():
        lst.sort()

    # BFS from the root; levels are sorted by name so ids are reproducible.
    order: list[str] = []
    level: dict[str, int] = {root: 0}
    frontier = [root]
    while frontier:
        frontier.sort()
        order.extend(frontier)
        nxt = []
        for name in frontier:
            for ch in children_names[name]:
                level[ch] = level[name] + 1
                nxt.append(ch)
        frontier = nxt
    if len(order) != len(names):
        unreachable = sorted(names - set(order))
        raise HierarchyError(f"cycle detected: unreachable nodes {unreachable}")

    name_to_id = {n: i for i, n in enumerate(order)}
    parent_of = tuple(
        None if n == root else name_to_id[parent_name[n]] for n in order)
    children_of = tuple(
        tuple(name_to_id[c] for c in children_names[n]) for n in order)
    return HierarchyTree(
        node_names=tuple(order),
        parent_of=parent_of,
        root_id=name_to_id[root],
        level_of=tuple(level[n] for n in order),
        children_of=children_of,
        name_to_id=name_to_id,
    )


def aggregation_matrix(tree: HierarchyTree) -> AggregationMatrix:
    """Binary N x m matrix S with y = S @ b for any coherent panel."""
    leaf_ids = tree.leaf_ids
    leaf_col = {leaf: j for j, leaf in enumerate(leaf_ids)}
    n, m = tree.n_nodes, len(leaf_ids)
    S = np.zeros((n, m), dtype=np.float64)
    # accumulate descendant-leaf indicators from the deepest level upward
    for node in sorted(range(n), key=lambda i: -tree.level_of[i]):
        if tree.is_leaf(node):
            S[node, leaf_col[node]] = 1.0
        else:
            for c in tree.children_of[node]:
                S[node] += S[c]
    return AggregationMatrix(S=S, leaf_ids=leaf_ids)


def aggregate_from_leaves(
    leaf_values: np.ndarray,
    tree: HierarchyTree,
    time_index: Optional[np.ndarray] = None,
) -> SeriesPanel:
    """Build a coherent panel from leaf observations.

    Args:
        leaf_values: T x m matrix, columns ordered by ``tree.leaf_ids``.
        tree: the hierarchy.
        time_index: optional explicit index; defaults to 0..T-1.
    """
    leaf_values = np.asarray(leaf_values, dtype=np.float64)
    if leaf_values.ndim != 2:
        raise ValueError("leaf panel must be a T x m matrix")
    agg = aggregation_matrix(tree)
    if leaf_values.shape[1] != agg.n_leaves:
        raise ValueError(
            f"leaf panel has {leaf_values.shape[1]} columns, "
            f"tree has {agg.n_leaves} leaves")
    values = leaf_values @ agg.S.T
    if time_index is None:
        time_index = np.arange(leaf_values.shape[0])
    return SeriesPanel(values=values, time_index=time_index)


def check_coherence(
    panel: SeriesPanel, tree: HierarchyTree, rel_tol: float = 1e-9
) -> CoherenceReport:
    """Flag every (internal node, time) where the parent != sum of children.

    A cell passes when |y_parent - sum(children)| <= rel_tol * max(1, |y_parent|).
    """
    if panel.n_series != tree.n_nodes:
        raise ValueError(
            f"panel has {panel.n_series} series, tree has {tree.n_nodes} nodes")
    internal = tree.internal_ids
    viol = np.empty((panel.n_steps, len(internal)))
    for j, p in enumerate(internal):
        child_sum = panel.values[:, list(tree.children_of[p])].sum(axis=1)
        resid = np.abs(panel.values[:, p] - child_sum)
        viol[:, j] = resid / np.maximum(1.0, np.abs(panel.values[:, p]))
    return CoherenceReport(
        passed=viol <= rel_tol,
        internal_ids=internal,
        rel_violation=viol,
        rel_tol=rel_tol,
    )


def compute_proportions(panel: SeriesPanel, family: Family) -> Proportions:
    """Per-step fractions of the family total attributed to each child.

    Rows where the children sum to zero are set uniform and flagged
    degenerate. Negative child values raise, because proportions (and the
    Dirichlet targets built from them) are undefined for negative data.
    """
    cols = list(family.child_ids)
    if max(cols) >= panel.n_series:
        raise ValueError("panel does not contain all family children")
    child_vals = panel.values[:, cols]
    if np.any(child_vals < 0):
        bad = np.argwhere(child_vals < 0)[0]
        raise ValueError(
            f"negative child value at time {bad[0]}, child column {bad[1]}: "
            "proportions are undefined for negative data")
    totals = child_vals.sum(axis=1)
    degenerate = totals == 0.0
    C = len(cols)
    values = np.empty_like(child_vals)
    values[degenerate] = 1.0 / C
    ok = ~degenerate
    values[ok] = child_vals[ok] / totals[ok, None]
    return Proportions(values=values, degenerate=degenerate)
