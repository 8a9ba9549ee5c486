"""Response hierarchy, node weights and the tree-lasso penalty.

Each node ``v`` owns the group ``G_v`` of responses at the leaves below it.
Internal nodes carry a height ``h_v`` in [0, 1]; the group weights are::

    internal v:  w_v = (1 - h_v) * prod_{a in ancestors(v)} h_a
    leaf v:      w_v = prod_{a in ancestors(v)} h_a

so the weights along any root-to-leaf path sum to one.  ``h = 1`` everywhere
reduces the penalty to the lasso and ``h_root = 0`` to a group lasso over
all responses.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.cluster.hierarchy import linkage
from scipy.spatial.distance import squareform

from tgslmm.core import (
    DimensionMismatch,
    EmptyData,
    MissingHeight,
    NonFinite,
    TgslmmError,
    as_matrix,
)


@dataclass(frozen=True)
class TreeNode:
    id: int
    children: tuple[int, ...] = ()
    response: Optional[int] = None
    h: Optional[float] = None
    group: tuple[int, ...] = ()
    weight: Optional[float] = None

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass(frozen=True)
class ResponseTree:
    nodes: tuple[TreeNode, ...]
    root_ids: tuple[int, ...]
    k: int

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "root_ids", tuple(self.root_ids))
        _check_structure(self)

    @property
    def leaves(self) -> list[TreeNode]:
        return [v for v in self.nodes if v.is_leaf]

    @property
    def internal(self) -> list[TreeNode]:
        return [v for v in self.nodes if not v.is_leaf]

    def parents(self) -> dict[int, int]:
        return {c: v.id for v in self.nodes for c in v.children}

    def ancestors(self, node_id: int) -> list[int]:
        """Strict ancestors of ``node_id``, nearest first."""
        par = self.parents()
        out = []
        while node_id in par:
            node_id = par[node_id]
            out.append(node_id)
        return out

    def leaf_weights(self) -> np.ndarray:
        """Length-k array of leaf weights indexed by response."""
        w = np.empty(self.k)
        for v in self.leaves:
            if v.weight is None:
                raise MissingHeight("weights not computed; call compute_weights first")
            w[v.response] = v.weight
        return w

    def internal_groups(self) -> list[tuple[tuple[int, ...], float]]:
        out = []
        for v in self.internal:
            if v.weight is None:
                raise MissingHeight("weights not computed; call compute_weights first")
            out.append((v.group, v.weight))
        return out


def _check_structure(tree: ResponseTree) -> None:
    nodes = tree.nodes
    for i, v in enumerate(nodes):
        if v.id != i:
            raise TgslmmError(f"node at position {i} has id {v.id}; ids must be 0..{len(nodes) - 1}")
    seen_child: set[int] = set()
    for v in nodes:
        if len(v.children) == 1:
            raise TgslmmError(f"internal node {v.id} has a single child")
        for c in v.children:
            if not 0 <= c < len(nodes):
                raise TgslmmError(f"node {v.id} refers to unknown child {c}")
            if c in seen_child:
                raise TgslmmError(f"node {c} has more than one parent")
            seen_child.add(c)
        if v.is_leaf and v.response is None:
            raise TgslmmError(f"leaf {v.id} has no response index")
        if v.h is not None and not 0.0 <= v.h <= 1.0:
            raise TgslmmError(f"node {v.id} has height {v.h} outside [0, 1]")
    roots = set(tree.root_ids)
    if roots != {v.id for v in nodes} - seen_child:
        raise TgslmmError("root_ids must be exactly the nodes without a parent")
    responses = sorted(v.response for v in nodes if v.is_leaf)
    if responses != list(range(tree.k)):
        raise TgslmmError(f"leaves must cover responses 0..{tree.k - 1} exactly once")
    # acyclic: every node reachable from a root exactly once
    reached = 0
    stack = list(tree.root_ids)
    while stack:
        v = nodes[stack.pop()]
        reached += 1
        if reached > len(nodes):
            raise TgslmmError("tree contains a cycle")
        stack.extend(v.children)
    if reached != len(nodes):
        raise TgslmmError("tree contains a cycle or unreachable nodes")


def build_tree(nodes: Sequence[dict], root_ids: Sequence[int], k: int) -> ResponseTree:
    """Assemble a tree from plain node records and fill in leaf groups.

    Each record has ``id``, ``children`` and optionally ``h`` and
    ``response`` (an integer index).
    """
    by_id = {int(r["id"]): r for r in nodes}
    if sorted(by_id) != list(range(len(nodes))):
        raise TgslmmError("node ids must be 0..len(nodes)-1 without gaps")
    raw = [
        TreeNode(
            id=i,
            children=tuple(int(c) for c in by_id[i].get("children", ())),
            response=None if by_id[i].get("response") is None else int(by_id[i]["response"]),
            h=None if by_id[i].get("h") is None else float(by_id[i]["h"]),
        )
        for i in range(len(nodes))
    ]
    tree = ResponseTree(tuple(raw), tuple(int(r) for r in root_ids), int(k))
    return _with_groups(tree)


def _with_groups(tree: ResponseTree) -> ResponseTree:
    groups: dict[int, tuple[int, ...]] = {}

    def visit(i: int) -> tuple[int, ...]:
        v = tree.nodes[i]
        if v.is_leaf:
            g = (v.response,)
        else:
            g = tuple(sorted(r for c in v.children for r in visit(c)))
        groups[i] = g
        return g

    for r in tree.root_ids:
        visit(r)
    nodes = tuple(replace(v, group=groups[v.id]) for v in tree.nodes)
    return ResponseTree(nodes, tree.root_ids, tree.k)


def flat_tree(k: int) -> ResponseTree:
    """k independent leaves: the tree-lasso penalty becomes the lasso."""
    if k < 1:
        raise EmptyData("need at least one response")
    nodes = [{"id": c, "children": [], "response": c} for c in range(k)]
    return compute_weights(build_tree(nodes, range(k), k))


def star_tree(k: int, h: float) -> ResponseTree:
    """One root of height ``h`` over k leaves."""
    nodes = [{"id": c, "children": [], "response": c} for c in range(k)]
    if k == 1:
        return compute_weights(build_tree(nodes, [0], 1))
    nodes.append({"id": k, "children": list(range(k)), "h": h})
    return compute_weights(build_tree(nodes, [k], k))


def _abs_correlation(Y: np.ndarray) -> np.ndarray:
    Yc = Y - Y.mean(axis=0)
    norms = np.linalg.norm(Yc, axis=0)
    live = norms > 0
    Z = np.zeros_like(Yc)
    Z[:, live] = Yc[:, live] / norms[live]
    R = np.abs(Z.T @ Z)
    np.fill_diagonal(R, 1.0)
    return np.clip(R, 0.0, 1.0)


def cluster_responses(Y, cut: float = 0.9) -> ResponseTree:
    """Average-linkage clustering of response columns on ``1 - |corr|``.

    Merge heights are divided by the largest merge height and used as node
    heights ``h_v``.  Merges whose normalized height exceeds ``cut`` are
    dropped, so the result may be a forest.  Constant columns have zero
    correlation with everything.
    """
    Y = as_matrix(Y, "Y")
    n, k = Y.shape
    if k < 1 or n < 1:
        raise EmptyData(f"Y: cannot cluster shape {Y.shape}")
    if not np.all(np.isfinite(Y)):
        raise NonFinite("Y contains NaN or Inf")
    if not 0.0 <= cut <= 1.0:
        raise TgslmmError(f"cut must lie in [0, 1], got {cut}")
    leaves = [{"id": c, "children": [], "response": c} for c in range(k)]
    if k == 1:
        return compute_weights(build_tree(leaves, [0], 1))

    D = 1.0 - _abs_correlation(Y)
    # identical (or sign-flipped) columns must merge at exactly zero height
    D[D < 1e-12] = 0.0
    np.fill_diagonal(D, 0.0)
    Z = linkage(squareform(D, checks=False), method="average")
    heights = Z[:, 2]
    top = heights.max()
    hnorm = heights / top if top > 0 else np.zeros_like(heights)

    # scipy numbers merge i as node k + i; keep only merges at or below the cut
    records = list(leaves)
    remap: dict[int, int] = {c: c for c in range(k)}
    parent_of: dict[int, int] = {}
    for i, (a, b, _, _) in enumerate(Z):
        if hnorm[i] > cut:
            continue
        new_id = len(records)
        remap[k + i] = new_id
        ca, cb = remap[int(a)], remap[int(b)]
        records.append({"id": new_id, "children": [ca, cb], "h": float(hnorm[i])})
        parent_of[ca] = parent_of[cb] = new_id
    roots = [r["id"] for r in records if r["id"] not in parent_of]
    return compute_weights(build_tree(records, roots, k))


def compute_weights(tree: ResponseTree) -> ResponseTree:
    """Return a copy of ``tree`` with every node's group weight set."""
    for v in tree.internal:
        if v.h is None:
            raise MissingHeight(f"internal node {v.id} has no height")
    weights: dict[int, float] = {}

    def visit(i: int, prod: float) -> None:
        v = tree.nodes[i]
        if v.is_leaf:
            weights[i] = prod
            return
        weights[i] = (1.0 - v.h) * prod
        for c in v.children:
            visit(c, prod * v.h)

    for r in tree.root_ids:
        visit(r, 1.0)
    nodes = tuple(replace(v, weight=weights[v.id]) for v in tree.nodes)
    return ResponseTree(nodes, tree.root_ids, tree.k)


def penalty_value(tree: ResponseTree, beta, lam: float) -> float:
    """``lam * sum_j sum_v w_v * ||beta[j, G_v]||_2`` over all nodes."""
    B = as_matrix(getattr(beta, "beta", beta), "beta")
    if B.shape[1] != tree.k:
        raise DimensionMismatch(f"beta has {B.shape[1]} columns, tree has {tree.k} leaves")
    total = float(np.sum(np.abs(B) * tree.leaf_weights()))
    for group, w in tree.internal_groups():
        if w:
            total += w * float(np.sum(np.linalg.norm(B[:, list(group)], axis=1)))
    return lam * total
