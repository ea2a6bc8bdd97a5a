"""Discrete partitioning trees: hardening, BFS decoding, repair, cluster extraction."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .graph import Graph, cut_weight, subset_volume
from .lorentz import Lorentz


class TreeError(ValueError):
    pass


@dataclass
class TreeNode:
    id: int
    height: int
    members: frozenset  # graph node ids carried by this tree node
    children: list = field(default_factory=list)
    parent: Optional["TreeNode"] = None
    coords: Optional[np.ndarray] = None  # Lorentz point, when decoded from embeddings
    volume: float = 0.0
    cut: float = 0.0

    def is_leaf(self) -> bool:
        return not self.children

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()


@dataclass
class PartitionTree:
    root: TreeNode
    height: int

    def nodes(self):
        return list(self.root.walk())

    def nodes_at(self, height: int):
        return [n for n in self.root.walk() if n.height == height]

    def level_one(self):
        return list(self.root.children)

    def validate(self, g: Graph, strict: bool = True) -> None:
        """Nesting/partition invariants; strict additionally rejects empty
        modules, non-singleton leaves and duplicate-module chains."""
        if self.root.members != frozenset(range(g.n_nodes)):
            raise TreeError("root module must be the full vertex set")
        for node in self.root.walk():
            if node.children:
                union = set()
                size = 0
                for child in node.children:
                    union |= child.members
                    size += len(child.members)
                if union != set(node.members) or size != len(node.members):
                    raise TreeError(f"children of node {node.id} do not partition its module")
                if strict and len(node.children) == 1 and node.children[0].members == node.members:
                    raise TreeError(f"duplicate-module chain at node {node.id}")
            else:
                if strict and len(node.members) != 1:
                    raise TreeError(f"leaf {node.id} is not a singleton: {sorted(node.members)}")


def _renumber(root: TreeNode) -> None:
    """BFS ids and heights-as-depth; keeps traversal deterministic."""
    queue = [root]
    root.height = 0
    next_id = 0
    while queue:
        node = queue.pop(0)
        node.id = next_id
        next_id += 1
        for child in node.children:
            child.height = node.height + 1
            child.parent = node
            queue.append(child)


def _annotate(root: TreeNode, g: Graph) -> None:
    for node in root.walk():
        ids = sorted(node.members)
        node.volume = subset_volume(g, ids) if ids else 0.0
        node.cut = cut_weight(g, ids) if ids else 0.0


# --- assignment stacks -------------------------------------------------------

@dataclass
class AssignmentStack:
    """Per-level parent assignments C^h for h = H..1 (mats[0] maps the leaf level).

    Each C^h has shape (N_h, N_{h-1}) and row sums 1; the last matrix has a
    single column. `hard` marks one-hot rows.
    """

    mats: list
    hard: bool = False

    @property
    def height(self) -> int:
        return len(self.mats)

    @property
    def widths(self) -> list:
        # [N_H, N_{H-1}, ..., N_0]
        return [self.mats[0].shape[0]] + [m.shape[1] for m in self.mats]

    def values(self) -> list:
        out = []
        for m in self.mats:
            out.append(m.value if hasattr(m, "value") else np.asarray(m, dtype=float))
        return out

    def validate(self, n_nodes: int, atol: float = 1e-6) -> None:
        mats = self.values()
        if not mats:
            raise TreeError("empty assignment stack")
        if mats[0].shape[0] != n_nodes:
            raise TreeError(f"leaf level has {mats[0].shape[0]} rows, graph has {n_nodes}")
        if mats[-1].shape[1] != 1:
            raise TreeError("last assignment must map to the single root")
        prev = mats[0].shape[1]
        for m in mats[1:]:
            if m.shape[0] != prev:
                raise TreeError(f"level widths do not chain: {m.shape[0]} != {prev}")
            prev = m.shape[1]
        for h, m in enumerate(mats):
            rows = m.sum(axis=1)
            if np.abs(rows - 1.0).max() > atol:
                raise TreeError(f"assignment {h} is not row-stochastic (max err "
                                f"{float(np.abs(rows - 1.0).max()):.2e})")
            if self.hard and not np.all((m == 0.0) | (m == 1.0)):
                raise TreeError("stack marked hard but has fractional entries")

    def memberships(self) -> list:
        """Cumulative products S^h (N x N_h) for h = H..0; S^H is the identity."""
        mats = self.values()
        out = [np.eye(mats[0].shape[0])]
        for m in mats:
            out.append(out[-1] @ m)
        return out


def harden(stack: AssignmentStack) -> AssignmentStack:
    """One-hot each row at its argmax; ties go to the lowest column index."""
    mats = []
    for m in stack.values():
        hard = np.zeros_like(m)
        hard[np.arange(m.shape[0]), m.argmax(axis=1)] = 1.0
        mats.append(hard)
    return AssignmentStack(mats=mats, hard=True)


# --- decoding -------------------------------------------------------------

def decode(stack: AssignmentStack, embeddings, g: Graph) -> PartitionTree:
    """Build the discrete tree from a hard stack, breadth-first from the root.

    `embeddings` is a mapping level -> (N_h, d+1) array (may be None). Level-h
    node k carries the graph nodes with S^h[i, k] = 1; empty columns produce
    no tree node. Leaves are the per-graph-node singletons.
    """
    if not stack.hard:
        raise TreeError("decode requires a hard stack; call harden() first")
    stack.validate(g.n_nodes)
    mats = stack.values()
    H = stack.height
    memberships = stack.memberships()  # index h: S^{H-h}... built leaf-first

    def emb(level):
        # embeddings: optional mapping level -> (N_h, d+1) array or Variable
        if embeddings is None:
            return None
        z = embeddings.get(level)
        if z is None:
            return None
        return np.asarray(z.value if hasattr(z, "value") else z, dtype=float)

    root = TreeNode(id=0, height=0, members=frozenset(range(g.n_nodes)))
    ze = emb(0)
    if ze is not None:
        root.coords = ze[0]
    # S^h in leaf-first order: memberships[j] = S^{H-j}; express by level h
    s_by_level = {H - j: s for j, s in enumerate(memberships)}
    nodes_by_level = {0: {0: root}}
    for h in range(1, H + 1):
        s = s_by_level[h]
        c = mats[H - h]  # C^h: rows level-h nodes, cols level-(h-1) parents
        level_nodes = {}
        ze = emb(h)
        for k in range(s.shape[1]):
            members = frozenset(np.nonzero(s[:, k] > 0.5)[0].tolist())
            if not members:
                continue
            parent_idx = int(np.argmax(c[k]))
            parent = nodes_by_level[h - 1].get(parent_idx)
            if parent is None:
                raise TreeError(f"level {h} node {k} assigned to empty parent {parent_idx}")
            node = TreeNode(id=0, height=h, members=members, parent=parent)
            if ze is not None:
                node.coords = ze[k]
            parent.children.append(node)
            level_nodes[k] = node
        nodes_by_level[h] = level_nodes
    _renumber(root)
    _annotate(root, g)
    tree = PartitionTree(root=root, height=H)
    tree.validate(g, strict=False)
    return tree


def repair(t: PartitionTree, g: Graph) -> PartitionTree:
    """Remove empty modules and collapse duplicate-module chains.

    Both edits leave the structural information unchanged; applied to a
    fixpoint so the strict tree invariants hold afterwards.
    """
    root = t.root
    changed = True
    while changed:
        changed = False
        for node in list(root.walk()):
            kept = []
            for child in node.children:
                if not child.members:
                    changed = True  # empty module: drop
                    continue
                kept.append(child)
            node.children = kept
            if len(node.children) == 1 and node.children[0].members == node.members:
                grand = node.children[0].children
                node.children = grand  # duplicate chain: splice the child out
                changed = True
    _renumber(root)
    _annotate(root, g)
    height = max((n.height for n in root.walk()), default=0)
    out = PartitionTree(root=root, height=height)
    out.validate(g, strict=True)
    return out


# --- clusterings -----------------------------------------------------------

def _labels_from_groups(n_nodes: int, groups: list) -> np.ndarray:
    """Cluster ids ordered by smallest member, for deterministic labelings."""
    labels = np.full(n_nodes, -1, dtype=int)
    for cid, members in enumerate(sorted(groups, key=min)):
        for i in members:
            labels[i] = cid
    if np.any(labels < 0):
        raise TreeError("groups do not cover all graph nodes")
    return labels


def natural_clusters(t: PartitionTree) -> np.ndarray:
    """Label each graph node by its level-1 ancestor (the root's children)."""
    n = len(t.root.members)
    groups = [child.members for child in t.root.children]
    if not groups:  # single-node tree
        return np.zeros(n, dtype=int)
    return _labels_from_groups(n, groups)


@dataclass
class _FrontierEntry:
    members: frozenset
    coords: Optional[np.ndarray]
    node: Optional[TreeNode]  # None for merged composites (cannot be split)
    dist: float


def extract_k(t: PartitionTree, k: int, curvature: float = -1.0) -> np.ndarray:
    """Exactly k clusters from the tree, merging/splitting the level-1 frontier.

    While the frontier is too wide, the two entries geodesically farthest from
    the root merge into their equal-weight centroid; while too narrow, the
    entry closest to the root splits into its children. Splitting skips
    childless entries and fails only when none remain.
    """
    n = len(t.root.members)
    if k < 1:
        raise TreeError("k must be >= 1")
    if k > n:
        raise TreeError(f"k={k} exceeds the number of graph nodes {n}")
    man = Lorentz(curvature)
    root_xy = t.root.coords
    if root_xy is None:
        raise TreeError("extract_k needs node coordinates; decode with embeddings")

    def entry(node: TreeNode) -> _FrontierEntry:
        if node.coords is None:
            raise TreeError(f"tree node {node.id} has no coordinates")
        return _FrontierEntry(node.members, node.coords, node,
                              float(man.dist(root_xy, node.coords, check=False)))

    frontier = [entry(c) for c in t.root.children] or [entry(t.root)]

    def sort_key(e: _FrontierEntry):
        return (e.dist, min(e.members))

    frontier.sort(key=sort_key)
    while len(frontier) != k:
        if len(frontier) > k:
            far_b = frontier.pop()
            far_a = frontier.pop()
            merged_coords = man.centroid(
                np.stack([far_a.coords, far_b.coords]), np.array([1.0, 1.0]))
            merged = _FrontierEntry(
                far_a.members | far_b.members, merged_coords, None,
                float(man.dist(root_xy, merged_coords, check=False)))
            frontier.append(merged)
            frontier.sort(key=sort_key)
        else:
            split_at = next((i for i, e in enumerate(frontier)
                             if e.node is not None and e.node.children), None)
            if split_at is None:
                raise TreeError(f"cannot reach k={k}: no splittable frontier node remains")
            victim = frontier.pop(split_at)
            frontier.extend(entry(c) for c in victim.node.children)
            frontier.sort(key=sort_key)
    return _labels_from_groups(n, [e.members for e in frontier])


# --- serialization -----------------------------------------------------------

def tree_to_dict(t: PartitionTree, curvature: float = -1.0) -> dict:
    """Nested export {id, height, members, poincare_xy, children[]}."""
    man = Lorentz(curvature)

    def conv(node: TreeNode) -> dict:
        xy = None
        if node.coords is not None and node.coords.shape[-1] == 3:
            xy = [float(v) for v in man.to_poincare(node.coords)]
        return {
            "id": node.id,
            "height": node.height,
            "members": sorted(int(i) for i in node.members),
            "poincare_xy": xy,
            "children": [conv(c) for c in node.children],
        }

    return conv(t.root)
