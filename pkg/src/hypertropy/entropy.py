"""Structural information of weighted graphs under hierarchical partitions.

Includes the classic node-wise form over discrete trees, the differentiable
level-wise form over soft assignment stacks (the training objective), the
entropy decomposition identity, exhaustive small-graph oracles, and a greedy
agglomerative baseline.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .graph import Graph, GraphError, graph_conductance
from .tree import AssignmentStack, PartitionTree, TreeError, TreeNode, _annotate, _renumber

LOG_FLOOR = 1e-10  # floor inside every log of the soft objective


class EntropyError(ValueError):
    pass


def one_dim_entropy(g: Graph) -> float:
    """Shannon entropy (bits) of the degree distribution d_i / Vol(G)."""
    if np.any(g.degrees <= 0):
        raise EntropyError("graph has a zero-degree node")
    V = g.volume
    return float(-(g.degrees * np.log2(g.degrees / V)).sum() / V)


def tree_entropy(g: Graph, t: PartitionTree) -> float:
    """Node-wise structural information (bits) of g under a partitioning tree.

    Sum over non-root nodes of -(cut/V) * log2(vol / parent vol). Empty
    modules contribute zero, so relaxed trees evaluate fine; a childless node
    carrying more than one graph node is malformed.
    """
    V = g.volume
    total = 0.0
    for node in t.root.walk():
        if node.is_leaf() and len(node.members) > 1:
            raise TreeError(f"leaf node {node.id} is not a singleton")
        if node.parent is None:
            continue
        if not node.members:
            continue  # empty module: zero cut, zero contribution
        vol = float(g.degrees[sorted(node.members)].sum())
        if vol <= 0:
            raise EntropyError(f"non-empty module of node {node.id} has zero volume")
        parent_vol = float(g.degrees[sorted(node.parent.members)].sum())
        cut = _cut(g, node.members)
        total += -(cut / V) * np.log2(vol / parent_vol)
    return float(total)


def _cut(g: Graph, members: frozenset) -> float:
    mask = np.zeros(g.n_nodes, dtype=bool)
    mask[sorted(members)] = True
    total = 0.0
    for u, v, w in g.edges:
        if mask[u] != mask[v]:
            total += w
    return total


def soft_entropy(g: Graph, stack: AssignmentStack):
    """Level-wise structural information of a (possibly soft) assignment stack.

    For each level h with membership S^h = C^H ... C^{h+1}:

        -(1/V) * sum_k (V^h_k - s_k^T A s_k) * log2(V^h_k / V^{h-1}_parent(k))

    where V^h_k = s_k^T d and the edge sum runs over the symmetric adjacency
    (each undirected edge twice). Logs are floored at 1e-10; the volume ratio
    is deliberately not capped at 1 (soft stacks may exceed it). Differentiable
    when the stack entries are tape Variables; returns a float otherwise.
    """
    stack.validate(g.n_nodes)
    A = g.adjacency
    d_col = g.degrees[:, None]
    V = g.volume
    mats = stack.mats
    s_cur = np.eye(g.n_nodes)
    total = None
    for c in mats:
        # level volumes V^h_k = sum_i S_ik d_i and internal mass s_k^T A s_k
        vol_h = ad.vsum(ad.multiply(s_cur, d_col), axis=0)
        internal = ad.vsum(ad.multiply(s_cur, ad.matmul(A, s_cur)), axis=0)
        s_next = ad.matmul(s_cur, c)
        vol_next = ad.vsum(ad.multiply(s_next, d_col), axis=0)
        parent_vol = ad.matmul(c, vol_next)
        ratio = ad.divide(vol_h, ad.clamp_min(parent_vol, LOG_FLOOR))
        logs = ad.log2(ad.clamp_min(ratio, LOG_FLOOR))
        level = ad.vsum(ad.multiply(ad.subtract(vol_h, internal), logs))
        term = ad.divide(ad.negative(level), V)
        total = term if total is None else ad.add(total, term)
        s_cur = s_next
    if isinstance(total, ad.Variable):
        return total
    return float(total)


def entropy_decomposition(g: Graph, stack: AssignmentStack) -> float:
    """Level-wise entropy decomposition of a hard stack.

    sum_h sum_j (V^{h-1}_j / V) * E([C^h_kj V^h_k / V^{h-1}_j]_k) with E the
    Shannon entropy; equals one_dim_entropy(g) for every hard stack. Soft
    stacks are rejected (the identity is stated for trees).
    """
    if not stack.hard:
        raise EntropyError("decomposition identity requires a hard stack")
    stack.validate(g.n_nodes)
    mats = stack.values()
    memberships = stack.memberships()
    V = g.volume
    total = 0.0
    vol_at = [s.T @ g.degrees for s in memberships]  # index j: level H-j volumes
    for idx, c in enumerate(mats):
        vol_h = vol_at[idx]
        vol_parent = vol_at[idx + 1]
        for j in range(c.shape[1]):
            vj = vol_parent[j]
            if vj <= 0:
                continue
            p = c[:, j] * vol_h / vj
            nz = p > 0
            total += (vj / V) * float(-(p[nz] * np.log2(p[nz])).sum())
    return float(total)


# --- exhaustive small-graph oracles ----------------------------------------------

def _set_partitions(items: list):
    """All partitions of `items` into non-empty blocks (Bell-number many)."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def _partition_entropy(g: Graph, blocks: list) -> float:
    """Tree value of the height-2 tree (root -> blocks -> singleton leaves)."""
    V = g.volume
    d = g.degrees
    A = g.adjacency
    total = 0.0
    for block in blocks:
        idx = np.asarray(block, dtype=int)
        vol = float(d[idx].sum())
        internal = float(A[np.ix_(idx, idx)].sum())
        total += -((vol - internal) / V) * np.log2(vol / V)
        total += float(-(d[idx] * np.log2(d[idx] / vol)).sum() / V)
    return total


def _partition_tree(g: Graph, blocks: list) -> PartitionTree:
    root = TreeNode(id=0, height=0, members=frozenset(range(g.n_nodes)))
    for block in sorted(blocks, key=min):
        mid = TreeNode(id=0, height=1, members=frozenset(block), parent=root)
        root.children.append(mid)
        for i in sorted(block):
            mid.children.append(TreeNode(id=0, height=2, members=frozenset([i]), parent=mid))
    _renumber(root)
    _annotate(root, g)
    return PartitionTree(root=root, height=2)


def min_tree_entropy(g: Graph, height: int = 2, max_n: int = 7):
    """Exact minimum structural information over height-2 trees, by enumerating
    every set partition of the vertices as the level-1 modules.

    Returns (bits, argmin PartitionTree). Only height 2 is supported; higher
    trees are combinatorially out of reach.
    """
    if height != 2:
        raise EntropyError("exhaustive search supports height 2 only")
    if g.n_nodes > max_n:
        raise EntropyError(
            f"exhaustive search enumerates Bell({g.n_nodes}) partitions; cap is N <= {max_n}")
    best = np.inf
    best_blocks = None
    for part in _set_partitions(list(range(g.n_nodes))):
        value = _partition_entropy(g, part)
        if value < best - 1e-15:
            best = value
            best_blocks = [list(b) for b in part]
    return float(best), _partition_tree(g, best_blocks)


def normalized_entropy(g: Graph, height: int = 2, max_n: int = 7,
                       require_bound: bool = False) -> float:
    """tau(G; H) = H^H(G) / H^1(G) by exhaustive enumeration.

    The often-quoted lower bound tau >= Phi(G) does NOT hold in general: any
    optimal tree containing a module of volume > Vol(G)/2 can break it (the
    triangle is the smallest counterexample, tau = 0.877 < Phi = 1). Pass
    require_bound=True to raise when the bound fails; the restricted statement
    that does hold is checked in min_tree_entropy_halved below.
    """
    h_opt, _ = min_tree_entropy(g, height=height, max_n=max_n)
    tau = h_opt / one_dim_entropy(g)
    if require_bound:
        phi = graph_conductance(g)
        if tau < phi - 1e-12:
            raise EntropyError(f"conductance bound violated: tau={tau!r} < phi={phi!r}")
    return float(tau)


def min_tree_entropy_halved(g: Graph, max_n: int = 7):
    """Minimum height-2 tree value over trees whose modules all have volume
    <= Vol(G)/2 (the regime where the conductance lower bound actually holds).

    Returns (bits, count of admissible trees); bits is +inf when no partition
    qualifies (e.g. on two nodes every split has a large side).
    """
    if g.n_nodes > max_n:
        raise EntropyError(f"exhaustive search cap is N <= {max_n}")
    half = g.volume / 2.0
    best = np.inf
    count = 0
    for part in _set_partitions(list(range(g.n_nodes))):
        vols = [float(g.degrees[np.asarray(b)].sum()) for b in part]
        if any(v > half + 1e-12 for v in vols):
            continue
        count += 1
        best = min(best, _partition_entropy(g, part))
    return float(best), count


# --- greedy agglomerative baseline -------------------------------------------------

def greedy_tree(g: Graph, trace: list = None):
    """Two-level tree by greedy agglomeration on the structural information.

    Starts from singleton modules and repeatedly applies the merge with the
    largest strict decrease of the height-2 tree value, stopping when no merge
    decreases it. Ties break toward the lexicographically smallest pair of
    module anchors (each module is anchored at its minimum node id).
    Returns (PartitionTree, bits); `trace`, when given, collects the objective
    value after every accepted merge (leading entry = singleton value).
    """
    if not g.connected:
        raise GraphError("greedy agglomeration expects a connected graph")
    blocks = [[i] for i in range(g.n_nodes)]
    current = _partition_entropy(g, blocks)
    if trace is not None:
        trace.append(current)
    while len(blocks) > 1:
        candidates = []
        for a in range(len(blocks)):
            for b in range(a + 1, len(blocks)):
                merged = [blk for i, blk in enumerate(blocks) if i not in (a, b)]
                merged.append(blocks[a] + blocks[b])
                value = _partition_entropy(g, merged)
                gain = current - value
                if gain > 1e-12:  # accepted merges must strictly decrease
                    anchor = tuple(sorted((min(blocks[a]), min(blocks[b]))))
                    candidates.append((gain, anchor, (a, b), value))
        if not candidates:
            break
        best_gain = max(c[0] for c in candidates)
        ties = [c for c in candidates if best_gain - c[0] <= 1e-12]
        _, _, (a, b), value = min(ties, key=lambda c: c[1])
        merged_block = sorted(blocks[a] + blocks[b])
        blocks = [blk for i, blk in enumerate(blocks) if i not in (a, b)]
        blocks.append(merged_block)
        current = value
        if trace is not None:
            trace.append(current)
    tree = _partition_tree(g, blocks)
    return tree, float(current)
