"""Weighted undirected graphs: file ingestion, volumes, cuts, conductance."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np


class GraphError(ValueError):
    """Invalid graph content (isolated node, negative weight, bad subset...)."""


class GraphParseError(GraphError):
    """Malformed input file; message carries path and line number."""


NodeSubset = Iterable[int]  # any iterable of node ids; converted to a bool mask internally


@dataclass(frozen=True)
class Graph:
    """Immutable weighted undirected graph.

    The adjacency is dense and symmetric: every undirected edge is stored in
    both directions, so degree/volume sums over ordered pairs count each edge
    twice. Desk-scale graphs only; no mutation API.
    """

    n_nodes: int
    edges: tuple  # ((u, v, w) with u < v, one entry per undirected edge)
    adjacency: np.ndarray  # (N, N) float64, symmetric, zero diagonal
    degrees: np.ndarray  # (N,) weighted degrees
    volume: float  # sum of degrees = twice the undirected edge weight
    features: Optional[np.ndarray] = None  # (N, d0) float64
    labels: Optional[np.ndarray] = None  # (N,) int class ids
    connected: bool = True
    dropped_self_loops: int = 0

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def identity_features(self) -> np.ndarray:
        """Features to use when none were loaded: one-hot per node."""
        if self.features is not None:
            return self.features
        return np.eye(self.n_nodes)

    def subset_mask(self, subset: NodeSubset) -> np.ndarray:
        mask = np.zeros(self.n_nodes, dtype=bool)
        idx = np.asarray(list(subset), dtype=int)
        if idx.size and (idx.min() < 0 or idx.max() >= self.n_nodes):
            raise GraphError(f"subset contains node ids outside 0..{self.n_nodes - 1}")
        mask[idx] = True
        return mask


def build_graph(n_nodes: int, edges: Sequence[tuple], features=None, labels=None,
                dropped_self_loops: int = 0) -> Graph:
    """Assemble a Graph from (u, v, w) undirected edges; validates invariants."""
    if n_nodes <= 0:
        raise GraphError("graph must have at least one node")
    adj = np.zeros((n_nodes, n_nodes))
    canon = {}
    for u, v, w in edges:
        if u == v:
            raise GraphError(f"self-loop ({u},{u}) must be dropped before build")
        if w <= 0:
            raise GraphError(f"edge ({u},{v}) has non-positive weight {w}")
        if not (0 <= u < n_nodes and 0 <= v < n_nodes):
            raise GraphError(f"edge ({u},{v}) outside node range 0..{n_nodes - 1}")
        key = (min(u, v), max(u, v))
        canon[key] = canon.get(key, 0.0) + float(w)
    for (u, v), w in canon.items():
        adj[u, v] += w
        adj[v, u] += w
    degrees = adj.sum(axis=1)
    if np.any(degrees <= 0):
        bad = int(np.argmin(degrees))
        raise GraphError(f"node {bad} is isolated (zero degree)")
    edge_tuple = tuple(sorted((u, v, w) for (u, v), w in canon.items()))
    g = Graph(
        n_nodes=n_nodes,
        edges=edge_tuple,
        adjacency=adj,
        degrees=degrees,
        volume=float(degrees.sum()),
        features=features,
        labels=labels,
        connected=_is_connected(adj),
        dropped_self_loops=dropped_self_loops,
    )
    if not g.connected:
        warnings.warn("graph is disconnected", stacklevel=2)
    return g


def _is_connected(adj: np.ndarray) -> bool:
    n = adj.shape[0]
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        u = stack.pop()
        for v in np.nonzero(adj[u] > 0)[0]:
            if not seen[v]:
                seen[v] = True
                stack.append(int(v))
    return bool(seen.all())


def _parse_id(token: str):
    try:
        value = int(token)
    except ValueError:
        return None
    return value if value >= 0 else None


def load_graph(edge_path, feature_path=None, label_path=None) -> Graph:
    """Load a graph from a TSV edge list "u<TAB>v[<TAB>w]".

    Lines starting with '#' and blank lines are skipped; any whitespace
    separates fields. Node ids are 0-based integers, or arbitrary tokens
    remapped in order of first appearance when any id fails to parse as a
    non-negative integer. Duplicate edges are summed, self-loops dropped
    with a warning, negative or zero weights rejected.
    """
    edge_path = Path(edge_path)
    if not edge_path.exists():
        raise FileNotFoundError(f"edge file not found: {edge_path}")
    raw = []
    with open(edge_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise GraphParseError(
                    f"{edge_path}:{lineno}: expected 'u v [w]', got {len(parts)} fields")
            w = 1.0
            if len(parts) == 3:
                try:
                    w = float(parts[2])
                except ValueError:
                    raise GraphParseError(
                        f"{edge_path}:{lineno}: weight {parts[2]!r} is not a number") from None
                if not np.isfinite(w):
                    raise GraphParseError(f"{edge_path}:{lineno}: weight must be finite")
            if w < 0:
                raise GraphError(f"{edge_path}:{lineno}: negative edge weight {w}")
            if w == 0:
                raise GraphError(f"{edge_path}:{lineno}: zero edge weight")
            raw.append((lineno, parts[0], parts[1], w))
    if not raw:
        raise GraphParseError(f"{edge_path}: no edges found")

    int_ids = all(_parse_id(u) is not None and _parse_id(v) is not None for _, u, v, _ in raw)
    remap: dict = {}

    def node_id(token: str) -> int:
        if int_ids:
            return int(token)
        if token not in remap:
            remap[token] = len(remap)
        return remap[token]

    edges = []
    dropped = 0
    for lineno, ut, vt, w in raw:
        u, v = node_id(ut), node_id(vt)
        if u == v:
            dropped += 1
            continue
        edges.append((u, v, w))
    if dropped:
        warnings.warn(f"{edge_path}: dropped {dropped} self-loop(s)", stacklevel=2)
    if not edges:
        raise GraphError(f"{edge_path}: only self-loops present")
    n_nodes = (max(max(u, v) for u, v, _ in edges) + 1) if int_ids else len(remap)

    features = labels = None
    if feature_path is not None:
        features = _load_features(Path(feature_path), n_nodes)
    if label_path is not None:
        labels = _load_labels(Path(label_path), n_nodes)
    return build_graph(n_nodes, edges, features=features, labels=labels,
                       dropped_self_loops=dropped)


def _load_features(path: Path, n_nodes: int) -> np.ndarray:
    if not path.exists():
        raise FileNotFoundError(f"feature file not found: {path}")
    rows = {}
    width = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                nid = int(parts[0])
                vals = [float(p) for p in parts[1:]]
            except ValueError:
                raise GraphParseError(f"{path}:{lineno}: malformed feature row") from None
            if not vals:
                raise GraphParseError(f"{path}:{lineno}: feature row has no values")
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise GraphParseError(f"{path}:{lineno}: inconsistent feature width")
            if not (0 <= nid < n_nodes):
                raise GraphError(f"{path}:{lineno}: feature row for unknown node {nid}")
            rows[nid] = vals
    missing = set(range(n_nodes)) - set(rows)
    if missing:
        raise GraphError(f"{path}: missing features for nodes {sorted(missing)[:5]}...")
    return np.array([rows[i] for i in range(n_nodes)])


def _load_labels(path: Path, n_nodes: int) -> np.ndarray:
    if not path.exists():
        raise FileNotFoundError(f"label file not found: {path}")
    out = np.full(n_nodes, -1, dtype=int)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise GraphParseError(f"{path}:{lineno}: expected 'node-id class-id'")
            try:
                nid, cid = int(parts[0]), int(parts[1])
            except ValueError:
                raise GraphParseError(f"{path}:{lineno}: malformed label row") from None
            if not (0 <= nid < n_nodes):
                raise GraphError(
                    f"{path}:{lineno}: label references node {nid} absent from the edge list")
            out[nid] = cid
    if np.any(out < 0):
        missing = np.nonzero(out < 0)[0]
        raise GraphError(f"{path}: missing labels for nodes {missing[:5].tolist()}...")
    return out


def subset_volume(g: Graph, subset: NodeSubset) -> float:
    """Sum of weighted degrees over the subset; 0.0 for an empty subset."""
    mask = g.subset_mask(subset)
    return float(g.degrees[mask].sum())


def cut_weight(g: Graph, subset: NodeSubset) -> float:
    """Total weight of undirected edges with exactly one endpoint in the subset."""
    mask = g.subset_mask(subset)
    total = 0.0
    for u, v, w in g.edges:
        if mask[u] != mask[v]:
            total += w
    return total


def subset_conductance(g: Graph, subset: NodeSubset) -> float:
    """cut(S) / min(vol(S), vol(G) - vol(S)) for a proper non-empty subset."""
    mask = g.subset_mask(subset)
    size = int(mask.sum())
    if size == 0 or size == g.n_nodes:
        raise GraphError("conductance needs a proper non-empty subset")
    vol = float(g.degrees[mask].sum())
    denom = min(vol, g.volume - vol)
    if denom <= 0:
        raise GraphError("subset or complement has zero volume")
    return cut_weight(g, np.nonzero(mask)[0]) / denom


def graph_conductance(g: Graph, max_n: int = 16) -> float:
    """Minimum subset conductance by exhaustive enumeration (N <= max_n).

    Subsets whose smaller side has zero volume (possible only on broken
    input) are skipped; for disconnected graphs the minimum is 0.
    """
    n = g.n_nodes
    if n > max_n:
        raise GraphError(
            f"graph_conductance enumerates 2^N subsets; N={n} exceeds cap {max_n}. "
            "Use the bound-test harness for larger graphs.")
    if n < 2:
        raise GraphError("conductance undefined for a single node")
    degrees = g.degrees
    total = g.volume
    bits = 1 << np.arange(n)
    edge_u = np.array([u for u, _, _ in g.edges])
    edge_v = np.array([v for _, v, _ in g.edges])
    edge_w = np.array([w for _, _, w in g.edges])
    best = np.inf
    for m in range(1, 2 ** n - 1):
        mask = (m & bits) != 0
        vol = float(degrees[mask].sum())
        denom = min(vol, total - vol)
        if denom <= 0:
            continue
        cut = float(edge_w[mask[edge_u] != mask[edge_v]].sum())
        best = min(best, cut / denom)
    if not np.isfinite(best):
        raise GraphError("no subset with positive min-volume found")
    return float(best)
