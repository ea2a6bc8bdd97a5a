"""Clustering agreement and embedding quality measures."""
from __future__ import annotations

import warnings
from typing import Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .graph import Graph, GraphError
from .lorentz import Lorentz

COINCIDENT_PENALTY = 1e6  # per-pair distortion charge for coincident embeddings


class MetricError(ValueError):
    pass


def _check_labels(pred, truth):
    pred = np.asarray(pred, dtype=int)
    truth = np.asarray(truth, dtype=int)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise MetricError(f"label shapes differ: {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise MetricError("empty labelings")
    return pred, truth


def _contingency(pred, truth):
    pi = np.unique(pred, return_inverse=True)[1]
    ti = np.unique(truth, return_inverse=True)[1]
    table = np.zeros((pi.max() + 1, ti.max() + 1))
    np.add.at(table, (pi, ti), 1.0)
    return table


def nmi(pred, truth) -> float:
    """Mutual information normalized by the arithmetic mean of label entropies.

    The log base cancels in the ratio. When both labelings are constant the
    partitions are identical and the score is defined as 1.0; a constant
    prediction against a non-constant truth scores 0.0.
    """
    pred, truth = _check_labels(pred, truth)
    table = _contingency(pred, truth)
    n = table.sum()
    pr = table.sum(axis=1) / n
    pc = table.sum(axis=0) / n
    h_pred = float(-(pr[pr > 0] * np.log(pr[pr > 0])).sum())
    h_truth = float(-(pc[pc > 0] * np.log(pc[pc > 0])).sum())
    if h_pred == 0.0 and h_truth == 0.0:
        return 1.0  # both single-cluster: identical partitions
    if h_pred == 0.0 or h_truth == 0.0:
        return 0.0
    p = table / n
    nz = p > 0
    outer = np.outer(pr, pc)
    mi = float((p[nz] * np.log(p[nz] / outer[nz])).sum())
    return float(mi / (0.5 * (h_pred + h_truth)))


def ari(pred, truth) -> float:
    """Adjusted Rand index (pair counting with the hypergeometric baseline)."""
    pred, truth = _check_labels(pred, truth)
    table = _contingency(pred, truth)
    n = table.sum()

    def c2(x):
        return x * (x - 1) / 2.0

    sum_cells = c2(table).sum()
    sum_rows = c2(table.sum(axis=1)).sum()
    sum_cols = c2(table.sum(axis=0)).sum()
    total = c2(n)
    expected = sum_rows * sum_cols / total
    max_index = 0.5 * (sum_rows + sum_cols)
    if max_index == expected:
        return 1.0  # both partitions trivial in the same way
    return float((sum_cells - expected) / (max_index - expected))


def auc_scores(pos_scores, neg_scores) -> float:
    """Probability a positive scores above a negative, ties credited 1/2."""
    pos = np.asarray(pos_scores, dtype=float)
    neg = np.asarray(neg_scores, dtype=float)
    if pos.size == 0 or neg.size == 0:
        raise MetricError("need at least one positive and one negative score")
    diff = pos[:, None] - neg[None, :]
    return float(((diff > 0).sum() + 0.5 * (diff == 0).sum()) / diff.size)


def auc_link(embeddings, g: Graph, seed: int = 0, frac: float = 0.1,
             samples: Optional[int] = None) -> float:
    """Link-prediction AUC of the embedding: held-out positive edges versus an
    equal number of uniform non-edges, scored by negative geodesic distance."""
    z = np.asarray(embeddings, dtype=float)
    if z.shape[0] != g.n_nodes:
        raise MetricError("embedding row count differs from the graph")
    rng = np.random.default_rng(seed)
    n_pos = max(1, int(round(frac * len(g.edges))))
    if samples is not None:
        n_pos = min(n_pos, samples)
    if len(g.edges) < 2:
        raise MetricError("too few edges to hold out a test split")
    edge_set = {(u, v) for u, v, _ in g.edges}
    if len(edge_set) >= g.n_nodes * (g.n_nodes - 1) // 2:
        raise MetricError("graph is complete: no negative pairs exist")
    pos_idx = rng.choice(len(g.edges), size=n_pos, replace=False)
    pos = [(g.edges[i][0], g.edges[i][1]) for i in pos_idx]
    neg = []
    while len(neg) < n_pos:
        u, v = rng.integers(0, g.n_nodes, size=2)
        a, b = int(min(u, v)), int(max(u, v))
        if a == b or (a, b) in edge_set:
            continue
        neg.append((a, b))
    man = Lorentz(_curvature_from(z))
    pos_scores = [-float(man.dist(z[i], z[j], check=False)) for i, j in pos]
    neg_scores = [-float(man.dist(z[i], z[j], check=False)) for i, j in neg]
    return auc_scores(pos_scores, neg_scores)


def _curvature_from(z: np.ndarray) -> float:
    inner = float((z[0, 1:] ** 2).sum() - z[0, 0] ** 2)
    if inner >= 0:
        raise MetricError("embedding rows are not Lorentz points")
    return 1.0 / inner


def distortion(embeddings, g: Graph) -> float:
    """Mean absolute deviation of d_graph/d_embedding from 1 over node pairs.

    Graph distances are weighted shortest paths; the diagonal is excluded and
    the average runs over the N(N-1) ordered off-diagonal pairs. Coincident
    embeddings of distinct nodes contribute a capped penalty with a warning.
    """
    z = np.asarray(embeddings, dtype=float)
    if not g.connected:
        raise GraphError("distortion needs a connected graph")
    if z.shape[0] != g.n_nodes:
        raise MetricError("embedding row count differs from the graph")
    sp = shortest_path(csr_matrix(g.adjacency), method="D", directed=False)
    man = Lorentz(_curvature_from(z))
    inner = z[:, 1:] @ z[:, 1:].T - np.outer(z[:, 0], z[:, 0])
    emb = np.arccosh(np.maximum(man.k * inner, 1.0)) / man.sqrt_neg_k
    off = ~np.eye(g.n_nodes, dtype=bool)
    ratios = np.zeros_like(sp)
    coincident = off & (emb <= 0)
    ok = off & (emb > 0)
    ratios[ok] = np.abs(sp[ok] / emb[ok] - 1.0)
    if coincident.any():
        warnings.warn(f"{int(coincident.sum())} node pair(s) embedded at the same point",
                      stacklevel=2)
        ratios[coincident] = COINCIDENT_PENALTY
    n = g.n_nodes
    return float(ratios[off].sum() / (n * (n - 1)))
