"""Regenerate the bundled fixtures (requires networkx; run from the repo root).

- barbell6.tsv: two unit-weight triangles joined by one bridge edge.
- karate.tsv / karate_labels.tsv: the 34-node karate club graph; labels are
  the 4 modularity communities from louvain_communities(seed=0), renumbered
  by smallest member.
- football.tsv / football_labels.tsv: a seeded planted-partition graph with
  the college-football statistics (115 nodes, 12 communities of sizes 9-10,
  ~613 undirected edges at roughly a 2:1 intra/inter split, connected).
"""
from pathlib import Path

import networkx as nx
import numpy as np

FIXTURES = Path(__file__).resolve().parents[1] / "src" / "hypertropy" / "fixtures"


def write_edges(path, edges):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# u\tv (unit weights)\n")
        for u, v in edges:
            fh.write(f"{u}\t{v}\n")


def write_labels(path, labels):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# node\tclass\n")
        for node, cid in enumerate(labels):
            fh.write(f"{node}\t{cid}\n")


def barbell6():
    edges = [(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5), (2, 3)]
    write_edges(FIXTURES / "barbell6.tsv", edges)


def karate():
    g = nx.karate_club_graph()
    write_edges(FIXTURES / "karate.tsv", sorted(g.edges()))
    communities = nx.community.louvain_communities(g, seed=0)
    communities = sorted((sorted(c) for c in communities), key=lambda c: c[0])
    labels = [0] * g.number_of_nodes()
    for cid, members in enumerate(communities):
        for node in members:
            labels[node] = cid
    assert len(communities) == 4, f"expected 4 communities, got {len(communities)}"
    write_labels(FIXTURES / "karate_labels.tsv", labels)


def football():
    sizes = [10, 10, 10, 10, 10, 10, 10, 9, 9, 9, 9, 9]  # 115 nodes, 12 groups
    p_in, p_out = 0.75, 0.036
    for attempt in range(100):
        rng = np.random.default_rng(20240 + attempt)
        labels = np.repeat(np.arange(len(sizes)), sizes)
        n = labels.size
        edges = []
        for u in range(n):
            for v in range(u + 1, n):
                p = p_in if labels[u] == labels[v] else p_out
                if rng.random() < p:
                    edges.append((u, v))
        g = nx.Graph(edges)
        if g.number_of_nodes() == n and nx.is_connected(g):
            break
    else:
        raise RuntimeError("no connected sample found")
    write_edges(FIXTURES / "football.tsv", edges)
    write_labels(FIXTURES / "football_labels.tsv", labels.tolist())
    print(f"football: {n} nodes, {len(edges)} edges, "
          f"{sum(1 for u, v in edges if labels[u] == labels[v])} intra")


if __name__ == "__main__":
    FIXTURES.mkdir(parents=True, exist_ok=True)
    barbell6()
    karate()
    football()
    print("fixtures written to", FIXTURES)
