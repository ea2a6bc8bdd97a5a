"""Poincare-disc rendering: hand-rolled SVG for the tree view, matplotlib
figures for the report path."""
from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

# tab20-style palette; cycled when there are more clusters than colors
PALETTE = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#aec7e8", "#ffbb78",
    "#98df8a", "#ff9896", "#c5b0d5", "#c49c94", "#f7b6d2", "#c7c7c7",
    "#dbdb8d", "#9edae5",
]


class VizError(ValueError):
    pass


def _gather(node, parent=None, edges=None, nodes=None):
    if edges is None:
        edges, nodes = [], []
    nodes.append(node)
    if parent is not None:
        edges.append((parent, node))
    for child in node.get("children", []):
        _gather(child, node, edges, nodes)
    return edges, nodes


def _cluster_of_leaves(root) -> dict:
    """Leaf id -> index of its level-1 ancestor (root's child order)."""
    out = {}
    for cid, child in enumerate(root.get("children", [])):
        for node in _gather(child)[1]:
            if not node.get("children"):
                out[node["id"]] = cid
    return out


def poincare_svg(tree: dict, size: int = 640) -> str:
    """Render a decoded tree on the unit disc.

    Requires 2-d embeddings (poincare_xy on every node). Elements: one circle
    with class "disc", straight chords with class "edge", internal nodes
    "internal", the root "root", and leaves "leaf" colored by their level-1
    cluster.
    """
    if not tree or "id" not in tree:
        raise VizError("empty or malformed tree")
    edges, nodes = _gather(tree)
    for node in nodes:
        xy = node.get("poincare_xy")
        if xy is None or len(xy) != 2:
            raise VizError("tree has no 2-d coordinates; re-train with embed_dim=2")
    half = size / 2.0
    radius = half * 0.96

    def pt(node):
        x, y = node["poincare_xy"]
        return half + radius * x, half - radius * y

    cluster = _cluster_of_leaves(tree)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<circle class="disc" cx="{half}" cy="{half}" r="{radius}" '
        'fill="white" stroke="#333" stroke-width="1.5"/>',
    ]
    for a, b in edges:
        (x1, y1), (x2, y2) = pt(a), pt(b)
        parts.append(f'<line class="edge" x1="{x1:.2f}" y1="{y1:.2f}" '
                     f'x2="{x2:.2f}" y2="{y2:.2f}" stroke="#999" stroke-width="1"/>')
    for node in nodes:
        x, y = pt(node)
        if node is tree or node["id"] == tree["id"]:
            parts.append(f'<circle class="root" cx="{x:.2f}" cy="{y:.2f}" r="7" '
                         'fill="#000" stroke="white" stroke-width="1.5"/>')
        elif node.get("children"):
            parts.append(f'<circle class="internal" cx="{x:.2f}" cy="{y:.2f}" r="5" '
                         'fill="#555" stroke="white" stroke-width="1"/>')
        else:
            color = PALETTE[cluster.get(node["id"], 0) % len(PALETTE)]
            label = escape(",".join(str(m) for m in node.get("members", [])))
            parts.append(f'<circle class="leaf" cx="{x:.2f}" cy="{y:.2f}" r="4" '
                         f'fill="{color}"><title>{label}</title></circle>')
    parts.append("</svg>")
    return "\n".join(parts)


def save_loss_figure(histories: dict, path) -> None:
    """Per-seed training curves (log-ish view left linear: losses are bits)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for seed, history in sorted(histories.items()):
        ax.plot(range(len(history)), history, lw=1, label=f"seed {seed}")
    ax.set_xlabel("epoch")
    ax.set_ylabel("objective (bits)")
    if len(histories) <= 10:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_poincare_figure(tree: dict, path) -> None:
    """Matplotlib rendering of the same disc layout as the SVG."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    edges, nodes = _gather(tree)
    if any(n.get("poincare_xy") is None for n in nodes):
        raise VizError("tree has no 2-d coordinates")
    cluster = _cluster_of_leaves(tree)
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.add_patch(plt.Circle((0, 0), 1.0, fill=False, color="#333", lw=1.5))
    for a, b in edges:
        xs = [a["poincare_xy"][0], b["poincare_xy"][0]]
        ys = [a["poincare_xy"][1], b["poincare_xy"][1]]
        ax.plot(xs, ys, color="#999", lw=0.8, zorder=1)
    for node in nodes:
        x, y = node["poincare_xy"]
        if node["id"] == tree["id"]:
            ax.scatter([x], [y], c="black", s=60, zorder=3)
        elif node.get("children"):
            ax.scatter([x], [y], c="#555", s=35, zorder=3)
        else:
            color = PALETTE[cluster.get(node["id"], 0) % len(PALETTE)]
            ax.scatter([x], [y], c=color, s=25, zorder=2)
    ax.set_xlim(-1.05, 1.05)
    ax.set_ylim(-1.05, 1.05)
    ax.set_aspect("equal")
    ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
