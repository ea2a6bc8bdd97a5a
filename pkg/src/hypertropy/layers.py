"""Hyperbolic network layers and the bottom-up tree-building forward pass.

All layers keep their outputs on the Lorentz sheet by construction: linear
maps recompute the time coordinate, attention runs on squared Lorentzian
differences, and aggregation is the closed-form weighted centroid. The layers
accept tape Variables or plain arrays interchangeably.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from .graph import Graph
from .lorentz import Lorentz
from .tree import AssignmentStack

LEAKY_SLOPE = 0.1
TIMELIKE_FLOOR = 1e-15


@dataclass
class ModelConfig:
    """Architecture knobs; mirrors the JSON config block accepted by the CLI."""

    height: int = 2
    widths: Optional[list] = None  # internal level widths, leaf to root; resolved if None
    embed_dim: int = 2
    hidden_dim: int = 64
    curvature: float = -1.0
    seed: int = 0

    def resolve_widths(self, n_nodes: int) -> list:
        """Level sizes [N_H, ..., N_0] with N_H = n_nodes and N_0 = 1.

        Default schedule quarters the width per level; over-provisioning is
        harmless because redundant tree nodes end up empty.
        """
        if self.height < 1:
            raise ValueError("height must be >= 1")
        if self.widths is not None:
            widths = [int(w) for w in self.widths]
            if len(widths) != self.height + 1:
                raise ValueError(f"widths must list {self.height + 1} levels, got {len(widths)}")
            if widths[0] != n_nodes:
                raise ValueError(f"leaf width {widths[0]} != node count {n_nodes}")
            if widths[-1] != 1:
                raise ValueError("root width must be 1")
            if any(w <= 0 for w in widths):
                raise ValueError("level widths must be positive")
            return widths
        widths = [n_nodes]
        for _ in range(self.height - 1):
            widths.append(max(1, math.ceil(widths[-1] / 4)))
        widths.append(1)
        return widths


def _metric_row(dim_plus_one: int) -> np.ndarray:
    row = np.ones(dim_plus_one)
    row[0] = -1.0
    return row


def lorentz_linear(x, W, v, curvature: float, slope: float = LEAKY_SLOPE):
    """Dimension transform that lands on the sheet.

    Spatial part is leaky_relu(x W^T + v); the time coordinate is recomputed
    as sqrt(|spatial|^2 - 1/k), so the output satisfies <y,y>_L = 1/k exactly.
    """
    s = ad.leaky_relu(ad.add(ad.matmul(x, ad.transpose(W)), v), slope)
    t = ad.sqrt(ad.add(ad.vsum(ad.square(s), axis=1, keepdims=True), -1.0 / curvature))
    return ad.concat_cols(t, s)


def lorentz_attention(Q, K, mask, curvature: float, scale_n: Optional[int] = None):
    """Row-stochastic attention from squared Lorentzian differences.

    w_ij ~ exp(-sqdist(q_i, k_j) / sqrt(N)) * mask_ij, rows renormalized.
    Rows whose mask is entirely zero fall back to self-only weight 1 (the
    forward pass always feeds masks with self-loops, so this is a safety
    net for direct calls).
    """
    n = scale_n if scale_n is not None else ad.value_of(K).shape[0]
    inner = ad.minkowski_matrix(Q, K)
    sq = ad.subtract(2.0 / curvature, ad.multiply(inner, 2.0))
    scores = ad.divide(ad.negative(sq), math.sqrt(n))
    weights = ad.exp(scores)
    mask_val = ad.value_of(mask)
    empty = ~(mask_val > 0).any(axis=1)
    masked = ad.multiply(weights, mask)
    if empty.any():
        fallback = np.zeros_like(mask_val)
        fallback[empty, :] = np.eye(mask_val.shape[0])[empty, :]
        masked = ad.add(masked, fallback)
    denom = ad.vsum(masked, axis=1, keepdims=True)
    return ad.divide(masked, denom)


def lorentz_aggregate(weights, X, curvature: float):
    """Row-wise weighted centroid: row i is the closed-form minimizer of
    sum_j w_ij * sqdist(mu, x_j) on the sheet."""
    s = ad.matmul(weights, X)
    metric = _metric_row(ad.value_of(X).shape[1])
    q = ad.vsum(ad.multiply(ad.square(s), metric), axis=1, keepdims=True)
    denom = ad.sqrt(ad.clamp_min(ad.negative(q), TIMELIKE_FLOOR))
    return ad.divide(s, ad.multiply(denom, math.sqrt(-curvature)))


def mlp3(x, params: dict, prefix: str):
    """Three-layer perceptron, tanh hidden activations, linear output."""
    h = ad.tanh(ad.add(ad.matmul(x, ad.transpose(params[f"{prefix}.W0"])), params[f"{prefix}.b0"]))
    h = ad.tanh(ad.add(ad.matmul(h, ad.transpose(params[f"{prefix}.W1"])), params[f"{prefix}.b1"]))
    return ad.add(ad.matmul(h, ad.transpose(params[f"{prefix}.W2"])), params[f"{prefix}.b2"])


def lorentz_conv(x_lifted, adjacency, params: dict, curvature: float):
    """Leaf encoder: attention-weighted centroid of linearly transformed nodes,
    masked by the adjacency with self-loops added."""
    q = lorentz_linear(x_lifted, params["enc.q.W"], params["enc.q.v"], curvature)
    k = lorentz_linear(x_lifted, params["enc.k.W"], params["enc.k.v"], curvature)
    val = lorentz_linear(x_lifted, params["enc.val.W"], params["enc.val.v"], curvature)
    mask = adjacency + np.eye(adjacency.shape[0])
    att = lorentz_attention(q, k, mask, curvature)
    return lorentz_aggregate(att, val, curvature)


def level_assigner(z, adjacency, params: dict, prefix: str, curvature: float):
    """Soft parent assignment: softmax((attention * (A+I)) @ MLP(z)) rows."""
    q = lorentz_linear(z, params[f"{prefix}.q.W"], params[f"{prefix}.q.v"], curvature)
    k = lorentz_linear(z, params[f"{prefix}.k.W"], params[f"{prefix}.k.v"], curvature)
    n = ad.value_of(z).shape[0]
    mask = ad.add(adjacency, np.eye(n))
    att = lorentz_attention(q, k, mask, curvature, scale_n=n)
    logits = ad.matmul(att, mlp3(z, params, f"{prefix}.mlp"))
    return ad.row_softmax(logits)


def parent_embeddings(c, z, curvature: float):
    """Parents as centroids of their children: column j of C weights level-h rows."""
    return lorentz_aggregate(ad.transpose(c), z, curvature)


def coarsen(c, adjacency):
    """Adjacency among parents: C^T A C (symmetric when A is)."""
    return ad.matmul(ad.transpose(c), ad.matmul(adjacency, c))


@dataclass
class ForwardResult:
    stack: AssignmentStack
    embeddings: dict  # level h -> (N_h, d+1) manifold rows
    adjacencies: dict  # level h -> (N_h, N_h)


class HyperbolicTreeNet:
    """Bottom-up tree builder: encode leaves, then per level assign parents,
    place them at weighted centroids, and coarsen the adjacency."""

    def __init__(self, n_nodes: int, feat_dim: int, config: ModelConfig):
        self.config = config
        self.widths = config.resolve_widths(n_nodes)
        self.n_nodes = n_nodes
        self.feat_dim = feat_dim
        self.manifold = Lorentz(config.curvature)

    @property
    def height(self) -> int:
        return self.config.height

    def init_params(self, seed: Optional[int] = None) -> dict:
        rng = np.random.default_rng(self.config.seed if seed is None else seed)
        d = self.config.embed_dim
        hid = self.config.hidden_dim
        params = {}

        def linear(name, out_dim, in_dim):
            params[f"{name}.W"] = rng.normal(0.0, 1.0 / math.sqrt(in_dim), size=(out_dim, in_dim))
            params[f"{name}.v"] = np.zeros(out_dim)

        def dense(name, out_dim, in_dim):
            params[f"{name}.W"] = rng.normal(0.0, 1.0 / math.sqrt(in_dim), size=(out_dim, in_dim))
            params[f"{name}.b"] = np.zeros(out_dim)

        for path in ("enc.q", "enc.k", "enc.val"):
            linear(path, d, self.feat_dim + 1)
        for h in range(self.height, 0, -1):
            width_next = self.widths[self.height - h + 1]
            linear(f"lvl{h}.q", d, d + 1)
            linear(f"lvl{h}.k", d, d + 1)
            dims = [(hid, d + 1), (hid, hid), (width_next, hid)]
            for layer, (out_dim, in_dim) in enumerate(dims):
                params[f"lvl{h}.mlp.W{layer}"] = rng.normal(
                    0.0, 1.0 / math.sqrt(in_dim), size=(out_dim, in_dim))
                params[f"lvl{h}.mlp.b{layer}"] = np.zeros(out_dim)
        return params

    def encoder_param_names(self) -> list:
        return ["enc.q.W", "enc.q.v", "enc.k.W", "enc.k.v", "enc.val.W", "enc.val.v"]

    def forward(self, graph: Graph, params: dict, features: Optional[np.ndarray] = None
                ) -> ForwardResult:
        """Run the full bottom-up pass. With plain ndarray params this is a
        pure evaluation; with tape Variables it records the training graph."""
        feats = graph.identity_features() if features is None else features
        if feats.shape[0] != graph.n_nodes:
            raise ValueError("feature row count differs from the graph")
        x_lifted = self.manifold.lift(feats)
        k = self.config.curvature
        z = lorentz_conv(x_lifted, graph.adjacency, params, k)
        adj = graph.adjacency
        embeddings = {self.height: z}
        adjacencies = {self.height: adj}
        mats = []
        for h in range(self.height, 0, -1):
            c = level_assigner(z, adj, params, f"lvl{h}", k)
            z = parent_embeddings(c, z, k)
            adj = coarsen(c, adj)
            mats.append(c)
            embeddings[h - 1] = z
            adjacencies[h - 1] = adj
        return ForwardResult(stack=AssignmentStack(mats=mats, hard=False),
                             embeddings=embeddings, adjacencies=adjacencies)
