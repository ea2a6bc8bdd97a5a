"""Training loop: Adam over the network weights, optional link-prediction
pretraining of the encoder, divergence handling, deterministic seeding."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import GradientNaNError, Tape
from .entropy import soft_entropy
from .graph import Graph
from .layers import HyperbolicTreeNet, ModelConfig, lorentz_conv
from .lorentz import Lorentz
from .tree import AssignmentStack


class TrainError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 500
    lr: float = 0.003
    pretrain_epochs: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    link_margin: float = 2.0  # distance at which an edge has probability 1/2
    link_temp: float = 1.0
    link_samples: Optional[int] = None  # positives per epoch; None = all edges
    link_weight: float = 0.0  # joint-loss weight after pretraining

    def __post_init__(self):
        if self.epochs <= 0:
            raise ValueError("epochs must be positive")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")


class Adam:
    """Standard bias-corrected Adam. Parameter names listed in
    `manifold_params` are treated as Lorentz points and updated by tangent
    projection + exponential retraction instead of a flat step (moment
    buffers stay in coordinates; no parallel transport)."""

    def __init__(self, names, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, manifold_params=(), curvature: float = -1.0):
        self.names = list(names)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}
        self.manifold_params = frozenset(manifold_params)
        self.manifold = Lorentz(curvature) if self.manifold_params else None

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        for name in self.names:
            g = grads[name]
            if np.isnan(g).any():
                raise TrainError(f"NaN gradient for parameter {name!r} at step {self.t}")
            if name in self.manifold_params:
                x = params[name]
                rg = g.copy()
                rg[..., 0] = -rg[..., 0]  # metric inverse
                g = self.manifold.project_tangent(x, rg)
            m = self.m.get(name)
            if m is None:
                m = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            v = self.v[name]
            m = self.beta1 * m + (1 - self.beta1) * g
            v = self.beta2 * v + (1 - self.beta2) * g * g
            self.m[name] = m
            self.v[name] = v
            mhat = m / (1 - self.beta1 ** self.t)
            vhat = v / (1 - self.beta2 ** self.t)
            delta = self.lr * mhat / (np.sqrt(vhat) + self.eps)
            if name in self.manifold_params:
                x = params[name]
                step = self.manifold.project_tangent(x, -delta)
                params[name] = self.manifold.expmap(x, step)
            else:
                params[name] = params[name] - delta


def adam_step(params: dict, grads: dict, state: Adam) -> dict:
    """Single optimizer step; mutates and returns `params`."""
    state.step(params, grads)
    return params


def _sample_pairs(g: Graph, rng: np.random.Generator, n_pos: Optional[int]):
    edges = g.edges
    count = len(edges) if n_pos is None else min(n_pos, len(edges))
    pos_idx = rng.choice(len(edges), size=count, replace=False)
    pos = [(edges[i][0], edges[i][1]) for i in pos_idx]
    edge_set = {(u, v) for u, v, _ in edges}
    max_pairs = g.n_nodes * (g.n_nodes - 1) // 2
    if len(edge_set) >= max_pairs:
        raise TrainError("graph is complete: no non-edges to sample")
    neg = []
    while len(neg) < count:
        u, v = rng.integers(0, g.n_nodes, size=2)
        if u == v:
            continue
        a, b = (int(min(u, v)), int(max(u, v)))
        if (a, b) in edge_set:
            continue
        neg.append((a, b))
    return pos, neg


def link_loss(z, g: Graph, pos, neg, margin: float, temp: float, curvature: float):
    """Binary cross-entropy of sigmoid((margin - d(z_i, z_j)) / temp) over the
    given positive and negative node pairs. Differentiable in z."""
    k = curvature
    sqrt_neg_k = math.sqrt(-k)

    def distances(pairs):
        idx_i = [p[0] for p in pairs]
        idx_j = [p[1] for p in pairs]
        zi = ad.take_rows(z, idx_i)
        zj = ad.take_rows(z, idx_j)
        metric = np.ones(ad.value_of(z).shape[1])
        metric[0] = -1.0
        inner = ad.vsum(ad.multiply(ad.multiply(zi, zj), metric), axis=1)
        return ad.divide(ad.arccosh(ad.multiply(inner, k)), sqrt_neg_k)

    logits_pos = ad.divide(ad.subtract(margin, distances(pos)), temp)
    logits_neg = ad.divide(ad.subtract(margin, distances(neg)), temp)
    # -log sigmoid(u) = softplus(-u); -log(1 - sigmoid(u)) = softplus(u)
    loss_pos = ad.vsum(ad.softplus(ad.negative(logits_pos)))
    loss_neg = ad.vsum(ad.softplus(logits_neg))
    total_pairs = float(len(pos) + len(neg))
    return ad.divide(ad.add(loss_pos, loss_neg), total_pairs)


@dataclass
class TrainResult:
    params: dict
    stack: AssignmentStack  # plain-array stack from the best parameters
    embeddings: dict  # level -> (N_h, d+1) ndarray
    loss_history: list = field(default_factory=list)
    pretrain_history: list = field(default_factory=list)
    best_epoch: int = -1
    best_loss: float = math.inf
    diverged: bool = False


def train(g: Graph, model_cfg: ModelConfig, cfg: TrainConfig,
          features: Optional[np.ndarray] = None) -> TrainResult:
    """Optimize the soft structural-information objective.

    Deterministic given the seed: parameter init and negative sampling both
    draw from one seeded generator. Returns the best-loss parameters along
    with the stack and embeddings re-evaluated at those parameters; a NaN
    loss or gradient stops early with the last good state (diverged=True).
    """
    feats = g.identity_features() if features is None else features
    model = HyperbolicTreeNet(g.n_nodes, feats.shape[1], model_cfg)
    rng = np.random.default_rng(cfg.seed)
    init_seed = int(rng.integers(0, 2 ** 31 - 1))
    params = model.init_params(seed=init_seed)
    result = TrainResult(params=params, stack=None, embeddings=None)
    k = model_cfg.curvature
    x_lifted = model.manifold.lift(feats)

    # optional pretraining of the encoder on link prediction
    complete = len(g.edges) >= g.n_nodes * (g.n_nodes - 1) // 2
    if cfg.pretrain_epochs > 0 and not complete:
        enc_names = model.encoder_param_names()
        opt = Adam(enc_names, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
        for _ in range(cfg.pretrain_epochs):
            pos, neg = _sample_pairs(g, rng, cfg.link_samples)
            with Tape() as tape:
                mixed = dict(params)
                for name in enc_names:
                    mixed[name] = tape.leaf(params[name], name)
                z = lorentz_conv(x_lifted, g.adjacency, mixed, k)
                loss = link_loss(z, g, pos, neg, cfg.link_margin, cfg.link_temp, k)
                tape.backward(loss)
                grads = {name: mixed[name].grad for name in enc_names}
            result.pretrain_history.append(float(ad.value_of(loss)))
            opt.step(params, grads)

    opt = Adam(sorted(params), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    best_params = {kk: vv.copy() for kk, vv in params.items()}
    for epoch in range(cfg.epochs):
        joint = cfg.link_weight > 0 and not complete
        pairs = _sample_pairs(g, rng, cfg.link_samples) if joint else None
        try:
            with Tape() as tape:
                leaves = {name: tape.leaf(params[name], name) for name in sorted(params)}
                out = model.forward(g, leaves, features=feats)
                loss = soft_entropy(g, out.stack)
                if joint:
                    pos, neg = pairs
                    z = out.embeddings[model.height]
                    extra = link_loss(z, g, pos, neg, cfg.link_margin, cfg.link_temp, k)
                    loss = ad.add(loss, ad.multiply(extra, cfg.link_weight))
                loss_val = float(ad.value_of(loss))
                if not math.isfinite(loss_val):
                    result.diverged = True
                    break
                tape.backward(loss)
                grads = {name: leaves[name].grad for name in leaves}
        except GradientNaNError:
            result.diverged = True
            break
        result.loss_history.append(loss_val)
        if loss_val < result.best_loss:
            result.best_loss = loss_val
            result.best_epoch = epoch
            best_params = {kk: vv.copy() for kk, vv in params.items()}
        try:
            opt.step(params, grads)
        except TrainError:
            result.diverged = True
            break

    result.params = best_params
    out = model.forward(g, best_params, features=feats)
    result.stack = out.stack
    result.embeddings = {h: np.asarray(z, dtype=float) for h, z in out.embeddings.items()}
    return result
