"""Command-line interface: cluster / entropy / eval / viz.

All outputs land under --out. Runs are deterministic per seed/config; the
resolved configuration is serialized next to the results. HYPERTROPY_THREADS
caps the seed fan-out worker count.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .entropy import (EntropyError, greedy_tree, min_tree_entropy, normalized_entropy,
                      one_dim_entropy, soft_entropy, tree_entropy)
from .graph import Graph, GraphError, graph_conductance, load_graph
from .layers import HyperbolicTreeNet, ModelConfig
from .metrics import MetricError, ari, auc_link, distortion, nmi
from .train import TrainConfig, TrainResult, train
from .tree import decode, extract_k, harden, natural_clusters, repair, tree_to_dict
from .viz import VizError, poincare_svg, save_loss_figure, save_poincare_figure

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_MISSING_FILE = 2
EXIT_SIZE_CAP = 3
EXIT_CHECKPOINT = 4
EXIT_VIZ = 5

BRUTE_CAP = 7
CONDUCTANCE_CAP = 16
CHECKPOINT_FORMAT = 1


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _worker_count(n_tasks: int) -> int:
    env = os.environ.get("HYPERTROPY_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            _err(f"ignoring non-integer HYPERTROPY_THREADS={env!r}")
    return max(1, min(cap, n_tasks))


def _json_dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _graph_signature(g: Graph) -> dict:
    blob = "\n".join(f"{u}\t{v}\t{w!r}" for u, v, w in g.edges).encode()
    return {
        "n_nodes": g.n_nodes,
        "n_edges": g.n_edges,
        "volume": g.volume,
        "edge_sha256": hashlib.sha256(blob).hexdigest(),
    }


def _config_hash(model_cfg: ModelConfig, signature: dict) -> str:
    payload = json.dumps({"model": asdict(model_cfg), "graph": signature}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {p}")
    return json.loads(p.read_text(encoding="utf-8"))


def _resolve_configs(args) -> tuple:
    raw = _load_config_file(getattr(args, "config", None))
    model_raw = dict(raw.get("model", {}))
    train_raw = dict(raw.get("train", {}))
    for key in ("height", "widths", "embed_dim", "hidden_dim", "curvature", "seed"):
        if key in raw and key not in model_raw:
            model_raw[key] = raw[key]
    if getattr(args, "height", None) is not None:
        model_raw["height"] = args.height
    if getattr(args, "widths", None):
        model_raw["widths"] = [int(w) for w in args.widths.split(",")]
    if getattr(args, "curvature", None) is not None:
        model_raw["curvature"] = args.curvature
    if getattr(args, "epochs", None) is not None:
        train_raw["epochs"] = args.epochs
    if getattr(args, "lr", None) is not None:
        train_raw["lr"] = args.lr
    if getattr(args, "pretrain_epochs", None) is not None:
        train_raw["pretrain_epochs"] = args.pretrain_epochs
    model_cfg = ModelConfig(**model_raw)
    train_cfg = TrainConfig(**train_raw)

    seeds = raw.get("seeds", [model_cfg.seed])
    if isinstance(seeds, int):
        seeds = list(range(seeds))
    if getattr(args, "seeds", None) is not None:
        seeds = list(range(args.seeds))
    if getattr(args, "seed", None) is not None:
        seeds = [args.seed]
    return model_cfg, train_cfg, [int(s) for s in seeds]


def _load_graph_args(args) -> Graph:
    return load_graph(args.edges, feature_path=getattr(args, "features", None),
                      label_path=getattr(args, "labels", None))


def _seed_run(g: Graph, model_cfg: ModelConfig, train_cfg: TrainConfig, seed: int,
              k: int | None) -> dict:
    cfg = TrainConfig(**{**asdict(train_cfg), "seed": seed})
    result = train(g, model_cfg, cfg)
    hard = harden(result.stack)
    tree = repair(decode(hard, result.embeddings, g), g)
    nat = natural_clusters(tree)
    labels = extract_k(tree, k, model_cfg.curvature) if k else nat
    record = {
        "seed": seed,
        "loss": result.best_loss,
        "diverged": result.diverged,
        "k_natural": int(nat.max()) + 1,
        "labels": labels,
        "history": result.loss_history,
        "pretrain_history": result.pretrain_history,
        "tree": tree,
        "result": result,
    }
    if g.labels is not None:
        record["nmi"] = nmi(labels, g.labels)
        record["ari"] = ari(labels, g.labels)
    return record


def cmd_cluster(args) -> int:
    try:
        g = _load_graph_args(args)
    except FileNotFoundError as exc:
        _err(str(exc))
        return EXIT_MISSING_FILE
    except (GraphError, ValueError) as exc:
        _err(str(exc))
        return EXIT_ERROR
    try:
        model_cfg, train_cfg, seeds = _resolve_configs(args)
    except FileNotFoundError as exc:
        _err(str(exc))
        return EXIT_MISSING_FILE
    except (TypeError, ValueError) as exc:
        _err(f"bad configuration: {exc}")
        return EXIT_ERROR

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    k = args.k

    runs = {}
    workers = _worker_count(len(seeds))
    try:
        if workers == 1 or len(seeds) == 1:
            for seed in seeds:
                runs[seed] = _seed_run(g, model_cfg, train_cfg, seed, k)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = {seed: pool.submit(_seed_run, g, model_cfg, train_cfg, seed, k)
                           for seed in seeds}
                runs = {seed: fut.result() for seed, fut in futures.items()}
    except (GraphError, EntropyError, ValueError, RuntimeError) as exc:
        _err(str(exc))
        return EXIT_ERROR

    best_seed = min(seeds, key=lambda s: (runs[s]["loss"], s))
    best = runs[best_seed]

    _json_dump({"model": asdict(model_cfg), "train": asdict(train_cfg),
                "seeds": seeds, "k": k, "edges": str(args.edges)},
               out_dir / "run_config.json")

    with open(out_dir / "labels.tsv", "w", encoding="utf-8") as fh:
        for node, cid in enumerate(best["labels"]):
            fh.write(f"{node}\t{int(cid)}\n")

    with open(out_dir / "loss_history.csv", "w", encoding="utf-8") as fh:
        fh.write("seed,epoch,loss\n")
        for seed in seeds:
            for epoch, value in enumerate(runs[seed]["history"]):
                fh.write(f"{seed},{epoch},{value!r}\n")

    tree_dict = tree_to_dict(best["tree"], model_cfg.curvature)
    _json_dump(tree_dict, out_dir / "tree.json")

    metrics = _metrics_payload(g, runs, seeds, best_seed, model_cfg)
    _json_dump(metrics, out_dir / "metrics.json")

    signature = _graph_signature(g)
    checkpoint = {
        "format": CHECKPOINT_FORMAT,
        "config_hash": _config_hash(model_cfg, signature),
        "graph_signature": signature,
        "model_config": asdict(model_cfg),
        "seed": best_seed,
        "k": k,
        "params": {name: arr.tolist() for name, arr in best["result"].params.items()},
    }
    _json_dump(checkpoint, out_dir / "checkpoint.json")

    save_loss_figure({s: runs[s]["history"] for s in seeds}, out_dir / "loss_history.png")
    if model_cfg.embed_dim == 2:
        save_poincare_figure(tree_dict, out_dir / "poincare.png")

    print(f"best seed {best_seed}: loss {best['loss']:.6f}, "
          f"k_natural {best['k_natural']}"
          + (f", nmi {best['nmi']:.4f}, ari {best['ari']:.4f}" if "nmi" in best else ""))
    print(f"outputs written to {out_dir}")
    return EXIT_OK


def _metrics_payload(g: Graph, runs: dict, seeds: list, best_seed: int,
                     model_cfg: ModelConfig) -> dict:
    best = runs[best_seed]
    per_seed = {}
    for seed in seeds:
        rec = runs[seed]
        entry = {"loss": rec["loss"], "k_natural": rec["k_natural"],
                 "diverged": rec["diverged"]}
        if "nmi" in rec:
            entry["nmi"] = rec["nmi"]
            entry["ari"] = rec["ari"]
        per_seed[str(seed)] = entry
    payload = {
        "k_natural": best["k_natural"],
        "best_seed": best_seed,
        "best_loss": best["loss"],
        "per_seed": per_seed,
    }
    if "nmi" in best:
        nmis = [runs[s]["nmi"] for s in seeds]
        aris = [runs[s]["ari"] for s in seeds]
        payload.update({
            "nmi": best["nmi"],
            "ari": best["ari"],
            "best_nmi": max(nmis),
            "best_ari": max(aris),
            "mean_nmi": float(np.mean(nmis)),
            "std_nmi": float(np.std(nmis)),
            "mean_ari": float(np.mean(aris)),
            "std_ari": float(np.std(aris)),
        })
    z = best["result"].embeddings[model_cfg.height]
    try:
        payload["auc"] = auc_link(z, g, seed=best_seed)
    except MetricError:
        payload["auc"] = None
    try:
        payload["distortion"] = distortion(z, g) if g.connected else None
    except (MetricError, GraphError):
        payload["distortion"] = None
    payload["conductance"] = (graph_conductance(g) if g.n_nodes <= CONDUCTANCE_CAP
                              and g.connected else None)
    payload["tau"] = (normalized_entropy(g) if g.n_nodes <= BRUTE_CAP and g.connected
                      else None)
    return payload


def cmd_entropy(args) -> int:
    try:
        g = _load_graph_args(args)
    except FileNotFoundError as exc:
        _err(str(exc))
        return EXIT_MISSING_FILE
    except (GraphError, ValueError) as exc:
        _err(str(exc))
        return EXIT_ERROR
    h1 = one_dim_entropy(g)
    print(f"H1 = {h1:.6f}")
    if args.brute:
        if g.n_nodes > BRUTE_CAP:
            _err(f"--brute enumerates all partitions; N={g.n_nodes} exceeds cap {BRUTE_CAP}")
            return EXIT_SIZE_CAP
        try:
            h2, _ = min_tree_entropy(g)
            tau = normalized_entropy(g)
            phi = graph_conductance(g)
        except (EntropyError, GraphError) as exc:
            _err(str(exc))
            return EXIT_SIZE_CAP
        print(f"H2 = {h2:.6f}")
        print(f"tau = {tau:.6f}")
        print(f"phi = {phi:.6f}")
        # the tau >= phi bound provably fails when an optimal tree has a module
        # heavier than Vol/2 (triangle: tau 0.877 < phi 1.0), so report, don't die
        print(f"bound tau >= phi: {'OK' if tau >= phi - 1e-12 else 'VIOLATED'}")
    if args.cse:
        tree, value = greedy_tree(g)
        print(f"greedy = {value:.6f} ({len(tree.root.children)} modules)")
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt_path = Path(args.checkpoint)
    if not ckpt_path.exists():
        _err(f"checkpoint not found: {ckpt_path}")
        return EXIT_MISSING_FILE
    try:
        g = _load_graph_args(args)
    except FileNotFoundError as exc:
        _err(str(exc))
        return EXIT_MISSING_FILE
    except (GraphError, ValueError) as exc:
        _err(str(exc))
        return EXIT_ERROR
    try:
        ckpt = json.loads(ckpt_path.read_text(encoding="utf-8"))
        model_cfg = ModelConfig(**ckpt["model_config"])
        params = {name: np.asarray(arr, dtype=float) for name, arr in ckpt["params"].items()}
        stored_hash = ckpt["config_hash"]
        seed = int(ckpt["seed"])
        k = ckpt.get("k")
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        _err(f"corrupted checkpoint: {exc}")
        return EXIT_CHECKPOINT
    signature = _graph_signature(g)
    if _config_hash(model_cfg, signature) != stored_hash:
        _err("config hash mismatch: checkpoint was trained on a different graph/config")
        return EXIT_CHECKPOINT

    model = HyperbolicTreeNet(g.n_nodes, g.identity_features().shape[1], model_cfg)
    out = model.forward(g, params)
    loss = soft_entropy(g, out.stack)
    hard = harden(out.stack)
    tree = repair(decode(hard, out.embeddings, g), g)
    nat = natural_clusters(tree)
    k = args.k if args.k is not None else k
    labels = extract_k(tree, k, model_cfg.curvature) if k else nat
    payload = {
        "loss": float(loss),
        "tree_entropy": tree_entropy(g, tree),
        "k_natural": int(nat.max()) + 1,
        "seed": seed,
    }
    if g.labels is not None:
        payload["nmi"] = nmi(labels, g.labels)
        payload["ari"] = ari(labels, g.labels)
    z = out.embeddings[model.height]
    if args.auc:
        try:
            payload["auc"] = auc_link(z, g, seed=seed)
        except MetricError as exc:
            _err(str(exc))
            return EXIT_ERROR
    try:
        payload["distortion"] = distortion(z, g) if g.connected else None
    except (MetricError, GraphError):
        payload["distortion"] = None
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _json_dump(payload, out_dir / "metrics.json")
    for key in sorted(payload):
        print(f"{key} = {payload[key]}")
    return EXIT_OK


def cmd_viz(args) -> int:
    tree_path = Path(args.tree)
    if not tree_path.exists():
        _err(f"tree file not found: {tree_path}")
        return EXIT_MISSING_FILE
    try:
        text = tree_path.read_text(encoding="utf-8").strip()
        if not text:
            raise VizError("tree file is empty")
        tree = json.loads(text)
        svg = poincare_svg(tree)
    except (json.JSONDecodeError, VizError, KeyError, TypeError) as exc:
        _err(f"cannot render tree: {exc}")
        return EXIT_VIZ
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / "poincare.svg"
    out_path.write_text(svg, encoding="utf-8")
    print(f"wrote {out_path}")
    return EXIT_OK


def _add_graph_flags(p: argparse.ArgumentParser, labels: bool = True) -> None:
    p.add_argument("--edges", required=True, help="TSV edge list (u v [w])")
    p.add_argument("--features", help="TSV node features (node-id then values)")
    if labels:
        p.add_argument("--labels", help="TSV ground-truth labels (node-id class-id)")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file merged under the flags")
    p.add_argument("--out", default="out", help="output directory (default: ./out)")
    p.add_argument("--seed", type=int, help="single seed")
    p.add_argument("--seeds", type=int, help="number of seeds 0..N-1")
    p.add_argument("--height", type=int, help="partitioning tree height")
    p.add_argument("--widths", help="comma-separated level widths, leaves..root")
    p.add_argument("--k", type=int, help="extract exactly K clusters")
    p.add_argument("--curvature", type=float, help="Lorentz curvature (negative)")
    p.add_argument("--epochs", type=int, help="training epochs")
    p.add_argument("--lr", type=float, help="learning rate")
    p.add_argument("--pretrain-epochs", dest="pretrain_epochs", type=int,
                   help="link-prediction pretraining epochs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hypertropy",
        description="Graph clustering by structural-entropy minimization "
                    "in Lorentz hyperbolic space")
    sub = parser.add_subparsers(dest="command", required=True)

    p_cluster = sub.add_parser("cluster", help="train, decode a tree, write clusters")
    _add_graph_flags(p_cluster)
    _add_run_flags(p_cluster)
    p_cluster.set_defaults(func=cmd_cluster)

    p_entropy = sub.add_parser("entropy", help="entropy reports for small graphs")
    _add_graph_flags(p_entropy, labels=False)
    p_entropy.add_argument("--brute", action="store_true",
                           help="exhaustive height-2 entropy, tau, phi (N <= 7)")
    p_entropy.add_argument("--cse", action="store_true",
                           help="greedy agglomerative tree value")
    p_entropy.set_defaults(func=cmd_entropy)

    p_eval = sub.add_parser("eval", help="re-evaluate a checkpoint")
    _add_graph_flags(p_eval)
    p_eval.add_argument("--checkpoint", required=True, help="checkpoint.json from cluster")
    p_eval.add_argument("--k", type=int, help="extract exactly K clusters")
    p_eval.add_argument("--auc", action="store_true", help="include link-prediction AUC")
    p_eval.add_argument("--out", default="out", help="output directory")
    p_eval.set_defaults(func=cmd_eval)

    p_viz = sub.add_parser("viz", help="render tree.json on the Poincare disc")
    p_viz.add_argument("--tree", required=True, help="tree.json from cluster")
    p_viz.add_argument("--out", default="out", help="output directory")
    p_viz.set_defaults(func=cmd_viz)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
