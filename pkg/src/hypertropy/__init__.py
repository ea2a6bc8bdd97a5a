"""Graph clustering by structural-entropy minimization over Lorentz embeddings."""

from .graph import Graph, GraphError, build_graph, load_graph
from .layers import HyperbolicTreeNet, ModelConfig
from .lorentz import Lorentz
from .train import TrainConfig, TrainResult, train
from .tree import AssignmentStack, PartitionTree, decode, extract_k, harden, natural_clusters, repair

__version__ = "0.1.0"

__all__ = [
    "Graph", "GraphError", "build_graph", "load_graph",
    "HyperbolicTreeNet", "ModelConfig", "Lorentz",
    "TrainConfig", "TrainResult", "train",
    "AssignmentStack", "PartitionTree", "decode", "extract_k", "harden",
    "natural_clusters", "repair",
    "__version__",
]


def fixture_path(name: str):
    """Path to a bundled dataset fixture (karate.tsv, football.tsv, barbell6.tsv...)."""
    from importlib.resources import files

    path = files("hypertropy").joinpath("fixtures", name)
    if not path.is_file():
        raise FileNotFoundError(f"no bundled fixture named {name!r}")
    return path
