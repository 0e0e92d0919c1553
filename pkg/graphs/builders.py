from typing import Tuple

import numpy as np

from common.archive import load_archive, save_archive
from common.errors import DataError
from graphs.bipartite import BipartiteGraph
from ingestion.bundle import DatasetBundle, InteractionSet

GRAPHS_KIND = "graphs"


def build_target_graph(train: InteractionSet, n_users: int, n_items: int, verbose: bool = True) -> BipartiteGraph:
    """G_target: target users x target items, one edge per (u, v) seen in training."""
    if len(train) == 0:
        raise DataError("G_target needs at least one training interaction")

    graph = BipartiteGraph.from_edges(train.user, train.item, n_users, n_items)
    if verbose:
        print(f"[GRAPHS] G_target: {n_users} users x {n_items} items, {graph.edge_count} edges")
    return graph


def build_cross_graph(
    train: InteractionSet,
    source: InteractionSet,
    assignment: np.ndarray,
    n_users: int,
    n_clusters: int,
    verbose: bool = True,
) -> BipartiteGraph:
    """
    G_cross: all users (target then source) x clusters. r_uc = 1 iff u touched
    any item of c; target users contribute TRAIN interactions only.
    """
    assignment = np.asarray(assignment, dtype=np.int64)
    users = np.concatenate([train.user, source.user])
    items = np.concatenate([train.item, source.item])

    if items.size and items.max() >= assignment.size:
        raise DataError(f"interaction references item {int(items.max())} with no cluster assignment")
    clusters = assignment[items]
    if clusters.size and (clusters.min() < 0 or clusters.max() >= n_clusters):
        bad = np.unique(items[(clusters < 0) | (clusters >= n_clusters)])
        raise DataError(f"items without a valid cluster: {bad[:20].tolist()}")

    graph = BipartiteGraph.from_edges(users, clusters, n_users, n_clusters)
    if verbose:
        print(
            f"[GRAPHS] G_cross: {n_users} users x {n_clusters} clusters, {graph.edge_count} edges, "
            f"{int((graph.left_degree == 0).sum())} isolated users"
        )
    return graph


def build_graphs(bundle: DatasetBundle, assignment: np.ndarray, n_clusters: int, verbose: bool = True) -> Tuple[BipartiteGraph, BipartiteGraph]:
    g_target = build_target_graph(bundle.train, bundle.n_target_users, bundle.n_target_items, verbose)
    g_cross = build_cross_graph(bundle.train, bundle.source, assignment, bundle.n_users, n_clusters, verbose)
    return g_target, g_cross


def save_graphs(path: str, g_target: BipartiteGraph, g_cross: BipartiteGraph) -> None:
    arrays = {**g_target.to_arrays("target"), **g_cross.to_arrays("cross")}
    save_archive(path, GRAPHS_KIND, arrays, {"target_edges": g_target.edge_count, "cross_edges": g_cross.edge_count})


def load_graphs(path: str) -> Tuple[BipartiteGraph, BipartiteGraph]:
    arrays, _ = load_archive(path, GRAPHS_KIND)
    return BipartiteGraph.from_arrays(arrays, "target"), BipartiteGraph.from_arrays(arrays, "cross")
