from typing import List, Sequence, Tuple

import numpy as np
import pytest

from embeddings.clustering import member_means
from engine.trainer import model_inputs
from graphs.bipartite import BipartiteGraph
from graphs.builders import build_graphs
from ingestion.bundle import Domain, RawInteraction
from ingestion.splitter import split_leave_one_out
from model.forward import Batch, ModelInputs
from model.params import HyperParams, init_parameters


def records(domain: Domain, rows: Sequence[Tuple[str, str, int]]) -> List[RawInteraction]:
    return [RawInteraction(u, v, ts, domain) for u, v, ts in rows]


# ------------------------------------------------------------
# Modelo diminuto: 3 usuarios target, 2 source, 3 ítems, 2 clusters
# ------------------------------------------------------------
@pytest.fixture
def tiny_inputs() -> ModelInputs:
    rng = np.random.default_rng(3)
    g_target = BipartiteGraph.from_edges(
        np.array([0, 0, 1, 2, 2]), np.array([0, 1, 1, 2, 0]), 3, 3
    )
    g_cross = BipartiteGraph.from_edges(
        np.array([0, 0, 1, 2, 3, 3, 4]), np.array([0, 1, 1, 0, 0, 1, 1]), 5, 2
    )
    item_text = rng.normal(size=(3, 4))
    item_cluster = np.array([0, 1, 0])
    cluster_text = member_means(item_text, item_cluster, 2)
    return ModelInputs(
        g_target=g_target,
        g_cross=g_cross,
        item_text=item_text,
        cluster_text=cluster_text,
        item_cluster=item_cluster,
    )


@pytest.fixture
def tiny_hp() -> HyperParams:
    return HyperParams(
        d=3, d_a=3, P=2, Q=2, lambda1=0.5, lambda2=1.0, lambda3=0.01, k=2, init_std=0.5
    )


@pytest.fixture
def tiny_batch() -> Batch:
    return Batch(users=np.array([0, 1, 2]), items=np.array([0, 2, 1]), neg_items=np.array([1, 0, 2]))


@pytest.fixture
def tiny_params(tiny_hp, tiny_inputs):
    return init_parameters(tiny_hp, tiny_inputs.n_users, tiny_inputs.n_clusters, tiny_inputs.d_txt,
                           np.random.default_rng(11))


# ------------------------------------------------------------
# Dataset pequeño con 110 ítems target (admite 99 negativos)
# ------------------------------------------------------------
def small_dataset(n_users: int = 30, n_items: int = 110, per_user: int = 4, k: int = 5, d_txt: int = 6, seed: int = 0):
    target = records(
        Domain.TARGET,
        [(f"u{u:02d}", f"i{(per_user * u + j) % n_items:03d}", 100 * j + u) for u in range(n_users) for j in range(per_user)],
    )
    source = records(
        Domain.SOURCE,
        [(f"s{u:02d}", f"x{(3 * u + j) % 20:02d}", j) for u in range(10) for j in range(5)],
    )
    bundle = split_leave_one_out(target, source, verbose=False)

    rng = np.random.default_rng(seed)
    assignment = np.arange(bundle.n_items) % k
    item_vectors = rng.normal(size=(bundle.n_items, d_txt))
    cluster_vectors = member_means(item_vectors, assignment, k)
    bundle = bundle.with_clusters(assignment)
    g_target, g_cross = build_graphs(bundle, assignment, k, verbose=False)
    inputs = model_inputs(bundle, item_vectors, cluster_vectors, assignment, g_target, g_cross)
    return bundle, inputs


@pytest.fixture
def small_data():
    return small_dataset()
