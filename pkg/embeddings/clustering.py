from dataclasses import dataclass, field
from typing import List

import numpy as np
import scipy.sparse as sp
from sklearn.cluster import kmeans_plusplus

from common.archive import load_archive, save_archive
from common.errors import DataError

CLUSTER_KIND = "cluster_model"
DEFAULT_K = 200
MAX_ITER = 300


@dataclass(frozen=True)
class ClusterModel:
    k: int
    centroids: np.ndarray
    assignment: np.ndarray
    inertia: float
    inertia_trace: List[float] = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False

    def members(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == c)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)


def member_means(X: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    """Row-wise mean of the points of each cluster (empty clusters -> zero row)."""
    n = X.shape[0]
    onehot = sp.csr_matrix((np.ones(n), (labels, np.arange(n))), shape=(k, n))
    sums = np.asarray(onehot @ X)
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    return np.divide(sums, counts[:, None], out=np.zeros_like(sums), where=counts[:, None] > 0)


class KMeansClusterer:
    """
    Lloyd iterations from k-means++ seeds over every item of both domains.

    Stops when assignments stop changing or after `max_iter` passes. An empty
    cluster is reseeded with the point farthest from its current centroid.
    """

    def __init__(self, max_iter: int = MAX_ITER, chunk_size: int = 4096, verbose: bool = True):
        self.max_iter = max_iter
        self.chunk_size = chunk_size
        self.verbose = verbose

    # --------------------------------------------------
    # Paso de asignación
    # --------------------------------------------------
    def _assign(self, X: np.ndarray, centroids: np.ndarray) -> np.ndarray:
        c_sq = np.einsum("ij,ij->i", centroids, centroids)
        labels = np.empty(X.shape[0], dtype=np.int64)
        for start in range(0, X.shape[0], self.chunk_size):
            block = X[start:start + self.chunk_size]
            d = c_sq[None, :] - 2.0 * (block @ centroids.T)
            labels[start:start + self.chunk_size] = np.argmin(d, axis=1)
        return labels

    @staticmethod
    def _sq_dist_to_assigned(X: np.ndarray, centroids: np.ndarray, labels: np.ndarray) -> np.ndarray:
        diff = X - centroids[labels]
        return np.einsum("ij,ij->i", diff, diff)

    def _reseed_empty(self, X: np.ndarray, centroids: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
        counts = np.bincount(labels, minlength=k)
        empty = np.flatnonzero(counts == 0)
        if empty.size == 0:
            return labels

        labels = labels.copy()
        dist = self._sq_dist_to_assigned(X, centroids, labels)
        # farthest first; stable so ties go to the lower index
        order = np.argsort(-dist, kind="stable")
        used = 0
        for j in empty:
            while used < order.size:
                p = order[used]
                used += 1
                if counts[labels[p]] > 1:
                    counts[labels[p]] -= 1
                    labels[p] = j
                    counts[j] = 1
                    break
        if self.verbose:
            print(f"[KMEANS] reseeded {empty.size} empty clusters")
        return labels

    # --------------------------------------------------
    # API pública
    # --------------------------------------------------
    def fit(self, vectors: np.ndarray, k: int = DEFAULT_K, seed: int = 0) -> ClusterModel:
        X = np.asarray(vectors, dtype=np.float64)
        n = X.shape[0]
        if k < 2:
            raise DataError(f"k-means needs k >= 2, got {k}")
        if k > n:
            raise DataError(f"k={k} exceeds the number of items ({n})")

        centroids, _ = kmeans_plusplus(X, n_clusters=k, random_state=seed)
        centroids = np.asarray(centroids, dtype=np.float64)

        labels = None
        trace: List[float] = []
        converged = False
        n_iter = 0

        for n_iter in range(1, self.max_iter + 1):
            new_labels = self._assign(X, centroids)
            trace.append(float(self._sq_dist_to_assigned(X, centroids, new_labels).sum()))

            if labels is not None and np.array_equal(new_labels, labels):
                converged = True
                break

            labels = self._reseed_empty(X, centroids, new_labels, k)
            centroids = member_means(X, labels, k)

        inertia = float(self._sq_dist_to_assigned(X, centroids, labels).sum())

        if self.verbose:
            state = "converged" if converged else "max_iter reached"
            print(f"[KMEANS] k={k} n={n} iterations={n_iter} ({state}) inertia={inertia:.6g}")

        return ClusterModel(
            k=k,
            centroids=centroids,
            assignment=labels,
            inertia=inertia,
            inertia_trace=trace,
            n_iter=n_iter,
            converged=converged,
        )


def kmeans(vectors: np.ndarray, k: int = DEFAULT_K, seed: int = 0, max_iter: int = MAX_ITER) -> ClusterModel:
    return KMeansClusterer(max_iter=max_iter, verbose=False).fit(vectors, k=k, seed=seed)


def cluster_semantic_embedding(c: int, model: ClusterModel, item_vectors: np.ndarray) -> np.ndarray:
    """c_txt: mean of the member item vectors (not the centroid)."""
    members = model.members(c)
    if members.size == 0:
        raise DataError(f"cluster {c} is empty")
    X = np.asarray(item_vectors, dtype=np.float64)
    labels = np.zeros(members.size, dtype=np.int64)
    return member_means(X[members], labels, 1)[0]


def cluster_semantic_embeddings(model: ClusterModel, item_vectors: np.ndarray) -> np.ndarray:
    sizes = model.sizes()
    if (sizes == 0).any():
        raise DataError(f"clusters {np.flatnonzero(sizes == 0).tolist()} are empty")
    return member_means(np.asarray(item_vectors, dtype=np.float64), model.assignment, model.k)


# ------------------------------------------------------------
# Persistencia (vectores de ítem + modelo + vectores de cluster)
# ------------------------------------------------------------
def save_clusters(
    path: str,
    model: ClusterModel,
    item_vectors: np.ndarray,
    cluster_vectors: np.ndarray,
    oov_items: np.ndarray,
    seed: int,
) -> None:
    save_archive(
        path,
        CLUSTER_KIND,
        {
            "item_vectors": item_vectors,
            "cluster_vectors": cluster_vectors,
            "centroids": model.centroids,
            "assignment": model.assignment,
            "inertia_trace": np.asarray(model.inertia_trace, dtype=np.float64),
            "oov_items": np.asarray(oov_items, dtype=bool),
        },
        {
            "k": model.k,
            "inertia": model.inertia,
            "n_iter": model.n_iter,
            "converged": model.converged,
            "seed": seed,
        },
    )


def load_clusters(path: str):
    arrays, meta = load_archive(path, CLUSTER_KIND)
    model = ClusterModel(
        k=int(meta["k"]),
        centroids=arrays["centroids"],
        assignment=arrays["assignment"].astype(np.int64),
        inertia=float(meta["inertia"]),
        inertia_trace=arrays["inertia_trace"].tolist(),
        n_iter=int(meta["n_iter"]),
        converged=bool(meta["converged"]),
    )
    return model, arrays["item_vectors"], arrays["cluster_vectors"], arrays["oov_items"]
