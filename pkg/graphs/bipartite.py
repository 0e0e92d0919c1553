from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Tuple

import numpy as np
import scipy.sparse as sp

from common.errors import DataError

LEFT = "left"
RIGHT = "right"


@dataclass(frozen=True)
class BipartiteGraph:
    """
    Degree-normalized bipartite adjacency in CSR form, stored both ways.

    norm(l, r) = 1 / (sqrt(deg(l)) * sqrt(deg(r))), one value per edge.
    Zero-degree nodes stay in the index space with empty neighbor slices.
    """

    left_count: int
    right_count: int
    indptr: np.ndarray       # left -> right
    indices: np.ndarray
    norm: np.ndarray
    t_indptr: np.ndarray     # right -> left
    t_indices: np.ndarray
    t_norm: np.ndarray

    @classmethod
    def from_edges(cls, left: np.ndarray, right: np.ndarray, left_count: int, right_count: int) -> "BipartiteGraph":
        left = np.asarray(left, dtype=np.int64)
        right = np.asarray(right, dtype=np.int64)
        if left.size and (left.min() < 0 or left.max() >= left_count):
            raise DataError("edge references a left node out of range")
        if right.size and (right.min() < 0 or right.max() >= right_count):
            raise DataError("edge references a right node out of range")

        # duplicates collapse to one edge; coo -> csr sorts columns per row
        data = np.ones(left.size, dtype=np.float64)
        adj = sp.coo_matrix((data, (left, right)), shape=(left_count, right_count)).tocsr()
        adj.sum_duplicates()
        adj.data[:] = 1.0
        adj.sort_indices()

        deg_l = np.diff(adj.indptr).astype(np.float64)
        deg_r = np.bincount(adj.indices, minlength=right_count).astype(np.float64)

        rows = np.repeat(np.arange(left_count), np.diff(adj.indptr))
        norm = 1.0 / (np.sqrt(deg_l[rows]) * np.sqrt(deg_r[adj.indices]))

        adj_t = adj.T.tocsr()
        adj_t.sort_indices()
        t_rows = np.repeat(np.arange(right_count), np.diff(adj_t.indptr))
        t_norm = 1.0 / (np.sqrt(deg_r[t_rows]) * np.sqrt(deg_l[adj_t.indices]))

        return cls(
            left_count=left_count,
            right_count=right_count,
            indptr=adj.indptr.astype(np.int64),
            indices=adj.indices.astype(np.int64),
            norm=norm,
            t_indptr=adj_t.indptr.astype(np.int64),
            t_indices=adj_t.indices.astype(np.int64),
            t_norm=t_norm,
        )

    # --------------------------------------------------
    # Grados / aristas
    # --------------------------------------------------
    @property
    def left_degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def right_degree(self) -> np.ndarray:
        return np.diff(self.t_indptr)

    @property
    def edge_count(self) -> int:
        return int(self.indices.size)

    @cached_property
    def edge_left(self) -> np.ndarray:
        """Left endpoint of each edge, in left-major CSR order."""
        return np.repeat(np.arange(self.left_count), self.left_degree)

    @property
    def edge_right(self) -> np.ndarray:
        return self.indices

    def matrix(self, edge_weight: np.ndarray | None = None) -> sp.csr_matrix:
        """left x right matrix with entries norm(l, r) * edge_weight(l, r)."""
        data = self.norm if edge_weight is None else self.norm * edge_weight
        return sp.csr_matrix(
            (data, self.indices, self.indptr),
            shape=(self.left_count, self.right_count),
        )

    def neighbors(self, node: int, side: str = LEFT) -> Tuple[np.ndarray, np.ndarray]:
        """Sorted neighbor indices of `node` with their norms (views, no copy)."""
        if side == LEFT:
            if not 0 <= node < self.left_count:
                raise DataError(f"left node {node} out of range [0, {self.left_count})")
            lo, hi = self.indptr[node], self.indptr[node + 1]
            return self.indices[lo:hi], self.norm[lo:hi]
        if side == RIGHT:
            if not 0 <= node < self.right_count:
                raise DataError(f"right node {node} out of range [0, {self.right_count})")
            lo, hi = self.t_indptr[node], self.t_indptr[node + 1]
            return self.t_indices[lo:hi], self.t_norm[lo:hi]
        raise DataError(f"side must be '{LEFT}' or '{RIGHT}', got {side!r}")

    def has_edge(self, l: int, r: int) -> bool:
        nbrs, _ = self.neighbors(l, LEFT)
        pos = np.searchsorted(nbrs, r)
        return bool(pos < nbrs.size and nbrs[pos] == r)

    # --------------------------------------------------
    # Estadísticas
    # --------------------------------------------------
    def stats(self) -> Dict[str, object]:
        def histogram(deg: np.ndarray) -> Dict[str, int]:
            values, counts = np.unique(deg, return_counts=True)
            return {str(int(v)): int(c) for v, c in zip(values, counts)}

        return {
            "left_count": self.left_count,
            "right_count": self.right_count,
            "edges": self.edge_count,
            "left_isolated": int((self.left_degree == 0).sum()),
            "right_isolated": int((self.right_degree == 0).sum()),
            "left_degree_histogram": histogram(self.left_degree),
            "right_degree_histogram": histogram(self.right_degree),
        }

    def to_arrays(self, prefix: str) -> Dict[str, np.ndarray]:
        return {
            f"{prefix}_edge_left": self.edge_left,
            f"{prefix}_edge_right": self.edge_right,
            f"{prefix}_shape": np.array([self.left_count, self.right_count], dtype=np.int64),
        }

    @classmethod
    def from_arrays(cls, arrays: Dict[str, np.ndarray], prefix: str) -> "BipartiteGraph":
        left_count, right_count = (int(x) for x in arrays[f"{prefix}_shape"])
        return cls.from_edges(
            arrays[f"{prefix}_edge_left"],
            arrays[f"{prefix}_edge_right"],
            left_count,
            right_count,
        )


def neighbors(graph: BipartiteGraph, node: int, side: str = LEFT) -> Tuple[np.ndarray, np.ndarray]:
    return graph.neighbors(node, side)
