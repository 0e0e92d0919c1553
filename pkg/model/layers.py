from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
import scipy.sparse as sp

from common.errors import DataError
from engine.autograd import Tensor, edge_spmm, rowdot, spmm
from graphs.bipartite import BipartiteGraph

ArrayLike = Union[np.ndarray, Tensor]


def _data(x: ArrayLike) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


# ------------------------------------------------------------
# Capa de reducción (W x + b)
# ------------------------------------------------------------
def reduce(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Affine map of one semantic vector (D_txt,) or a stack of them (n, D_txt)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != W.shape[1]:
        raise DataError(f"semantic vector has dimension {x.shape[-1]}, reduction layer expects {W.shape[1]}")
    return x @ W.T + b


def reduce_tensor(x: np.ndarray, W: Tensor, b: Tensor) -> Tensor:
    if x.shape[-1] != W.shape[1]:
        raise DataError(f"semantic vectors have dimension {x.shape[-1]}, reduction layer expects {W.shape[1]}")
    return Tensor(x) @ W.T + b


# ------------------------------------------------------------
# Propagación sobre un grafo bipartito
# ------------------------------------------------------------
def edge_factors(graph: BipartiteGraph, A_left: np.ndarray, A_right: np.ndarray) -> np.ndarray:
    """a_uc = a_u . a_c for every edge, in the graph's edge order."""
    return np.einsum("ij,ij->i", A_left[graph.edge_left], A_right[graph.edge_right])


@dataclass(frozen=True)
class Propagator:
    """One light-conv step over a bipartite graph with fixed edge weights."""

    forward_matrix: sp.csr_matrix    # left x right
    backward_matrix: sp.csr_matrix   # right x left

    @classmethod
    def of(cls, graph: BipartiteGraph, edge_weight: np.ndarray | None = None) -> "Propagator":
        M = graph.matrix(edge_weight)
        return cls(forward_matrix=M, backward_matrix=M.T.tocsr())

    def step(self, x_left: ArrayLike, x_right: ArrayLike) -> Tuple[Tensor, Tensor]:
        x_left, x_right = Tensor.lift(x_left), Tensor.lift(x_right)
        return spmm(self.forward_matrix, x_right), spmm(self.backward_matrix, x_left)


class TrainablePropagator:
    """
    Light-conv step whose edge factors a_uc stay differentiable w.r.t. A.
    Only used to measure what the detached convolution leaves out.
    """

    def __init__(self, graph: BipartiteGraph, A_left: Tensor, A_right: Tensor):
        self.graph = graph
        self.weight = rowdot(A_left.take_rows(graph.edge_left), A_right.take_rows(graph.edge_right))

    def step(self, x_left: ArrayLike, x_right: ArrayLike) -> Tuple[Tensor, Tensor]:
        g = self.graph
        x_left, x_right = Tensor.lift(x_left), Tensor.lift(x_right)
        left = edge_spmm(g.edge_left, g.edge_right, g.norm, self.weight, x_right, (g.left_count, g.right_count))
        right = edge_spmm(g.edge_right, g.edge_left, g.norm, self.weight, x_left, (g.right_count, g.left_count))
        return left, right


# ------------------------------------------------------------
# Capas
# ------------------------------------------------------------
def target_conv_layer(h_u: ArrayLike, h_v: ArrayLike, g_target: BipartiteGraph) -> Tuple[Tensor, Tensor]:
    return Propagator.of(g_target).step(h_u, h_v)


def debias_conv_layer(
    g_u: ArrayLike,
    g_c: ArrayLike,
    g_cross: BipartiteGraph,
    A_u: ArrayLike,
    A_c: ArrayLike,
    detach: bool = True,
) -> Tuple[Tensor, Tensor]:
    """
    g_u^(l+1) = sum_c norm(u,c) a_uc g_c^(l), and symmetrically for clusters.
    With detach=True the factors a_uc are constants for differentiation.
    """
    if detach:
        weights = edge_factors(g_cross, _data(A_u), _data(A_c))
        return Propagator.of(g_cross, weights).step(g_u, g_c)
    return TrainablePropagator(g_cross, Tensor.lift(A_u), Tensor.lift(A_c)).step(g_u, g_c)


def plain_conv_layer(gp_u: ArrayLike, gp_c: ArrayLike, g_cross: BipartiteGraph) -> Tuple[Tensor, Tensor]:
    return Propagator.of(g_cross).step(gp_u, gp_c)


# ------------------------------------------------------------
# Predicciones (producto interno por fila; vectores sueltos también)
# ------------------------------------------------------------
def _inner(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = Tensor.lift(a), Tensor.lift(b)
    if a.data.ndim == 1:
        return (a * b).sum()
    return rowdot(a, b)


def predict(e_u: ArrayLike, e_v: ArrayLike) -> Tensor:
    return _inner(e_u, e_v)


def predict_cluster(e_u: ArrayLike, e_c: ArrayLike) -> Tensor:
    return _inner(e_u, e_c)


def predict_cluster_biased(ep_u: ArrayLike, ep_c: ArrayLike) -> Tensor:
    return _inner(ep_u, ep_c)
