"""
Full SCDGN forward pass: reduction layer, the three propagation paths,
layer aggregation, predictions and every loss term.

Paths:
  h   light conv on G_target (target users x target items), Q layers
  g   debiased conv on G_cross (all users x clusters), P layers
  g'  plain conv on G_cross, P layers (reference for the restriction losses)

The h path only feeds the user-item prediction. User-cluster predictions and
the restriction losses pair the g sums with the g' sums.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from common.errors import DataError
from engine.autograd import Tensor, concat_rows
from graphs.bipartite import BipartiteGraph
from model.layers import Propagator, TrainablePropagator, edge_factors, predict, predict_cluster, predict_cluster_biased, reduce_tensor
from model.losses import bpr_loss, dr_loss, regularizer, restriction_losses, total_loss
from model.params import GROUPS, HyperParams, Parameters


@dataclass(frozen=True)
class ModelInputs:
    """Everything the forward pass reads besides the parameters."""

    g_target: BipartiteGraph
    g_cross: BipartiteGraph
    item_text: np.ndarray       # |V_t| x D_txt
    cluster_text: np.ndarray    # |C| x D_txt
    item_cluster: np.ndarray    # cluster of each target item

    def __post_init__(self):
        n_tu, n_ti = self.g_target.left_count, self.g_target.right_count
        if self.item_text.shape[0] != n_ti:
            raise DataError(f"item_text has {self.item_text.shape[0]} rows, G_target has {n_ti} items")
        if self.item_cluster.shape[0] != n_ti:
            raise DataError(f"item_cluster has {self.item_cluster.shape[0]} entries, expected {n_ti}")
        if self.cluster_text.shape[0] != self.g_cross.right_count:
            raise DataError(
                f"cluster_text has {self.cluster_text.shape[0]} rows, G_cross has {self.g_cross.right_count} clusters"
            )
        if self.g_cross.left_count < n_tu:
            raise DataError("G_cross must cover every target user")
        if self.item_text.shape[1] != self.cluster_text.shape[1]:
            raise DataError("item and cluster semantic vectors differ in dimension")

    @property
    def n_target_users(self) -> int:
        return self.g_target.left_count

    @property
    def n_target_items(self) -> int:
        return self.g_target.right_count

    @property
    def n_users(self) -> int:
        return self.g_cross.left_count

    @property
    def n_clusters(self) -> int:
        return self.g_cross.right_count

    @property
    def d_txt(self) -> int:
        return self.item_text.shape[1]


@dataclass(frozen=True)
class Batch:
    users: np.ndarray
    items: np.ndarray
    neg_items: np.ndarray
    index: int = 0

    def __len__(self):
        return int(self.users.size)


@dataclass
class ForwardCache:
    tensors: Dict[str, Tensor]
    h_u: List[Tensor] = field(default_factory=list)
    h_v: List[Tensor] = field(default_factory=list)
    g_u: List[Tensor] = field(default_factory=list)
    g_c: List[Tensor] = field(default_factory=list)
    gp_u: List[Tensor] = field(default_factory=list)
    gp_c: List[Tensor] = field(default_factory=list)
    e_v: Tensor | None = None
    e_c: Tensor | None = None
    e_u_bar: Tensor | None = None
    g_u_bar: Tensor | None = None
    e_v_bar: Tensor | None = None
    e_c_bar: Tensor | None = None
    ep_u_bar: Tensor | None = None
    ep_c_bar: Tensor | None = None
    y_uv: Tensor | None = None
    y_uv_neg: Tensor | None = None
    y_uc: Tensor | None = None
    yp_uc: Tensor | None = None
    losses: Dict[str, Tensor] = field(default_factory=dict)
    zero_norm_pairs: int = 0

    @property
    def total(self) -> Tensor:
        return self.losses["total"]

    def loss_values(self) -> Dict[str, float]:
        return {name: float(t.data) for name, t in self.losses.items()}


def _layer_sum(layers: List[Tensor], shape: Tuple[int, int]) -> Tensor:
    if not layers:
        return Tensor(np.zeros(shape))
    out = layers[0]
    for t in layers[1:]:
        out = out + t
    return out


def _propagate(step, left0: Tensor, right0: Tensor, n_layers: int) -> Tuple[List[Tensor], List[Tensor]]:
    lefts, rights = [left0], [right0]
    for _ in range(n_layers):
        left, right = step(lefts[-1], rights[-1])
        lefts.append(left)
        rights.append(right)
    return lefts, rights


def _param_tensors(params: Parameters, hp: HyperParams, requires_grad: bool) -> Dict[str, Tensor]:
    active = set(hp.active_groups()) if requires_grad else set()
    return {name: Tensor(arr, requires_grad=name in active, name=name) for name, arr in params.groups()}


# ------------------------------------------------------------
# Pase hacia delante
# ------------------------------------------------------------
def propagate(
    params: Parameters,
    hp: HyperParams,
    inputs: ModelInputs,
    requires_grad: bool = True,
    frozen_debias: Tuple[np.ndarray, np.ndarray] | None = None,
    detach_debias: bool = True,
) -> ForwardCache:
    """
    Embedding layer plus all conv layers and the final aggregation.

    frozen_debias: (A_u, A_c) used for the conv edge factors instead of the
    current parameters; the finite-difference check holds them fixed.
    detach_debias=False keeps a_uc differentiable inside the convolution.
    """
    if params.W.shape[1] != inputs.d_txt:
        raise DataError(f"W expects D_txt={params.W.shape[1]}, semantic vectors have {inputs.d_txt}")
    if params.E_u.shape[0] != inputs.n_users:
        raise DataError(f"E_u has {params.E_u.shape[0]} rows, G_cross has {inputs.n_users} users")

    T = _param_tensors(params, hp, requires_grad)
    cache = ForwardCache(tensors=T)
    n_tu, d = inputs.n_target_users, params.E_u.shape[1]
    target_rows = np.arange(n_tu)

    cache.e_v = reduce_tensor(inputs.item_text, T["W"], T["b"])
    cache.e_c = reduce_tensor(inputs.cluster_text, T["W"], T["b"])

    # h: G_target
    cache.h_u, cache.h_v = _propagate(
        Propagator.of(inputs.g_target).step, T["E_u"].take_rows(target_rows), cache.e_v, hp.Q
    )
    h_layers = cache.h_u[1:] if hp.dedup_layer0 and hp.uses_cross_graph else cache.h_u
    h_sum = _layer_sum(h_layers, (n_tu, d))
    cache.e_v_bar = _layer_sum(cache.h_v, cache.e_v.shape)

    if not hp.uses_cross_graph:
        source = Tensor(np.zeros((inputs.n_users - n_tu, d)))
        cache.e_u_bar = concat_rows([h_sum, source])
        cache.e_c_bar = cache.e_c
        return cache

    # g: G_cross, debiased unless no_debias
    plain = Propagator.of(inputs.g_cross)
    if not hp.uses_debias:
        g_step = plain.step
    elif not detach_debias:
        g_step = TrainablePropagator(inputs.g_cross, T["A_u"], T["A_c"]).step
    else:
        A_u, A_c = frozen_debias if frozen_debias is not None else (params.A_u, params.A_c)
        g_step = Propagator.of(inputs.g_cross, edge_factors(inputs.g_cross, A_u, A_c)).step

    cache.g_u, cache.g_c = _propagate(g_step, T["E_u"], cache.e_c, hp.P)
    g_sum = _layer_sum(cache.g_u, T["E_u"].shape)
    cache.g_u_bar = g_sum
    cache.e_c_bar = _layer_sum(cache.g_c, cache.e_c.shape)

    # g': plain reference path; identical to g when debiasing is off
    if hp.uses_debias:
        cache.gp_u, cache.gp_c = _propagate(plain.step, T["E_u"], cache.e_c, hp.P)
    else:
        cache.gp_u, cache.gp_c = cache.g_u, cache.g_c
    cache.ep_u_bar = _layer_sum(cache.gp_u, T["E_u"].shape)
    cache.ep_c_bar = _layer_sum(cache.gp_c, cache.e_c.shape)

    # e_u appears in both sums for target users; source users have no h-path
    source_rows = np.arange(n_tu, inputs.n_users)
    cache.e_u_bar = concat_rows([g_sum.take_rows(target_rows) + h_sum, g_sum.take_rows(source_rows)])
    return cache


def final_embeddings(cache: ForwardCache) -> Tuple[Tensor, Tensor, Tensor, Tensor | None, Tensor | None]:
    """(e_u_bar, e_v_bar, e_c_bar, e'_u_bar, e'_c_bar); the primed pair is None without G_cross."""
    return cache.e_u_bar, cache.e_v_bar, cache.e_c_bar, cache.ep_u_bar, cache.ep_c_bar


def forward(
    params: Parameters,
    hp: HyperParams,
    inputs: ModelInputs,
    batch: Batch,
    frozen_debias: Tuple[np.ndarray, np.ndarray] | None = None,
    detach_debias: bool = True,
    requires_grad: bool = True,
) -> ForwardCache:
    """Propagation, predictions and every loss term for one mini-batch."""
    cache = propagate(params, hp, inputs, requires_grad, frozen_debias, detach_debias)
    T = cache.tensors
    users, items, neg_items = batch.users, batch.items, batch.neg_items
    clusters = inputs.item_cluster[items]

    cache.y_uv = predict(cache.e_u_bar.take_rows(users), cache.e_v_bar.take_rows(items))
    cache.y_uv_neg = predict(cache.e_u_bar.take_rows(users), cache.e_v_bar.take_rows(neg_items))

    losses: Dict[str, Tensor] = {"bpr": bpr_loss(cache.y_uv, cache.y_uv_neg)}

    if not hp.no_dr_loss:
        losses["dr"], cache.zero_norm_pairs = dr_loss(
            cache.e_v, cache.e_c, items, neg_items, inputs.item_cluster, inputs.item_text, inputs.cluster_text
        )

    if hp.uses_cross_graph:
        cache.y_uc = predict_cluster(cache.g_u_bar.take_rows(users), cache.e_c_bar.take_rows(clusters))
        cache.yp_uc = predict_cluster_biased(cache.ep_u_bar.take_rows(users), cache.ep_c_bar.take_rows(clusters))
    if hp.uses_debias:
        losses["rsp"], losses["rsu"], losses["rsc"] = restriction_losses(
            users, clusters, cache.g_u_bar, cache.e_c_bar, cache.ep_u_bar, cache.ep_c_bar, T["A_u"], T["A_c"]
        )

    losses["reg"] = regularizer(T[name] for name in GROUPS if name in hp.active_groups())
    losses["total"] = total_loss(losses, hp)
    cache.losses = losses
    return cache


def score_embeddings(params: Parameters, hp: HyperParams, inputs: ModelInputs) -> Tuple[np.ndarray, np.ndarray]:
    """Final target-user and target-item representations, no gradient tracking."""
    cache = propagate(params, hp, inputs, requires_grad=False)
    return cache.e_u_bar.data[: inputs.n_target_users], cache.e_v_bar.data
