from typing import Dict, Iterable, Tuple

import numpy as np

from engine.autograd import Tensor, cosine_rows, rowdot, sum_squares
from model.params import HyperParams


def cosine_np(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, int]:
    """Row-wise cosine of constant vectors; zero-norm rows give 0."""
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    ok = (na > 0) & (nb > 0)
    dots = np.einsum("ij,ij->i", a, b)
    return np.where(ok, dots / np.where(ok, na * nb, 1.0), 0.0), int((~ok).sum())


def bpr_loss(y_pos: Tensor, y_neg: Tensor) -> Tensor:
    """-sum ln sigma(y_uv - y_uv-), summed over the batch."""
    return -((y_pos - y_neg).log_sigmoid().sum())


def dr_loss(
    e_v: Tensor,
    e_c: Tensor,
    items: np.ndarray,
    neg_items: np.ndarray,
    item_cluster: np.ndarray,
    item_text: np.ndarray,
    cluster_text: np.ndarray,
) -> Tuple[Tensor, int]:
    """
    Mean over the batch of the squared gap between cosine similarities
    after and before reduction, for the item pair (v, v-) and the cluster
    pair (c, c-). Returns the loss and the number of zero-norm pairs.
    """
    clusters = item_cluster[items]
    neg_clusters = item_cluster[neg_items]

    sim_v, zero_v = cosine_rows(e_v.take_rows(items), e_v.take_rows(neg_items))
    sim_c, zero_c = cosine_rows(e_c.take_rows(clusters), e_c.take_rows(neg_clusters))
    txt_v, zero_tv = cosine_np(item_text[items], item_text[neg_items])
    txt_c, zero_tc = cosine_np(cluster_text[clusters], cluster_text[neg_clusters])

    loss = ((sim_v - txt_v) ** 2 + (sim_c - txt_c) ** 2).mean()
    return loss, zero_v + zero_c + zero_tv + zero_tc


def restriction_losses(
    users: np.ndarray,
    clusters: np.ndarray,
    g_u_bar: Tensor,
    e_c_bar: Tensor,
    ep_u_bar: Tensor,
    ep_c_bar: Tensor,
    A_u: Tensor,
    A_c: Tensor,
) -> Tuple[Tensor, Tensor, Tensor]:
    """
    L_rsp on the batch tuples, L_rsu over every user, L_rsc over every cluster.
    g_u_bar is the G_cross user sum, without the G_target path.
    a_uc enters L_rsp as a differentiable factor here.
    """
    y_uc = rowdot(g_u_bar.take_rows(users), e_c_bar.take_rows(clusters))
    yp_uc = rowdot(ep_u_bar.take_rows(users), ep_c_bar.take_rows(clusters))
    a_uc = rowdot(A_u.take_rows(users), A_c.take_rows(clusters))
    rsp = ((y_uc - a_uc * yp_uc) ** 2).mean()

    n_users = max(g_u_bar.shape[0], 1)
    n_clusters = max(e_c_bar.shape[0], 1)
    rsu = ((g_u_bar - A_u * ep_u_bar) ** 2).sum() * (1.0 / n_users)
    rsc = ((e_c_bar - A_c * ep_c_bar) ** 2).sum() * (1.0 / n_clusters)
    return rsp, rsu, rsc


def regularizer(tensors: Iterable[Tensor]) -> Tensor:
    total = Tensor(0.0)
    for t in tensors:
        total = total + sum_squares(t)
    return total


def total_loss(parts: Dict[str, Tensor], hp: HyperParams) -> Tensor:
    """
    L_bpr + lambda1 (L_rsp + L_rsu + L_rsc) + lambda2 L_dr + lambda3 ||theta||^2.
    Terms switched off by ablation flags (or a zero weight) are left out.
    """
    loss = parts["bpr"]
    if hp.uses_restriction and "rsp" in parts:
        loss = loss + hp.lambda1 * (parts["rsp"] + parts["rsu"] + parts["rsc"])
    if hp.uses_dr and "dr" in parts:
        loss = loss + hp.lambda2 * parts["dr"]
    if hp.lambda3 > 0:
        loss = loss + hp.lambda3 * parts["reg"]
    return loss
