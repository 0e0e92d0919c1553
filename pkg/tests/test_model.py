import math
from dataclasses import replace

import numpy as np
import pytest

from common.errors import ConfigError, DataError
from engine.autograd import Tensor
from graphs.bipartite import BipartiteGraph
from model.forward import ModelInputs, forward, propagate, score_embeddings
from model.layers import debias_conv_layer, plain_conv_layer, predict, reduce, target_conv_layer
from model.losses import bpr_loss, dr_loss, regularizer, total_loss
from model.params import Ablation, HyperParams, init_parameters


def _dense_norm(graph):
    R = np.zeros((graph.left_count, graph.right_count))
    R[graph.edge_left, graph.edge_right] = 1.0
    dl, dr = R.sum(axis=1), R.sum(axis=0)
    with np.errstate(divide="ignore"):
        il = np.where(dl > 0, 1 / np.sqrt(dl), 0.0)
        ir = np.where(dr > 0, 1 / np.sqrt(dr), 0.0)
    return il[:, None] * R * ir[None, :]


# ------------------------------------------------------------
# Hiperparámetros
# ------------------------------------------------------------
def test_hyperparams_require_matching_debias_dimension():
    with pytest.raises(ConfigError, match="d_a"):
        HyperParams(d=4, d_a=3)
    # no restriction loss -> any d_a is accepted
    assert HyperParams(d=4, d_a=3, lambda1=0.0).d_a == 3
    assert HyperParams(d=4, d_a=3, no_debias=True).d_a == 3


def test_ablations_map_to_flags():
    hp = HyperParams()
    assert hp.with_ablation("no-si").no_cross_graph
    assert hp.with_ablation(Ablation.NO_DRLOSS).no_dr_loss
    assert hp.with_ablation("no-db").active_groups() == ("E_u", "W", "b")
    assert hp.with_ablation("none") == hp
    with pytest.raises(ValueError):
        hp.with_ablation("no-such-variant")


def test_ones_init_gives_unit_debias_factor():
    hp = HyperParams(d=4, d_a=4, debias_init="ones")
    params = init_parameters(hp, 5, 3, 6, np.random.default_rng(0))
    np.testing.assert_array_equal(params.A_u @ params.A_c.T, np.ones((5, 3)))
    np.testing.assert_array_equal(params.b, np.zeros(4))


# ------------------------------------------------------------
# Capas
# ------------------------------------------------------------
def test_reduce_accepts_vector_and_stack():
    W, b = np.arange(6.0).reshape(2, 3), np.array([1.0, -1.0])
    x = np.array([1.0, 0.0, 2.0])
    np.testing.assert_allclose(reduce(x, W, b), W @ x + b)
    np.testing.assert_allclose(reduce(np.stack([x, x]), W, b), np.stack([W @ x + b] * 2))
    with pytest.raises(DataError):
        reduce(np.ones(4), W, b)


def test_conv_layers_match_dense_products(tiny_inputs):
    rng = np.random.default_rng(0)
    g = tiny_inputs.g_cross
    x_u, x_c = rng.normal(size=(5, 3)), rng.normal(size=(2, 3))
    A_u, A_c = rng.normal(size=(5, 3)), rng.normal(size=(2, 3))
    M = _dense_norm(g)

    u, c = plain_conv_layer(x_u, x_c, g)
    np.testing.assert_allclose(u.data, M @ x_c)
    np.testing.assert_allclose(c.data, M.T @ x_u)

    Mw = M * (A_u @ A_c.T)
    for detach in (True, False):
        u, c = debias_conv_layer(x_u, x_c, g, A_u, A_c, detach=detach)
        np.testing.assert_allclose(u.data, Mw @ x_c)
        np.testing.assert_allclose(c.data, Mw.T @ x_u)

    gt = tiny_inputs.g_target
    h_u, h_v = target_conv_layer(x_u[:3], rng.normal(size=(3, 3)), gt)
    assert h_u.shape == (3, 3) and h_v.shape == (3, 3)


def test_predict_handles_single_vectors():
    assert float(predict(np.array([1.0, 2.0]), np.array([3.0, 4.0])).data) == 11.0
    np.testing.assert_allclose(predict(np.eye(2), np.ones((2, 2))).data, [1.0, 1.0])


# ------------------------------------------------------------
# Pase completo contra un oráculo denso
# ------------------------------------------------------------
def test_final_embeddings_match_dense_oracle(tiny_params, tiny_hp, tiny_inputs):
    p, hp, inp = tiny_params, tiny_hp, tiny_inputs
    cache = propagate(p, hp, inp, requires_grad=False)

    e_v = inp.item_text @ p.W.T + p.b
    e_c = inp.cluster_text @ p.W.T + p.b
    Nt = _dense_norm(inp.g_target)
    Nc = _dense_norm(inp.g_cross)
    Nd = Nc * (p.A_u @ p.A_c.T)

    h_u, h_v = [p.E_u[:3]], [e_v]
    g_u, g_c = [p.E_u], [e_c]
    gp_u, gp_c = [p.E_u], [e_c]
    for _ in range(hp.Q):
        h_u, h_v = h_u + [Nt @ h_v[-1]], h_v + [Nt.T @ h_u[-1]]
    for _ in range(hp.P):
        g_u, g_c = g_u + [Nd @ g_c[-1]], g_c + [Nd.T @ g_u[-1]]
        gp_u, gp_c = gp_u + [Nc @ gp_c[-1]], gp_c + [Nc.T @ gp_u[-1]]

    e_u_bar = sum(g_u)
    e_u_bar[:3] += sum(h_u)

    np.testing.assert_allclose(cache.e_u_bar.data, e_u_bar, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(cache.e_v_bar.data, sum(h_v), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(cache.e_c_bar.data, sum(g_c), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(cache.ep_u_bar.data, sum(gp_u), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(cache.g_u_bar.data, sum(g_u), rtol=1e-12, atol=1e-12)

    users, items = score_embeddings(p, hp, inp)
    np.testing.assert_allclose(users, e_u_bar[:3], rtol=1e-12, atol=1e-12)

    dedup = propagate(p, replace(hp, dedup_layer0=True), inp, requires_grad=False)
    np.testing.assert_allclose(dedup.e_u_bar.data[:3], e_u_bar[:3] - p.E_u[:3], rtol=1e-12, atol=1e-12)


def test_unit_debias_factor_reduces_to_plain_convolution(tiny_inputs, tiny_batch):
    hp = HyperParams(d=4, d_a=4, P=2, Q=1, k=2, debias_init="ones", lambda1=1.0)
    params = init_parameters(hp, tiny_inputs.n_users, tiny_inputs.n_clusters, tiny_inputs.d_txt,
                             np.random.default_rng(2))
    cache = forward(params, hp, tiny_inputs, tiny_batch, requires_grad=False)

    for g, gp in zip(cache.g_u + cache.g_c, cache.gp_u + cache.gp_c):
        np.testing.assert_array_equal(g.data, gp.data)
    np.testing.assert_array_equal(cache.g_u_bar.data, cache.ep_u_bar.data)
    np.testing.assert_array_equal(cache.y_uc.data, cache.yp_uc.data)
    assert float(cache.losses["rsp"].data) == 0.0
    # target users still see the G_target path in the item prediction
    assert not np.array_equal(cache.e_u_bar.data[:3], cache.g_u_bar.data[:3])


def test_user_restriction_vanishes_when_debias_vectors_are_one(tiny_inputs, tiny_batch):
    hp = HyperParams(d=1, d_a=1, P=2, Q=1, k=2, debias_init="ones", lambda1=1.0)
    params = init_parameters(hp, tiny_inputs.n_users, tiny_inputs.n_clusters, tiny_inputs.d_txt,
                             np.random.default_rng(2))
    cache = forward(params, hp, tiny_inputs, tiny_batch, requires_grad=False)
    np.testing.assert_array_equal(params.A_u, np.ones_like(params.A_u))
    # the G_target path stays out of the restricted sums
    np.testing.assert_array_equal(cache.g_u_bar.data, cache.ep_u_bar.data)
    for name in ("rsp", "rsu", "rsc"):
        assert float(cache.losses[name].data) == 0.0, name


def test_no_si_variant_has_zero_source_rows_and_no_cluster_terms(tiny_params, tiny_hp, tiny_inputs, tiny_batch):
    hp = tiny_hp.with_ablation("no-si")
    cache = forward(tiny_params, hp, tiny_inputs, tiny_batch)
    np.testing.assert_array_equal(cache.e_u_bar.data[3:], np.zeros((2, hp.d)))
    assert set(cache.losses) == {"bpr", "dr", "reg", "total"}
    assert cache.y_uc is None


def test_no_db_variant_reuses_plain_layers(tiny_params, tiny_hp, tiny_inputs, tiny_batch):
    cache = forward(tiny_params, tiny_hp.with_ablation("no-db"), tiny_inputs, tiny_batch)
    assert cache.gp_u is cache.g_u
    assert "rsp" not in cache.losses
    assert not cache.tensors["A_u"].requires_grad


def test_no_drloss_variant_drops_the_term(tiny_params, tiny_hp, tiny_inputs, tiny_batch):
    cache = forward(tiny_params, tiny_hp.with_ablation("no-drloss"), tiny_inputs, tiny_batch)
    assert "dr" not in cache.losses


def test_model_inputs_validate_shapes(tiny_inputs):
    with pytest.raises(DataError, match="item_text"):
        ModelInputs(tiny_inputs.g_target, tiny_inputs.g_cross, tiny_inputs.item_text[:2],
                    tiny_inputs.cluster_text, tiny_inputs.item_cluster)
    with pytest.raises(DataError, match="cluster_text"):
        ModelInputs(tiny_inputs.g_target, tiny_inputs.g_cross, tiny_inputs.item_text,
                    tiny_inputs.cluster_text[:1], tiny_inputs.item_cluster)


def test_forward_rejects_wrong_user_count(tiny_params, tiny_hp, tiny_inputs):
    params = replace(tiny_params, E_u=tiny_params.E_u[:4])
    with pytest.raises(DataError, match="E_u"):
        propagate(params, tiny_hp, tiny_inputs)


# ------------------------------------------------------------
# Pérdidas
# ------------------------------------------------------------
def test_bpr_loss_at_equal_scores():
    loss = bpr_loss(Tensor(np.zeros(4)), Tensor(np.zeros(4)))
    assert float(loss.data) == pytest.approx(4 * math.log(2))


def test_bpr_loss_is_stable_for_large_margins():
    loss = bpr_loss(Tensor(np.array([-800.0])), Tensor(np.array([0.0])))
    assert float(loss.data) == pytest.approx(800.0)


def test_dr_loss_is_zero_when_reduction_preserves_angles():
    rng = np.random.default_rng(0)
    item_text = rng.normal(size=(4, 3))
    item_cluster = np.array([0, 1, 0, 1])
    cluster_text = np.stack([item_text[[0, 2]].mean(axis=0), item_text[[1, 3]].mean(axis=0)])
    scale = 2.5
    loss, zero = dr_loss(
        Tensor(scale * item_text), Tensor(scale * cluster_text),
        np.array([0, 1]), np.array([3, 2]), item_cluster, item_text, cluster_text,
    )
    assert float(loss.data) == pytest.approx(0.0, abs=1e-20)
    assert zero == 0


def test_dr_loss_counts_zero_norm_pairs():
    item_text = np.array([[1.0, 0.0], [0.0, 0.0]])
    loss, zero = dr_loss(
        Tensor(item_text), Tensor(item_text), np.array([0]), np.array([1]),
        np.array([0, 1]), item_text, item_text,
    )
    assert zero == 4
    assert float(loss.data) == 0.0


def test_total_loss_weights_every_term(tiny_params, tiny_hp, tiny_inputs, tiny_batch):
    parts = {k: float(v.data) for k, v in forward(tiny_params, tiny_hp, tiny_inputs, tiny_batch).losses.items()}
    expected = (
        parts["bpr"]
        + tiny_hp.lambda1 * (parts["rsp"] + parts["rsu"] + parts["rsc"])
        + tiny_hp.lambda2 * parts["dr"]
        + tiny_hp.lambda3 * parts["reg"]
    )
    assert parts["total"] == pytest.approx(expected, rel=1e-12)
    assert parts["reg"] == pytest.approx(tiny_params.squared_norm(), rel=1e-12)


def test_total_loss_skips_zero_weights():
    hp = HyperParams(lambda1=0.0, lambda2=0.0, lambda3=0.0)
    parts = {name: Tensor(1.0) for name in ("bpr", "rsp", "rsu", "rsc", "dr", "reg")}
    assert float(total_loss(parts, hp).data) == 1.0
    assert float(regularizer([Tensor(np.array([3.0, 4.0]))]).data) == 25.0


def _random_inputs(rng):
    n_tu, n_ti, n_su, k, d_txt = (int(x) for x in rng.integers(2, 12, size=5))
    g_target = BipartiteGraph.from_edges(rng.integers(0, n_tu, 3 * n_tu), rng.integers(0, n_ti, 3 * n_tu), n_tu, n_ti)
    n_users = n_tu + n_su
    g_cross = BipartiteGraph.from_edges(rng.integers(0, n_users, 2 * n_users), rng.integers(0, k, 2 * n_users), n_users, k)
    return ModelInputs(
        g_target=g_target,
        g_cross=g_cross,
        item_text=rng.normal(size=(n_ti, d_txt)),
        cluster_text=rng.normal(size=(k, d_txt)),
        item_cluster=rng.integers(0, k, n_ti),
    )


@pytest.mark.parametrize("seed", range(50))
def test_random_graphs_match_dense_oracle(seed):
    rng = np.random.default_rng(seed)
    inp = _random_inputs(rng)
    hp = HyperParams(d=3, d_a=3, P=int(rng.integers(0, 4)), Q=int(rng.integers(0, 4)), k=2)
    p = init_parameters(hp, inp.n_users, inp.n_clusters, inp.d_txt, rng)
    cache = propagate(p, hp, inp, requires_grad=False)

    Nt, Nc = _dense_norm(inp.g_target), _dense_norm(inp.g_cross)
    Nd = Nc * (p.A_u @ p.A_c.T)
    h_u, h_v = [p.E_u[: inp.n_target_users]], [inp.item_text @ p.W.T + p.b]
    g_u, g_c = [p.E_u], [inp.cluster_text @ p.W.T + p.b]
    for _ in range(hp.Q):
        h_u, h_v = h_u + [Nt @ h_v[-1]], h_v + [Nt.T @ h_u[-1]]
    for _ in range(hp.P):
        g_u, g_c = g_u + [Nd @ g_c[-1]], g_c + [Nd.T @ g_u[-1]]
    e_u_bar = sum(g_u)
    e_u_bar[: inp.n_target_users] += sum(h_u)

    assert np.abs(cache.e_u_bar.data - e_u_bar).max() < 1e-10
    assert np.abs(cache.e_v_bar.data - sum(h_v)).max() < 1e-10
    assert np.abs(cache.e_c_bar.data - sum(g_c)).max() < 1e-10


def test_losses_are_never_negative(tiny_inputs, tiny_batch):
    rng = np.random.default_rng(0)
    hp = HyperParams(d=3, d_a=3, P=2, Q=2, k=2, lambda1=1.0, init_std=1.0)
    for _ in range(1000):
        params = init_parameters(hp, tiny_inputs.n_users, tiny_inputs.n_clusters, tiny_inputs.d_txt, rng)
        losses = forward(params, hp, tiny_inputs, tiny_batch, requires_grad=False).loss_values()
        assert min(losses.values()) >= 0.0, losses
