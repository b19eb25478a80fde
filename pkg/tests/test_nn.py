import math
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import model_gradient_check, scalar_attention, scalar_gru_step, scalar_rmsprop

from pedtrack.nn import (
    VARIANTS,
    ModelConfig,
    ModelFileError,
    RMSProp,
    TrainConfig,
    attention_forward,
    fit,
    gru_cell_step,
    gru_layer_forward,
    init_params,
    load_model,
    mae_loss,
    model_backward,
    model_forward,
    predict,
    rmsprop_step,
    save_model,
)
from pedtrack.nn.layers import gru_param_names, softmax
from pedtrack.nn.train import PlateauSchedule, read_history, write_history


def random_gru(rng, d_in, d, scale=0.5):
    p = {}
    for name in gru_param_names("gru"):
        leaf = name.split(".")[1]
        shape = (d,) if leaf.startswith("b") else (d, d_in if leaf.endswith("x") else d)
        p[name] = rng.normal(0.0, scale, shape)
    return p


def zero_gru(d_in, d):
    return {k: np.zeros_like(v) for k, v in random_gru(np.random.default_rng(0), d_in, d).items()}


def random_att(rng, d, k):
    return {"att.M": rng.normal(0, 0.5, (k, d)), "att.b": rng.normal(0, 0.5, k), "att.w": rng.normal(0, 0.5, k)}


# ------------------------------------------------------------------ GRU cell


def test_zero_params_halve_previous_state():
    v = np.array([0.3, -0.8, 1.2])
    h, _ = gru_cell_step(np.ones(2), v, zero_gru(2, 3))
    np.testing.assert_allclose(h, 0.5 * v, atol=1e-15)


def test_zero_params_zero_state_stays_zero():
    h, _ = gru_cell_step(np.ones(2), np.zeros(3), zero_gru(2, 3))
    assert np.all(h == 0.0)


def test_cell_matches_scalar_loop_3_to_2():
    rng = np.random.default_rng(11)
    p = random_gru(rng, 3, 2)
    x, h0 = rng.normal(size=3), rng.normal(size=2)
    h, _ = gru_cell_step(x, h0, p)
    np.testing.assert_allclose(h, scalar_gru_step(x, h0, p), atol=1e-12, rtol=0)


def test_cell_batch_matches_rows():
    rng = np.random.default_rng(2)
    p = random_gru(rng, 4, 3)
    X, Hp = rng.normal(size=(5, 4)), rng.normal(size=(5, 3))
    hb, _ = gru_cell_step(X, Hp, p)
    for i in range(5):
        np.testing.assert_allclose(hb[i], gru_cell_step(X[i], Hp[i], p)[0], atol=1e-15)


def test_cell_rejects_mismatched_shapes():
    p = random_gru(np.random.default_rng(0), 3, 2)
    with pytest.raises(ValueError):
        gru_cell_step(np.zeros(4), np.zeros(2), p)
    p["gru.W_uh"] = np.zeros((2, 3))
    with pytest.raises(ValueError):
        gru_cell_step(np.zeros(3), np.zeros(2), p)


# ------------------------------------------------------------------ GRU layer


def test_layer_single_step_equals_cell():
    rng = np.random.default_rng(3)
    p = random_gru(rng, 3, 4)
    x = rng.normal(size=(1, 1, 3))
    out, _ = gru_layer_forward(x, p)
    np.testing.assert_allclose(out[0, 0], gru_cell_step(x[0, 0], np.zeros(4), p)[0], atol=1e-15)


def test_layer_table_shape():
    rng = np.random.default_rng(4)
    out, _ = gru_layer_forward(rng.normal(size=(1, 500, 12)), random_gru(rng, 12, 256, 0.05))
    assert out.shape == (1, 500, 256)


def test_layer_zero_in_zero_params_gives_zero():
    out, _ = gru_layer_forward(np.zeros((2, 7, 3)), zero_gru(3, 5))
    assert np.all(out == 0.0)


def test_layer_matches_scalar_recursion():
    rng = np.random.default_rng(5)
    p = random_gru(rng, 3, 4)
    X = rng.normal(size=(1, 6, 3))
    out, _ = gru_layer_forward(X, p)
    h = np.zeros(4)
    for t in range(6):
        h = scalar_gru_step(X[0, t], h, p)
        np.testing.assert_allclose(out[0, t], h, atol=1e-12, rtol=0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), scale=st.floats(0.1, 5.0))
def test_gate_ranges(seed, scale):
    rng = np.random.default_rng(seed)
    p = random_gru(rng, 3, 4, scale)
    out, cache = gru_layer_forward(rng.normal(0, scale, (2, 8, 3)), p)
    for key in ("G_u", "G_r"):
        g = cache[key]
        assert np.all((g >= 0) & (g <= 1))
    assert np.all(np.abs(cache["Q"]) <= 1) and np.all(np.abs(out) <= 1)


# ------------------------------------------------------------------ attention


def test_softmax_hand_case():
    _, alpha, _ = attention_forward(np.eye(3), {"att.M": np.eye(3), "att.b": np.zeros(3), "att.w": np.zeros(3)})
    np.testing.assert_allclose(alpha, np.full(3, 1 / 3), atol=1e-15)
    a = softmax(np.array([0.0, math.log(2.0), math.log(4.0)]))
    np.testing.assert_allclose(a, [1 / 7, 2 / 7, 4 / 7], atol=1e-12, rtol=0)


def test_uniform_scores_give_row_mean():
    rng = np.random.default_rng(6)
    H = rng.normal(size=(9, 5))
    p = random_att(rng, 5, 3)
    p["att.w"] = np.zeros(3)
    c, alpha, _ = attention_forward(H, p)
    np.testing.assert_allclose(alpha, np.full(9, 1 / 9), atol=1e-15)
    np.testing.assert_allclose(c, H.mean(axis=0), atol=1e-12, rtol=0)


def test_single_step_attention():
    rng = np.random.default_rng(7)
    H = rng.normal(size=(1, 4))
    c, alpha, _ = attention_forward(H, random_att(rng, 4, 2))
    assert alpha.tolist() == [1.0]
    np.testing.assert_array_equal(c, H[0])


def test_attention_matches_scalar_loops():
    rng = np.random.default_rng(8)
    H = rng.normal(size=(6, 4))
    p = random_att(rng, 4, 3)
    c, alpha, _ = attention_forward(H, p)
    _, a_ref, c_ref = scalar_attention(H, p["att.M"], p["att.b"], p["att.w"])
    np.testing.assert_allclose(alpha, a_ref, atol=1e-14)
    np.testing.assert_allclose(c, c_ref, atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), T=st.integers(1, 30), scale=st.floats(0.01, 20.0))
def test_attention_weights_normalised_and_permutation_covariant(seed, T, scale):
    rng = np.random.default_rng(seed)
    H = rng.normal(0, scale, (T, 4))
    p = random_att(rng, 4, 3)
    c, alpha, _ = attention_forward(H, p)
    assert abs(alpha.sum() - 1.0) < 1e-12 and np.all(alpha >= 0)
    perm = rng.permutation(T)
    c2, alpha2, _ = attention_forward(H[perm], p)
    np.testing.assert_allclose(alpha2, alpha[perm], atol=1e-14)
    np.testing.assert_allclose(c2, c, atol=1e-12 * max(1.0, scale))


# ------------------------------------------------------------------ full model


def small_cfg(**kw):
    base = dict(input_dim=5, hidden=8, attn_width=4, dense=6)
    base.update(kw)
    return ModelConfig(**base)


def test_table_shape_trace():
    cfg = ModelConfig()
    params = init_params(cfg, seed=0)
    y, cache = model_forward(np.zeros((500, 12)), params)
    trace = [s for _, s in cache["shapes"]]
    assert trace == [(500, 12), (500, 256), (500, 256), (500, 256), (1, 256), (1, 64), (1,)]
    assert np.ndim(y) == 0


def test_infer_is_deterministic_and_dropout_zero_is_identity():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(3, 10, 5))
    p = init_params(small_cfg(), seed=1)
    a, _ = model_forward(X, p)
    b, _ = model_forward(X, p)
    assert np.array_equal(a, b)
    p0 = init_params(small_cfg(dropout=0.0), seed=1)
    t, _ = model_forward(X, p0, mode="train", dropout_seed=3)
    i, _ = model_forward(X, p0, mode="infer")
    np.testing.assert_allclose(t, i, atol=1e-12)


def test_dropout_mask_is_inverted_per_element():
    p = init_params(small_cfg(dropout=0.25), seed=0)
    _, cache = model_forward(np.ones((4, 50, 5)), p, mode="train", dropout_seed=0)
    m = cache["mask"]
    assert set(np.unique(m)) <= {0.0, 1.0 / 0.75}
    assert abs((m > 0).mean() - 0.75) < 0.05


@pytest.mark.parametrize("variant", sorted(VARIANTS))
def test_variants_depth_and_attention(variant):
    cfg = ModelConfig.for_variant(variant, input_dim=5, hidden=8, attn_width=4, dense=6)
    p = init_params(cfg, seed=0)
    n_layers = sum(1 for k in p if k.endswith(".W_ux"))
    assert n_layers == VARIANTS[variant]["n_gru"]
    assert ("att.M" in p.arrays) == VARIANTS[variant]["attention"]
    _, cache = model_forward(np.zeros((10, 5)), p)
    assert cache["shapes"][-1] == ("dense_2", (1,))


def test_unknown_variant_lists_known_ones():
    with pytest.raises(KeyError, match="2gru_att"):
        ModelConfig.for_variant("lstm")


@pytest.mark.parametrize("n_gru,attention", [(1, False), (2, True), (3, True)])
def test_gradient_check_small_stack(n_gru, attention):
    assert model_gradient_check(42 + n_gru, n_gru=n_gru, attention=attention, T=6) < 1e-4


def test_zero_upstream_gradient_gives_zero_grads():
    p = init_params(small_cfg(), seed=0)
    _, cache = model_forward(np.ones((2, 4, 5)), p, mode="train", dropout_seed=1)
    g = model_backward(cache, np.zeros(2), p)
    assert all(np.all(v == 0) for v in g.values())


def test_backward_deterministic_given_dropout_seed():
    p = init_params(small_cfg(), seed=0)
    X = np.random.default_rng(0).normal(size=(2, 4, 5))
    outs = []
    for _ in range(2):
        _, cache = model_forward(X, p, mode="train", dropout_seed=7)
        outs.append(model_backward(cache, np.ones(2), p))
    assert all(np.array_equal(outs[0][k], outs[1][k]) for k in outs[0])


def test_backward_rejects_foreign_cache():
    p, q = init_params(small_cfg(), 0), init_params(small_cfg(), 0)
    _, cache = model_forward(np.ones((4, 5)), p)
    with pytest.raises(ValueError):
        model_backward(cache, np.ones(1), q)


# ------------------------------------------------------------------ loss


def test_mae_examples():
    assert mae_loss([0.5, 2.0], [0.5, 2.0])[0] == 0.0
    loss, grad = mae_loss([1.0, -1.0], [0.0, 0.0])
    assert loss == 1.0 and grad.tolist() == [0.5, -0.5]
    assert mae_loss([1.0], [1.0])[1].tolist() == [0.0]


def test_mae_gradient_matches_finite_differences():
    rng = np.random.default_rng(10)
    y, yh = rng.normal(size=7), rng.normal(size=7)
    _, g = mae_loss(yh, y)
    h = 1e-6
    for i in range(7):
        e = np.zeros(7)
        e[i] = h
        fd = (mae_loss(yh + e, y)[0] - mae_loss(yh - e, y)[0]) / (2 * h)
        assert abs(fd - g[i]) < 1e-8


def test_mae_shape_mismatch():
    with pytest.raises(ValueError):
        mae_loss([1.0, 2.0], [1.0])


# ------------------------------------------------------------------ optimiser


def test_rmsprop_zero_gradient_only_decays_state():
    theta = {"w": np.array([1.0, -2.0])}
    th, st_ = rmsprop_step(theta, {"w": np.zeros(2)}, {"w": np.array([4.0, 1.0])}, lr=0.1)
    assert np.array_equal(th["w"], theta["w"])
    np.testing.assert_allclose(st_["w"], [3.6, 0.9], atol=1e-15)


@pytest.mark.parametrize("g", [0.3, -2.0, 1e-3])
def test_rmsprop_first_step_formula(g):
    lr, rho, eps = 0.001, 0.9, 1e-8
    opt = RMSProp(rho, eps)
    arr = {"w": np.array([0.7])}
    opt.step(arr, {"w": np.array([g])}, lr)
    expected = 0.7 - lr * g / (math.sqrt((1 - rho) * g * g) + eps)
    assert abs(arr["w"][0] - expected) < 1e-15
    ref, _ = scalar_rmsprop(0.7, g, 0.0, lr, rho, eps)
    assert abs(arr["w"][0] - ref) < 1e-15


@settings(max_examples=50, deadline=None)
@given(g=st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=8), lr=st.floats(1e-5, 1.0))
def test_rmsprop_sign_symmetry(g, lr):
    g = np.array(g)
    z = {"w": np.zeros_like(g)}
    a, _ = rmsprop_step(z, {"w": g}, {}, lr)
    b, _ = rmsprop_step(z, {"w": -g}, {}, lr)
    np.testing.assert_allclose(a["w"], -b["w"], atol=1e-15, rtol=0)


def test_plateau_schedule_reduces_by_exact_factor():
    s = PlateauSchedule(1e-3, 0.2, patience=2, min_delta=1e-4)
    lrs = [s.update(v) for v in [1.0, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9]]
    # wait exceeds patience on the third stale epoch
    assert lrs == [1e-3, 1e-3, 1e-3, 1e-3, 2e-4, 2e-4, 2e-4, 2e-4 * 0.2]


# ------------------------------------------------------------------ training


def toy_data(n=20, T=25, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (n, T, 5))
    y = X[:, :, 0].mean(axis=1) * 3.0 + X[:, -1, 1]
    return X, y


def test_training_learns_and_lr_trace_behaves():
    X, y = toy_data()
    cfg = TrainConfig(epochs=40, batch=5, lr0=3e-3, lr_patience=3, seed=0)
    _, hist = fit(X, y, X, y, small_cfg(dropout=0.0), cfg)
    assert hist[0]["epoch"] == 0 and len(hist) == 41
    assert hist[-1]["val_mae"] <= 0.5 * hist[0]["val_mae"]
    lrs = [r["lr"] for r in hist]
    for a, b in zip(lrs, lrs[1:]):
        assert b == a or b == pytest.approx(0.2 * a, rel=1e-12)


def test_training_history_bitwise_deterministic(tmp_path):
    X, y = toy_data(10)
    runs = [fit(X, y, X[:4], y[:4], small_cfg(), TrainConfig(epochs=3, seed=5))[1] for _ in range(2)]
    assert runs[0] == runs[1]
    write_history(runs[0], tmp_path / "h.csv")
    assert read_history(tmp_path / "h.csv") == runs[0]


def test_training_rejects_empty_sets():
    X, y = toy_data(4)
    with pytest.raises(ValueError):
        fit(X, y, X[:0], y[:0], small_cfg(), TrainConfig(epochs=1))


# ------------------------------------------------------------------ persistence


def test_save_load_round_trip(tmp_path):
    X, _ = toy_data(6)
    p = init_params(small_cfg(n_gru=3), seed=3)
    save_model(p, tmp_path / "m.txt")
    q = load_model(tmp_path / "m.txt")
    assert q.config == p.config
    assert all(np.array_equal(p[k], q[k]) for k in p)
    np.testing.assert_allclose(predict(q, X), predict(p, X), atol=1e-12, rtol=0)


def test_truncated_model_file(tmp_path):
    p = init_params(small_cfg(), seed=0)
    save_model(p, tmp_path / "m.txt")
    text = (tmp_path / "m.txt").read_text()
    for cut in (len(text) // 3, len(text) - 12):
        (tmp_path / "t.txt").write_text(text[:cut])
        with pytest.raises(ModelFileError):
            load_model(tmp_path / "t.txt")


def test_dx_model_usable_for_dy(tmp_path):
    p = init_params(small_cfg(), seed=0)
    save_model(p, os.path.join(tmp_path, "model_dx.txt"))
    q = load_model(os.path.join(tmp_path, "model_dx.txt"))
    X, _ = toy_data(3)
    assert predict(q, X).shape == (3,)
