import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from byol_explore.errors import ConfigurationError, UsageError
from byol_explore.nn import autodiff as ad
from byol_explore.nn.checkpoint import dumps, load, loads, save
from byol_explore.nn.gradcheck import finite_diff_grad, max_relative_error
from byol_explore.nn.layers import ConvEncoderSpec, GRUSpec, MLPSpec, one_hot
from byol_explore.nn.optim import AdamState, adam_update, ema_update
from byol_explore.nn.tree import ParameterTree, Scope

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def grad_of(fn, params):
    tape = ad.Tape()
    out = fn(Scope(tape.watch(params)))
    return ad.backward(tape, out)


def check_grad(fn, params, tol=1e-6):
    analytic = grad_of(fn, params)
    numeric = finite_diff_grad(lambda p: ad.value_of(fn(Scope(p))), params)
    assert max_relative_error(analytic, numeric) < tol


# ---------------------------------------------------------------- tree


def test_tree_missing_name_is_descriptive():
    tree = ParameterTree({"a/w": np.zeros(2)})
    with pytest.raises(ConfigurationError, match="a/b"):
        tree["a/b"]


def test_tree_sub_and_prefix_roundtrip():
    tree = ParameterTree({"enc/w": np.ones((2, 3)), "enc/b": np.zeros(2), "head/w": np.ones(1)})
    sub = tree.sub("enc")
    assert set(sub) == {"w", "b"}
    assert sub.with_prefix("enc").equal(ParameterTree({k: v for k, v in tree.items() if k.startswith("enc/")}))


def test_tree_replace_checks_shapes():
    tree = ParameterTree({"w": np.zeros((2, 2))})
    with pytest.raises(ConfigurationError):
        tree.replace({"w": np.zeros(3)})
    with pytest.raises(ConfigurationError):
        tree.replace({"v": np.zeros((2, 2))})


@given(arrays(np.float64, st.integers(1, 6), elements=finite), arrays(np.float64, (2, 3), elements=finite))
def test_tree_flatten_roundtrip(a, b):
    tree = ParameterTree({"a": a, "b": b})
    assert tree.unflatten(tree.flatten()).equal(tree)


def test_tree_congruence_mismatch_names_entry():
    a = ParameterTree({"x": np.zeros(2)})
    b = ParameterTree({"x": np.zeros(3)})
    with pytest.raises(ConfigurationError, match="x"):
        a.check_congruent(b)


# ---------------------------------------------------------------- autodiff


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (3, 4), elements=finite), arrays(np.float64, (4,), elements=finite))
def test_elementwise_gradients(x, y):
    params = ParameterTree({"x": x, "y": y + 4.0})

    def fn(p):
        a = ad.tanh(p["x"]) * p["y"] + ad.sigmoid(p["x"]) / p["y"]
        b = ad.exp(p["x"] * 0.3) - ad.log(p["y"]) + ad.square(p["x"])
        return ad.sum(a * b) + ad.mean(ad.sqrt(ad.square(p["y"]) + 1.0))

    check_grad(fn, params)


@settings(max_examples=20, deadline=None)
@given(arrays(np.float64, (2, 5), elements=finite))
def test_structural_gradients(x):
    params = ParameterTree({"x": x})

    def fn(p):
        v = p["x"]
        parts = [ad.getitem(v, (slice(None), slice(0, 2))), ad.getitem(v, (slice(None), slice(2, 5)))]
        joined = ad.concat(parts[::-1], axis=-1)
        stacked = ad.stack([joined, v], axis=0)
        picked = ad.getitem(v, (np.array([0, 1, 1]), np.array([4, 0, 0])))  # repeated index accumulates
        return ad.sum(ad.reshape(stacked, (-1,)) * np.arange(20.0)) + ad.sum(picked * picked) + ad.sum(ad.log_softmax(v))

    check_grad(fn, params)


def test_relu_and_sqrt_subgradients_at_zero():
    tape = ad.Tape()
    p = tape.watch({"x": np.zeros(3)})
    g = ad.backward(tape, ad.sum(ad.relu(p["x"]) + ad.sqrt(ad.square(p["x"]))))
    assert np.array_equal(g["x"], np.zeros(3))


def test_linear_and_conv_gradients():
    rng = np.random.default_rng(0)
    params = ParameterTree({
        "w": rng.normal(size=(4, 3)),
        "b": rng.normal(size=4),
        "k": rng.normal(size=(2, 3, 3, 3)),
        "kb": rng.normal(size=2),
    })
    x = rng.normal(size=(5, 3))
    img = rng.normal(size=(2, 3, 5, 5))

    def fn(p):
        y = ad.linear(x, p["w"], p["b"])
        c = ad.conv2d(img, p["k"], p["kb"])
        return ad.sum(ad.tanh(y)) + ad.sum(ad.square(c)) * 0.1

    check_grad(fn, params)


def test_conv_matches_direct_loop():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 3, 6, 5))
    w = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=4)
    out = ad.conv2d(x, w, b)
    ref = np.zeros((2, 4, 4, 3))
    for n in range(2):
        for f in range(4):
            for i in range(4):
                for j in range(3):
                    ref[n, f, i, j] = np.sum(x[n, :, i:i + 3, j:j + 3] * w[f]) + b[f]
    np.testing.assert_allclose(out, ref, atol=1e-12)


def test_stop_gradient_blocks_flow():
    tape = ad.Tape()
    p = tape.watch({"x": np.array([2.0])})
    loss = ad.sum(p["x"] * ad.stop_gradient(p["x"]))
    assert ad.backward(tape, loss)["x"][0] == pytest.approx(2.0)


def test_unreached_parameter_gets_zero_gradient():
    tape = ad.Tape()
    p = tape.watch({"x": np.ones(2), "unused": np.ones(3)})
    g = ad.backward(tape, ad.sum(p["x"]))
    assert np.array_equal(g["unused"], np.zeros(3))


def test_backward_rejects_vector_loss_and_foreign_tape():
    tape = ad.Tape()
    p = tape.watch({"x": np.ones(2)})
    with pytest.raises(UsageError, match="scalar"):
        ad.backward(tape, p["x"] * 2.0)
    other = ad.Tape()
    q = other.watch({"y": np.ones(1)})
    with pytest.raises(UsageError):
        ad.backward(tape, ad.sum(q["y"]))


def test_plain_arrays_bypass_the_tape():
    x = np.arange(4.0)
    out = ad.sum(ad.tanh(x))
    assert isinstance(out, (float, np.floating, np.ndarray))


# ---------------------------------------------------------------- layers


def test_mlp_and_gru_gradients():
    rng = np.random.default_rng(2)
    mlp = MLPSpec(4, (5,), 3)
    gru = GRUSpec(3, 4)
    params = ParameterTree.merge({"mlp": mlp.init(rng), "gru": gru.init(rng)})
    x = rng.normal(size=(2, 4))
    h0 = rng.normal(size=(2, 4))

    def fn(p):
        y = mlp(p.child("mlp"), x)
        h = gru(p.child("gru"), h0, y)
        h = gru(p.child("gru"), h, y * 0.5)
        return ad.sum(ad.square(h))

    check_grad(fn, params)


def test_layer_norm_mlp_gradient_and_statistics():
    rng = np.random.default_rng(5)
    mlp = MLPSpec(4, (6,), 3, layer_norm=True)
    params = ParameterTree(mlp.init(rng))
    params = params.map(lambda v: v + 0.1 * rng.normal(size=v.shape))
    x = rng.normal(size=(3, 4))
    check_grad(lambda p: ad.sum(ad.square(mlp(p, x))), params)
    # unit scale, zero offset: pre-activations have zero mean and unit variance per row
    plain = ParameterTree(mlp.init(rng))
    pre = x @ plain["l0/w"].T + plain["l0/b"]
    normed = (pre - pre.mean(-1, keepdims=True)) / np.sqrt(pre.var(-1, keepdims=True) + 1e-5)
    expected = np.maximum(normed, 0) @ plain["l1/w"].T + plain["l1/b"]
    np.testing.assert_allclose(mlp(Scope(plain), x), expected, atol=1e-12)


def test_gru_matches_textbook_update():
    rng = np.random.default_rng(3)
    spec = GRUSpec(2, 3)
    p = spec.init(rng)
    h, x = rng.normal(size=3), rng.normal(size=2)
    sig = lambda v: 1 / (1 + np.exp(-v))  # noqa: E731
    gx, gh = p["wx"] @ x + p["bx"], p["wh"] @ h + p["bh"]
    r, z = sig(gx[:3] + gh[:3]), sig(gx[3:6] + gh[3:6])
    n = np.tanh(gx[6:] + r * gh[6:])
    np.testing.assert_allclose(spec(Scope(p), h, x), (1 - z) * n + z * h, atol=1e-14)


def test_dense_shape_mismatch_names_entry():
    mlp = MLPSpec(4, (5,), 3)
    params = mlp.init(np.random.default_rng(0))
    with pytest.raises(ConfigurationError, match="l0/w"):
        mlp(Scope(params), np.zeros((2, 7)))


def test_conv_encoder_gradient_and_extra_features():
    rng = np.random.default_rng(4)
    enc = ConvEncoderSpec(2, 5, 5, 1, 3, filters=(3, 2))
    params = ParameterTree(enc.init(rng))
    x = rng.normal(size=(2, enc.in_dim))
    check_grad(lambda p: ad.sum(ad.square(enc(p, x))), params)


def test_one_hot_negative_is_zero_row():
    out = one_hot(np.array([[1, -1]]), 3)
    assert out.tolist() == [[[0, 1, 0], [0, 0, 0]]]


# ---------------------------------------------------------------- optimizers


def test_adam_first_step_is_signed_lr():
    params = ParameterTree({"w": np.array([1.0, -2.0, 3.0])})
    grads = ParameterTree({"w": np.array([0.5, -4.0, 0.0])})
    state, new = adam_update(AdamState.zeros(params), params, grads, lr=0.1)
    # first bias-corrected step: m_hat / sqrt(v_hat) = sign(g) (up to eps)
    np.testing.assert_allclose(new["w"], [0.9, -1.9, 3.0], atol=1e-7)
    assert state.step == 1


def test_adam_matches_scalar_recursion():
    rng = np.random.default_rng(5)
    p = ParameterTree({"w": rng.normal(size=4)})
    state = AdamState.zeros(p)
    w, m, v = p["w"].copy(), np.zeros(4), np.zeros(4)
    for t in range(1, 20):
        g = rng.normal(size=4)
        state, p = adam_update(state, p, ParameterTree({"w": g}), lr=0.01)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w = w - 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    np.testing.assert_allclose(p["w"], w, rtol=1e-12)


def test_adam_per_entry_scale():
    params = ParameterTree({"a": np.array([1.0]), "b": np.array([1.0])})
    grads = ParameterTree({"a": np.array([2.0]), "b": np.array([2.0])})
    _, new = adam_update(AdamState.zeros(params), params, grads, lr=0.1, lr_scale={"b": 3.0})
    np.testing.assert_allclose([new["a"][0], new["b"][0]], [0.9, 0.7], atol=1e-7)


def test_adam_rejects_incongruent_grads():
    p = ParameterTree({"w": np.zeros(2)})
    with pytest.raises(ConfigurationError):
        adam_update(AdamState.zeros(p), p, ParameterTree({"w": np.zeros(3)}))


@given(st.floats(0, 1), arrays(np.float64, 3, elements=finite), arrays(np.float64, 3, elements=finite))
def test_ema_is_convex_combination(alpha, phi, theta):
    out = ema_update(ParameterTree({"w": phi}), ParameterTree({"w": theta}), alpha)["w"]
    lo, hi = np.minimum(phi, theta), np.maximum(phi, theta)
    assert np.all(out >= lo - 1e-12) and np.all(out <= hi + 1e-12)


def test_ema_edges_and_validation():
    phi, theta = ParameterTree({"w": np.ones(2)}), ParameterTree({"w": np.zeros(2)})
    assert ema_update(phi, theta, 1.0).equal(phi)
    assert ema_update(phi, theta, 0.0).equal(theta)
    with pytest.raises(ConfigurationError):
        ema_update(phi, theta, 1.5)


# ---------------------------------------------------------------- checkpoints


@given(st.dictionaries(st.from_regex(r"[a-z]{1,4}(/[a-z0-9]{1,3}){0,2}", fullmatch=True),
                       arrays(np.float64, st.tuples(st.integers(0, 3), st.integers(1, 3)), elements=finite),
                       max_size=4))
def test_checkpoint_roundtrip_bitwise(entries):
    tree = ParameterTree(entries)
    assert loads(dumps(tree)).equal(tree)


def test_checkpoint_file_roundtrip_and_corruption(tmp_path):
    tree = ParameterTree({"a/w": np.arange(6.0).reshape(2, 3)})
    path = tmp_path / "p.bin"
    save(tree, path)
    assert load(path).equal(tree)
    with pytest.raises(ConfigurationError):
        loads(b"XXXX" + dumps(tree)[4:])
    with pytest.raises(ConfigurationError):
        loads(dumps(tree)[:-3])


def test_finite_diff_rejects_bad_eps():
    with pytest.raises(ConfigurationError):
        finite_diff_grad(lambda p: 0.0, ParameterTree({"w": np.zeros(1)}), eps=0.0)
