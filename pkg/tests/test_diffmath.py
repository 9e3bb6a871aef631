import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ssabi.diffmath import (MLP, Dense, ParamStore, Tape, compute_gradient, dense_forward,
                            dropout_mask, finite_difference_grad, l2_penalty, l2_penalty_grad,
                            max_gradient_error)
from ssabi.errors import ConfigError, NumericalError


# dense_forward

def test_dense_identity():
    out = dense_forward([1.0, 2.0], np.eye(2), np.zeros(2), "identity")
    np.testing.assert_array_equal(out, [1.0, 2.0])


def test_dense_relu_clamps_negative():
    np.testing.assert_array_equal(dense_forward([-1.0], [[1.0]], [0.0], "relu"), [0.0])


def test_dense_tanh_scalar():
    out = dense_forward([0.0], [[3.0]], [2.0], "tanh")
    assert out[0] == pytest.approx(0.9640275800758169, abs=1e-12)


@pytest.mark.parametrize("kind,expected", [
    ("sigmoid", 1.0 / (1.0 + np.exp(-0.7))),
    ("elu", 0.7),
    ("identity", 0.7),
])
def test_dense_other_activations(kind, expected):
    assert dense_forward([0.7], [[1.0]], [0.0], kind)[0] == pytest.approx(expected, rel=1e-14)


def test_dense_elu_negative():
    assert dense_forward([-2.0], [[1.0]], [0.0], "elu")[0] == pytest.approx(np.exp(-2.0) - 1.0)


def test_dense_shape_mismatch():
    with pytest.raises(ConfigError):
        dense_forward([1.0, 2.0, 3.0], np.eye(2), np.zeros(2))
    with pytest.raises(ConfigError):
        dense_forward([1.0, 2.0], np.eye(2), np.zeros(3))


def test_dense_unknown_activation():
    with pytest.raises(ConfigError):
        dense_forward([1.0], [[1.0]], [0.0], "swish")


def test_dense_records_on_tape():
    tape = Tape()
    dense_forward([1.0], [[1.0]], [0.0], "relu", tape)
    assert tape.ops == ["dense[relu]"]
    with pytest.raises(NumericalError, match="dense"):
        dense_forward([np.inf], [[1.0]], [0.0], "identity", tape)


# compute_gradient

def _scalar_store(value):
    store = ParamStore()
    store.add("p", np.array([value]))
    return store


def test_gradient_of_square():
    store = _scalar_store(3.0)

    def loss(tape):
        p = store["p"]

        def backward(seed):
            tape.accumulate("p", seed * 2.0 * p)
        return float(p[0] ** 2), backward

    value, grads = compute_gradient(loss, store)
    assert value == 9.0
    assert grads["p"][0] == 6.0


def test_gradient_of_constant_is_zero():
    store = _scalar_store(3.0)
    value, grads = compute_gradient(lambda tape: (1.5, lambda seed: None), store)
    assert value == 1.5
    np.testing.assert_array_equal(grads["p"], [0.0])


def test_nonfinite_loss_names_operation():
    store = _scalar_store(1.0)

    def loss(tape):
        tape.ops.append("log_prob")
        return float("nan"), lambda seed: None

    with pytest.raises(NumericalError, match="log_prob"):
        compute_gradient(loss, store)


def test_flow_nll_gradient_matches_finite_differences():
    from ssabi.flow import ConditionalFlow
    rng = np.random.default_rng(3)
    store = ParamStore()
    flow = ConditionalFlow(store, "f", 1, 2, n_layers=1, hidden=6, n_hidden=1, dropout=0.0,
                           rng=rng, activation="tanh")
    for name in store.names():
        store[name] = 0.3 * rng.standard_normal(store[name].shape)
    y = rng.standard_normal((5, 1))
    c = rng.standard_normal((5, 2))

    def loss(tape):
        lp, cache = flow.log_prob_with_cache(y, c, tape)

        def backward(seed):
            flow.log_prob_backward(cache, np.full(len(lp), -seed / len(lp)), tape)
        return -lp.mean(), backward

    _, grads = compute_gradient(loss, store)
    numeric = finite_difference_grad(lambda: -flow.log_prob(y, c).mean(), store)
    assert max_gradient_error(grads, numeric) <= 1.0


# layer gradient checks

@pytest.mark.parametrize("activation", ["relu", "elu", "tanh", "sigmoid", "identity"])
def test_dense_layer_gradients(activation):
    rng = np.random.default_rng(1)
    store = ParamStore()
    layer = Dense(store, "d", 3, 4, activation, rng)
    store["d.b"] = 0.1 * rng.standard_normal(4)
    x = rng.standard_normal((6, 3))
    proj = rng.standard_normal((6, 4))

    def value():
        return float(np.sum(layer.forward(x)[0] * proj))

    tape = Tape(store)
    out, cache = layer.forward(x, tape)
    g_x = layer.backward(cache, proj, tape)
    numeric = finite_difference_grad(value, store)
    assert max_gradient_error(tape.grads, numeric) <= 1.0
    # input gradient
    num_x = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        x[idx] += 1e-5
        fp = value()
        x[idx] -= 2e-5
        fm = value()
        x[idx] += 1e-5
        num_x[idx] = (fp - fm) / 2e-5
    np.testing.assert_allclose(g_x, num_x, rtol=1e-4, atol=1e-7)


def test_mlp_gradients_with_dropout_mask_fixed():
    store = ParamStore()
    mlp = MLP(store, "m", 3, [5, 4], 2, "elu", dropout=0.2, rng=np.random.default_rng(0))
    x = np.random.default_rng(1).standard_normal((4, 3))
    proj = np.random.default_rng(2).standard_normal((4, 2))

    def run(tape):
        out, caches = mlp.forward(x, tape)
        return float(np.sum(out * proj)), caches

    def value():
        # identical dropout masks on every evaluation
        return run(Tape(store, training=True, rng=np.random.default_rng(9)))[0]

    tape = Tape(store, training=True, rng=np.random.default_rng(9))
    _, caches = run(tape)
    mlp.backward(caches, proj, tape)
    numeric = finite_difference_grad(value, store)
    assert max_gradient_error(tape.grads, numeric) <= 1.0


def test_l2_penalty_gradient():
    store = ParamStore()
    store.add("w", np.array([[1.0, -2.0]]))
    store.add("b", np.array([5.0]), decay=False)
    tape = Tape(store)
    l2_penalty_grad(store, 0.1, tape)
    numeric = finite_difference_grad(lambda: l2_penalty(store, 0.1), store)
    assert max_gradient_error(tape.grads, numeric) <= 1.0
    np.testing.assert_array_equal(tape.grads["b"], [0.0])


# dropout

def test_dropout_rate_zero_is_ones():
    np.testing.assert_array_equal(dropout_mask((3, 4), 0.0, np.random.default_rng(0)),
                                  np.ones((3, 4)))


def test_dropout_mean_is_one():
    mask = dropout_mask(10 ** 6, 0.05, np.random.default_rng(0))
    assert 0.995 <= mask.mean() <= 1.005
    assert set(np.unique(mask)) <= {0.0, 1.0 / 0.95}


def test_dropout_eval_mode_identity():
    mask = dropout_mask((5,), 0.5, np.random.default_rng(0), training=False)
    np.testing.assert_array_equal(mask, np.ones(5))


@pytest.mark.parametrize("rate", [-0.1, 1.0, 1.5])
def test_dropout_bad_rate(rate):
    with pytest.raises(ConfigError):
        dropout_mask((2,), rate, np.random.default_rng(0))


def test_mlp_eval_mode_ignores_dropout():
    store = ParamStore()
    mlp = MLP(store, "m", 2, [8], 1, dropout=0.5, rng=np.random.default_rng(0))
    x = np.ones((3, 2))
    a, _ = mlp.forward(x, Tape(store, training=False, rng=np.random.default_rng(1)))
    b, _ = mlp.forward(x, None)
    np.testing.assert_array_equal(a, b)


# l2

def test_l2_zero_params():
    store = ParamStore()
    store.add("w", np.zeros((2, 2)))
    assert l2_penalty(store, 1e-3) == 0.0


def test_l2_single_weight():
    store = ParamStore()
    store.add("w", np.array([[2.0]]))
    store.add("b", np.array([7.0]), decay=False)
    assert l2_penalty(store, 1e-3) == pytest.approx(0.004, abs=1e-15)


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=8))
def test_l2_gamma_zero(values):
    store = ParamStore()
    store.add("w", np.array(values))
    assert l2_penalty(store, 0.0) == 0.0


# ParamStore

def test_paramstore_unique_names_and_fixed_shapes():
    store = ParamStore()
    store.add("a", np.zeros(3))
    with pytest.raises(ConfigError):
        store.add("a", np.zeros(3))
    with pytest.raises(ConfigError):
        store["a"] = np.zeros(4)
    assert store.total_dim == 3


def test_paramstore_flatten_roundtrip():
    store = ParamStore()
    store.add("a", np.arange(3.0))
    store.add("b", np.arange(4.0).reshape(2, 2))
    flat = store.flatten()
    other = store.copy()
    other.assign_flat(flat * 2)
    np.testing.assert_array_equal(other["b"], 2 * store["b"])


def test_frozen_store_is_read_only():
    store = ParamStore()
    store.add("a", np.zeros(2))
    frozen = store.frozen()
    with pytest.raises(ValueError):
        frozen["a"][0] = 1.0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_forward_and_gradient_determinism(seed):
    def run():
        store = ParamStore()
        mlp = MLP(store, "m", 3, [4], 2, "relu", dropout=0.1, rng=np.random.default_rng(seed))
        x = np.random.default_rng(seed + 1).standard_normal((5, 3))
        tape = Tape(store, training=True, rng=np.random.default_rng(seed + 2))
        out, caches = mlp.forward(x, tape)
        mlp.backward(caches, np.ones_like(out), tape)
        return out, tape.grads

    (o1, g1), (o2, g2) = run(), run()
    np.testing.assert_array_equal(o1, o2)
    for k in g1:
        np.testing.assert_array_equal(g1[k], g2[k])
