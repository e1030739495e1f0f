import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from envadapt import nn
from envadapt.errors import ConfigurationError, NumericError, UsageError


def two_layer(n_in=3, hidden=4, n_out=2, act="tanh"):
    return nn.Network([nn.dense(n_in, hidden, act), nn.dense(hidden, n_out, "sigmoid")], (n_in, 1))


def conv_net(c=2, s=6):
    return nn.Network([nn.conv1d(c, 3, 3, "tanh"), nn.conv1d(3, 2, 1, "tanh", adapter=True),
                       nn.flatten(), nn.dense(2 * s, 2, "sigmoid")], (c, s))


# forward ------------------------------------------------------------------


def test_forward_identity_layer():
    net = nn.Network([nn.dense(2, 2, "identity")], (2, 1))
    params = net.layout.join({"W0": np.eye(2)[:, :, None], "b0": np.zeros(2)})
    np.testing.assert_array_equal(nn.forward(net, params, np.array([1.0, 2.0])), [1.0, 2.0])


def test_forward_zero_weights_tanh(rng):
    net = nn.Network([nn.dense(5, 3, "tanh")], (5, 1))
    out = nn.forward(net, np.zeros(net.layout.size), rng.standard_normal(5))
    np.testing.assert_array_equal(out, np.zeros(3))


def test_forward_matches_hand_unrolled(rng):
    net = two_layer()
    params = np.asarray(net.init_params(rng))
    params += 0.1 * rng.standard_normal(params.size)  # nonzero biases too
    p = net.layout.split(params)
    x = rng.standard_normal(3)
    h = np.array([np.tanh(sum(p["W0"][j, i, 0] * x[i] for i in range(3)) + p["b0"][j]) for j in range(4)])
    z = np.array([sum(p["W1"][k, j, 0] * h[j] for j in range(4)) + p["b1"][k] for k in range(2)])
    expect = 1.0 / (1.0 + np.exp(-z))
    np.testing.assert_allclose(nn.forward(net, params, x), expect, rtol=1e-13, atol=1e-15)


def test_conv_forward_matches_direct_convolution(rng):
    net = nn.Network([nn.conv1d(2, 3, 3, "identity")], (2, 5))
    params = rng.standard_normal(net.layout.size)
    p = net.layout.split(params)
    x = rng.standard_normal((2, 5))
    xp = np.pad(x, ((0, 0), (1, 1)))
    expect = np.zeros((3, 5))
    for o in range(3):
        for s in range(5):
            expect[o, s] = np.sum(p["W0"][o] * xp[:, s:s + 3]) + p["b0"][o]
    np.testing.assert_allclose(nn.forward(net, params, x), expect.ravel(), rtol=1e-12, atol=1e-14)


def test_forward_shape_mismatch():
    net = two_layer()
    with pytest.raises(ConfigurationError):
        nn.forward(net, np.zeros(net.layout.size), np.zeros(4))
    with pytest.raises(ConfigurationError):
        nn.forward(net, np.zeros(net.layout.size + 1), np.zeros(3))


def test_incompatible_layer_widths():
    with pytest.raises(ConfigurationError):
        nn.Network([nn.dense(3, 4), nn.dense(5, 2)], (3, 1))


# grad ---------------------------------------------------------------------


def test_grad_single_linear_neuron():
    net = nn.Network([nn.dense(1, 1, "identity")], (1, 1))
    g = nn.grad(net, np.array([1.0, 0.0]), (np.array([[1.0]]), np.array([[0.0]])), "mse")
    np.testing.assert_allclose(g.segment("W0").ravel(), [2.0])
    np.testing.assert_allclose(g.segment("b0"), [2.0])


def test_grad_deterministic(rng):
    net = conv_net()
    params = net.init_params(rng)
    batch = (rng.standard_normal((4, 2, 6)), rng.uniform(size=(4, 2)))
    a = nn.grad(net, params, batch, "bce").values
    b = nn.grad(net, params, batch, "bce").values
    assert a.tobytes() == b.tobytes()


@pytest.mark.parametrize("loss", ["bce", "mse"])
def test_grad_matches_finite_differences(rng, loss):
    for net in (two_layer(), conv_net()):
        params = net.init_params(rng)
        x = rng.standard_normal((3,) + net.input_shape)
        y = rng.uniform(size=(3, net.output_size))
        err = nn.relative_error(nn.grad(net, params, (x, y), loss),
                                nn.finite_diff(net, params, (x, y), loss, 1e-5))
        assert err < 1e-6


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_intermediate_reports_layer():
    net = nn.Network([nn.dense(1, 1, "identity"), nn.dense(1, 1, "identity")], (1, 1))
    with pytest.raises(NumericError) as info:
        nn.grad(net, np.array([0.0, 0.0, 1.0, 0.0]), (np.array([[np.inf]]), np.array([[0.0]])), "mse")
    assert info.value.layer == 0


# finite_diff ---------------------------------------------------------------


def test_central_diff_quadratic():
    assert abs(nn.central_diff(lambda w: float(w[0] ** 2), np.array([3.0]))[0] - 6.0) < 1e-8


def test_finite_diff_constant_loss(rng):
    # zero output weights make the prediction independent of everything upstream
    net = nn.Network([nn.dense(2, 2, "tanh"), nn.dense(2, 1, "identity")], (2, 1))
    params = np.zeros(net.layout.size)
    params[: net.layout.offsets()["b0"][1]] = rng.standard_normal(net.layout.offsets()["b0"][1])
    g = nn.central_diff(lambda p: 3.5, params)
    np.testing.assert_array_equal(g, 0.0)


def test_finite_diff_rejects_bad_step():
    with pytest.raises(UsageError):
        nn.central_diff(lambda w: 0.0, np.zeros(1), step=0.0)


# loss_eval -----------------------------------------------------------------


def test_bce_half_is_ln2():
    assert nn.sample_losses(np.array([[0.5]]), np.array([[1.0]]), "bce")[0] == pytest.approx(np.log(2), abs=1e-15)


def test_mse_exact_prediction_is_zero(rng):
    p = rng.uniform(size=(4, 3))
    np.testing.assert_array_equal(nn.sample_losses(p, p, "mse"), 0.0)


def test_bce_manual_summation():
    pairs = [(0.9, 1.0), (0.2, 0.0), (0.7, 0.0)]
    manual = -(np.log(0.9) + np.log(0.8) + np.log(0.3))
    net = nn.Network([nn.dense(1, 1, "identity")], (1, 1))
    params = np.array([1.0, 0.0])
    x = np.array([[p] for p, _ in pairs])
    y = np.array([[t] for _, t in pairs])
    assert nn.loss_eval(net, params, (x, y), "bce") == pytest.approx(manual, rel=1e-14)


def test_bce_outside_unit_interval():
    with pytest.raises(NumericError):
        nn.sample_losses(np.array([[1.5]]), np.array([[1.0]]), "bce")


def test_unknown_loss():
    with pytest.raises(UsageError):
        nn.sample_losses(np.zeros((1, 1)), np.zeros((1, 1)), "hinge")


# properties ----------------------------------------------------------------


@given(st.integers(0, 2**32 - 1))
def test_determinism_property(seed):
    net = conv_net()
    a = net.init_params(np.random.default_rng(seed))
    b = net.init_params(np.random.default_rng(seed))
    x = np.random.default_rng(seed + 1).standard_normal((2, 2, 6))
    assert nn.forward(net, a, x).tobytes() == nn.forward(net, b, x).tobytes()


@given(st.lists(st.tuples(st.text("abc", min_size=1, max_size=3), st.integers(1, 4)),
                min_size=1, max_size=5, unique_by=lambda t: t[0]),
       st.integers(0, 1000))
def test_layout_roundtrip_property(segs, seed):
    layout = nn.Layout(tuple((name, (k,)) for name, k in segs))
    values = np.random.default_rng(seed).standard_normal(layout.size)
    assert layout.size == sum(k for _, k in segs)
    np.testing.assert_array_equal(layout.join(layout.split(values)), values)


@given(st.integers(0, 10_000), st.sampled_from(["bce", "mse"]))
def test_loss_non_negative_property(seed, loss):
    r = np.random.default_rng(seed)
    pred, y = r.uniform(size=(5, 3)), r.integers(0, 2, size=(5, 3)).astype(float)
    assert np.all(nn.sample_losses(pred, y, loss) >= 0)


def test_param_vector_rejects_non_finite():
    layout = nn.Layout((("a", (2,)),))
    with pytest.raises(NumericError):
        nn.ParamVector(np.array([1.0, np.nan]), layout)
