import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from envadapt import nn
from envadapt.adapters import (BaseModel, HyperNet, base_forward, beam_hypernet, beam_model,
                               hyper_forward, ofdm_hypernet, ofdm_model, v_average)
from envadapt.errors import ConfigurationError, UsageError


def small():
    model = beam_model(5, 3, width=4, blocks=2, adapters=2)
    return model, beam_hypernet(model, hidden=4, feat=4)


def linear_hypernet():
    """Odd (bias-free, identity-activation) hypernetwork over a single adapter."""
    model = BaseModel(nn.Network([nn.dense(3, 2, "identity", adapter=True)], (3, 1)))
    embed = nn.Network([nn.dense(3, 4, "identity")], (3, 1))
    gen = nn.Network([nn.dense(4, 4, "identity")], (4, 1))
    return model, HyperNet(embed, [gen], model)


def test_identity_adapters_equal_trunk(rng):
    model, _ = small()
    w = model.init_w(rng)
    x = rng.standard_normal((7, 5))
    a = base_forward(model, w, model.identity_v(), x)
    assert a.tobytes() == model.trunk_forward(w, x).tobytes()


def test_zero_adapters_leave_bias_path(rng):
    model = BaseModel(nn.Network([nn.dense(3, 2, "identity", adapter=True)], (3, 1)))
    w = rng.standard_normal(model.w_layout.size)
    out = base_forward(model, w, np.zeros(model.v_size), rng.standard_normal(3))
    np.testing.assert_array_equal(out, model.w_layout.split(w)["b0"])


def test_adapter_manual_channels(rng):
    model = BaseModel(nn.Network([nn.dense(3, 2, "identity", adapter=True)], (3, 1)))
    w = rng.standard_normal(model.w_layout.size)
    v = rng.standard_normal(4)
    x = rng.standard_normal(3)
    W, b = model.w_layout.split(w)["W0"][:, :, 0], model.w_layout.split(w)["b0"]
    expect = [v[c] * (W[c] @ x) + b[c] + v[2 + c] for c in range(2)]
    np.testing.assert_allclose(base_forward(model, w, v, x), expect, rtol=1e-14)


def test_v_length_mismatch(rng):
    model, _ = small()
    with pytest.raises(ConfigurationError):
        base_forward(model, model.init_w(rng), np.ones(model.v_size + 1), np.zeros(5))


def test_zero_u_gives_zero_v(rng):
    _, hyper = small()
    np.testing.assert_array_equal(hyper_forward(hyper, np.zeros(hyper.layout.size), rng.standard_normal(5)), 0.0)


def test_hyper_forward_deterministic():
    _, hyper = small()
    u = hyper.init_params(np.random.default_rng(3))
    x = np.random.default_rng(4).standard_normal(5)
    assert hyper_forward(hyper, u, x).tobytes() == hyper_forward(hyper, u, x).tobytes()


def test_hyper_forward_straight_line(rng):
    model, hyper = small()
    u = np.asarray(hyper.init_params(rng)) + 0.05 * rng.standard_normal(hyper.layout.size)
    x = rng.standard_normal(5)
    p = hyper.layout.split(u)
    h1 = np.tanh(p["embed.W0"][:, :, 0] @ x + p["embed.b0"])
    feat = np.tanh(p["embed.W1"][:, :, 0] @ h1 + p["embed.b1"])
    expect = np.concatenate([p[f"gen{k}.W0"][:, :, 0] @ feat + p[f"gen{k}.b0"] for k in range(2)])
    np.testing.assert_allclose(hyper_forward(hyper, u, x), expect, rtol=1e-13, atol=1e-15)


def test_generator_size_checked():
    model, _ = small()
    embed = nn.Network([nn.dense(5, 4)], (5, 1))
    bad = [nn.Network([nn.dense(4, 3, "identity")], (4, 1)) for _ in model.adapters]
    with pytest.raises(ConfigurationError):
        HyperNet(embed, bad, model)


def test_v_average_single_sample(rng):
    _, hyper = small()
    u = hyper.init_params(rng)
    x = rng.standard_normal(5)
    np.testing.assert_array_equal(v_average(hyper, u, x[None]), hyper_forward(hyper, u, x))


def test_v_average_symmetric_pair(rng):
    _, hyper = linear_hypernet()
    u = rng.standard_normal(hyper.layout.size)
    p = hyper.layout.split(u)
    u = hyper.layout.join({**p, "embed.b0": np.zeros(4), "gen0.b0": np.zeros(4)})
    x = rng.standard_normal(3)
    out = hyper_forward(hyper, u, x)
    assert np.linalg.norm(out) > 0
    np.testing.assert_allclose(v_average(hyper, u, np.stack([x, -x])), 0.0, atol=1e-15)


def test_v_average_summation_oracle(rng):
    _, hyper = small()
    u = hyper.init_params(rng)
    xs = rng.standard_normal((16, 5))
    total = np.zeros(hyper.v_size)
    for x in xs:
        total = total + hyper_forward(hyper, u, x)
    np.testing.assert_allclose(v_average(hyper, u, xs), total / 16, rtol=1e-13, atol=1e-15)


def test_v_average_empty():
    _, hyper = small()
    with pytest.raises(UsageError):
        v_average(hyper, hyper.init_params(np.random.default_rng(0)), np.zeros((0, 5)))


# invariants -----------------------------------------------------------------


@pytest.mark.parametrize("build", [lambda: ofdm_model(24, 4, width=16, blocks=3, adapters=3),
                                   lambda: beam_model(128, 32, width=64, blocks=4, adapters=4)])
def test_v_dimension_and_parameter_count(build):
    model = build()
    assert model.v_size == sum(2 * a.channels for a in model.adapters)
    assert model.v_size < model.adapter_weight_count()
    for a in model.adapters:
        assert a.channels == model.net.layers[a.layer].n_out


def test_v_segments_partition_v(rng):
    model, _ = small()
    v = rng.standard_normal(model.v_size)
    mod = model.modulation(v)
    flat = np.concatenate([np.concatenate(mod[a.layer]) for a in model.adapters])
    np.testing.assert_array_equal(flat, v)


def test_generator_output_is_twice_channels():
    model = ofdm_model(12, 4, width=8, blocks=2, adapters=2)
    hyper = ofdm_hypernet(model, embed_channels=4, feat=8)
    for g, a in zip(hyper.generators, model.adapters):
        assert g.output_size == 2 * a.channels


@pytest.mark.parametrize("loss", ["bce", "mse"])
def test_gradients_w_v_u(rng, loss):
    model, hyper = small()
    w = model.init_w(rng)
    v = np.asarray(model.identity_v()) + 0.2 * rng.standard_normal(model.v_size)
    u = np.asarray(hyper.init_params(rng)) + 0.05 * rng.standard_normal(hyper.layout.size)
    x, y = rng.standard_normal((4, 5)), rng.uniform(size=(4, 3))
    _, gw, gv = model.loss_grad(w, v, x, y, loss)
    assert nn.relative_error(gw, nn.central_diff(lambda p: model.loss_grad(p, v, x, y, loss)[0], w)) < 1e-6
    assert nn.relative_error(gv, nn.central_diff(lambda p: model.loss_grad(w, p, x, y, loss)[0], v)) < 1e-6
    target = rng.standard_normal(model.v_size)
    _, du, _ = hyper.fit_loss_grad(u, x, target)
    assert nn.relative_error(du, nn.central_diff(lambda p: hyper.fit_loss_grad(p, x, target)[0], u)) < 1e-6


@given(st.integers(0, 10_000))
def test_identity_at_init_property(seed):
    model, _ = small()
    r = np.random.default_rng(seed)
    w, x = model.init_w(r), r.standard_normal((3, 5))
    assert np.array_equal(model.forward(w, model.identity_v(), x), model.trunk_forward(w, x))
