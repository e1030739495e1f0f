import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from envadapt import nn
from envadapt.adapters import BaseModel, HyperNet, v_average
from envadapt.errors import StepOverflowError, UsageError
from envadapt.oa import (ConvergenceMonitor, F_eval, F_terms, IadmConfig, IadmState, OaProblem,
                         OfflineConfig, iadm_init, iadm_run, iadm_u_step, iadm_v_step,
                         oa_offline_train, offline_env_loss_grad, offline_objective,
                         u_closed_form, v_closed_form)
from envadapt.toys import oa_toy, toy_models
from oracles import quadratic_argmin, sq


def linear_pair():
    model = BaseModel(nn.Network([nn.dense(3, 2, "identity", adapter=True)], (3, 1)))
    embed = nn.Network([nn.dense(3, 4, "identity")], (3, 1))
    hyper = HyperNet(embed, [nn.Network([nn.dense(4, 4, "identity")], (4, 1))], model)
    return model, hyper


def random_state(rng, toy, **over):
    u = np.asarray(toy.u_star) + 0.05 * rng.standard_normal(toy.u_star.size)
    v = toy.v_true + 0.1 * rng.standard_normal(toy.v_true.size)
    values = dict(c1=0.3, c2=0.7, c3=0.01, c4=0.02, tau=1.5, kappa=2.5)
    values.update(over)
    return IadmState(u, v, np.asarray(toy.u_star), np.asarray(toy.w_star), **values)


# objective ------------------------------------------------------------------------


def test_F_zero_state():
    model, hyper = linear_pair()
    problem = OaProblem(model, hyper, np.ones((3, 3)), np.zeros((3, 2)), "mse")
    z = np.zeros(hyper.layout.size)
    state = IadmState(z, np.zeros(model.v_size), z, np.zeros(model.w_layout.size))
    assert F_eval(state, problem) == 0.0


def test_F_linear_in_c4(rng):
    toy = oa_toy(1)
    s = random_state(rng, toy)
    s2 = dataclasses.replace(s, c4=2 * s.c4)
    assert F_eval(s2, toy.problem) - F_eval(s, toy.problem) == pytest.approx(s.c4 * sq(s.v), rel=1e-12)


def test_F_manual_summation(rng):
    toy = oa_toy(2)
    s = random_state(rng, toy)
    p = toy.problem
    fit = sum(sq(p.hyper.forward(s.u, x[None])[0] - s.v) for x in p.x)
    pred = p.model.forward(s.w_star, s.v, p.x)
    task = sum(np.mean((pred[t] - p.y[t]) ** 2) for t in range(p.d))
    manual = s.c1 * fit + s.c3 * sq(s.u) + task + s.c2 * sq(s.u - s.u_star) + s.c4 * sq(s.v)
    assert F_eval(s, p) == pytest.approx(manual, rel=1e-12)


@given(st.integers(0, 10_000))
def test_F_non_negative(seed):
    r = np.random.default_rng(seed)
    toy = oa_toy(seed % 7)
    assert all(v >= 0 for v in F_terms(random_state(r, toy), toy.problem).values())


# closed forms ------------------------------------------------------------------------


def test_u_step_fixed_point(rng):
    u = rng.standard_normal(4)
    np.testing.assert_allclose(u_closed_form(u, u, np.zeros(4), 1.3, 0.2), u, rtol=1e-15)


def test_u_step_substitution():
    np.testing.assert_allclose(u_closed_form(np.zeros(1), np.array([2.0]), np.zeros(1), 1.0, 1.0), [1.0])


def test_u_step_argmin(rng):
    for _ in range(20):
        m = 4
        u, us, zeta = (rng.standard_normal(m) for _ in range(3))
        tau, c2 = rng.uniform(0.1, 10, 2)
        S = lambda a: zeta @ a + tau * sq(a - u) + c2 * sq(a - us)
        np.testing.assert_allclose(u_closed_form(u, us, zeta, tau, c2), quadratic_argmin(S, m), atol=1e-8)


def test_v_step_substitution():
    out = v_closed_form(np.array([1.0]), np.array([3.0]), 1, np.zeros(1), 1.0, 1.0, 1e-300)
    np.testing.assert_allclose(out, [2.0])


def test_v_step_fixed_point(rng):
    v = rng.standard_normal(3)
    d, c1, kappa = 5, 0.4, 2.0
    out = v_closed_form(v, d * v, d, np.zeros(3), kappa, c1, 1e-300)
    np.testing.assert_allclose(out, v, rtol=1e-14)


def test_v_step_argmin(rng):
    for _ in range(20):
        m, d = 3, 6
        v, xi = rng.standard_normal(m), rng.standard_normal(m)
        h = rng.standard_normal((d, m))
        kappa, c1, c4 = rng.uniform(0.1, 10), rng.uniform(0.01, 2), rng.uniform(1e-4, 1)
        S = lambda a: c1 * sum(sq(h[t] - a) for t in range(d)) + xi @ a + kappa * sq(a - v) + c4 * sq(a)
        np.testing.assert_allclose(v_closed_form(v, h.sum(0), d, xi, kappa, c1, c4),
                                   quadratic_argmin(S, m), atol=1e-8)


def test_v_step_uses_updated_u(rng):
    toy = oa_toy(3)
    s = random_state(rng, toy)
    u_new = iadm_u_step(s, toy.problem)
    v_new = iadm_v_step(s, toy.problem, u_new)
    p = toy.problem
    _, _, xi = p.model.loss_grad(s.w_star, s.v, p.x, p.y, "mse", want_w=False)
    hyp = p.hyper.forward(u_new, p.x).sum(axis=0)
    expect = (s.c1 * hyp + s.kappa * s.v - xi / 2) / (s.c1 * p.d + s.c4 + s.kappa)
    np.testing.assert_allclose(v_new, expect, rtol=1e-13)


# runs ----------------------------------------------------------------------------


def test_initialization_is_v_average():
    toy = oa_toy(4)
    s = iadm_init(toy.problem, toy.w_star, toy.u_star, toy.config)
    assert np.array_equal(s.v, v_average(toy.problem.hyper, toy.u_star, toy.problem.x))
    assert np.array_equal(s.u, np.asarray(toy.u_star))


@pytest.mark.parametrize("seed", range(3))
def test_strict_descent_and_vanishing_steps(seed):
    toy = oa_toy(seed)
    res = iadm_run(toy.problem, toy.w_star, toy.u_star, toy.config)
    F = np.asarray(res.F_trace)
    assert np.all(F[1:] < F[:-1])
    assert res.converged and res.last_step < 1e-4
    accepted = [r for r in res.rows if r[4]]
    assert [r[1] for r in accepted] == res.F_trace


def test_large_c2_pins_u():
    toy = oa_toy(5)
    cfg = dataclasses.replace(toy.config, c2=1e6)
    res = iadm_run(toy.problem, toy.w_star, toy.u_star, cfg)
    assert np.linalg.norm(res.u - toy.u_star) < 1e-3


def test_c4_shrinks_adapter_norm():
    norms = []
    for c4 in (1e-4, 1e-1, 1.0, 10.0):
        per_seed = []
        for seed in range(5):
            toy = oa_toy(seed)
            cfg = dataclasses.replace(toy.config, c4=c4)
            per_seed.append(np.linalg.norm(iadm_run(toy.problem, toy.w_star, toy.u_star, cfg).v))
        norms.append(np.mean(per_seed))
    assert all(b <= a for a, b in zip(norms, norms[1:]))


def test_monitor_overflow():
    state = IadmState(np.zeros(1), np.zeros(1), np.zeros(1), np.zeros(1))
    mon = ConvergenceMonitor(1.0, 1.0, max_rejects=60, last_F=1.0)
    for _ in range(60):
        assert not mon.judge(1.0, state)
    assert state.tau == 2.0 ** 60
    with pytest.raises(StepOverflowError):
        mon.judge(2.0, state)


def test_monitor_shrinks_after_patience():
    state = IadmState(np.zeros(1), np.zeros(1), np.zeros(1), np.zeros(1), tau=8.0, kappa=8.0)
    mon = ConvergenceMonitor(1.0, 1.0, last_F=100.0)
    for k in range(10):
        assert mon.judge(99.0 - k, state)
    assert state.tau == pytest.approx(7.2)
    state.tau = state.kappa = 1.0
    for k in range(10):
        mon.judge(80.0 - k, state)
    assert state.tau == 1.0 and state.kappa == 1.0


def test_non_positive_constants_rejected():
    with pytest.raises(UsageError):
        IadmConfig(c3=0.0)
    with pytest.raises(UsageError):
        OaProblem(*toy_models(), np.zeros((0, 8)), np.zeros((0, 4)))


# offline training ---------------------------------------------------------------


def offline_setup(rng, equal=False):
    model, hyper = toy_models()
    w = np.asarray(model.init_w(rng))
    base = np.asarray(model.identity_v())
    V = np.tile(base + 0.2, (3, 1)) if equal else base + 0.2 * rng.standard_normal((3, model.v_size))
    data = [(rng.standard_normal((20, 8)), rng.uniform(size=(20, 4))) for _ in range(3)]
    return model, hyper, w, V, data


def test_offline_lambda_zero_is_pure_regression(rng):
    model, hyper, w, V, data = offline_setup(rng)
    u = np.asarray(hyper.init_params(rng))
    obj = offline_objective(model, hyper, w, V, data, u, 0.0, "mse")
    fits = [hyper.fit_loss_grad(u, x, v)[0] for (x, _), v in zip(data, V)]
    assert obj == pytest.approx(np.mean(fits), rel=1e-14)
    x, y = data[0]
    val, du = offline_env_loss_grad(model, hyper, w, V[0], u, x, y, 0.0, "mse")
    ref, dref, _ = hyper.fit_loss_grad(u, x, V[0])
    assert val == pytest.approx(ref / len(x)) and np.allclose(du, dref / len(x))


def test_offline_equal_targets_regressed(rng):
    model, hyper, w, V, data = offline_setup(rng, equal=True)
    cfg = OfflineConfig(lam=0.0, episodes=600, inner_lr=0.01, outer_lr=0.003)
    u, _ = oa_offline_train(model, hyper, data, w, V, cfg, np.random.default_rng(1), loss="mse")
    per_sample = offline_objective(model, hyper, w, V, data, u, 0.0, "mse") / 20
    assert per_sample < 1e-3


def test_offline_deterministic(rng):
    model, hyper, w, V, data = offline_setup(rng)
    cfg = OfflineConfig(episodes=20)
    a, _ = oa_offline_train(model, hyper, data, w, V, cfg, np.random.default_rng(9), loss="mse")
    b, _ = oa_offline_train(model, hyper, data, w, V, cfg, np.random.default_rng(9), loss="mse")
    assert a.tobytes() == b.tobytes()


def test_offline_rejects_bad_config():
    with pytest.raises(UsageError):
        OfflineConfig(support=1.0)
