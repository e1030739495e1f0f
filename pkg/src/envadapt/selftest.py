"""Fast installation check: gradients, closed forms, channels, solver descent."""

from __future__ import annotations

import time

import numpy as np

from . import mmwave as mm
from . import ofdm as of
from .adapters import beam_hypernet, beam_model
from .ea import ea1_local_closed_form
from .nn import central_diff, relative_error
from .oa import iadm_run, u_closed_form
from .toys import oa_toy


def check_gradients(rng):
    model = beam_model(5, 3, width=4, blocks=2, adapters=2)
    hyper = beam_hypernet(model, hidden=4, feat=4)
    w, v = model.init_w(rng), model.identity_v() + 0.1 * rng.standard_normal(model.v_size)
    u = np.asarray(hyper.init_params(rng))
    x, y = rng.standard_normal((6, 5)), rng.uniform(size=(6, 3))
    _, gw, gv = model.loss_grad(w, v, x, y, "bce")
    _, du, _ = hyper.fit_loss_grad(u, x, v)
    errs = [relative_error(gw, central_diff(lambda p: model.loss_grad(p, v, x, y, "bce")[0], w)),
            relative_error(gv, central_diff(lambda p: model.loss_grad(w, p, x, y, "bce")[0], v)),
            relative_error(du, central_diff(lambda p: hyper.fit_loss_grad(p, x, v)[0], u))]
    return max(errs) < 1e-6, f"max relative error {max(errs):.1e}"


def check_closed_forms(rng):
    # each closed form zeroes the gradient of its quadratic surrogate
    m = 7
    w, v, pi, z, xi = (rng.standard_normal(m) for _ in range(5))
    sigma, rho = 3.0, 2.0
    wi, vi = ea1_local_closed_form(w, v, pi, z, xi, rho, sigma)
    r1 = np.abs(z + pi + (rho + sigma) * (wi - w)).max()
    r2 = np.abs(xi + rho * (vi - v)).max()
    u_star, tau, c2 = rng.standard_normal(m), 1.5, 0.3
    un = u_closed_form(w, u_star, z, tau, c2)
    r3 = np.abs(z + 2 * tau * (un - w) + 2 * c2 * (un - u_star)).max()
    worst = max(r1, r2, r3)
    return worst < 1e-12, f"max stationarity residual {worst:.1e}"


def check_channels(rng):
    pdp = of.sample_environment(0, 3)
    env = mm.MmwaveEnv(8, 16, [[mm.Cluster(1.0, 0.3, 1.0 + 0.5j)], [mm.Cluster(2.5, -0.2, 0.7j)]], [1.0, 2.0])
    ch = mm.gen_channel(env)
    # independent route: zero-padded FFT along the delay axis
    err = np.abs(ch.freq - np.fft.fft(ch.taps, n=env.K, axis=1)).max()
    ok = abs(pdp.powers.sum() - 1) < 1e-12 and err < 1e-10
    return ok, f"PDP sum error {abs(pdp.powers.sum() - 1):.1e}, DFT error {err:.1e}"


def check_descent(_rng):
    toy = oa_toy(0)
    res = iadm_run(toy.problem, toy.w_star, toy.u_star, toy.config)
    F = np.asarray(res.F_trace)
    ok = bool(np.all(np.diff(F) < 0)) and res.converged
    return ok, f"{len(F) - 1} accepted steps, last step {res.last_step:.1e}"


CHECKS = (("gradients", check_gradients), ("closed forms", check_closed_forms),
          ("channels", check_channels), ("iadm descent", check_descent))


def run_selftest(seed=0, echo=print) -> bool:
    rng = np.random.default_rng(seed)
    all_ok = True
    for name, fn in CHECKS:
        t0 = time.perf_counter()
        ok, detail = fn(rng)
        all_ok &= bool(ok)
        echo(f"{'PASS' if ok else 'FAIL'}  {name:<13} {detail} ({time.perf_counter() - t0:.1f}s)")
    return all_ok
