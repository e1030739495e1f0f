"""Small synthetic problems used by the self-test and the solver checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adapters import BaseModel, HyperNet, beam_hypernet, beam_model
from .oa import IadmConfig, OaProblem


@dataclass
class OaToy:
    problem: OaProblem
    w_star: np.ndarray
    u_star: np.ndarray
    v_true: np.ndarray
    config: IadmConfig


def toy_models(n_in=8, n_out=4, width=8, blocks=2) -> tuple[BaseModel, HyperNet]:
    """Dense tanh trunk with sigmoid head, and a tanh hypernetwork."""
    model = beam_model(n_in, n_out, width=width, blocks=blocks, adapters=blocks)
    return model, beam_hypernet(model, hidden=8, feat=8)


TOY_IADM = dict(c1=0.05, c2=1.0, c3=1e-4, c4=1e-4, tau0=1.0, kappa0=1.0, iterations=500, tol=1e-4)


def oa_toy(seed, d_n=16, n_in=8, n_out=4, spread=0.3) -> OaToy:
    """Few-shot regression toy: targets come from the frozen trunk under a perturbed adapter.

    ``w*`` and ``u*`` are random initializations; the adapter that generated
    the labels differs from identity by ``spread`` per coordinate.  The
    bundled solver constants weight the prior on ``u`` well above the
    hypernetwork fit so the proximal steps contract within a few hundred
    iterations.
    """
    rng = np.random.default_rng([int(seed), 7001])
    model, hyper = toy_models(n_in, n_out)
    w_star = np.asarray(model.init_w(rng))
    v_id = np.asarray(model.identity_v())
    v_true = v_id + spread * rng.standard_normal(v_id.size)
    u_star = np.asarray(hyper.init_params(rng, v_id))
    x = rng.standard_normal((d_n, n_in))
    y = model.forward(w_star, v_true, x)
    return OaToy(OaProblem(model, hyper, x, y, "mse"), w_star, u_star, v_true, IadmConfig(**TOY_IADM))
