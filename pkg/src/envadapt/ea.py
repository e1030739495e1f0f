"""
Effective adaptation: consensus iADMM over the training environments, then a
second consensus iADMM that fits the hypernetwork and the new environment's
particular parameters together.

Phase 1 minimizes ``(1/n) sum_i f_i(w_i, v_i)`` subject to ``w_i = w``; each
local subproblem is replaced by one proximal-linear step with a closed-form
minimizer.  Phase 2 minimizes ``sum_i h_i(u_i, v_n)`` subject to ``u_i = u``
with ``h_i = (f_i^hyp(u, v_i*) + f_n^hyp(u, v_n) + lam * f_n(w*, v_n)) / n``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .adapters import BaseModel, HyperNet
from .errors import DivergenceError, NumericError, UsageError


def _finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite {what}")
    return arr


# --------------------------------------------------------------------------
# problem containers


@dataclass
class Phase1Problem:
    """Base model plus one ``(x, y)`` sample set per training environment."""

    model: BaseModel
    data: list
    loss: str = "bce"
    reduction: str = "mean"

    def __post_init__(self):
        if not self.data:
            raise UsageError("phase 1 needs at least one environment")
        if self.reduction not in ("sum", "mean"):
            raise UsageError("reduction must be 'sum' or 'mean'")

    def weight(self, i) -> float:
        return 1.0 / len(self.data[i][0]) if self.reduction == "mean" else 1.0

    @property
    def n(self) -> int:
        return len(self.data)

    @property
    def samples(self) -> int:
        return sum(len(x) for x, _ in self.data)

    def grad(self, i, w, v, want_w=True):
        x, y = self.data[i]
        c = self.weight(i)
        value, gw, gv = self.model.loss_grad(w, v, x, y, self.loss, want_w=want_w)
        return c * value, (None if gw is None else c * gw), c * gv

    def objective(self, w, V) -> float:
        """``(1/n) sum_i f_i(w, v_i)``."""
        return float(np.mean([self.weight(i) * self.model.losses(w, V[i], x, y, self.loss).sum()
                              for i, (x, y) in enumerate(self.data)]))


@dataclass
class Phase2Problem:
    """Everything phase 2 needs: frozen phase-1 output, training inputs and the few-shot set."""

    model: BaseModel
    hyper: HyperNet
    w_star: np.ndarray
    v_star: np.ndarray
    inputs: list
    few_x: np.ndarray
    few_y: np.ndarray
    lam: float = 1.0
    loss: str = "bce"
    reduction: str = "mean"

    def __post_init__(self):
        if self.reduction not in ("mean", "sum"):
            raise UsageError("reduction must be 'mean' or 'sum'")
        if len(self.inputs) != len(self.v_star):
            raise UsageError("one input set per phase-1 environment is required")
        if len(self.few_x) == 0:
            raise UsageError("few-shot set is empty")
        if self.lam <= 0:
            raise UsageError("lambda must be positive")

    @property
    def n(self) -> int:
        return len(self.inputs)

    def _scale(self, count):
        return 1.0 / count if self.reduction == "mean" else 1.0

    def fit_train(self, i, u):
        """``f_i^hyp(u, v_i*)`` and its u-gradient."""
        value, du, _ = self.hyper.fit_loss_grad(u, self.inputs[i], self.v_star[i])
        c = self._scale(len(self.inputs[i]))
        return c * value, c * du

    def fit_new(self, u, v_n):
        """``f_n^hyp(u, v_n)`` with gradients in u and v_n."""
        value, du, dv = self.hyper.fit_loss_grad(u, self.few_x, v_n)
        c = self._scale(len(self.few_x))
        return c * value, c * du, c * dv

    def task_new(self, v_n):
        """``f_n(w*, v_n)`` and its v-gradient."""
        value, _, gv = self.model.loss_grad(self.w_star, v_n, self.few_x, self.few_y,
                                            self.loss, want_w=False)
        c = self._scale(len(self.few_x))
        return c * value, c * gv

    def objective(self, u, v_n) -> float:
        """``sum_i h_i(u, v_n)`` at a consensus point."""
        fit = np.mean([self.fit_train(i, u)[0] for i in range(self.n)])
        return float(fit + self.fit_new(u, v_n)[0] + self.lam * self.task_new(v_n)[0])


# --------------------------------------------------------------------------
# phase 1


@dataclass
class Ea1Config:
    sigma: float = 25.0
    rho: float = 25.0
    iterations: int = 2000
    tol: float = 1e-3
    second_moment: bool = False
    decay: float = 0.9
    eps: float = 1e-8
    scale_cap: float | None = None
    multiplier: str = "scaled"
    divergence: float = 1e6

    def __post_init__(self):
        if self.sigma <= 0 or self.rho <= 0:
            raise UsageError("sigma and rho must be positive")
        if not 0 < self.decay < 1:
            raise UsageError("the attenuation coefficient must lie in (0, 1)")
        if self.eps <= 0:
            raise UsageError("eps must be positive")
        if self.iterations < 0:
            raise UsageError("iteration budget must be non-negative")
        if self.multiplier not in ("scaled", "verbatim"):
            raise UsageError("multiplier rule must be 'scaled' or 'verbatim'")


@dataclass
class EaPhase1State:
    w: np.ndarray
    W: np.ndarray
    V: np.ndarray
    Pi: np.ndarray
    sigma: float = 25.0
    rho: float = 25.0
    r: np.ndarray | None = None
    decay: float = 0.9
    eps: float = 1e-8
    it: int = 0

    def __post_init__(self):
        if self.sigma <= 0 or self.rho <= 0:
            raise UsageError("sigma and rho must be positive")
        if self.r is None:
            self.r = np.zeros_like(self.w)

    @property
    def n(self) -> int:
        return len(self.W)

    def copy(self) -> "EaPhase1State":
        return EaPhase1State(self.w.copy(), self.W.copy(), self.V.copy(), self.Pi.copy(),
                             self.sigma, self.rho, self.r.copy(), self.decay, self.eps, self.it)

    def residual(self) -> float:
        """Consensus residual ``max_i ||w_i - w||``."""
        return float(np.max(np.linalg.norm(self.W - self.w, axis=1)))


def ea1_init(problem: Phase1Problem, rng, config: Ea1Config | None = None, w0=None) -> EaPhase1State:
    """Replicated random ``w``, identity adapters, zero multipliers."""
    config = config or Ea1Config()
    w = np.array(problem.model.init_w(rng) if w0 is None else w0, dtype=np.float64)
    n = problem.n
    v = np.asarray(problem.model.identity_v())
    return EaPhase1State(w.copy(), np.tile(w, (n, 1)), np.tile(v, (n, 1)),
                         np.zeros((n, w.size)), config.sigma, config.rho,
                         decay=config.decay, eps=config.eps)


def ea1_global_w(state: EaPhase1State, scale=None) -> np.ndarray:
    """Minimizer of the augmented Lagrangian over ``w``: ``mean_i(w_i + scale * pi_i / sigma)``."""
    if state.n < 1:
        raise UsageError("need at least one environment")
    pi = state.Pi if scale is None else state.Pi * scale
    return np.mean(state.W + pi / state.sigma, axis=0)


def ea1_local_closed_form(w_glob, v_i, pi_i, zeta, xi, rho, sigma, scale=None):
    """Minimizer of the linearized local subproblem.

    ``w_i' = w - scale * (zeta + pi_i) / (rho + sigma)`` and ``v_i' = v_i - xi / rho``.
    """
    step = (zeta + pi_i) / (rho + sigma)
    if scale is not None:
        step = scale * step
    return w_glob - step, v_i - xi / rho


def ea1_local(state: EaPhase1State, problem: Phase1Problem, i, scale=None):
    """Inexact local update for environment ``i`` at ``(w^{l+1}, v_i^l)``.

    Returns ``(w_i', v_i', f_i)`` where ``f_i`` is the raw loss at the linearization point.
    """
    value, gw, gv = problem.grad(i, state.w, state.V[i])
    n = state.n
    zeta = _finite(gw / n, f"w-gradient in environment {i}")
    xi = _finite(gv / n, f"v-gradient in environment {i}")
    w_i, v_i = ea1_local_closed_form(state.w, state.V[i], state.Pi[i], zeta, xi,
                                     state.rho, state.sigma, scale)
    return w_i, v_i, value


def ea1_multiplier(state: EaPhase1State, i, scale=None) -> np.ndarray:
    """``pi_i + sigma * (w_i - w) / scale``; without a scale this is the plain dual ascent step.

    Dividing by the moment scale measures the dual step in the same metric
    as the scaled primal steps.  The unscaled rule amplifies the multiplier
    error by ``|1 - sigma * scale / (rho + sigma)|`` per iteration, which
    exceeds one wherever ``scale > 2 (rho + sigma) / sigma``.
    """
    gap = state.W[i] - state.w
    if scale is not None:
        gap = gap / scale
    return state.Pi[i] + state.sigma * gap


def second_moment_scale(r, eps, cap=None) -> np.ndarray:
    s = 1.0 / (np.sqrt(r) + eps)
    return s if cap is None else np.minimum(s, cap)


def ea1_second_moment_step(state: EaPhase1State, gradients, local_grads, cap=None,
                           multiplier="scaled") -> EaPhase1State:
    """One iteration of the moment-scaled variant with externally supplied gradients.

    ``gradients`` is ``g = (1/n) sum_i grad_w f_i(w^l, v_i^l)``; ``local_grads``
    holds ``(zeta_i, xi_i)`` pairs, already divided by ``n``, evaluated at the
    new global point.  Callers that need gradients at ``w^{l+1}`` use
    :func:`ea1_step`, which computes them in between.
    """
    s = state.copy()
    s.r = s.decay * s.r + (1 - s.decay) * gradients * gradients
    scale = second_moment_scale(s.r, s.eps, cap)
    s.w = ea1_global_w(s, scale)
    for i, (zeta, xi) in enumerate(local_grads):
        s.W[i], s.V[i] = ea1_local_closed_form(s.w, s.V[i], s.Pi[i], zeta, xi, s.rho, s.sigma, scale)
        s.Pi[i] = ea1_multiplier(s, i, scale if multiplier == "scaled" else None)
    s.it += 1
    return s


def ea1_step(state: EaPhase1State, problem: Phase1Problem, second_moment=False, cap=None,
             multiplier="scaled"):
    """One full iteration in place; returns the per-environment raw losses."""
    n = state.n
    scale = None
    if second_moment:
        g = np.zeros_like(state.w)
        for i in range(n):
            g += problem.grad(i, state.w, state.V[i])[1]
        g = _finite(g / n, "averaged gradient")
        state.r = state.decay * state.r + (1 - state.decay) * g * g
        scale = second_moment_scale(state.r, state.eps, cap)
    state.w = ea1_global_w(state, scale)
    losses = np.empty(n)
    for i in range(n):
        state.W[i], state.V[i], losses[i] = ea1_local(state, problem, i, scale)
        state.Pi[i] = ea1_multiplier(state, i, scale if multiplier == "scaled" else None)
    state.it += 1
    return losses


@dataclass
class Trace:
    """Per-iteration rows: iteration, mean per-sample loss, consensus residual."""

    rows: list = field(default_factory=list)
    columns: tuple = ("iteration", "mean_loss", "residual")

    def add(self, *row):
        self.rows.append(tuple(row))

    def column(self, name) -> np.ndarray:
        k = self.columns.index(name)
        return np.array([r[k] for r in self.rows])

    def __len__(self):
        return len(self.rows)


@dataclass
class Ea1Result:
    w: np.ndarray
    V: np.ndarray
    state: EaPhase1State
    trace: Trace
    converged: bool
    seconds: float


def ea1_run(problem: Phase1Problem, config: Ea1Config, rng=None, state=None) -> Ea1Result:
    """Consensus iADMM for phase 1, optionally with moment scaling.

    Stops after ``config.iterations`` iterations or once the consensus residual
    drops below ``config.tol``, whichever comes first.  The traced loss is the
    mean per-sample loss over all environments at the linearization point.
    """
    if state is None:
        state = ea1_init(problem, rng if rng is not None else np.random.default_rng(0), config)
    trace = Trace()
    per_env = np.array([len(x) for x, _ in problem.data], dtype=float)
    weights = np.array([problem.weight(i) for i in range(problem.n)])
    t0 = time.perf_counter()
    converged = False
    for _ in range(config.iterations):
        losses = ea1_step(state, problem, config.second_moment, config.scale_cap, config.multiplier)
        res = state.residual()
        trace.add(state.it, float((losses / weights).sum() / per_env.sum()), res)
        if not np.isfinite(losses).all() or losses.mean() > config.divergence or not np.isfinite(res):
            raise DivergenceError(f"phase 1 diverged at iteration {state.it}", trace.rows)
        if res < config.tol:
            converged = True
            break
    return Ea1Result(state.w.copy(), state.V.copy(), state, trace, converged,
                     time.perf_counter() - t0)


# --------------------------------------------------------------------------
# phase 2


@dataclass
class Ea2Config:
    eta: float = 50.0
    gamma: float = 50.0
    mu: float = 50.0
    lam: float = 1.0
    iterations: int = 300
    tol: float = 0.0
    divergence: float = 1e8

    def __post_init__(self):
        if min(self.eta, self.gamma, self.mu, self.lam) <= 0:
            raise UsageError("eta, gamma, mu and lambda must be positive")


@dataclass
class EaPhase2State:
    u: np.ndarray
    U: np.ndarray
    Z: np.ndarray
    v_n: np.ndarray
    eta: float = 50.0
    gamma: float = 50.0
    mu: float = 50.0
    lam: float = 1.0
    it: int = 0

    def __post_init__(self):
        if min(self.eta, self.gamma, self.mu, self.lam) <= 0:
            raise UsageError("eta, gamma, mu and lambda must be positive")

    @property
    def n(self) -> int:
        return len(self.U)

    def copy(self) -> "EaPhase2State":
        return EaPhase2State(self.u.copy(), self.U.copy(), self.Z.copy(), self.v_n.copy(),
                             self.eta, self.gamma, self.mu, self.lam, self.it)

    def residual(self) -> float:
        return float(np.max(np.linalg.norm(self.U - self.u, axis=1)))


def ea2_init(problem: Phase2Problem, rng, config: Ea2Config | None = None, u0=None) -> EaPhase2State:
    """``v_n`` starts at the mean of the phase-1 adapters; generator biases start there too."""
    config = config or Ea2Config()
    v_ref = np.mean(problem.v_star, axis=0)
    u = np.array(problem.hyper.init_params(rng, v_ref) if u0 is None else u0, dtype=np.float64)
    n = problem.n
    return EaPhase2State(u.copy(), np.tile(u, (n, 1)), np.zeros((n, u.size)), v_ref.copy(),
                         config.eta, config.gamma, config.mu, config.lam)


def ea2_global_u(state: EaPhase2State) -> np.ndarray:
    return np.mean(state.U + state.Z / state.mu, axis=0)


def ea2_v_closed_form(v_n, xi, eta):
    """Minimizer of ``<xi, v> + eta/2 ||v - v_n||^2``."""
    return v_n - xi / eta


def ea2_u_closed_form(u_glob, zeta, z_i, gamma, mu):
    """Minimizer of ``<zeta, u> + gamma/2 ||u - u_glob||^2 + <z_i, u> + mu/2 ||u - u_glob||^2``."""
    return u_glob - (zeta + z_i) / (gamma + mu)


def ea2_updates(state: EaPhase2State, problem: Phase2Problem) -> EaPhase2State:
    """One full iteration: global ``u``, ``v_n``, every ``u_i``, every ``z_i``."""
    s = state.copy()
    n = s.n
    s.u = ea2_global_u(s)
    # xi_n = sum_i grad_v h_i = grad_v f_n^hyp + lam * grad_v f_n at (u^{l+1}, v_n^l)
    _, du_new, dv_fit = problem.fit_new(s.u, s.v_n)
    _, dv_task = problem.task_new(s.v_n)
    xi = _finite(dv_fit + s.lam * dv_task, "v_n gradient")
    s.v_n = ea2_v_closed_form(s.v_n, xi, s.eta)
    # zeta_i = grad_u h_i at (u^{l+1}, v_n^{l+1})
    _, du_new, _ = problem.fit_new(s.u, s.v_n)
    for i in range(n):
        _, du_i = problem.fit_train(i, s.u)
        zeta = _finite((du_i + du_new) / n, f"u gradient in environment {i}")
        s.U[i] = ea2_u_closed_form(s.u, zeta, s.Z[i], s.gamma, s.mu)
        s.Z[i] = s.Z[i] + s.mu * (s.U[i] - s.u)
    s.it += 1
    return s


@dataclass
class Ea2Result:
    u: np.ndarray
    v_n: np.ndarray
    state: EaPhase2State
    trace: Trace
    seconds: float


def ea2_run(problem: Phase2Problem, config: Ea2Config, rng=None, state=None) -> Ea2Result:
    """Hypernetwork consensus iADMM for phase 2.

    The traced loss is ``sum_i h_i`` at the current consensus point.
    """
    if state is None:
        state = ea2_init(problem, rng if rng is not None else np.random.default_rng(0), config)
    trace = Trace(columns=("iteration", "objective", "residual"))
    t0 = time.perf_counter()
    for _ in range(config.iterations):
        state = ea2_updates(state, problem)
        obj = problem.objective(state.u, state.v_n)
        res = state.residual()
        trace.add(state.it, obj, res)
        if not np.isfinite(obj) or obj > config.divergence:
            raise DivergenceError(f"phase 2 diverged at iteration {state.it}", trace.rows)
        if config.tol > 0 and res < config.tol:
            break
    return Ea2Result(state.u.copy(), state.v_n.copy(), state, trace, time.perf_counter() - t0)


def ea_predict(model: BaseModel, w_star, v_n, x) -> np.ndarray:
    """Adapted prediction ``phi(w*, v_n*; x)``."""
    return model.forward(w_star, v_n, x)
