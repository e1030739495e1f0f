"""
Online adaptation: offline training of the hypernetwork prior ``u*`` and the
inexact alternating descent that adapts ``(u_n, v_n)`` from few-shot samples
only.

The adaptation objective is::

    F(u, v) = c1 * f_n^hyp(u, v) + c3 ||u||^2          (= g(u, v))
            + f_n(w*, v) + c2 ||u - u*||^2 + c4 ||v||^2

Each iteration takes one linearized step in ``u`` (only ``g`` is linearized)
and one in ``v`` (only the task loss is linearized); both have closed forms.
A monitor rejects any iteration that fails to decrease ``F`` and retries with
doubled proximal constants, so every accepted iterate strictly decreases ``F``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .adapters import BaseModel, HyperNet, v_average
from .errors import DivergenceError, NumericError, StepOverflowError, UsageError
from .optim import Optimizer, OptimizerConfig


def hyper_task_loss_grad(model: BaseModel, hyper: HyperNet, w, u, x, y, loss):
    """``sum_t l(phi(w, varphi(u; x_t); x_t), y_t)`` and its gradient in ``u``."""
    v, tape = hyper.forward(u, x, keep=True)
    value, _, gv = model.loss_grad(w, v, x, y, loss, per_sample_v=True, want_w=False)
    return value, hyper.backward(u, tape, gv)


# --------------------------------------------------------------------------
# offline phase


@dataclass
class OfflineConfig:
    lam: float = 1.0
    episodes: int = 400
    inner_lr: float = 0.01
    outer_lr: float = 0.003
    support: float = 0.5
    divergence: float = 1e8
    outer: str = "rmsprop"

    def __post_init__(self):
        if self.lam < 0:
            raise UsageError("lambda must be non-negative")
        if self.episodes < 0 or self.inner_lr < 0 or self.outer_lr <= 0:
            raise UsageError("episode count and step sizes must be non-negative")
        if not 0 < self.support < 1:
            raise UsageError("support fraction must lie in (0, 1)")


@dataclass
class OaOfflineState:
    u: np.ndarray
    lam: float
    inner_lr: float
    outer_lr: float
    it: int = 0


def offline_env_loss_grad(model, hyper, w_star, v_i, u, x, y, lam, loss):
    """Per-sample-averaged environment term of the offline objective and its u-gradient."""
    d = len(x)
    value, du, _ = hyper.fit_loss_grad(u, x, v_i)
    if lam > 0:
        tv, tdu = hyper_task_loss_grad(model, hyper, w_star, u, x, y, loss)
        value, du = value + lam * tv, du + lam * tdu
    return value / d, du / d


def offline_objective(model, hyper, w_star, v_star, data, u, lam, loss="bce") -> float:
    """``(lam/n) sum_i sum_t l(...) + (1/n) sum_i f_i^hyp(u, v_i*)``."""
    total = 0.0
    for (x, y), v_i in zip(data, v_star):
        total += hyper.fit_loss_grad(u, x, v_i)[0]
        if lam > 0:
            total += lam * float(model.losses(w_star, hyper.forward(u, x), x, y, loss).sum())
    return total / len(data)


def oa_offline_train(model: BaseModel, hyper: HyperNet, data, w_star, v_star,
                     config: OfflineConfig, rng, u0=None, loss="bce"):
    """First-order MAML on the offline objective.

    Each episode draws one environment and splits its samples into support and
    query sets.  One inner gradient step on the support loss gives ``u'``; the
    query-loss gradient at ``u'`` then drives an ``outer`` (SGD or RMSProp)
    step on ``u``.  Returns ``(u*, trace)``
    where the trace holds ``(episode, objective)`` every tenth episode.
    """
    if not data:
        raise UsageError("offline training needs at least one environment")
    v_star = np.asarray(v_star)
    u = np.array(hyper.init_params(rng, v_star.mean(axis=0)) if u0 is None else u0, dtype=np.float64)
    state = OaOfflineState(u, config.lam, config.inner_lr, config.outer_lr)
    outer = Optimizer(OptimizerConfig(config.outer, config.outer_lr), u.size)
    trace = []
    for ep in range(config.episodes):
        i = int(rng.integers(len(data)))
        x, y = data[i]
        perm = rng.permutation(len(x))
        k = max(1, min(len(x) - 1, int(round(config.support * len(x)))))
        sup, qry = perm[:k], perm[k:] if len(x) > 1 else perm
        _, g_in = offline_env_loss_grad(model, hyper, w_star, v_star[i], state.u, x[sup], y[sup],
                                        config.lam, loss)
        u_fast = state.u - config.inner_lr * g_in
        _, g_out = offline_env_loss_grad(model, hyper, w_star, v_star[i], u_fast, x[qry], y[qry],
                                         config.lam, loss)
        if not np.all(np.isfinite(g_out)):
            raise DivergenceError(f"offline training produced a non-finite gradient at episode {ep}", trace)
        state.u = outer.step(state.u, g_out)
        state.it += 1
        if ep % 10 == 9 or ep == config.episodes - 1:
            obj = offline_objective(model, hyper, w_star, v_star, data, state.u, config.lam, loss)
            trace.append((state.it, obj))
            if not np.isfinite(obj) or obj > config.divergence:
                raise DivergenceError(f"offline training diverged at episode {ep}", trace)
    return state.u, trace


# --------------------------------------------------------------------------
# adaptation phase


@dataclass
class IadmConfig:
    c1: float = 1.0
    c2: float = 0.1
    c3: float = 1e-4
    c4: float = 1e-4
    tau0: float = 1.0
    kappa0: float = 1.0
    iterations: int = 500
    tol: float = 1e-4
    growth: float = 2.0
    shrink: float = 0.9
    patience: int = 10
    max_rejects: int = 60

    def __post_init__(self):
        if min(self.c1, self.c2, self.c3, self.c4) <= 0:
            raise UsageError("penalty parameters must be positive")
        if self.tau0 <= 0 or self.kappa0 <= 0:
            raise UsageError("step constants must be positive")
        if self.growth <= 1 or not 0 < self.shrink <= 1:
            raise UsageError("growth must exceed 1 and shrink must lie in (0, 1]")


@dataclass
class IadmState:
    u: np.ndarray
    v: np.ndarray
    u_star: np.ndarray
    w_star: np.ndarray
    c1: float = 1.0
    c2: float = 0.1
    c3: float = 1e-4
    c4: float = 1e-4
    tau: float = 1.0
    kappa: float = 1.0
    it: int = 0
    F_trace: list = field(default_factory=list)

    def __post_init__(self):
        if min(self.c1, self.c2, self.c3, self.c4) <= 0:
            raise UsageError("penalty parameters must be positive")
        if self.tau <= 0 or self.kappa <= 0:
            raise UsageError("step constants must be positive")


@dataclass
class OaProblem:
    """Frozen base model and hypernetwork plus the few-shot set."""

    model: BaseModel
    hyper: HyperNet
    x: np.ndarray
    y: np.ndarray
    loss: str = "bce"

    def __post_init__(self):
        if len(self.x) == 0:
            raise UsageError("few-shot set is empty")

    @property
    def d(self) -> int:
        return len(self.x)


def F_terms(state: IadmState, problem: OaProblem) -> dict:
    """The five summands of ``F`` (already weighted)."""
    fit = problem.hyper.fit_loss_grad(state.u, problem.x, state.v)[0]
    task = float(problem.model.losses(state.w_star, state.v, problem.x, problem.y, problem.loss).sum())
    return {"fit": state.c1 * fit, "task": task,
            "prior": state.c2 * float(np.sum((state.u - state.u_star) ** 2)),
            "u_norm": state.c3 * float(state.u @ state.u),
            "v_norm": state.c4 * float(state.v @ state.v)}


def F_eval(state: IadmState, problem: OaProblem) -> float:
    t = F_terms(state, problem)
    return t["fit"] + t["task"] + t["prior"] + t["u_norm"] + t["v_norm"]


def u_closed_form(u, u_star, zeta, tau, c2):
    """Minimizer of ``<zeta, u'> + tau ||u' - u||^2 + c2 ||u' - u*||^2``."""
    return (tau * u + c2 * u_star - 0.5 * zeta) / (tau + c2)


def v_closed_form(v, hyp_sum, d, xi, kappa, c1, c4):
    """Minimizer of ``c1 sum_t ||h_t - v'||^2 + <xi, v'> + kappa ||v' - v||^2 + c4 ||v'||^2``
    given ``hyp_sum = sum_t h_t``."""
    return (c1 * hyp_sum + kappa * v - 0.5 * xi) / (c1 * d + c4 + kappa)


def g_grad_u(state: IadmState, problem: OaProblem) -> np.ndarray:
    """``grad_u g = c1 grad_u f_n^hyp + 2 c3 u`` at the current point."""
    _, du, _ = problem.hyper.fit_loss_grad(state.u, problem.x, state.v)
    return state.c1 * du + 2 * state.c3 * state.u


def iadm_u_step(state: IadmState, problem: OaProblem, tau=None) -> np.ndarray:
    zeta = g_grad_u(state, problem)
    if not np.all(np.isfinite(zeta)):
        raise NumericError("non-finite u-gradient")
    return u_closed_form(state.u, state.u_star, zeta, state.tau if tau is None else tau, state.c2)


def iadm_v_step(state: IadmState, problem: OaProblem, u_new, kappa=None) -> np.ndarray:
    """v update with hypernetwork outputs taken at the freshly updated ``u_new``."""
    _, _, xi = problem.model.loss_grad(state.w_star, state.v, problem.x, problem.y,
                                       problem.loss, want_w=False)
    if not np.all(np.isfinite(xi)):
        raise NumericError("non-finite v-gradient")
    hyp_sum = problem.hyper.forward(u_new, problem.x).sum(axis=0)
    return v_closed_form(state.v, hyp_sum, problem.d, xi, state.kappa if kappa is None else kappa,
                         state.c1, state.c4)


@dataclass
class ConvergenceMonitor:
    """Accept/reject bookkeeping for the adaptive proximal constants.

    The constants of the descent analysis (``Omega``, ``delta_u``, ``delta_v``,
    ``tau*``, ``kappa*``) are suprema over reachable sets and have no
    computable value; they are kept as ``None`` in ``theory`` for reference.
    """

    tau0: float
    kappa0: float
    growth: float = 2.0
    shrink: float = 0.9
    patience: int = 10
    max_rejects: int = 60
    last_F: float = float("inf")
    accepts_in_row: int = 0
    rejects_in_row: int = 0
    total_rejects: int = 0
    theory: dict = field(default_factory=lambda: dict.fromkeys(
        ("Omega", "delta_u", "delta_v", "tau_star", "kappa_star")))

    def judge(self, F_new, state: IadmState) -> bool:
        """Strict-decrease test; adjusts ``state.tau``/``state.kappa`` and returns acceptance."""
        if F_new < self.last_F:
            self.last_F = F_new
            self.rejects_in_row = 0
            self.accepts_in_row += 1
            if self.accepts_in_row >= self.patience:
                state.tau = max(self.tau0, state.tau * self.shrink)
                state.kappa = max(self.kappa0, state.kappa * self.shrink)
                self.accepts_in_row = 0
            return True
        self.accepts_in_row = 0
        self.rejects_in_row += 1
        self.total_rejects += 1
        if self.rejects_in_row > self.max_rejects:
            raise StepOverflowError(f"{self.rejects_in_row} consecutive rejected steps "
                                    f"(tau={state.tau:.3g}, kappa={state.kappa:.3g})")
        state.tau *= self.growth
        state.kappa *= self.growth
        return False


@dataclass
class IadmResult:
    u: np.ndarray
    v: np.ndarray
    F_trace: list
    rows: list
    converged: bool
    last_step: float
    seconds: float
    monitor: ConvergenceMonitor


def iadm_init(problem: OaProblem, w_star, u_star, config: IadmConfig) -> IadmState:
    u_star = np.asarray(u_star, dtype=np.float64)
    v0 = v_average(problem.hyper, u_star, problem.x)
    return IadmState(u_star.copy(), v0, u_star.copy(), np.asarray(w_star, dtype=np.float64),
                     config.c1, config.c2, config.c3, config.c4, config.tau0, config.kappa0)


def iadm_run(problem: OaProblem, w_star, u_star, config: IadmConfig) -> IadmResult:
    """Alternating u/v steps under the descent monitor.

    ``rows`` holds ``(iteration, F, tau, kappa, accepted)`` for every attempted
    step.  The run ends when a candidate moves less than ``config.tol`` in
    ``||du|| + ||dv||`` (it is kept only if it also decreases ``F``) or when
    the iteration budget is spent.
    """
    state = iadm_init(problem, w_star, u_star, config)
    mon = ConvergenceMonitor(config.tau0, config.kappa0, config.growth, config.shrink,
                             config.patience, config.max_rejects)
    mon.last_F = F_eval(state, problem)
    state.F_trace.append(mon.last_F)
    rows = [(0, mon.last_F, state.tau, state.kappa, True)]
    t0 = time.perf_counter()
    converged, step = False, float("inf")
    while state.it < config.iterations:
        tau, kappa = state.tau, state.kappa
        u_new = iadm_u_step(state, problem)
        v_new = iadm_v_step(state, problem, u_new)
        step = float(np.linalg.norm(u_new - state.u) + np.linalg.norm(v_new - state.v))
        cand = IadmState(u_new, v_new, state.u_star, state.w_star, state.c1, state.c2,
                         state.c3, state.c4, tau, kappa)
        F_new = F_eval(cand, problem)
        if not np.isfinite(F_new):
            raise NumericError("objective became non-finite")
        accepted = mon.judge(F_new, state)
        rows.append((state.it + 1, F_new, tau, kappa, accepted))
        if accepted:
            state.u, state.v = u_new, v_new
            state.it += 1
            state.F_trace.append(F_new)
        if step < config.tol:
            converged = True
            break
    return IadmResult(state.u, state.v, state.F_trace, rows, converged, step,
                      time.perf_counter() - t0, mon)
