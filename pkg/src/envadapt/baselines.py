"""Comparison methods: joint SGD / RMSProp training, adapter-only fine-tuning,
mismatch deployment and a generalist trained without adapters."""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass

import numpy as np

from .adapters import BaseModel
from .ea import Phase1Problem, Trace
from .errors import DivergenceError, UsageError
from .optim import Optimizer, OptimizerConfig

def param_hash(values) -> str:
    return hashlib.sha256(np.ascontiguousarray(values, dtype=np.float64).tobytes()).hexdigest()


@dataclass
class JointResult:
    w: np.ndarray
    V: np.ndarray
    trace: Trace
    seconds: float


def train_joint(problem: Phase1Problem, opt: OptimizerConfig, steps: int, rng=None,
                w0=None, V0=None, divergence=1e6) -> JointResult:
    """Gradient steps on ``(w, V)`` for ``(1/n) sum_i f_i(w, v_i)``.

    The traced loss is the mean per-sample loss at the point where the
    gradient was taken; the residual column is always zero.
    """
    if steps < 1:
        raise UsageError("need at least one step")
    model, n = problem.model, problem.n
    w = np.array(model.init_w(rng if rng is not None else np.random.default_rng(0)) if w0 is None else w0,
                 dtype=np.float64)
    V = np.tile(np.asarray(model.identity_v()), (n, 1)) if V0 is None else np.array(V0, dtype=np.float64)
    if V.shape != (n, model.v_size):
        raise UsageError("V0 needs one adapter vector per environment")
    theta = np.concatenate([w, V.ravel()])
    optim = Optimizer(opt, theta.size)
    weights = np.array([problem.weight(i) for i in range(n)])
    total = problem.samples
    trace = Trace()
    t0 = time.perf_counter()
    for step in range(1, steps + 1):
        gw = np.zeros_like(w)
        gV = np.zeros_like(V)
        losses = np.empty(n)
        for i in range(n):
            losses[i], g_w, g_v = problem.grad(i, w, V[i])
            gw += g_w / n
            gV[i] = g_v / n
        theta = optim.step(theta, np.concatenate([gw, gV.ravel()]))
        w, V = theta[:w.size].copy(), theta[w.size:].reshape(V.shape).copy()
        mean_loss = float((losses / weights).sum() / total)
        trace.add(step, mean_loss, 0.0)
        if not np.isfinite(theta).all() or losses.mean() > divergence:
            raise DivergenceError(f"{opt.kind} diverged at step {step}", trace.rows)
    return JointResult(w, V, trace, time.perf_counter() - t0)


def tl_finetune(model: BaseModel, w_star, v_init, x, y, opt: OptimizerConfig, steps: int,
                loss="bce") -> np.ndarray:
    """Fine-tune only the adapter vector on the few-shot set; ``w*`` is never written."""
    if steps < 0:
        raise UsageError("step count must be non-negative")
    v = np.array(v_init, dtype=np.float64)
    if steps == 0:
        return v
    w_frozen = np.asarray(w_star)
    optim = Optimizer(opt, v.size)
    d = len(x)
    for _ in range(steps):
        _, _, gv = model.loss_grad(w_frozen, v, x, y, loss, want_w=False)
        v = optim.step(v, gv / d)
    return v


def mismatch_eval(model: BaseModel, w_star, v_i, x, metric) -> float:
    """Deploy ``(w*, v_i)`` unchanged and score its outputs with ``metric(outputs)``."""
    return float(metric(model.forward(w_star, v_i, x)))


def nofsl_train(problem: Phase1Problem, opt: OptimizerConfig, steps: int, rng=None, w0=None):
    """Generalist trained on the pooled environments with adapters held at identity.

    Returns ``(w, trace)``.
    """
    if steps < 1:
        raise UsageError("need at least one step")
    model, n = problem.model, problem.n
    w = np.array(model.init_w(rng if rng is not None else np.random.default_rng(0)) if w0 is None else w0,
                 dtype=np.float64)
    v_id = np.asarray(model.identity_v())
    optim = Optimizer(opt, w.size)
    weights = np.array([problem.weight(i) for i in range(n)])
    trace = Trace()
    for step in range(1, steps + 1):
        g = np.zeros_like(w)
        losses = np.empty(n)
        for i in range(n):
            losses[i], g_w, _ = problem.grad(i, w, v_id)
            g += g_w / n
        w = optim.step(w, g)
        trace.add(step, float((losses / weights).sum() / problem.samples), 0.0)
        if not np.isfinite(w).all():
            raise DivergenceError(f"generalist training diverged at step {step}", trace.rows)
    return w, trace
