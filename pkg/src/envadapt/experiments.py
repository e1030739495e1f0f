"""
Experiment pipelines: environment generation, phase-1 training, adaptation by
every scheme, evaluation, and the report written to disk.

Every number is a function of (config, seed).  Wall-clock times only appear
in ``report.json``; the CSV tables are byte-stable across reruns.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import mmwave as mm
from . import ofdm as of
from .adapters import beam_hypernet, beam_model, ofdm_hypernet, ofdm_model
from .baselines import OptimizerConfig, nofsl_train, param_hash, tl_finetune, train_joint
from .config import ExperimentConfig
from .ea import (Ea1Config, Ea2Config, Phase1Problem, Phase2Problem, ea1_init, ea1_run, ea2_run,
                 ea_predict)
from .errors import UsageError
from .oa import IadmConfig, OaProblem, OfflineConfig, iadm_run, oa_offline_train

REPORT_SCHEMA = 1
METRIC_COLUMNS = ("config_hash", "task", "method", "env", "snr_db", "d_n", "metric", "value")
TRACE_COLUMNS = ("config_hash", "stage", "iteration", "objective", "residual", "tau", "kappa", "accepted")


@dataclass
class ExperimentReport:
    config_hash: str
    seed: int
    metrics: list = field(default_factory=list)
    traces: list = field(default_factory=list)
    stages: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)
    complete: bool = True
    error: str | None = None
    seconds: float = 0.0
    config: dict = field(default_factory=dict)

    def metric(self, method, env, snr_db="", d_n="", metric=None, task=None):
        rows = [r for r in self.metrics if r["method"] == method and r["env"] == env
                and str(r["snr_db"]) == str(snr_db) and str(r["d_n"]) == str(d_n)
                and (metric is None or r["metric"] == metric)]
        if len(rows) != 1:
            raise KeyError(f"{len(rows)} rows for {(method, env, snr_db, d_n, metric)}")
        return rows[0]["value"]

    def add_metric(self, task, method, env, metric, value, snr_db="", d_n=""):
        self.metrics.append({"config_hash": self.config_hash, "task": task, "method": method,
                             "env": env, "snr_db": snr_db, "d_n": d_n, "metric": metric,
                             "value": float(value)})

    def add_trace(self, stage, rows, kind="ea"):
        for r in rows:
            if kind == "oa":
                it, F, tau, kappa, acc = r
                row = (it, F, "", tau, kappa, int(bool(acc)))
            else:
                it, obj, res = r[:3]
                row = (it, obj, res, "", "", "")
            self.traces.append((self.config_hash, stage) + row)

    def stage(self, name, steps):
        self.stages[name] = self.stages.get(name, 0) + int(steps)


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def metrics_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for r in report.metrics:
        w.writerow([_fmt(r[c]) for c in METRIC_COLUMNS])
    return buf.getvalue()


def trace_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for r in report.traces:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def write_report(report: ExperimentReport, out) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(metrics_csv(report))
    (out / "trace.csv").write_text(trace_csv(report))
    meta = {"schema": REPORT_SCHEMA, "config_hash": report.config_hash, "seed": report.seed,
            "complete": report.complete, "error": report.error, "stages": report.stages,
            "notes": report.notes,
            "wall_seconds": report.seconds, "metric_rows": len(report.metrics),
            "trace_rows": len(report.traces), "config": report.config}
    (out / "report.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return out


def _opt(cfg: ExperimentConfig, kind, lr=None):
    b = cfg.baseline
    return OptimizerConfig(kind, b.lr if lr is None else lr, b.decay, b.eps)


def ea1_config(cfg: ExperimentConfig, **over) -> Ea1Config:
    e = cfg.ea1
    values = dict(sigma=e.sigma, rho=e.rho, iterations=e.iterations, tol=e.tol,
                  second_moment=e.second_moment, decay=e.decay, eps=e.eps, multiplier=e.multiplier)
    values.update(over)
    return Ea1Config(**values)


def iadm_config(cfg: ExperimentConfig) -> IadmConfig:
    i = cfg.iadm
    return IadmConfig(i.c1, i.c2, i.c3, i.c4, i.tau0, i.kappa0, i.iterations, i.tol)


def offline_config(cfg: ExperimentConfig) -> OfflineConfig:
    o = cfg.offline
    return OfflineConfig(o.lam, o.episodes, o.inner_lr, o.outer_lr, o.support, outer=o.outer)


def _rng(seed, *tag):
    return np.random.default_rng(np.random.SeedSequence([int(seed), *tag]))


# --------------------------------------------------------------------------
# shared phase-1 artifacts


@dataclass
class Phase1Artifacts:
    task: object
    envs: list
    data: list
    model: object
    hyper: object
    w: np.ndarray
    V: np.ndarray
    trace: list
    loss: str
    steps: int


def ofdm_task(cfg: ExperimentConfig, pilots=None) -> of.OfdmTask:
    o = cfg.ofdm
    return of.OfdmTask(o.k_sub, o.pilots if pilots is None else pilots, o.paths,
                       tuple(o.train_delays), tuple(o.new_delays), o.decay, o.cp, o.similar_jitter)


def mmwave_task(cfg: ExperimentConfig) -> mm.MmwaveTask:
    m = cfg.mmwave
    return mm.MmwaveTask(m.B, m.M, m.K, m.L, m.n_beams, m.bits, snr_db=m.snr_db,
                         pilot_snr_db=m.pilot_snr_db, T_B=m.T_B, T_p=m.T_p)


def ofdm_features(frame, ds):
    return of.pilot_correlator(ds.x, frame)


def ofdm_models(cfg: ExperimentConfig):
    o = cfg.ofdm
    model = ofdm_model(o.k_sub, in_channels=2 * o.k_sub, width=o.width, blocks=o.blocks,
                       kernel=1, adapters=o.adapters)
    return model, ofdm_hypernet(model, kernel=1)


def mmwave_models(cfg: ExperimentConfig):
    m = cfg.mmwave
    model = beam_model(2 * m.B * m.K, m.B * m.n_beams, width=m.width, blocks=m.blocks,
                       adapters=m.adapters)
    return model, beam_hypernet(model)


def ofdm_training_data(cfg, task, envs, seed, frame=None):
    frame = frame or task.frame
    data = []
    for i, env in enumerate(envs):
        ds = of.make_dataset(env, frame, cfg.data.d_i, cfg.data.train_snr, [seed, 11, i], env_id=i)
        data.append((ofdm_features(frame, ds), ds.y))
    return data


def mmwave_training_data(cfg, task, scenes, seed):
    data = []
    for i, sc in enumerate(scenes):
        ds, _ = mm.make_bf_samples(sc, task, cfg.data.d_i, [seed, 12, i], env_id=i)
        data.append((ds.x, ds.y))
    return data


def phase1_problem(cfg: ExperimentConfig):
    """``(task, envs, Phase1Problem, hypernetwork)`` for the configured task and seed."""
    seed = cfg.experiment.seed
    if cfg.experiment.task == "ofdm":
        task = ofdm_task(cfg)
        envs = task.training_envs(cfg.data.n_envs, seed)
        data = ofdm_training_data(cfg, task, envs, seed)
        model, hyper = ofdm_models(cfg)
        loss = "bce"
    else:
        task = mmwave_task(cfg)
        envs = task.training_scenes(cfg.data.n_envs, seed)
        data = mmwave_training_data(cfg, task, envs, seed)
        model, hyper = mmwave_models(cfg)
        loss = "mse"
    return task, envs, Phase1Problem(model, data, loss), hyper


def phase1(cfg: ExperimentConfig, optimizer=None, steps=None) -> Phase1Artifacts:
    """Training environments, their data and ``(w*, V*)``.

    ``optimizer`` in ``{"sgd", "rmsprop"}`` swaps the consensus solver for a
    joint gradient method on the same objective.
    """
    seed = cfg.experiment.seed
    task, envs, problem, hyper = phase1_problem(cfg)
    model, data, loss = problem.model, problem.data, problem.loss
    rng = _rng(seed, 21)
    if optimizer is None:
        res = ea1_run(problem, ea1_config(cfg, **({} if steps is None else {"iterations": steps})), rng)
        w, V, trace = res.w, res.V, res.trace.rows
    else:
        res = train_joint(problem, _opt(cfg, optimizer), steps or cfg.baseline.steps, rng)
        w, V, trace = res.w, res.V, res.trace.rows
    return Phase1Artifacts(task, envs, data, model, hyper, w, V, trace, loss, len(trace))


# --------------------------------------------------------------------------
# adaptation schemes


def mean_v(art: Phase1Artifacts) -> np.ndarray:
    return art.V.mean(axis=0)


def adapt_ea(cfg, art: Phase1Artifacts, few_x, few_y):
    e = cfg.ea2
    problem = Phase2Problem(art.model, art.hyper, art.w, art.V, [x for x, _ in art.data],
                            few_x, few_y, e.lam, art.loss)
    res = ea2_run(problem, Ea2Config(e.eta, e.gamma, e.mu, e.lam, e.iterations),
                  _rng(cfg.experiment.seed, 31))
    return res.v_n, res.trace.rows


def offline_prior(cfg, art: Phase1Artifacts):
    u, trace = oa_offline_train(art.model, art.hyper, art.data, art.w, art.V, offline_config(cfg),
                                _rng(cfg.experiment.seed, 41), loss=art.loss)
    return u, trace


def adapt_oa(cfg, art: Phase1Artifacts, u_star, few_x, few_y):
    res = iadm_run(OaProblem(art.model, art.hyper, few_x, few_y, art.loss), art.w, u_star,
                   iadm_config(cfg))
    return res.v, res.rows


def adapt_tl(cfg, art: Phase1Artifacts, few_x, few_y, steps=None):
    b = cfg.baseline
    steps = b.tl_steps if steps is None else steps
    v = tl_finetune(art.model, art.w, mean_v(art), few_x, few_y, _opt(cfg, "rmsprop", b.tl_lr),
                    steps, art.loss)
    return v, steps


# --------------------------------------------------------------------------
# OFDM


def ofdm_new_env(cfg, task, envs, kind):
    seed = cfg.experiment.seed
    return task.similar_env(envs, seed) if kind == "similar" else task.dissimilar_env(seed)


def ofdm_ber(model, w, v, frame, env, snr_db, count, seed):
    ds = of.make_dataset(env, frame, count, snr_db, seed)
    return of.ber(model.forward(w, v, ofdm_features(frame, ds)), ds.y)


def ofdm_compare(cfg: ExperimentConfig, methods=("ea", "tl", "mismatch"), envs=("dissimilar", "similar"),
                 art=None, report=None):
    """BER of every method on every new-environment kind across the SNR grid."""
    art = art or phase1(cfg)
    report = report or ExperimentReport(cfg.hash(), cfg.experiment.seed)
    seed = cfg.experiment.seed
    task, frame = art.task, art.task.frame
    for kind in envs:
        env = ofdm_new_env(cfg, task, art.envs, kind)
        few = of.make_dataset(env, frame, cfg.data.d_n, cfg.data.train_snr, [seed, 13])
        fx, fy = ofdm_features(frame, few), few.y
        adapted = {}
        for method in methods:
            if method == "ea":
                v, rows = adapt_ea(cfg, art, fx, fy)
                report.add_trace(f"ea2/{kind}", rows)
                report.stage("adaptation", len(rows))
                adapted["ea"] = [v]
            elif method == "oa":
                u_star, _ = offline_prior(cfg, art)
                v, rows = adapt_oa(cfg, art, u_star, fx, fy)
                report.add_trace(f"iadm/{kind}", rows, kind="oa")
                report.stage("adaptation", len(rows) - 1)
                adapted["oa"] = [v]
            elif method == "tl":
                v, steps = adapt_tl(cfg, art, fx, fy)
                report.stage("adaptation", steps)
                adapted["tl"] = [v]
            elif method == "mismatch":
                report.stage("adaptation", 0)
                adapted["mismatch"] = list(art.V)
            else:
                raise UsageError(f"unknown OFDM method '{method}'")
        for snr in cfg.data.snr_grid:
            ts = of.make_dataset(env, frame, cfg.data.d_test, snr, [seed, 14, int(round(snr * 10))])
            feats = ofdm_features(frame, ts)
            for method, vs in adapted.items():
                b = np.mean([of.ber(ea_predict(art.model, art.w, v, feats), ts.y) for v in vs])
                report.add_metric("ofdm", method, kind, "ber", b, snr_db=snr)
            report.add_metric("ofdm", "ls", kind, "ber", of.ber(of.ls_equalize(ts.x, frame), ts.y), snr_db=snr)
    return report


def pilot_study(cfg: ExperimentConfig, pilot_counts=None, report=None) -> ExperimentReport:
    """Generalist receivers trained per pilot count, tested on known and new environments.

    One row per (pilot count, environment kind, SNR).
    """
    if cfg.experiment.task != "ofdm":
        raise UsageError("the pilot study needs task = 'ofdm'")
    pilot_counts = list(pilot_counts or cfg.ofdm.study_pilots)
    report = report or ExperimentReport(cfg.hash(), cfg.experiment.seed)
    seed = cfg.experiment.seed
    base = ofdm_task(cfg)
    envs = base.training_envs(cfg.data.n_envs, seed)
    new = {"known": envs[0], "new": base.dissimilar_env(seed)}
    model, _ = ofdm_models(cfg)
    for p in pilot_counts:
        frame = base.with_pilots(p)
        data = ofdm_training_data(cfg, base, envs, seed, frame)
        w, trace = nofsl_train(Phase1Problem(model, data, "bce"), _opt(cfg, "rmsprop"),
                               cfg.baseline.steps, _rng(seed, 51))
        report.add_trace(f"nofsl/pilots={p}", trace.rows)
        v = np.asarray(model.identity_v())
        for kind, env in new.items():
            for snr in cfg.data.snr_grid:
                b = ofdm_ber(model, w, v, frame, env, snr, cfg.data.d_test,
                             [seed, 15, int(round(snr * 10))])
                report.add_metric("ofdm", f"pilots={p}", kind, "ber", b, snr_db=snr)
    return report


# --------------------------------------------------------------------------
# mmWave


def mmwave_new_scene(cfg, task, scenes, kind):
    seed = cfg.experiment.seed
    return task.similar_scene(scenes, seed) if kind == "similar" else task.dissimilar_scene(seed)


def beam_rate(art, v, x, freq, w=None):
    task = art.task
    beams = mm.predicted_beams(art.model.forward(art.w if w is None else w, v, x), task.B)
    return float(np.mean(mm.rate_dl(freq, beams, task.codebook, task.budget, task.snr)))


@dataclass
class MmwaveNewEnv:
    scene: object
    test_x: np.ndarray
    test_freq: np.ndarray
    pool_x: np.ndarray
    pool_y: np.ndarray
    full_x: np.ndarray
    full_y: np.ndarray


def mmwave_env_data(cfg, art, kind, pool_n=None) -> MmwaveNewEnv:
    seed = cfg.experiment.seed
    scene = mmwave_new_scene(cfg, art.task, art.envs, kind)
    test, freq = mm.make_bf_samples(scene, art.task, cfg.data.d_test, [seed, 16])
    pool_n = max(pool_n or 0, max(cfg.mmwave.d_n_list), cfg.data.d_n)
    pool, _ = mm.make_bf_samples(scene, art.task, pool_n, [seed, 17])
    full, _ = mm.make_bf_samples(scene, art.task, cfg.data.d_full, [seed, 18])
    return MmwaveNewEnv(scene, test.x, freq, pool.x, pool.y, full.x, full.y)


def upper_bound(cfg, art, new: MmwaveNewEnv):
    """Joint fine-tuning of ``(w, v)`` from ``(w*, mean V*)`` on the full new-environment set."""
    problem = Phase1Problem(art.model, [(new.full_x, new.full_y)], art.loss)
    res = train_joint(problem, _opt(cfg, "rmsprop", cfg.baseline.full_lr), cfg.baseline.full_steps,
                      w0=art.w, V0=mean_v(art)[None])
    return res.w, res.V[0]


def mmwave_compare(cfg: ExperimentConfig, methods=("oa", "tl", "mismatch", "upper"),
                   envs=("dissimilar", "similar"), art=None, u_star=None, report=None):
    """Rates of every method plus the exhaustive baseline and the optimum."""
    art = art or phase1(cfg)
    report = report or ExperimentReport(cfg.hash(), cfg.experiment.seed)
    task = art.task
    if "oa" in methods and u_star is None:
        u_star, otrace = offline_prior(cfg, art)
        report.add_trace("offline", [(it, obj, 0.0) for it, obj in otrace])
    d_n = cfg.data.d_n
    for kind in envs:
        new = mmwave_env_data(cfg, art, kind)
        fx, fy = new.pool_x[:d_n], new.pool_y[:d_n]
        bl, _ = mm.rate_baseline(new.test_freq, task.codebook, task.budget, task.snr)
        opt, _ = mm.optimum_rate(new.test_freq, task.codebook, task.snr)
        report.add_metric("mmwave", "baseline", kind, "rate", bl.mean())
        report.add_metric("mmwave", "optimum", kind, "rate", opt.mean())
        for method in methods:
            if method == "oa":
                v, rows = adapt_oa(cfg, art, u_star, fx, fy)
                report.add_trace(f"iadm/{kind}", rows, kind="oa")
                report.stage("adaptation", len(rows) - 1)
                r = beam_rate(art, v, new.test_x, new.test_freq)
            elif method == "ea":
                v, rows = adapt_ea(cfg, art, fx, fy)
                report.add_trace(f"ea2/{kind}", rows)
                report.stage("adaptation", len(rows))
                r = beam_rate(art, v, new.test_x, new.test_freq)
            elif method == "tl":
                v, steps = adapt_tl(cfg, art, fx, fy)
                report.stage("adaptation", steps)
                r = beam_rate(art, v, new.test_x, new.test_freq)
            elif method == "mismatch":
                report.stage("adaptation", 0)
                r = np.mean([beam_rate(art, v, new.test_x, new.test_freq) for v in art.V])
            elif method == "upper":
                w_ub, v_ub = upper_bound(cfg, art, new)
                r = beam_rate(art, v_ub, new.test_x, new.test_freq, w=w_ub)
            else:
                raise UsageError(f"unknown mmWave method '{method}'")
            report.add_metric("mmwave", method, kind, "rate", r, d_n=d_n if method in ("oa", "ea", "tl") else "")
    return report


def ablate_fewshot(cfg: ExperimentConfig, d_n_list=None, art=None, report=None,
                   u_star=None) -> ExperimentReport:
    """OA rate versus few-shot size on the configured new environment.

    Offline artifacts are computed once and few-shot sets are nested prefixes
    of one sample pool.  The table holds one row per ``d_n``; the exhaustive
    baseline rate and the digest of the shared prior go to ``report.notes``.
    """
    if cfg.experiment.task != "mmwave":
        raise UsageError("the few-shot ablation needs task = 'mmwave'")
    d_n_list = list(d_n_list or cfg.mmwave.d_n_list)
    if min(d_n_list) < 1:
        raise UsageError("few-shot sizes must be positive")
    art = art or phase1(cfg)
    report = report or ExperimentReport(cfg.hash(), cfg.experiment.seed)
    if u_star is None:
        u_star, _ = offline_prior(cfg, art)
    prior = param_hash(u_star)
    kind = cfg.experiment.new_env
    new = mmwave_env_data(cfg, art, kind, max(d_n_list))
    task = art.task
    bl, _ = mm.rate_baseline(new.test_freq, task.codebook, task.budget, task.snr)
    report.notes.update(prior_sha256=prior, baseline_rate=float(bl.mean()), prior_by_d_n={})
    for d_n in d_n_list:
        report.notes["prior_by_d_n"][str(d_n)] = param_hash(u_star)
        v, rows = adapt_oa(cfg, art, u_star, new.pool_x[:d_n], new.pool_y[:d_n])
        report.add_trace(f"iadm/d_n={d_n}", rows, kind="oa")
        report.stage("adaptation", len(rows) - 1)
        report.add_metric("mmwave", "oa", kind, "rate", beam_rate(art, v, new.test_x, new.test_freq), d_n=d_n)
    return report


# --------------------------------------------------------------------------
# optimizer comparison


def optimizer_comparison(cfg: ExperimentConfig, steps=None, report=None) -> ExperimentReport:
    """Mean training loss of the consensus iterations against SGD and RMSProp.

    All four methods start from the same ``w``.  The plain consensus run uses
    ``compare.plain_sigma`` / ``compare.plain_rho``; the moment-scaled run uses
    the ``ea1`` constants.
    """
    c = cfg.compare
    steps = c.steps if steps is None else steps
    report = report or ExperimentReport(cfg.hash(), cfg.experiment.seed)
    seed, task = cfg.experiment.seed, cfg.experiment.task
    _, _, problem, _ = phase1_problem(cfg)
    w0 = problem.model.init_w(_rng(seed, 21))
    runs = {
        "iadmm": ea1_config(cfg, iterations=steps, tol=0.0, second_moment=False,
                            sigma=c.plain_sigma, rho=c.plain_rho),
        "iadmm_sm": ea1_config(cfg, iterations=steps, tol=0.0, second_moment=True),
    }
    for name, ea_cfg in runs.items():
        state = ea1_init(problem, None, ea_cfg, w0=w0)
        rows = ea1_run(problem, ea_cfg, state=state).trace.rows
        report.add_trace(name, rows)
        report.add_metric(task, name, "train", "loss", rows[-1][1])
    for kind, lr in (("sgd", c.sgd_lr), ("rmsprop", c.rmsprop_lr)):
        rows = train_joint(problem, _opt(cfg, kind, lr), steps, w0=w0).trace.rows
        report.add_trace(kind, rows)
        report.add_metric(task, kind, "train", "loss", rows[-1][1])
    return report


# --------------------------------------------------------------------------
# single-scheme run


def run(cfg: ExperimentConfig) -> ExperimentReport:
    """Pipeline for the configured task and scheme.

    A failure after some stages completed still returns a report, flagged
    incomplete and carrying the error text.
    """
    t0 = time.perf_counter()
    report = ExperimentReport(cfg.hash(), cfg.experiment.seed, config=cfg.to_dict())
    report.stage("adaptation", 0)
    e = cfg.experiment
    try:
        if e.scheme in ("sgd", "rmsprop"):
            art = phase1(cfg, optimizer=e.scheme)
            report.add_trace(f"phase1/{e.scheme}", art.trace)
            report.add_metric(e.task, e.scheme, "train", "loss", art.trace[-1][1])
        elif e.scheme == "nofsl":
            _run_nofsl(cfg, report)
        else:
            art = phase1(cfg)
            report.stage("phase1", art.steps)
            report.add_trace("phase1", art.trace)
            if e.task == "ofdm":
                ofdm_compare(cfg, methods=(e.scheme,), envs=(e.new_env,), art=art, report=report)
            else:
                method = "oa" if e.scheme == "oa" else e.scheme
                mmwave_compare(cfg, methods=(method,), envs=(e.new_env,), art=art, report=report)
    except Exception as exc:  # noqa: BLE001 - the partial report records the failure
        report.complete = False
        report.error = f"{type(exc).__name__}: {exc}"
    report.seconds = time.perf_counter() - t0
    return report


def _run_nofsl(cfg, report):
    seed, kind = cfg.experiment.seed, cfg.experiment.new_env
    task, envs, problem, hyper = phase1_problem(cfg)
    model = problem.model
    w, trace = nofsl_train(problem, _opt(cfg, "rmsprop"), cfg.baseline.steps, _rng(seed, 51))
    report.add_trace("nofsl", trace.rows)
    v = np.asarray(model.identity_v())
    if cfg.experiment.task == "ofdm":
        env = ofdm_new_env(cfg, task, envs, kind)
        for snr in cfg.data.snr_grid:
            b = ofdm_ber(model, w, v, task.frame, env, snr, cfg.data.d_test, [seed, 14, int(round(snr * 10))])
            report.add_metric("ofdm", "nofsl", kind, "ber", b, snr_db=snr)
    else:
        art = Phase1Artifacts(task, envs, problem.data, model, hyper, w, v[None], trace.rows, "mse", len(trace))
        new = mmwave_env_data(cfg, art, kind)
        report.add_metric("mmwave", "nofsl", kind, "rate", beam_rate(art, v, new.test_x, new.test_freq))
