"""Experiment configuration: nested dataclasses loaded from a TOML file.

Every solver constant is surfaced.  Unknown sections or fields, and values of
the wrong type, are rejected with the file path and the offending field.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

TASKS = ("ofdm", "mmwave")
SCHEMES = ("ea", "oa", "tl", "mismatch", "nofsl", "sgd", "rmsprop")
PRESETS = ("desk", "paper")


@dataclass
class ExperimentSection:
    task: str = "ofdm"
    scheme: str = "ea"
    seed: int = 0
    preset: str = "desk"
    new_env: str = "dissimilar"


@dataclass
class DataSection:
    n_envs: int = 4
    d_i: int = 128
    d_n: int = 16
    d_test: int = 1000
    d_full: int = 1024
    train_snr: float = 10.0
    snr_grid: list = field(default_factory=lambda: [0.0, 5.0, 10.0, 15.0, 20.0])


@dataclass
class OfdmSection:
    k_sub: int = 24
    pilots: int = 3
    paths: int = 3
    train_delays: list = field(default_factory=lambda: [1, 5])
    new_delays: list = field(default_factory=lambda: [6, 11])
    decay: float = 3.0
    cp: int = 16
    similar_jitter: float = 0.1
    width: int = 16
    blocks: int = 3
    adapters: int = 3
    study_pilots: list = field(default_factory=lambda: [3, 24])


@dataclass
class MmwaveSection:
    B: int = 2
    M: int = 16
    K: int = 32
    L: int = 3
    n_beams: int = 16
    bits: int = 4
    snr_db: float = -20.0
    pilot_snr_db: float = 20.0
    T_B: float = 64.0
    T_p: float = 1.0
    width: int = 64
    blocks: int = 4
    adapters: int = 4
    d_n_list: list = field(default_factory=lambda: [8, 16, 32, 64])


@dataclass
class Ea1Section:
    sigma: float = 200.0
    rho: float = 0.25
    iterations: int = 1500
    tol: float = 0.0
    second_moment: bool = True
    decay: float = 0.9
    eps: float = 1e-8
    multiplier: str = "scaled"


@dataclass
class Ea2Section:
    eta: float = 16.0
    gamma: float = 20.0
    mu: float = 20.0
    lam: float = 10.0
    iterations: int = 1000


@dataclass
class OfflineSection:
    lam: float = 1.0
    episodes: int = 400
    inner_lr: float = 0.01
    outer_lr: float = 0.003
    support: float = 0.5
    outer: str = "rmsprop"


@dataclass
class IadmSection:
    c1: float = 1.0
    c2: float = 0.1
    c3: float = 1e-4
    c4: float = 1e-4
    tau0: float = 1.0
    kappa0: float = 1.0
    iterations: int = 500
    tol: float = 1e-4


@dataclass
class BaselineSection:
    lr: float = 0.01
    decay: float = 0.9
    eps: float = 1e-8
    steps: int = 1500
    tl_lr: float = 0.1
    tl_steps: int = 200
    full_lr: float = 0.003
    full_steps: int = 500


@dataclass
class CompareSection:
    """Optimizer comparison: plain consensus constants and the matched baseline rates."""

    steps: int = 500
    plain_sigma: float = 0.5
    plain_rho: float = 0.5
    sgd_lr: float = 0.3
    rmsprop_lr: float = 0.02


@dataclass
class ExperimentConfig:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    data: DataSection = field(default_factory=DataSection)
    ofdm: OfdmSection = field(default_factory=OfdmSection)
    mmwave: MmwaveSection = field(default_factory=MmwaveSection)
    ea1: Ea1Section = field(default_factory=Ea1Section)
    ea2: Ea2Section = field(default_factory=Ea2Section)
    offline: OfflineSection = field(default_factory=OfflineSection)
    iadm: IadmSection = field(default_factory=IadmSection)
    baseline: BaselineSection = field(default_factory=BaselineSection)
    compare: CompareSection = field(default_factory=CompareSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        """Short digest of the canonical JSON form (seed included)."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def validate(self, source="<config>"):
        e, d = self.experiment, self.data
        _check(e.task in TASKS, source, "experiment.task", f"must be one of {TASKS}")
        _check(e.scheme in SCHEMES, source, "experiment.scheme", f"must be one of {SCHEMES}")
        _check(e.preset in PRESETS, source, "experiment.preset", f"must be one of {PRESETS}")
        _check(e.new_env in ("similar", "dissimilar"), source, "experiment.new_env",
               "must be 'similar' or 'dissimilar'")
        for name in ("n_envs", "d_i", "d_n", "d_test", "d_full"):
            _check(getattr(d, name) >= 1, source, f"data.{name}", "must be at least 1")
        _check(len(d.snr_grid) > 0, source, "data.snr_grid", "must not be empty")
        _check(1 <= self.ofdm.pilots <= self.ofdm.k_sub, source, "ofdm.pilots", "must lie in [1, k_sub]")
        _check(len(self.mmwave.d_n_list) > 0, source, "mmwave.d_n_list", "must not be empty")
        for sec, names in (("ea1", ("sigma", "rho")), ("compare", ("plain_sigma", "plain_rho", "steps")), ("ea2", ("eta", "gamma", "mu", "lam")),
                           ("iadm", ("c1", "c2", "c3", "c4", "tau0", "kappa0"))):
            for name in names:
                _check(getattr(getattr(self, sec), name) > 0, source, f"{sec}.{name}", "must be positive")
        _check(self.offline.outer in ("sgd", "rmsprop"), source, "offline.outer", "must be 'sgd' or 'rmsprop'")
        _check(0 < self.ea1.decay < 1, source, "ea1.decay", "must lie in (0, 1)")
        _check(self.ea1.multiplier in ("scaled", "verbatim"), source, "ea1.multiplier",
               "must be 'scaled' or 'verbatim'")
        return self


def _check(ok, source, where, message):
    if not ok:
        raise ConfigurationError(f"{source}: {where} {message}")


PRESET_VALUES = {
    "desk": {},
    "paper": {
        "data": {"n_envs": 60, "d_i": 500, "d_n": 16},
        "ofdm": {"k_sub": 72, "pilots": 9, "width": 128, "blocks": 5, "adapters": 3,
                 "study_pilots": [9, 72]},
        "mmwave": {"M": 64, "width": 256, "blocks": 8, "adapters": 4},
        "ea1": {"iterations": 5500},
    },
}


# Per-task defaults laid over the preset before any file value.
TASK_DEFAULTS = {
    "ofdm": {},
    "mmwave": {"data": {"d_n": 64}, "ea1": {"rho": 0.5},
               "iadm": {"c1": 1e-5, "tau0": 0.1, "kappa0": 0.1},
               "baseline": {"tl_lr": 0.03, "tl_steps": 100}},
}


def _coerce(value, default, source, where):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigurationError(f"{source}: {where} must be a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"{source}: {where} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"{source}: {where} must be a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigurationError(f"{source}: {where} must be a string")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigurationError(f"{source}: {where} must be a list")
        return list(value)
    return value


def apply(config: ExperimentConfig, values: dict, source="<config>") -> ExperimentConfig:
    """Overlay a nested ``{section: {field: value}}`` mapping onto ``config`` in place."""
    for section, fields in values.items():
        if section not in {f.name for f in dataclasses.fields(config)}:
            raise ConfigurationError(f"{source}: unknown section [{section}]")
        if not isinstance(fields, dict):
            raise ConfigurationError(f"{source}: [{section}] must be a table")
        target = getattr(config, section)
        known = {f.name for f in dataclasses.fields(target)}
        for key, value in fields.items():
            if key not in known:
                raise ConfigurationError(f"{source}: [{section}] unknown field '{key}'")
            where = f"{section}.{key}"
            setattr(target, key, _coerce(value, getattr(target, key), source, where))
    return config


def preset(name="desk") -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset '{name}'")
    cfg = ExperimentConfig()
    cfg.experiment.preset = name
    return apply(cfg, PRESET_VALUES[name], f"<preset {name}>")


def load(path=None, preset_name=None, seed=None, overrides=None) -> ExperimentConfig:
    """Resolve preset, then task defaults, then file values, then explicit overrides.

    The file's own ``experiment.preset`` is used unless ``preset_name`` is given.
    """
    raw = {}
    source = "<defaults>"
    if path is not None:
        source = str(path)
        try:
            raw = tomllib.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigurationError(f"{source}: file not found") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"{source}: {exc}") from None
    name = preset_name or raw.get("experiment", {}).get("preset", "desk")
    cfg = preset(name)
    task = (overrides or {}).get("experiment", {}).get("task") or raw.get("experiment", {}).get("task", "ofdm")
    if task in TASK_DEFAULTS:
        apply(cfg, TASK_DEFAULTS[task], f"<{task} defaults>")
    apply(cfg, raw, source)
    cfg.experiment.preset = name
    if overrides:
        apply(cfg, overrides, "<overrides>")
    if seed is not None:
        cfg.experiment.seed = int(seed)
    return cfg.validate(source)


def dumps(config: ExperimentConfig) -> str:
    """TOML text for a config (flat tables, scalars and lists only)."""
    lines = []
    for section, fields in config.to_dict().items():
        lines.append(f"[{section}]")
        for key, value in fields.items():
            lines.append(f"{key} = {json.dumps(value)}")
        lines.append("")
    return "\n".join(lines)
