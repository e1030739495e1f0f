"""
Geometric wideband mmWave channels, quantized beam codebooks and the
coordinated achievable-rate formulas.

Each BS carries an ``M``-element half-wavelength ULA.  The delay-``d`` tap of
BS ``b`` is::

    h[d, b] = sqrt(M / rho_b) * sum_l alpha_l * p(d - tau_l) * a(theta_l)

with ``p`` a sinc pulse truncated to ``D`` taps (delays in sampling periods),
and the subcarrier-``k`` channel is ``h[k, b] = sum_d h[d, b] exp(-2j pi k d / K)``.

Environments are street scenes: a user segment, ``B`` base stations and
``L - 1`` point scatterers.  A user position yields one line-of-sight path and
one single-bounce path per scatterer for every BS.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .dataset import EnvironmentDataset
from .errors import UsageError


def array_response(M: int, theta, vartheta=0.0) -> np.ndarray:
    """ULA steering vector ``exp(j pi m sin(theta) cos(vartheta))``, unit-modulus entries.

    Elevation is folded into the effective spatial frequency.
    """
    if M < 1:
        raise UsageError("array needs at least one antenna")
    spatial = np.sin(theta) * np.cos(vartheta)
    return np.exp(1j * np.pi * np.arange(M) * spatial)


def inner(h, f) -> np.ndarray:
    """``<h, f> = h^H f`` over the last axis."""
    return np.sum(np.conj(h) * f, axis=-1)


# --------------------------------------------------------------------------
# codebooks and timing


@dataclass(frozen=True)
class Codebook:
    beams: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.beams, dtype=np.complex128)
        if b.ndim != 2:
            raise UsageError("codebook must be a (N_tr, M) array")
        object.__setattr__(self, "beams", b)

    @property
    def size(self) -> int:
        return self.beams.shape[0]

    @property
    def M(self) -> int:
        return self.beams.shape[1]


def make_codebook(M: int, n_beams: int = 16, bits: int = 4) -> Codebook:
    """Beams steered to evenly spaced spatial frequencies in ``[-1, 1)``.

    Phases are rounded to the ``2**bits`` levels of the phase shifters and
    every entry has modulus ``1/sqrt(M)``.
    """
    if n_beams < 1:
        raise UsageError("codebook needs at least one beam")
    if bits < 1:
        raise UsageError("phase shifters need at least one bit")
    spatial = -1.0 + (2 * np.arange(n_beams) + 1) / n_beams
    phase = np.pi * np.outer(spatial, np.arange(M))
    step = 2 * np.pi / 2 ** bits
    phase = np.round(phase / step) * step
    return Codebook(np.exp(1j * phase) / np.sqrt(M))


@dataclass(frozen=True)
class TimingBudget:
    """Beam coherence time ``T_B`` and per-beam pilot time ``T_p`` (same unit)."""

    T_B: float
    T_p: float
    n_tr: int

    def __post_init__(self):
        if self.T_B <= 0 or self.T_p <= 0 or self.n_tr < 1:
            raise UsageError("timing values must be positive")
        if self.T_tr > self.T_B:
            raise UsageError("beam training cannot exceed the beam coherence time")
        if 2 * self.T_p > self.T_B:
            raise UsageError("the two uplink pilots must fit in the beam coherence time")

    @property
    def T_tr(self) -> float:
        return self.n_tr * self.T_p

    @property
    def baseline_factor(self) -> float:
        return 1.0 - self.T_tr / self.T_B

    @property
    def dl_factor(self) -> float:
        return 1.0 - 2.0 * self.T_p / self.T_B


# --------------------------------------------------------------------------
# channels


@dataclass(frozen=True)
class Cluster:
    """One representative ray: delay (sampling periods), angles, complex attenuation."""

    delay: float
    theta: float
    alpha: complex
    vartheta: float = 0.0


@dataclass
class MmwaveEnv:
    """Channel description of one user position: per-BS clusters and path losses."""

    M: int
    K: int
    clusters: list
    path_loss: np.ndarray
    taps: int = 16

    def __post_init__(self):
        self.path_loss = np.asarray(self.path_loss, dtype=np.float64)
        if len(self.clusters) != self.path_loss.size:
            raise UsageError("one cluster list and one path loss per BS are required")
        if any(len(c) < 1 for c in self.clusters):
            raise UsageError("every BS needs at least one cluster")
        if np.any(self.path_loss <= 0):
            raise UsageError("path losses must be positive")

    @property
    def B(self) -> int:
        return self.path_loss.size


def pulse(t) -> np.ndarray:
    """Sinc pulse in units of the sampling period."""
    return np.sinc(t)


@dataclass
class ChannelSet:
    taps: np.ndarray
    freq: np.ndarray


def delay_taps(env: MmwaveEnv) -> np.ndarray:
    """``(B, D, M)`` delay-domain taps."""
    d = np.arange(env.taps)
    out = np.zeros((env.B, env.taps, env.M), dtype=np.complex128)
    for b, clusters in enumerate(env.clusters):
        for c in clusters:
            out[b] += np.outer(c.alpha * pulse(d - c.delay), array_response(env.M, c.theta, c.vartheta))
        out[b] *= np.sqrt(env.M / env.path_loss[b])
    return out


def taps_to_freq(taps, K) -> np.ndarray:
    """``(..., D, M)`` taps to ``(..., K, M)`` subcarrier channels."""
    D = taps.shape[-2]
    phase = np.exp(-2j * np.pi * np.outer(np.arange(K), np.arange(D)) / K)
    return np.einsum("kd,...dm->...km", phase, taps)


def gen_channel(env: MmwaveEnv, seed=None) -> ChannelSet:
    """Block-fading channel of one user position.

    The geometry fixes every ray, so the result does not depend on ``seed``;
    the argument is accepted for interface symmetry with the OFDM generator.
    """
    taps = delay_taps(env)
    return ChannelSet(taps, taps_to_freq(taps, env.K))


# --------------------------------------------------------------------------
# rates


def beam_gains(freq, codebook: Codebook) -> np.ndarray:
    """``|<h_{k,b}, f_j>|^2`` with shape ``(..., B, K, N_tr)``."""
    return np.abs(np.einsum("...km,jm->...kj", np.conj(freq), codebook.beams)) ** 2


def coordinated_rate(freq, beams, codebook: Codebook, snr) -> np.ndarray:
    """``(1/K) sum_k log2(1 + snr * (sum_b |<h_{k,b}, f_b>|^2)^2)`` without overhead.

    ``freq`` is ``(..., B, K, M)``, ``beams`` is ``(..., B)`` codebook indices.
    """
    g = beam_gains(freq, codebook)
    beams = np.asarray(beams)
    idx = np.broadcast_to(beams[..., None, None], g.shape[:-1] + (1,))
    chosen = np.take_along_axis(g, idx, axis=-1)[..., 0]
    power = chosen.sum(axis=-2)
    return np.mean(np.log2(1.0 + snr * power ** 2), axis=-1)


def exhaustive_beams(freq, codebook: Codebook) -> np.ndarray:
    """Per-BS beam with the largest received power summed over subcarriers."""
    if codebook.size == 0:
        raise UsageError("empty codebook")
    return np.argmax(beam_gains(freq, codebook).sum(axis=-2), axis=-1)


def rate_baseline(freq, codebook: Codebook, budget: TimingBudget, snr):
    """Exhaustive per-BS beam training; returns ``(rate, beams)``."""
    if codebook.size == 0:
        raise UsageError("empty codebook")
    beams = exhaustive_beams(freq, codebook)
    return budget.baseline_factor * coordinated_rate(freq, beams, codebook, snr), beams


def rate_dl(freq, beams, codebook: Codebook, budget: TimingBudget, snr):
    """Rate with predicted beams and two uplink pilot slots of overhead."""
    return budget.dl_factor * coordinated_rate(freq, beams, codebook, snr)


def optimum_rate(freq, codebook: Codebook, snr):
    """Joint best beam tuple under the coordinated rate, with no training overhead.

    Returns ``(rate, beams)``; the search is over all ``N_tr ** B`` tuples.
    """
    freq = np.asarray(freq)
    B = freq.shape[-3]
    combos = np.array(list(itertools.product(range(codebook.size), repeat=B)))
    g = beam_gains(freq, codebook)
    best = np.full(freq.shape[:-3], -np.inf)
    arg = np.zeros(freq.shape[:-3] + (B,), dtype=np.int64)
    for combo in combos:
        power = sum(g[..., b, :, j] for b, j in enumerate(combo))
        r = np.mean(np.log2(1.0 + snr * power ** 2), axis=-1)
        better = r > best
        best = np.where(better, r, best)
        arg[better] = combo
    return best, arg


def beam_rates(freq, codebook: Codebook, snr) -> np.ndarray:
    """Single-BS rate of every beam, ``(..., B, N_tr)``."""
    g = beam_gains(freq, codebook)
    return np.mean(np.log2(1.0 + snr * g ** 2), axis=-2)


def rate_labels(freq, codebook: Codebook, snr) -> np.ndarray:
    """Per-BS beam rates divided by their per-sample maximum, flattened to ``B * N_tr``."""
    r = beam_rates(freq, codebook, snr)
    r = r / np.maximum(r.max(axis=-1, keepdims=True), 1e-300)
    return r.reshape(r.shape[:-2] + (-1,))


def predicted_beams(outputs, B: int) -> np.ndarray:
    """Per-BS argmax of a ``(..., B * N_tr)`` prediction."""
    out = np.asarray(outputs)
    return np.argmax(out.reshape(out.shape[:-1] + (B, -1)), axis=-1)


# --------------------------------------------------------------------------
# street scenes


@dataclass
class Scene:
    """Geometry of one environment (lengths in metres).

    Users stand on the segment ``(s, 0)`` with ``s`` in ``segment``.  Arrays
    lie along the x-axis.  Ray phases advance by ``2 pi`` every
    ``phase_period`` metres of path length, a coarse stand-in for the carrier
    phase that keeps the position-to-signature map smooth.
    """

    bs: np.ndarray
    scatterers: np.ndarray
    reflect: np.ndarray
    segment: tuple = (0.0, 40.0)
    M: int = 16
    K: int = 32
    taps: int = 16
    metres_per_sample: float = 3.0
    phase_period: float = 4.0
    path_loss_ref: float = 20.0
    shadowing: np.ndarray | None = None

    def __post_init__(self):
        self.shadowing = np.ones(len(np.atleast_2d(self.bs))) if self.shadowing is None else np.asarray(self.shadowing, dtype=float)
        self.bs = np.atleast_2d(np.asarray(self.bs, dtype=np.float64))
        self.scatterers = np.asarray(self.scatterers, dtype=np.float64).reshape(-1, 2)
        self.reflect = np.asarray(self.reflect, dtype=np.complex128).reshape(-1)
        if self.reflect.size != len(self.scatterers):
            raise UsageError("one reflection coefficient per scatterer")

    @property
    def B(self) -> int:
        return len(self.bs)

    @property
    def L(self) -> int:
        return 1 + len(self.scatterers)

    def path_loss(self) -> np.ndarray:
        centre = np.array([np.mean(self.segment), 0.0])
        dist = np.linalg.norm(self.bs - centre, axis=1)
        return self.shadowing * (dist / self.path_loss_ref) ** 2

    def env_at(self, s) -> MmwaveEnv:
        user = np.array([s, 0.0])
        clusters = []
        for b in self.bs:
            rays = [(np.linalg.norm(user - b), user - b, 1.0 + 0j)]
            for sc, gamma in zip(self.scatterers, self.reflect):
                length = np.linalg.norm(sc - b) + np.linalg.norm(user - sc)
                rays.append((length, sc - b, gamma))
            first = min(r[0] for r in rays)
            cl = []
            for length, direction, gain in rays:
                theta = np.arcsin(np.clip(direction[0] / np.linalg.norm(direction), -1, 1))
                alpha = gain * (first / length) * np.exp(-2j * np.pi * length / self.phase_period)
                # receiver timing locks onto the first arrival, two samples into the window
                delay = 2.0 + (length - first) / self.metres_per_sample
                cl.append(Cluster(delay, theta, alpha))
            clusters.append(cl)
        return MmwaveEnv(self.M, self.K, clusters, self.path_loss(), self.taps)

    def to_dict(self) -> dict:
        return {"bs": self.bs.tolist(), "scatterers": self.scatterers.tolist(),
                "reflect": [[z.real, z.imag] for z in self.reflect], "segment": list(self.segment)}


@dataclass
class MmwaveTask:
    B: int = 2
    M: int = 16
    K: int = 32
    L: int = 3
    n_beams: int = 16
    bits: int = 4
    taps: int = 16
    snr_db: float = -20.0
    pilot_snr_db: float = 20.0
    T_B: float = 64.0
    T_p: float = 1.0
    similar_jitter: float = 0.5
    bs_jitter: float = 3.0
    shadowing_db: float = 3.0
    new_reflect: tuple = (0.6, 1.0)
    bs_sites: np.ndarray = field(default_factory=lambda: np.array(
        [[-5.0, 15.0], [45.0, -15.0], [20.0, 25.0], [20.0, -25.0]]))
    codebook: Codebook = field(init=False)
    budget: TimingBudget = field(init=False)

    def __post_init__(self):
        self.codebook = make_codebook(self.M, self.n_beams, self.bits)
        self.budget = TimingBudget(self.T_B, self.T_p, self.n_beams)

    @property
    def snr(self) -> float:
        return 10.0 ** (self.snr_db / 10.0)

    def scene(self, seed, reflect_range=(0.3, 0.9)) -> Scene:
        """Fixed BS deployment (jittered), freshly drawn scatterers, log-normal shadowing per BS."""
        rng = np.random.default_rng(seed)
        bs = self.bs_sites[:self.B] + rng.uniform(-self.bs_jitter, self.bs_jitter, (self.B, 2))
        sc = np.column_stack([rng.uniform(-10.0, 50.0, self.L - 1), rng.uniform(-30.0, 30.0, self.L - 1)])
        refl = rng.uniform(*reflect_range, self.L - 1) * np.exp(2j * np.pi * rng.uniform(size=self.L - 1))
        shadow = 10.0 ** (rng.normal(0.0, self.shadowing_db, self.B) / 10.0)
        return Scene(bs, sc, refl, M=self.M, K=self.K, taps=self.taps, shadowing=shadow)

    def training_scenes(self, n, seed) -> list[Scene]:
        return [self.scene(s) for s in np.random.SeedSequence([seed, 404]).spawn(n)]

    def dissimilar_scene(self, seed) -> Scene:
        return self.scene(np.random.SeedSequence([seed, 505]), self.new_reflect)

    def similar_scene(self, train: list[Scene], seed) -> Scene:
        """Last training scene with scatterers moved by up to ``similar_jitter`` metres."""
        base = train[-1]
        rng = np.random.default_rng([seed, 606])
        j = self.similar_jitter
        return Scene(base.bs.copy(), base.scatterers + rng.uniform(-j, j, base.scatterers.shape),
                     base.reflect.copy(), base.segment, base.M, base.K, base.taps,
                     shadowing=base.shadowing.copy())


def omni_pilot(freq, noise_std, rng) -> np.ndarray:
    """First-antenna uplink pilot per (BS, subcarrier) plus complex noise, ``(..., B, K)``."""
    r = freq[..., 0]
    if noise_std > 0:
        r = r + noise_std * np.sqrt(0.5) * (rng.standard_normal(r.shape) + 1j * rng.standard_normal(r.shape))
    return r


def pilot_features(r) -> np.ndarray:
    """Real/imaginary parts of every (BS, subcarrier) pilot, scaled by the per-sample peak magnitude."""
    r = np.asarray(r)
    flat = r.reshape(r.shape[:-2] + (-1,))
    peak = np.maximum(np.abs(flat).max(axis=-1, keepdims=True), 1e-300)
    flat = flat / peak
    return np.concatenate([flat.real, flat.imag], axis=-1)


def scene_channels(scene: Scene, positions) -> np.ndarray:
    """Subcarrier channels ``(N, B, K, M)`` for every user position."""
    return np.stack([gen_channel(scene.env_at(s)).freq for s in positions])


def make_bf_samples(scene: Scene, task: MmwaveTask, count: int, seed, env_id=None):
    """Dataset plus the channels behind it (needed to score predicted beams)."""
    if count < 1:
        raise UsageError("dataset needs at least one sample")
    rng = np.random.default_rng(seed)
    pos = rng.uniform(*scene.segment, size=count)
    freq = scene_channels(scene, pos)
    ref = np.sqrt(np.mean(np.abs(freq[..., 0]) ** 2))
    noise_std = 0.0 if np.isinf(task.pilot_snr_db) else ref * 10.0 ** (-task.pilot_snr_db / 20.0)
    x = pilot_features(omni_pilot(freq, noise_std, rng))
    y = rate_labels(freq, task.codebook, task.snr)
    meta = {"task": "mmwave", "B": task.B, "M": task.M, "K": task.K, "n_beams": task.n_beams,
            "env": env_id, "scene": scene.to_dict()}
    return EnvironmentDataset(x, y, meta), freq


def make_bf_dataset(scenes, task: MmwaveTask, count: int, seed, env_id=None) -> EnvironmentDataset:
    """``count`` samples per scene, concatenated."""
    if isinstance(scenes, Scene):
        scenes = [scenes]
    if not scenes:
        raise UsageError("need at least one scene")
    parts = [make_bf_samples(s, task, count, np.random.SeedSequence([int(np.asarray(seed).sum()), j]), env_id)[0]
             for j, s in enumerate(scenes)]
    if len(parts) == 1:
        return parts[0]
    return EnvironmentDataset(np.concatenate([p.x for p in parts]), np.concatenate([p.y for p in parts]),
                              dict(parts[0].meta, scenes=len(parts)))
