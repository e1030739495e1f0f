"""
Synthetic multipath OFDM environments.

An environment is a power delay profile (PDP).  Each frame carries one pilot
block and one data block of BPSK symbols over ``k_sub`` subcarriers; the
channel taps are drawn once per frame (Rayleigh, ``E|alpha|^2 = 1`` before
PDP weighting) and stay fixed across both blocks.  Transmission is simulated
in the time domain with a cyclic prefix, so the frequency response seen by the
receiver is the DFT of the symbol-spaced tap vector.

The model input for one frame is a ``(4, k_sub)`` array: real and imaginary
parts of the received pilot block, then of the received data block.  Labels are
the ``k_sub`` transmitted data bits.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .dataset import EnvironmentDataset
from .errors import UsageError


@dataclass(frozen=True)
class Pdp:
    delays: np.ndarray
    powers: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.delays, dtype=np.int64)
        p = np.asarray(self.powers, dtype=np.float64)
        if d.ndim != 1 or d.shape != p.shape or d.size == 0:
            raise UsageError("delays and powers must be matching non-empty vectors")
        if np.any(np.diff(d) <= 0) or d[0] < 0:
            raise UsageError("delays must be non-negative and strictly increasing")
        if np.any(p < 0) or p.sum() <= 0:
            raise UsageError("powers must be non-negative with a positive total")
        object.__setattr__(self, "delays", d)
        object.__setattr__(self, "powers", p / p.sum())

    @property
    def paths(self) -> int:
        return self.delays.size

    @property
    def max_delay(self) -> int:
        return int(self.delays[-1])

    def rms_spread(self) -> float:
        mean = float(self.powers @ self.delays)
        return float(np.sqrt(self.powers @ (self.delays - mean) ** 2))

    def to_dict(self) -> dict:
        return {"delays": self.delays.tolist(), "powers": self.powers.tolist()}


@dataclass(frozen=True)
class OfdmFrame:
    """Frame layout: pilot positions/values in the first block, data in the second."""

    k_sub: int
    pilot_positions: np.ndarray
    pilot_values: np.ndarray
    cp: int = 16

    def __post_init__(self):
        pos = np.asarray(self.pilot_positions, dtype=np.int64)
        val = np.asarray(self.pilot_values, dtype=np.complex128)
        if pos.size == 0 or pos.size > self.k_sub:
            raise UsageError("pilot count must lie in [1, k_sub]")
        if pos.shape != val.shape or np.any(pos < 0) or np.any(pos >= self.k_sub):
            raise UsageError("pilot positions out of range")
        object.__setattr__(self, "pilot_positions", pos)
        object.__setattr__(self, "pilot_values", val)

    @property
    def pilots(self) -> int:
        return int(self.pilot_positions.size)

    def pilot_block(self) -> np.ndarray:
        block = np.zeros(self.k_sub, dtype=np.complex128)
        block[self.pilot_positions] = self.pilot_values
        return block


def make_frame(k_sub=24, pilots=3, cp=16) -> OfdmFrame:
    """Evenly spaced +1 pilots."""
    if pilots < 1 or pilots > k_sub:
        raise UsageError("pilot count must lie in [1, k_sub]")
    pos = np.round(np.arange(pilots) * k_sub / pilots).astype(np.int64)
    return OfdmFrame(k_sub, pos, np.ones(pilots, dtype=np.complex128), cp)


def bpsk(bits) -> np.ndarray:
    return 2.0 * np.asarray(bits, dtype=np.float64) - 1.0


# --------------------------------------------------------------------------
# environments


def sample_environment(seed, L: int, delay_range=(1, 6), decay=3.0, alias=None) -> Pdp:
    """Random normalized PDP with a path at delay 0 and ``L - 1`` later paths.

    Path ``l`` gets power ``exp(-l / decay)`` times a uniform factor in [0.5, 1.5].
    With ``alias`` set, only delay sets whose residues modulo ``alias`` are
    distinct are drawn; evenly spaced pilots every ``K / alias`` subcarriers
    cannot tell apart delays that coincide modulo ``alias``.
    """
    if L < 1:
        raise UsageError("a PDP needs at least one path")
    rng = np.random.default_rng(seed)
    lo, hi = delay_range
    choices = [c for c in itertools.combinations(range(lo, hi + 1), L - 1)
               if alias is None or len({0, *(d % alias for d in c)}) == L]
    if not choices:
        raise UsageError("no delay set in the given range satisfies the constraints")
    later = choices[rng.integers(len(choices))]
    delays = np.array((0,) + tuple(later), dtype=np.int64)
    powers = np.exp(-np.arange(L) / decay) * rng.uniform(0.5, 1.5, size=L)
    return Pdp(delays, powers)


def perturb_environment(pdp: Pdp, seed, jitter=0.1) -> Pdp:
    """Same delays, each power scaled by a factor in ``[1 - jitter, 1 + jitter]``."""
    rng = np.random.default_rng(seed)
    return Pdp(pdp.delays, pdp.powers * rng.uniform(1 - jitter, 1 + jitter, size=pdp.paths))


def draw_taps(pdp: Pdp, count, rng) -> np.ndarray:
    """Complex path gains ``sqrt(P_l) * alpha_l * exp(-j theta_l)``, shape ``(count, L)``.

    ``alpha_l`` is Rayleigh with unit mean square and ``theta_l`` uniform.
    """
    alpha = rng.rayleigh(scale=np.sqrt(0.5), size=(count, pdp.paths))
    theta = rng.uniform(0.0, 2 * np.pi, size=(count, pdp.paths))
    return np.sqrt(pdp.powers) * alpha * np.exp(-1j * theta)


def frequency_response(pdp: Pdp, taps, k_sub) -> np.ndarray:
    """DFT of the symbol-spaced impulse response, shape ``(..., k_sub)``."""
    taps = np.atleast_2d(taps)
    k = np.arange(k_sub)
    phase = np.exp(-2j * np.pi * np.outer(pdp.delays, k) / k_sub)
    return taps @ phase


def noise_variance(snr_db) -> float:
    """Per-sample noise power for unit-energy symbols."""
    return 0.0 if np.isinf(snr_db) and snr_db > 0 else float(10.0 ** (-snr_db / 10.0))


def _channel(pdp, frame, blocks, taps, snr_db, rng):
    """Time-domain simulation for ``blocks`` of shape (N, B, K); returns received (N, B, K)."""
    n, nb, k = blocks.shape
    if pdp.max_delay > frame.cp:
        raise UsageError("cyclic prefix shorter than the channel delay spread")
    s = np.fft.ifft(blocks, axis=2, norm="ortho")
    with_cp = np.concatenate([s[:, :, k - frame.cp:], s], axis=2)
    stream = with_cp.reshape(n, nb * (k + frame.cp))
    h = np.zeros((n, pdp.max_delay + 1), dtype=np.complex128)
    h[:, pdp.delays] = taps
    # the frame starts from an idle line, so only in-frame symbols interfere
    rx = np.zeros_like(stream)
    for d in range(h.shape[1]):
        if d == 0:
            rx += h[:, :1] * stream
        else:
            rx[:, d:] += h[:, d:d + 1] * stream[:, :-d]
    nv = noise_variance(snr_db)
    if nv > 0:
        rx = rx + np.sqrt(nv / 2) * (rng.standard_normal(rx.shape) + 1j * rng.standard_normal(rx.shape))
    rx = rx.reshape(n, nb, k + frame.cp)[:, :, frame.cp:]
    return np.fft.fft(rx, axis=2, norm="ortho")


def to_features(received) -> np.ndarray:
    """(N, 2, K) complex blocks -> (N, 4, K) real model input."""
    return np.concatenate([received.real, received.imag], axis=1)[:, [0, 2, 1, 3], :]


def transmit_receive(pdp: Pdp, frame: OfdmFrame, snr_db, seed, bits=None, taps=None) -> np.ndarray:
    """Received ``(4, k_sub)`` features for one frame.

    ``bits`` defaults to random data; ``taps`` overrides the Rayleigh draw.
    """
    rng = np.random.default_rng(seed)
    if bits is None:
        bits = rng.integers(0, 2, size=frame.k_sub)
    if taps is None:
        taps = draw_taps(pdp, 1, rng)
    taps = np.asarray(taps, dtype=np.complex128).reshape(1, pdp.paths)
    blocks = np.stack([frame.pilot_block(), bpsk(bits).astype(np.complex128)])[None]
    return to_features(_channel(pdp, frame, blocks, taps, snr_db, rng))[0]


def received_blocks(pdp: Pdp, frame: OfdmFrame, bits, snr_db, rng, taps=None, coherence=1):
    """Vectorized reception for many frames; returns (complex blocks, taps).

    Consecutive groups of ``coherence`` frames share one tap draw.
    """
    bits = np.asarray(bits)
    n = bits.shape[0]
    if taps is None:
        groups = -(-n // coherence)
        taps = np.repeat(draw_taps(pdp, groups, rng), coherence, axis=0)[:n]
    pilot = np.broadcast_to(frame.pilot_block(), (n, frame.k_sub))
    blocks = np.stack([pilot, bpsk(bits).astype(np.complex128)], axis=1)
    return _channel(pdp, frame, blocks, taps, snr_db, rng), taps


def make_dataset(pdp: Pdp, frame: OfdmFrame, count: int, snr_db, seed, coherence=1,
                 env_id=None) -> EnvironmentDataset:
    """``count`` frames, each with its own channel draw (unless ``coherence > 1``)."""
    if count < 1:
        raise UsageError("dataset needs at least one frame")
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, size=(count, frame.k_sub))
    rx, _ = received_blocks(pdp, frame, bits, snr_db, rng, coherence=coherence)
    meta = {"task": "ofdm", "k_sub": frame.k_sub, "pilots": frame.pilots, "snr_db": float(snr_db),
            "env": env_id, "pdp": pdp.to_dict()}
    return EnvironmentDataset(to_features(rx), bits.astype(np.float64), meta)


def ber(outputs, bits) -> float:
    """Fraction of hard-decision errors; ``outputs`` are probabilities or bits."""
    out = np.asarray(outputs, dtype=np.float64)
    ref = np.asarray(bits, dtype=np.float64)
    if out.size != ref.size:
        raise UsageError(f"{out.size} outputs against {ref.size} reference bits")
    if out.size == 0:
        raise UsageError("no bits to compare")
    return float(np.mean((out.ravel() >= 0.5) != (ref.ravel() >= 0.5)))


def pilot_correlator(features, frame: OfdmFrame) -> np.ndarray:
    """Fixed quadratic front-end of the learned receiver.

    For data subcarrier ``k`` and offset ``m`` the feature is
    ``conj(Y_p / X_p) * Y_d[k]`` with ``p = (k + m) mod K`` when ``p`` carries a
    pilot, and zero otherwise.  Output shape is ``(N, 2K, K)``: real parts for
    offsets ``0..K-1`` then imaginary parts.  Coherent detection is linear in
    these features, with weights set by the environment's frequency correlation.
    """
    f = np.asarray(features, dtype=np.float64)
    if f.ndim == 2:
        f = f[None]
    k_sub = frame.k_sub
    yp = f[:, 0] + 1j * f[:, 1]
    yd = f[:, 2] + 1j * f[:, 3]
    z = np.zeros((f.shape[0], k_sub, k_sub), dtype=np.complex128)
    k = np.arange(k_sub)
    for p, val in zip(frame.pilot_positions, frame.pilot_values):
        z[:, (p - k) % k_sub, k] = np.conj(yp[:, p] / val)[:, None] * yd
    return np.concatenate([z.real, z.imag], axis=1)


def ls_equalize(features, frame: OfdmFrame) -> np.ndarray:
    """Least-squares pilot estimate, circular linear interpolation, coherent BPSK decision.

    Returns hard bit decisions of shape ``(N, k_sub)``.
    """
    f = np.asarray(features, dtype=np.float64)
    if f.ndim == 2:
        f = f[None]
    yp = f[:, 0] + 1j * f[:, 1]
    yd = f[:, 2] + 1j * f[:, 3]
    pos, k = frame.pilot_positions, frame.k_sub
    hp = yp[:, pos] / frame.pilot_values
    if pos.size == k:
        h = hp[:, np.argsort(pos)]
    else:
        order = np.argsort(pos)
        xp = np.concatenate([pos[order] - k, pos[order], pos[order] + k])
        hpp = np.concatenate([hp[:, order]] * 3, axis=1)
        grid = np.arange(k)
        h = np.stack([np.interp(grid, xp, row.real) + 1j * np.interp(grid, xp, row.imag) for row in hpp])
    return (np.real(np.conj(h) * yd) > 0).astype(np.float64)


@dataclass
class OfdmTask:
    """Environment family used by the experiments.

    Training and new environments draw their later paths from disjoint delay
    windows.  With ``resolvable`` set, every PDP keeps its delays distinct
    modulo the pilot count, so the few-pilot grid can in principle separate
    all paths; the full-pilot frame of the pilot study reuses the same PDPs.
    """

    k_sub: int = 24
    pilots: int = 3
    paths: int = 3
    train_delays: tuple = (1, 5)
    new_delays: tuple = (6, 11)
    decay: float = 3.0
    cp: int = 16
    similar_jitter: float = 0.1
    resolvable: bool = True
    frame: OfdmFrame = field(init=False)

    def __post_init__(self):
        self.frame = make_frame(self.k_sub, self.pilots, self.cp)

    @property
    def alias(self):
        return self.pilots if self.resolvable and self.k_sub % self.pilots == 0 else None

    def with_pilots(self, pilots) -> OfdmFrame:
        return make_frame(self.k_sub, pilots, self.cp)

    def training_envs(self, n, seed) -> list[Pdp]:
        ss = np.random.SeedSequence([seed, 101])
        return [sample_environment(s, self.paths, self.train_delays, self.decay, self.alias)
                for s in ss.spawn(n)]

    def similar_env(self, train: list[Pdp], seed) -> Pdp:
        """Power-jittered copy of the last training environment."""
        return perturb_environment(train[-1], [seed, 202], self.similar_jitter)

    def dissimilar_env(self, seed) -> Pdp:
        return sample_environment([seed, 303], self.paths, self.new_delays, self.decay, self.alias)
