"""
Base model with channel-wise scale/shift adapters, and the hypernetwork that
generates adapter values from a single received sample.

The shared weights ``w`` are all trunk and adapter-layer weights.  The
particular vector ``v`` holds, for every adapter ``k``, a scale ``alpha_k``
and a shift ``beta_k`` with one entry per output channel::

    z = alpha_k * (W_a x) + (b_a + beta_k)

so ``alpha = 1, beta = 0`` leaves the adapter layer untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, UsageError
from .nn import (Layout, Network, ParamVector, conv1d, dense, flatten,
                 loss_slope, sample_losses)


@dataclass(frozen=True)
class AdapterSpec:
    k: int
    channels: int
    layer: int


class BaseModel:
    """Trunk network whose adapter layers are modulated by ``v``."""

    def __init__(self, net: Network):
        self.net = net
        self.adapters = [AdapterSpec(k, net.layers[j].n_out, j)
                         for k, j in enumerate(net.adapter_layers)]
        if not self.adapters:
            raise ConfigurationError("base model needs at least one adapter layer")
        segs = []
        for a in self.adapters:
            segs += [(f"alpha{a.k}", (a.channels,)), (f"beta{a.k}", (a.channels,))]
        self.v_layout = Layout(tuple(segs))

    @property
    def w_layout(self) -> Layout:
        return self.net.layout

    @property
    def v_size(self) -> int:
        return self.v_layout.size

    def adapter_weight_count(self) -> int:
        """Weights plus biases of all adapter layers (what full fine-tuning would touch)."""
        total = 0
        for a in self.adapters:
            layer = self.net.layers[a.layer]
            total += layer.n_out * layer.n_in * layer.kernel + layer.n_out
        return total

    def init_w(self, rng) -> ParamVector:
        return self.net.init_params(rng)

    def identity_v(self) -> ParamVector:
        parts = {}
        for a in self.adapters:
            parts[f"alpha{a.k}"] = np.ones(a.channels)
            parts[f"beta{a.k}"] = np.zeros(a.channels)
        return ParamVector(self.v_layout.join(parts), self.v_layout)

    def modulation(self, v) -> dict:
        v = np.asarray(v, dtype=np.float64)
        if v.shape[-1] != self.v_size:
            raise ConfigurationError(f"v has length {v.shape[-1]}, model expects {self.v_size}")
        parts = self.v_layout.split(v)
        return {a.layer: (parts[f"alpha{a.k}"], parts[f"beta{a.k}"]) for a in self.adapters}

    def forward(self, w, v, x) -> np.ndarray:
        return self.net.forward(w, x, mod=self.modulation(v))

    def trunk_forward(self, w, x) -> np.ndarray:
        return self.net.forward(w, x)

    def losses(self, w, v, x, y, loss) -> np.ndarray:
        return sample_losses(self.forward(w, v, x), y, loss)

    def loss_grad(self, w, v, x, y, loss, per_sample_v=False, want_w=True):
        """Summed loss and its gradients w.r.t. ``w`` and ``v``.

        ``v`` may be one vector or one row per sample; with
        ``per_sample_v=True`` the ``v``-gradient keeps the sample axis.
        """
        mod = self.modulation(v)
        out, tape = self.net.forward(w, x, mod=mod, keep=True)
        value = float(sample_losses(out, y, loss).sum())
        gw, dmod, _ = self.net.backward(w, tape, loss_slope(out, y, loss), mod=mod)
        cols = []
        for a in self.adapters:
            da, db = dmod[a.layer]
            cols += [da, db]
        gv = np.concatenate(cols, axis=1)
        if not per_sample_v:
            gv = gv.sum(axis=0)
        return value, (gw if want_w else None), gv


class HyperNet:
    """Embedding network followed by one dense generator head per adapter."""

    def __init__(self, embed: Network, generators: list[Network], model: BaseModel):
        if len(generators) != len(model.adapters):
            raise ConfigurationError("need exactly one generator per adapter")
        feat = embed.output_size
        for g, a in zip(generators, model.adapters):
            if g.input_shape != (feat, 1):
                raise ConfigurationError("generator input must match the embedding width")
            if g.output_size != 2 * a.channels:
                raise ConfigurationError(
                    f"generator {a.k} emits {g.output_size} values, adapter needs {2 * a.channels}")
        self.embed, self.generators, self.model = embed, list(generators), model
        layout = Layout(tuple(("embed." + n, s) for n, s in embed.layout.segments))
        for k, g in enumerate(generators):
            layout = layout.concat(g.layout, prefix=f"gen{k}.")
        self.layout = layout
        sizes = [embed.layout.size] + [g.layout.size for g in generators]
        self._bounds = np.cumsum([0] + sizes)

    @property
    def input_shape(self):
        return self.embed.input_shape

    @property
    def v_size(self) -> int:
        return self.model.v_size

    def _pieces(self, u):
        u = np.asarray(u, dtype=np.float64)
        if u.shape[-1] != self.layout.size:
            raise ConfigurationError(f"u has length {u.shape[-1]}, hypernetwork expects {self.layout.size}")
        b = self._bounds
        return [u[b[i]:b[i + 1]] for i in range(len(b) - 1)]

    def init_params(self, rng, v_ref=None, gen_scale=0.1) -> ParamVector:
        """Glorot weights; generator biases start at ``v_ref`` (default: identity adapters).

        Generator output weights are shrunk by ``gen_scale`` so the initial
        outputs stay close to ``v_ref``.
        """
        v_ref = np.asarray(self.model.identity_v() if v_ref is None else v_ref, dtype=float)
        pieces = [np.asarray(self.embed.init_params(rng))]
        ref = self.model.v_layout.split(v_ref)
        for g, a in zip(self.generators, self.model.adapters):
            gp = g.layout.split(np.array(g.init_params(rng)))
            last = len(g.layers) - 1
            gp[f"W{last}"] = gen_scale * gp[f"W{last}"]
            gp[f"b{last}"] = np.concatenate([ref[f"alpha{a.k}"], ref[f"beta{a.k}"]])
            pieces.append(g.layout.join(gp))
        return ParamVector(np.concatenate(pieces), self.layout)

    def forward(self, u, x, keep=False):
        pieces = self._pieces(u)
        feats, etape = self.embed.forward(pieces[0], x, keep=True)
        outs, gtapes = [], []
        for g, gu in zip(self.generators, pieces[1:]):
            o, t = g.forward(gu, feats, keep=True)
            outs.append(o)
            gtapes.append(t)
        # generator k emits (alpha_k, beta_k), matching the v layout order
        v = np.concatenate(outs, axis=1)
        return (v, (etape, gtapes)) if keep else v

    def backward(self, u, tape, dv) -> np.ndarray:
        """Vector-Jacobian product: d(sum dv * varphi)/du."""
        pieces = self._pieces(u)
        etape, gtapes = tape
        dfeat = 0.0
        grads = [None]
        pos = 0
        for g, gu, t in zip(self.generators, pieces[1:], gtapes):
            m = g.output_size
            dg, _, dx = g.backward(gu, t, dv[:, pos:pos + m], want_input=True)
            dfeat = dfeat + dx.reshape(dx.shape[0], -1)
            grads.append(dg)
            pos += m
        grads[0], _, _ = self.embed.backward(pieces[0], etape, dfeat)
        return np.concatenate(grads)

    def fit_loss_grad(self, u, x, v_target):
        """``sum_t ||varphi(u; x_t) - v_t||^2`` with gradients w.r.t. u and the target.

        ``v_target`` is a single vector or one row per sample.  The target
        gradient is summed over samples when a single vector was given.
        """
        out, tape = self.forward(u, x, keep=True)
        vt = np.asarray(v_target, dtype=np.float64)
        diff = out - vt
        value = float(np.sum(diff * diff))
        du = self.backward(u, tape, 2.0 * diff)
        dvt = -2.0 * diff
        if vt.ndim == 1:
            dvt = dvt.sum(axis=0)
        return value, du, dvt


# --------------------------------------------------------------------------
# module-level operations


def base_forward(model: BaseModel, w, v, x) -> np.ndarray:
    """Adapter-modulated output for one sample or a batch."""
    out = model.forward(w, v, x)
    arr = np.asarray(x)
    single = arr.ndim == 1 or arr.shape == model.net.input_shape
    return out[0] if single else out


def hyper_forward(h: HyperNet, u, x) -> np.ndarray:
    """Candidate ``v`` for one sample (1-D) or one row per sample."""
    out = h.forward(u, x)
    arr = np.asarray(x)
    single = arr.ndim == 1 or arr.shape == h.input_shape
    return out[0] if single else out


def v_average(h: HyperNet, u, samples) -> np.ndarray:
    """Mean hypernetwork output over a sample set."""
    arr = np.asarray(samples, dtype=np.float64)
    if arr.size == 0 or len(arr) == 0:
        raise UsageError("v_average needs at least one sample")
    return h.forward(u, arr).mean(axis=0)


# --------------------------------------------------------------------------
# architectures


def ofdm_model(k_sub, in_channels=4, width=16, blocks=3, kernel=5, adapters=3,
               adapter_activation="tanh") -> BaseModel:
    """Conv1D receiver: ``blocks`` trunk convolutions, adapters after the first ``adapters`` blocks,
    then a per-subcarrier sigmoid head producing one bit probability per subcarrier."""
    layers, c = [], in_channels
    for b in range(blocks):
        layers.append(conv1d(c, width, kernel, "tanh"))
        c = width
        if b < adapters:
            layers.append(conv1d(width, width, 1, adapter_activation, adapter=True))
    layers += [conv1d(c, 1, 1, "sigmoid"), flatten()]
    return BaseModel(Network(layers, (in_channels, k_sub)))


def beam_model(n_in, n_out, width=64, blocks=4, adapters=4, adapter_activation="tanh") -> BaseModel:
    """Dense beam predictor with sigmoid outputs (normalized per-beam rates)."""
    layers, c = [], n_in
    for b in range(blocks):
        layers.append(dense(c, width, "tanh"))
        c = width
        if b < adapters:
            layers.append(dense(width, width, adapter_activation, adapter=True))
    layers.append(dense(c, n_out, "sigmoid"))
    return BaseModel(Network(layers, (n_in, 1)))


def ofdm_hypernet(model: BaseModel, embed_channels=8, feat=32, kernel=5) -> HyperNet:
    c_in, k_sub = model.net.input_shape
    embed = Network([conv1d(c_in, embed_channels, kernel, "tanh"), flatten(),
                     dense(embed_channels * k_sub, feat, "tanh")], (c_in, k_sub))
    gens = [Network([dense(feat, 2 * a.channels, "identity")], (feat, 1)) for a in model.adapters]
    return HyperNet(embed, gens, model)


def beam_hypernet(model: BaseModel, hidden=64, feat=32) -> HyperNet:
    n_in = model.net.input_shape[0]
    embed = Network([dense(n_in, hidden, "tanh"), dense(hidden, feat, "tanh")], (n_in, 1))
    gens = [Network([dense(feat, 2 * a.channels, "identity")], (feat, 1)) for a in model.adapters]
    return HyperNet(embed, gens, model)


def paper_ofdm_model(k_sub=72) -> BaseModel:
    return ofdm_model(k_sub, width=128, blocks=5, adapters=3)


def paper_ofdm_hypernet(model: BaseModel) -> HyperNet:
    c_in, k_sub = model.net.input_shape
    embed = Network([conv1d(c_in, 128, 5, "tanh"), conv1d(128, 128, 5, "tanh"),
                     conv1d(128, 64, 5, "tanh"), conv1d(64, 32, 5, "tanh"), flatten(),
                     dense(32 * k_sub, 128, "tanh")], (c_in, k_sub))
    gens = [Network([dense(128, 2 * a.channels, "identity")], (128, 1)) for a in model.adapters]
    return HyperNet(embed, gens, model)


def paper_beam_model(n_in, n_out) -> BaseModel:
    return beam_model(n_in, n_out, width=256, blocks=8, adapters=4)
