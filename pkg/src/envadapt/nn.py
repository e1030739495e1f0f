"""
Small dense / 1-D convolutional networks with hand-written backprop.

Every tensor flowing through a :class:`Network` has shape ``(N, C, S)``:
batch, channels, positions.  A dense layer is a width-1 convolution over
``S == 1``, and ``flatten`` folds ``(C, S)`` into ``(C * S, 1)``.  Layers
flagged ``adapter=True`` accept a per-channel scale ``alpha`` and shift
``beta`` (see :mod:`envadapt.adapters`).

Parameters live in one flat float64 vector; :class:`Layout` maps names to
slices of it.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, NumericError, UsageError

ACTIVATIONS = ("tanh", "sigmoid", "identity")
LOSSES = ("bce", "mse")
BCE_CLAMP = 1e-7


# --------------------------------------------------------------------------
# parameter containers


@dataclass(frozen=True)
class Layout:
    """Ordered ``(name, shape)`` segments of a flat parameter vector."""

    segments: tuple[tuple[str, tuple[int, ...]], ...]

    @functools.cached_property
    def size(self) -> int:
        return int(sum(math.prod(s) for _, s in self.segments))

    @functools.cached_property
    def _offsets(self) -> dict[str, tuple[int, int]]:
        out, pos = {}, 0
        for name, shape in self.segments:
            n = math.prod(shape)
            out[name] = (pos, pos + n)
            pos += n
        return out

    def offsets(self) -> dict[str, tuple[int, int]]:
        return dict(self._offsets)

    def split(self, values: np.ndarray) -> dict[str, np.ndarray]:
        """Views of ``values`` (last axis) reshaped per segment."""
        values = np.asarray(values)
        if values.shape[-1] != self.size:
            raise ConfigurationError(
                f"parameter vector has length {values.shape[-1]}, layout expects {self.size}")
        lead = values.shape[:-1]
        return {name: values[..., a:b].reshape(lead + shape)
                for (name, shape), (a, b) in zip(self.segments, self._offsets.values())}

    def join(self, parts: dict[str, np.ndarray]) -> np.ndarray:
        return np.concatenate([np.asarray(parts[name], dtype=float).ravel()
                               for name, _ in self.segments])

    def concat(self, other: "Layout", prefix: str = "") -> "Layout":
        return Layout(self.segments + tuple((prefix + n, s) for n, s in other.segments))


@dataclass
class ParamVector:
    """A flat real vector together with its segment layout."""

    values: np.ndarray
    layout: Layout

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.size != self.layout.size:
            raise ConfigurationError(
                f"values of shape {self.values.shape} do not match layout size {self.layout.size}")
        if not np.all(np.isfinite(self.values)):
            raise NumericError("parameter vector contains non-finite values")

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return self.values.size

    def segment(self, name: str) -> np.ndarray:
        return self.layout.split(self.values)[name]

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.layout)


# --------------------------------------------------------------------------
# network description


@dataclass(frozen=True)
class Layer:
    kind: str                   # "dense" | "conv1d" | "flatten"
    n_in: int = 0
    n_out: int = 0
    kernel: int = 1
    activation: str = "identity"
    adapter: bool = False

    def __post_init__(self):
        if self.kind not in ("dense", "conv1d", "flatten"):
            raise ConfigurationError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        if self.kind != "flatten":
            if self.n_in < 1 or self.n_out < 1:
                raise ConfigurationError("layer widths must be positive")
            if self.kernel < 1 or self.kernel % 2 == 0:
                raise ConfigurationError("kernel size must be a positive odd integer")
            if self.kind == "dense" and self.kernel != 1:
                raise ConfigurationError("dense layers have kernel 1")


def dense(n_in, n_out, activation="tanh", adapter=False):
    return Layer("dense", n_in, n_out, 1, activation, adapter)


def conv1d(n_in, n_out, kernel=3, activation="tanh", adapter=False):
    return Layer("conv1d", n_in, n_out, kernel, activation, adapter)


def flatten():
    return Layer("flatten")


@dataclass
class Network:
    """A feed-forward stack of layers acting on ``(C, S)`` inputs."""

    layers: Sequence[Layer]
    input_shape: tuple[int, int]
    layout: Layout = field(init=False)
    shapes: list = field(init=False, repr=False)

    def __post_init__(self):
        self.layers = tuple(self.layers)
        self.input_shape = tuple(int(s) for s in self.input_shape)
        c, s = self.input_shape
        shapes, segs = [(c, s)], []
        for j, layer in enumerate(self.layers):
            if layer.kind == "flatten":
                c, s = c * s, 1
            else:
                if layer.n_in != c:
                    raise ConfigurationError(f"layer {j} expects {layer.n_in} channels, receives {c}")
                if layer.kind == "dense" and s != 1:
                    raise ConfigurationError(f"dense layer {j} needs a flattened input")
                segs.append((f"W{j}", (layer.n_out, layer.n_in, layer.kernel)))
                segs.append((f"b{j}", (layer.n_out,)))
                c = layer.n_out
            shapes.append((c, s))
        self.shapes = shapes
        self.layout = Layout(tuple(segs))

    @property
    def output_size(self) -> int:
        c, s = self.shapes[-1]
        return c * s

    @property
    def adapter_layers(self) -> list[int]:
        return [j for j, layer in enumerate(self.layers) if layer.adapter]

    def init_params(self, rng: np.random.Generator) -> ParamVector:
        """Glorot-uniform weights, zero biases."""
        parts = {}
        for j, layer in enumerate(self.layers):
            if layer.kind == "flatten":
                continue
            fan_in, fan_out = layer.n_in * layer.kernel, layer.n_out * layer.kernel
            a = np.sqrt(6.0 / (fan_in + fan_out))
            parts[f"W{j}"] = rng.uniform(-a, a, size=(layer.n_out, layer.n_in, layer.kernel))
            parts[f"b{j}"] = np.zeros(layer.n_out)
        return ParamVector(self.layout.join(parts), self.layout)

    def as_batch(self, x) -> np.ndarray:
        """Coerce one sample or a batch to ``(N, C, S)``."""
        x = np.asarray(x, dtype=np.float64)
        size = self.input_shape[0] * self.input_shape[1]
        if x.ndim == 1 or x.shape == self.input_shape:
            if x.size != size:
                raise ConfigurationError(f"input of size {x.size} does not match {self.input_shape}")
            return x.reshape((1,) + self.input_shape)
        if x[0].size != size:
            raise ConfigurationError(f"input samples of size {x[0].size} do not match {self.input_shape}")
        return x.reshape((x.shape[0],) + self.input_shape)

    # ----------------------------------------------------------------------

    def forward(self, params, x, mod=None, keep=False):
        """Batched forward pass.

        ``mod`` maps adapter layer indices to ``(alpha, beta)`` pairs of shape
        ``(C,)`` or ``(N, C)``.  With ``keep=True`` the intermediate values
        needed by :meth:`backward` are returned as well.
        """
        p = self.layout.split(np.asarray(params, dtype=np.float64))
        h = self.as_batch(x)
        n = h.shape[0]
        tape = []
        for j, layer in enumerate(self.layers):
            if layer.kind == "flatten":
                tape.append((h.shape, None, None))
                h = h.reshape(n, -1, 1)
                continue
            W, b = p[f"W{j}"], p[f"b{j}"]
            cols, lin = _linear(h, W)
            if j in (mod or {}):
                alpha, beta = mod[j]
                alpha = _per_sample(alpha, n, layer.n_out)
                beta = _per_sample(beta, n, layer.n_out)
                z = alpha[:, :, None] * lin + b[None, :, None] + beta[:, :, None]
            else:
                alpha = None
                z = lin + b[None, :, None]
            h = _activate(z, layer.activation)
            if not np.isfinite(h.sum()):  # a NaN or inf anywhere poisons the sum
                raise NumericError("non-finite activation", layer=j)
            tape.append((cols, lin, alpha, h) if keep else None)
        out = h.reshape(n, -1)
        return (out, tape) if keep else out

    def backward(self, params, tape, dout, mod=None, want_input=False):
        """Reverse pass for ``dout = dL/d(output)`` of shape ``(N, n_out)``.

        Returns ``(dparams, dmod, dx)`` where ``dmod`` maps adapter layers to
        per-sample ``(dalpha, dbeta)`` arrays of shape ``(N, C)``.
        """
        p = self.layout.split(np.asarray(params, dtype=np.float64))
        n = dout.shape[0]
        c, s = self.shapes[-1]
        g = dout.reshape(n, c, s)
        grads, dmod = {}, {}
        for j in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[j]
            if layer.kind == "flatten":
                g = g.reshape(tape[j][0])
                continue
            cols, lin, alpha, h = tape[j]
            dz = g * _activation_slope(h, layer.activation)
            if not np.isfinite(dz.sum()):
                raise NumericError("non-finite gradient", layer=j)
            grads[f"b{j}"] = dz.sum(axis=(0, 2))
            if alpha is not None:
                dmod[j] = ((dz * lin).sum(axis=2), dz.sum(axis=2))
                dlin = alpha[:, :, None] * dz
            else:
                dlin = dz
            W = p[f"W{j}"]
            grads[f"W{j}"], g = _linear_backward(cols, dlin, W, need_input=(j > 0 or want_input))
        dparams = self.layout.join(grads)
        return dparams, dmod, (g if want_input else None)


def _per_sample(a, n, c):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        if a.size != c:
            raise ConfigurationError(f"adapter vector of length {a.size}, layer has {c} channels")
        return np.broadcast_to(a, (n, c))
    if a.shape != (n, c):
        raise ConfigurationError(f"per-sample adapter array of shape {a.shape}, expected {(n, c)}")
    return a


def _linear(h, W):
    """Zero-padded 'same' convolution; returns (im2col matrix, output)."""
    n, c, s = h.shape
    o, _, k = W.shape
    if k == 1:
        cols = h.transpose(0, 2, 1).reshape(n * s, c)
    else:
        pad = k // 2
        hp = np.pad(h, ((0, 0), (0, 0), (pad, pad)))
        win = sliding_window_view(hp, k, axis=2)          # (n, c, s, k)
        cols = win.transpose(0, 2, 1, 3).reshape(n * s, c * k)
    lin = (cols @ W.reshape(o, -1).T).reshape(n, s, o).transpose(0, 2, 1)
    return cols, lin


def _linear_backward(cols, dlin, W, need_input=True):
    o, c, k = W.shape
    n, _, s = dlin.shape
    dmat = dlin.transpose(0, 2, 1).reshape(n * s, o)
    dW = (dmat.T @ cols).reshape(o, c, k)
    if not need_input:
        return dW, None
    dcols = dmat @ W.reshape(o, -1)
    if k == 1:
        return dW, dcols.reshape(n, s, c).transpose(0, 2, 1)
    dcols = dcols.reshape(n, s, c, k)
    pad = k // 2
    dhp = np.zeros((n, c, s + 2 * pad))
    for t in range(k):
        dhp[:, :, t:t + s] += dcols[:, :, :, t].transpose(0, 2, 1)
    return dW, dhp[:, :, pad:pad + s]


def _activate(z, kind):
    if kind == "tanh":
        return np.tanh(z)
    if kind == "sigmoid":
        # tanh form never overflows
        return 0.5 + 0.5 * np.tanh(0.5 * z)
    return z


def _activation_slope(h, kind):
    if kind == "tanh":
        return 1.0 - h * h
    if kind == "sigmoid":
        return h * (1.0 - h)
    return 1.0


# --------------------------------------------------------------------------
# losses


def sample_losses(pred, y, loss: str) -> np.ndarray:
    """Per-sample loss: the mean of the elementwise loss over outputs."""
    pred = np.asarray(pred, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(pred.shape)
    if loss == "bce":
        if not np.all(np.isfinite(pred)) or np.any(pred < 0.0) or np.any(pred > 1.0):
            raise NumericError("binary cross-entropy needs predictions in [0, 1]")
        p = np.clip(pred, BCE_CLAMP, 1.0 - BCE_CLAMP)
        el = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    elif loss == "mse":
        el = (pred - y) ** 2
    else:
        raise UsageError(f"loss must be one of {LOSSES}, got {loss!r}")
    return el.reshape(pred.shape[0], -1).mean(axis=1)


def loss_slope(pred, y, loss: str) -> np.ndarray:
    """d(sum of per-sample losses)/d(pred)."""
    pred = np.asarray(pred, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(pred.shape)
    m = pred[0].size
    if loss == "bce":
        inside = (pred > BCE_CLAMP) & (pred < 1.0 - BCE_CLAMP)
        p = np.clip(pred, BCE_CLAMP, 1.0 - BCE_CLAMP)
        return np.where(inside, (p - y) / (p * (1.0 - p)), 0.0) / m
    if loss == "mse":
        return 2.0 * (pred - y) / m
    raise UsageError(f"loss must be one of {LOSSES}, got {loss!r}")


def _unpack_batch(batch):
    if hasattr(batch, "x") and hasattr(batch, "y"):
        x, y = batch.x, batch.y
    else:
        x, y = batch
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if len(x) == 0:
        raise UsageError("batch is empty")
    return x, y


# --------------------------------------------------------------------------
# module-level operations


def forward(net: Network, params, x) -> np.ndarray:
    """Network output for one sample (1-D result) or a batch (2-D result)."""
    xb = net.as_batch(x)
    out = net.forward(params, xb)
    single = np.asarray(x).ndim == 1 or np.asarray(x).shape == net.input_shape
    return out[0] if single else out


def loss_eval(net: Network, params, batch, loss: str) -> float:
    """Summed loss over the batch."""
    x, y = _unpack_batch(batch)
    return float(sample_losses(net.forward(params, x), y, loss).sum())


def loss_and_grad(net: Network, params, batch, loss: str) -> tuple[float, np.ndarray]:
    x, y = _unpack_batch(batch)
    out, tape = net.forward(params, x, keep=True)
    value = float(sample_losses(out, y, loss).sum())
    dparams, _, _ = net.backward(params, tape, loss_slope(out, y, loss))
    return value, dparams


def grad(net: Network, params, batch, loss: str) -> ParamVector:
    """Gradient of the summed batch loss, in the layout of ``params``."""
    _, g = loss_and_grad(net, params, batch, loss)
    return ParamVector(g, net.layout)


def central_diff(f: Callable[[np.ndarray], float], x, step: float = 1e-5) -> np.ndarray:
    """Coordinate-wise central-difference gradient of a scalar function."""
    if step <= 0:
        raise UsageError("finite-difference step must be positive")
    x = np.array(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        xi = x.flat[i]
        x.flat[i] = xi + step
        fp = f(x)
        x.flat[i] = xi - step
        fm = f(x)
        x.flat[i] = xi
        g.flat[i] = (fp - fm) / (2.0 * step)
    return g


def finite_diff(net: Network, params, batch, loss: str, step: float = 1e-5) -> ParamVector:
    """Central-difference estimate of :func:`grad`."""
    g = central_diff(lambda p: loss_eval(net, p, batch, loss), np.asarray(params), step)
    return ParamVector(g, net.layout)


def relative_error(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-30)
    return float(np.linalg.norm(a - b) / scale)
