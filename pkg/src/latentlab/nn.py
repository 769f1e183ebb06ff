"""Minimal dense-network substrate: layers, manual backprop, Adam, gradient checking.

Everything runs on float64 numpy arrays. Checkpoints store parameters as
little-endian float32, so a save/load round trip quantizes weights to
float32 precision.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NumericalError, ParseError, ShapeError, StateError, ValidationError

ACTIVATIONS = ("linear", "relu", "sigmoid")

CHECKPOINT_MAGIC = b"LLNN1"


def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    """Numerically stable logistic function (no overflow for large |x|)."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def apply_activation(name, x):
    if name == "linear":
        return x
    if name == "relu":
        return relu(x)
    if name == "sigmoid":
        return sigmoid(x)
    raise ValidationError(f"unknown activation {name!r}, expected one of {ACTIVATIONS}")


def activation_gradient(name, pre, post):
    """d activation / d pre-activation, given both sides of the nonlinearity."""
    if name == "linear":
        return np.ones_like(pre)
    if name == "relu":
        return (pre > 0).astype(float)
    if name == "sigmoid":
        return post * (1.0 - post)
    raise ValidationError(f"unknown activation {name!r}, expected one of {ACTIVATIONS}")


@dataclass
class DenseLayer:
    """Fully connected layer computing activation(weights @ x + bias)."""

    weights: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)
    activation: str = "linear"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise ShapeError(
                f"weights must be 2-d and bias 1-d, got shapes "
                f"{self.weights.shape} and {self.bias.shape}"
            )
        if self.weights.shape[0] != self.bias.shape[0]:
            raise ShapeError(
                f"bias length {self.bias.shape[0]} does not match "
                f"weight rows {self.weights.shape[0]}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValidationError(
                f"unknown activation {self.activation!r}, expected one of {ACTIVATIONS}"
            )

    @property
    def in_dim(self):
        return self.weights.shape[1]

    @property
    def out_dim(self):
        return self.weights.shape[0]

    @classmethod
    def create(cls, in_dim, out_dim, activation="linear", rng=None):
        """Glorot-uniform weights in +/- sqrt(6/(in+out)), zero bias."""
        rng = np.random.default_rng() if rng is None else rng
        limit = np.sqrt(6.0 / (in_dim + out_dim))
        weights = rng.uniform(-limit, limit, size=(out_dim, in_dim))
        return cls(weights, np.zeros(out_dim), activation)


def forward(layer, x):
    """Apply a dense layer to a vector or a batch of row vectors."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != layer.in_dim:
        raise ShapeError(
            f"input of length {x.shape[-1]} fed to layer expecting {layer.in_dim}"
        )
    return apply_activation(layer.activation, x @ layer.weights.T + layer.bias)


class GradientTape:
    """Per-parameter gradient buffers keyed like a parameter dict."""

    def __init__(self, parameters):
        self.grads = {name: np.zeros_like(p) for name, p in parameters.items()}

    def accumulate(self, name, grad):
        buf = self.grads[name]
        if grad.shape != buf.shape:
            raise ShapeError(
                f"gradient shape {grad.shape} does not match parameter "
                f"{name!r} shape {buf.shape}"
            )
        buf += grad

    def zero(self):
        for g in self.grads.values():
            g[...] = 0.0


class LayerStack:
    """Feed-forward stack of dense layers with optional recorded activations.

    forward(record=False) is pure and safe to call concurrently on frozen
    parameters; record=True stashes per-layer activations for one backward
    pass and is intended for single-threaded training.
    """

    def __init__(self, name, layers):
        self.name = name
        self.layers = list(layers)
        self._trace = None

    def __len__(self):
        return len(self.layers)

    @property
    def in_dim(self):
        return self.layers[0].in_dim

    @property
    def out_dim(self):
        return self.layers[-1].out_dim

    def parameters(self):
        out = {}
        for i, layer in enumerate(self.layers):
            out[f"{self.name}.{i}.w"] = layer.weights
            out[f"{self.name}.{i}.b"] = layer.bias
        return out

    def forward(self, x, record=False):
        x = np.asarray(x, dtype=float)
        trace = [] if record else None
        for layer in self.layers:
            if x.shape[-1] != layer.in_dim:
                raise ShapeError(
                    f"input of length {x.shape[-1]} fed to layer expecting "
                    f"{layer.in_dim} in stack {self.name!r}"
                )
            pre = x @ layer.weights.T + layer.bias
            post = apply_activation(layer.activation, pre)
            if record:
                trace.append((x, pre, post))
            x = post
        if record:
            self._trace = trace
        return x

    def last_preactivation(self):
        """Pre-activation of the final layer from the last recorded forward."""
        if self._trace is None:
            raise StateError(f"no recorded forward pass on stack {self.name!r}")
        return self._trace[-1][1]

    def backward(self, grad_out, tape, from_preactivation=False):
        """Backprop grad_out through the recorded pass; returns grad w.r.t. input.

        With from_preactivation=True, grad_out is taken w.r.t. the last
        layer's pre-activation (the stable path for cross-entropy losses).
        Parameter gradients accumulate into tape.
        """
        if self._trace is None:
            raise StateError(
                f"backward on stack {self.name!r} without a recorded forward pass"
            )
        grad = np.asarray(grad_out, dtype=float)
        last = len(self.layers) - 1
        for i in range(last, -1, -1):
            layer = self.layers[i]
            x_in, pre, post = self._trace[i]
            if i == last and from_preactivation:
                g_pre = grad
            else:
                g_pre = grad * activation_gradient(layer.activation, pre, post)
            if g_pre.ndim == 1:
                tape.accumulate(f"{self.name}.{i}.w", np.outer(g_pre, x_in))
                tape.accumulate(f"{self.name}.{i}.b", g_pre)
            else:
                tape.accumulate(f"{self.name}.{i}.w", g_pre.T @ x_in)
                tape.accumulate(f"{self.name}.{i}.b", g_pre.sum(axis=0))
            grad = g_pre @ layer.weights
        return grad


def backward(stack, upstream_gradient, tape=None):
    """Backward pass over a stack's recorded forward; returns the gradient tape."""
    if tape is None:
        tape = GradientTape(stack.parameters())
    stack.backward(upstream_gradient, tape)
    return tape


@dataclass
class AdamConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class Adam:
    """Adam with bias correction; moment buffers keyed like the parameter dict."""

    def __init__(self, parameters, config=None):
        self.config = config if config is not None else AdamConfig()
        self.step_count = 0
        self._m = {name: np.zeros_like(p) for name, p in parameters.items()}
        self._v = {name: np.zeros_like(p) for name, p in parameters.items()}

    def step(self, parameters, tape):
        """One in-place update of every parameter from the tape's gradients."""
        self.step_count += 1
        c = self.config
        bc1 = 1.0 - c.beta1 ** self.step_count
        bc2 = 1.0 - c.beta2 ** self.step_count
        for name, p in parameters.items():
            g = tape.grads[name]
            if not np.all(np.isfinite(g)):
                raise NumericalError(f"non-finite gradient for parameter {name!r}")
            m = self._m[name]
            v = self._v[name]
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            p -= c.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + c.eps)


def optimizer_step(parameters, tape, optimizer):
    """Apply one optimizer update in place; returns the parameter dict."""
    optimizer.step(parameters, tape)
    return parameters


def finite_difference_check(
    loss_fn: Callable[[], float],
    grad_fn: Callable[[], GradientTape],
    parameters,
    step=1e-5,
):
    """Compare analytic gradients against central finite differences.

    loss_fn evaluates the loss at the current parameter values and must be
    deterministic (hold any sampling fixed). grad_fn returns a tape of
    analytic gradients at the same point. Returns the max over all parameter
    entries of |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
    """
    if step <= 0:
        raise ValidationError(f"step must be positive, got {step}")
    tape = grad_fn()
    worst = 0.0
    for name, p in parameters.items():
        flat = p.reshape(-1)
        analytic = tape.grads[name].reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + step
            hi = float(loss_fn())
            flat[i] = saved - step
            lo = float(loss_fn())
            flat[i] = saved
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise NumericalError(
                    f"non-finite loss while perturbing {name!r}[{i}]"
                )
            numeric = (hi - lo) / (2.0 * step)
            a = analytic[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-12)
            if err > worst:
                worst = err
    return worst


# Checkpoint format: magic, u32 d_z, u32 H, u32 W, u32 C, u32 layer count,
# then per layer (u8 role-name length, role bytes, u32 in, u32 out, u8
# activation tag), then all parameters as little-endian float32 (weights
# row-major, then bias, in declared layer order).

_ACT_TAGS = {name: i for i, name in enumerate(ACTIVATIONS)}


def checkpoint_bytes(d_z, image_dims, named_layers):
    """Serialize (role, DenseLayer) pairs plus model metadata to bytes."""
    h, w, c = image_dims
    out = [CHECKPOINT_MAGIC, struct.pack("<5I", d_z, h, w, c, len(named_layers))]
    for role, layer in named_layers:
        role_b = role.encode("ascii")
        out.append(struct.pack("<B", len(role_b)))
        out.append(role_b)
        out.append(
            struct.pack(
                "<IIB", layer.in_dim, layer.out_dim, _ACT_TAGS[layer.activation]
            )
        )
    for _, layer in named_layers:
        out.append(layer.weights.astype("<f4").tobytes())
        out.append(layer.bias.astype("<f4").tobytes())
    return b"".join(out)


def write_checkpoint(path, d_z, image_dims, named_layers):
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(d_z, image_dims, named_layers))


def read_checkpoint(path):
    """Load a checkpoint; returns (d_z, image_dims, [(role, DenseLayer), ...])."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ParseError(f"{path}: not a checkpoint file (bad magic)")
    pos = len(CHECKPOINT_MAGIC)
    try:
        d_z, h, w, c, n_layers = struct.unpack_from("<5I", data, pos)
        pos += 20
        headers = []
        for _ in range(n_layers):
            (role_len,) = struct.unpack_from("<B", data, pos)
            pos += 1
            role = data[pos : pos + role_len].decode("ascii")
            pos += role_len
            in_dim, out_dim, act_tag = struct.unpack_from("<IIB", data, pos)
            pos += 9
            headers.append((role, in_dim, out_dim, act_tag))
    except (struct.error, UnicodeDecodeError) as exc:
        raise ParseError(f"{path}: truncated or corrupt checkpoint header: {exc}")
    layers = []
    for idx, (role, in_dim, out_dim, act_tag) in enumerate(headers):
        if act_tag >= len(ACTIVATIONS):
            raise ParseError(f"{path}: layer {idx}: unknown activation tag {act_tag}")
        n_w = in_dim * out_dim
        need = (n_w + out_dim) * 4
        if pos + need > len(data):
            raise ParseError(
                f"{path}: layer {idx}: parameter blob truncated "
                f"(need {need} bytes, have {len(data) - pos})"
            )
        weights = (
            np.frombuffer(data, dtype="<f4", count=n_w, offset=pos)
            .astype(float)
            .reshape(out_dim, in_dim)
        )
        pos += n_w * 4
        bias = np.frombuffer(data, dtype="<f4", count=out_dim, offset=pos).astype(float)
        pos += out_dim * 4
        layers.append((role, DenseLayer(weights, bias, ACTIVATIONS[act_tag])))
    return d_z, (h, w, c), layers
