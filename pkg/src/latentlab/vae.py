"""Variational autoencoder: encoder with (mu, logvar) heads, sampling, loss, training.

The encoder trunk feeds two parallel linear heads producing mu and log-variance;
the decoder ends in a sigmoid so pixels land in [0, 1]. Reconstruction loss is
per-pixel binary cross-entropy summed over the image; the KL term regularizes
each posterior toward the standard normal prior.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import NumericalError, ParseError, ShapeError, ValidationError


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0
    kl_weight: float = 1.0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.kl_weight < 0:
            raise ValidationError(f"kl_weight must be >= 0, got {self.kl_weight}")


class VaeModel:
    """Dense VAE over flattened images with a d_z-wide bottleneck."""

    def __init__(self, encoder, mu_head, logvar_head, decoder, image_dims, d_z):
        flat = int(np.prod(image_dims))
        if encoder.in_dim != flat or decoder.out_dim != flat:
            raise ShapeError(
                f"coder width {encoder.in_dim}/{decoder.out_dim} does not match "
                f"image dims {image_dims} ({flat} pixels)"
            )
        if mu_head.out_dim != d_z or logvar_head.out_dim != d_z:
            raise ShapeError(
                f"head widths {mu_head.out_dim}/{logvar_head.out_dim} "
                f"do not match d_z={d_z}"
            )
        if d_z < 1:
            raise ValidationError(f"d_z must be >= 1, got {d_z}")
        self.encoder = encoder
        self.mu_head = mu_head
        self.logvar_head = logvar_head
        self.decoder = decoder
        self.image_dims = tuple(int(d) for d in image_dims)
        self.d_z = int(d_z)

    @classmethod
    def create(cls, image_dims=(32, 32, 3), d_z=16, hidden=(512, 128), seed=0):
        """Fresh model with Glorot-init dense layers, relu hidden activations."""
        rng = np.random.default_rng(seed)
        flat = int(np.prod(image_dims))
        dims = (flat, *hidden)
        enc_layers = [
            nn.DenseLayer.create(dims[i], dims[i + 1], "relu", rng)
            for i in range(len(dims) - 1)
        ]
        encoder = nn.LayerStack("enc", enc_layers)
        mu_head = nn.LayerStack(
            "mu", [nn.DenseLayer.create(dims[-1], d_z, "linear", rng)]
        )
        logvar_head = nn.LayerStack(
            "logvar", [nn.DenseLayer.create(dims[-1], d_z, "linear", rng)]
        )
        rev = (d_z, *reversed(hidden))
        dec_layers = [
            nn.DenseLayer.create(rev[i], rev[i + 1], "relu", rng)
            for i in range(len(rev) - 1)
        ]
        dec_layers.append(nn.DenseLayer.create(rev[-1], flat, "sigmoid", rng))
        decoder = nn.LayerStack("dec", dec_layers)
        return cls(encoder, mu_head, logvar_head, decoder, image_dims, d_z)

    @property
    def flat_dim(self):
        return int(np.prod(self.image_dims))

    def parameters(self):
        out = {}
        for stack in (self.encoder, self.mu_head, self.logvar_head, self.decoder):
            out.update(stack.parameters())
        return out

    def flatten_image(self, image):
        arr = np.asarray(image, dtype=float)
        if arr.shape == self.image_dims:
            return arr.reshape(-1)
        if arr.ndim == 1 and arr.shape[0] == self.flat_dim:
            return arr
        raise ShapeError(
            f"image of shape {arr.shape}, model expects {self.image_dims} "
            f"({self.flat_dim} pixels)"
        )

    def encode(self, image):
        x = self.flatten_image(image)
        h = self.encoder.forward(x)
        return self.mu_head.forward(h), self.logvar_head.forward(h)

    def encode_batch(self, images):
        """images: (n, flat_dim) rows; returns (mu, logvar) each (n, d_z)."""
        x = np.asarray(images, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.flat_dim:
            raise ShapeError(
                f"batch of shape {x.shape}, model expects (n, {self.flat_dim})"
            )
        h = self.encoder.forward(x)
        return self.mu_head.forward(h), self.logvar_head.forward(h)

    def decode(self, z):
        z = np.asarray(z, dtype=float)
        if z.shape != (self.d_z,):
            raise ShapeError(f"z of shape {z.shape}, model expects ({self.d_z},)")
        return self.decoder.forward(z).reshape(self.image_dims)

    def decode_preactivation(self, z):
        """Decoder output before the final sigmoid (stable loss path)."""
        h = np.asarray(z, dtype=float)
        for layer in self.decoder.layers[:-1]:
            h = nn.forward(layer, h)
        last = self.decoder.layers[-1]
        return h @ last.weights.T + last.bias

    def named_layers(self):
        pairs = [("encoder", l) for l in self.encoder.layers]
        pairs += [("mu_head", l) for l in self.mu_head.layers]
        pairs += [("logvar_head", l) for l in self.logvar_head.layers]
        pairs += [("decoder", l) for l in self.decoder.layers]
        return pairs


def encode(model, image):
    """(mu, logvar) posterior parameters for one image."""
    return model.encode(image)


def decode(model, z):
    """Decoded image of the model's configured dims, pixels in [0, 1]."""
    return model.decode(z)


def reparameterize(mu, logvar, epsilon):
    """z = mu + exp(0.5 * logvar) * epsilon, elementwise."""
    mu = np.asarray(mu, dtype=float)
    logvar = np.asarray(logvar, dtype=float)
    epsilon = np.asarray(epsilon, dtype=float)
    if not (mu.shape == logvar.shape == epsilon.shape):
        raise ShapeError(
            f"mu/logvar/epsilon shapes differ: {mu.shape}, {logvar.shape}, "
            f"{epsilon.shape}"
        )
    return mu + np.exp(0.5 * logvar) * epsilon


def kl_divergence(mu, logvar):
    """KL(N(mu, exp(logvar)) || N(0, 1)), summed over dimensions. Always >= 0."""
    mu = np.asarray(mu, dtype=float)
    logvar = np.asarray(logvar, dtype=float)
    val = -0.5 * float(np.sum(1.0 + logvar - mu * mu - np.exp(logvar)))
    return val if val > 0.0 else 0.0


def _validate_pixels(x):
    if x.size and (x.min() < 0.0 or x.max() > 1.0):
        raise ValidationError(
            f"pixels outside [0, 1]: min={x.min():.6g}, max={x.max():.6g}"
        )


def loss(model, image, epsilon, kl_weight=1.0):
    """(total, recon, kl) for one image with an externally supplied epsilon.

    recon is binary cross-entropy summed over pixels; total = recon +
    kl_weight * kl.
    """
    x = model.flatten_image(image)
    _validate_pixels(x)
    mu, logvar = model.encode(x)
    z = reparameterize(mu, logvar, epsilon)
    pre = model.decode_preactivation(z)
    recon = float(np.sum(np.logaddexp(0.0, pre) - x * pre))
    kl = kl_divergence(mu, logvar)
    total = recon + kl_weight * kl
    if not np.isfinite(total):
        raise NumericalError(f"non-finite loss: recon={recon}, kl={kl}")
    return total, recon, kl


def _batch_loss_and_grad(model, batch, eps, kl_weight, tape):
    """Mean per-item loss terms over a batch plus gradients accumulated in tape."""
    n = batch.shape[0]
    h = model.encoder.forward(batch, record=True)
    mu = model.mu_head.forward(h, record=True)
    logvar = model.logvar_head.forward(h, record=True)
    sigma = np.exp(0.5 * logvar)
    z = mu + sigma * eps
    post = model.decoder.forward(z, record=True)
    pre = model.decoder.last_preactivation()

    recon_each = np.sum(np.logaddexp(0.0, pre) - batch * pre, axis=1)
    kl_each = -0.5 * np.sum(1.0 + logvar - mu * mu - np.exp(logvar), axis=1)
    total_each = recon_each + kl_weight * kl_each

    g_pre = (post - batch) / n
    g_z = model.decoder.backward(g_pre, tape, from_preactivation=True)
    g_mu = g_z + kl_weight * mu / n
    g_logvar = g_z * eps * (0.5 * sigma) + kl_weight * 0.5 * (np.exp(logvar) - 1.0) / n
    g_h = model.mu_head.backward(g_mu, tape) + model.logvar_head.backward(
        g_logvar, tape
    )
    model.encoder.backward(g_h, tape)
    return (
        float(total_each.mean()),
        float(recon_each.mean()),
        float(kl_each.mean()),
    )


def loss_and_grad(model, image, epsilon, kl_weight=1.0):
    """Loss terms plus a gradient tape over all parameters, epsilon held fixed."""
    x = model.flatten_image(image)
    _validate_pixels(x)
    eps = np.asarray(epsilon, dtype=float)
    if eps.shape != (model.d_z,):
        raise ShapeError(f"epsilon of shape {eps.shape}, expected ({model.d_z},)")
    tape = nn.GradientTape(model.parameters())
    total, recon, kl = _batch_loss_and_grad(
        model, x[None, :], eps[None, :], kl_weight, tape
    )
    return total, recon, kl, tape


def train(model, images, config, log=None):
    """Adam training loop over flattened images.

    images: anything reshapeable to (n, flat_dim) with pixels in [0, 1].
    Fresh epsilon is sampled per item per step from a generator seeded with
    config.seed, so a seeded run is bit-reproducible. Returns (model, trace)
    where trace rows are (epoch, recon, kl, total) means per item.
    """
    data = np.asarray(images, dtype=float)
    if data.size == 0:
        raise ValidationError("dataset is empty")
    data = data.reshape(data.shape[0], -1)
    if data.shape[1] != model.flat_dim:
        raise ShapeError(
            f"dataset items have {data.shape[1]} pixels, model expects "
            f"{model.flat_dim}"
        )
    _validate_pixels(data)
    rng = np.random.default_rng(config.seed)
    params = model.parameters()
    optimizer = nn.Adam(params, nn.AdamConfig(learning_rate=config.learning_rate))
    tape = nn.GradientTape(params)
    trace = []
    n = data.shape[0]
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        sums = np.zeros(3)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            batch = data[idx]
            eps = rng.standard_normal((len(idx), model.d_z))
            tape.zero()
            total, recon, kl = _batch_loss_and_grad(
                model, batch, eps, config.kl_weight, tape
            )
            if not np.isfinite(total):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch}, "
                    f"batch {start // config.batch_size}"
                )
            optimizer.step(params, tape)
            sums += (
                total * len(idx),
                recon * len(idx),
                kl * len(idx),
            )
        epoch_total, epoch_recon, epoch_kl = (float(s) / n for s in sums)
        trace.append((epoch, epoch_recon, epoch_kl, epoch_total))
        if log is not None:
            log(f"{epoch}\t{epoch_recon:.6f}\t{epoch_kl:.6f}\t{epoch_total:.6f}")
    return model, trace


_ROLES = ("encoder", "mu_head", "logvar_head", "decoder")


def save_model(path, model):
    """Write the model to the versioned checkpoint format (float32 blob)."""
    nn.write_checkpoint(path, model.d_z, model.image_dims, model.named_layers())


def load_model(path):
    d_z, image_dims, named = nn.read_checkpoint(path)
    groups = {role: [] for role in _ROLES}
    for role, layer in named:
        if role not in groups:
            raise ParseError(f"{path}: unknown layer role {role!r} in checkpoint")
        groups[role].append(layer)
    for role in _ROLES:
        if not groups[role]:
            raise ParseError(f"{path}: checkpoint has no {role} layers")
    return VaeModel(
        nn.LayerStack("enc", groups["encoder"]),
        nn.LayerStack("mu", groups["mu_head"]),
        nn.LayerStack("logvar", groups["logvar_head"]),
        nn.LayerStack("dec", groups["decoder"]),
        image_dims,
        d_z,
    )
