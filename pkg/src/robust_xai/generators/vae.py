"""Variational autoencoder with Monte Carlo dropout in the decoder."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn

from ..data import Dataset
from .base import AROUND, WHOLE, Generator, GeneratorError, as_rng, derive_seed


class VaeNonConvergence(UserWarning):
    pass


@dataclass
class McdVaeParams:
    encoder_widths: list[int] = field(default_factory=lambda: [64])
    latent_dim: int | None = None  # None: max(2, ceil(encoded width / 8))
    decoder_widths: list[int] = field(default_factory=lambda: [64])
    dropout: float = 0.3
    epochs: int = 200
    learning_rate: float = 1e-3
    batch_size: int = 64

    def validate(self):
        if self.latent_dim is not None and self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")


def _mlp(sizes, dropout=0.0, final_act=False):
    layers = []
    for i in range(len(sizes) - 1):
        layers.append(nn.Linear(sizes[i], sizes[i + 1]))
        if i < len(sizes) - 2 or final_act:
            layers.append(nn.ReLU())
            if dropout > 0:
                layers.append(nn.Dropout(dropout))
    return nn.Sequential(*layers)


class _VAE(nn.Module):
    def __init__(self, n_in, params: McdVaeParams, latent):
        super().__init__()
        self.encoder = _mlp([n_in, *params.encoder_widths], final_act=True)
        self.mu = nn.Linear(params.encoder_widths[-1], latent)
        self.logvar = nn.Linear(params.encoder_widths[-1], latent)
        self.decoder = _mlp([latent, *params.decoder_widths, n_in], dropout=params.dropout)

    def encode(self, x):
        h = self.encoder(x)
        return self.mu(h), self.logvar(h)

    def forward(self, x):
        mu, logvar = self.encode(x)
        z = mu + torch.randn_like(mu) * torch.exp(0.5 * logvar)
        return self.decoder(z), mu, logvar


def _loss(recon, x, mu, logvar):
    rec = ((recon - x) ** 2).sum(dim=1).mean()
    kl = (-0.5 * (1 + logvar - mu ** 2 - logvar.exp()).sum(dim=1)).mean()
    return rec + kl, rec


class McdVaeGenerator(Generator):
    """VAE trained on normalized encoded rows.

    Around an instance, its latent code is sampled once and decoded repeatedly
    with dropout active, giving distinct neighbours of the instance.
    """

    name = "mcdvae"
    capabilities = frozenset({WHOLE, AROUND})

    def __init__(self, params: McdVaeParams | None = None, seed: int = 0, mode: str = AROUND):
        super().__init__(mode)
        self.params = params or McdVaeParams()
        self.params.validate()
        self.seed = seed
        self.converged = True

    def _fit(self, ds: Dataset):
        self.norm = ds.normalization
        Z = torch.tensor(self.norm.normalize(ds.X), dtype=torch.float32)
        n_in = Z.shape[1]
        latent = self.params.latent_dim or max(2, math.ceil(n_in / 8))
        self.params.latent_dim = latent
        if len(ds) < 10 * latent:
            raise GeneratorError(f"MCD-VAE needs at least {10 * latent} rows")
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(self.seed)
            self.net = _VAE(n_in, self.params, latent)
            opt = torch.optim.Adam(self.net.parameters(), lr=self.params.learning_rate)
            self.net.eval()
            with torch.no_grad():
                self.initial_error = float(self._reconstruction_error(Z))
            self.net.train()
            history = []
            bs = self.params.batch_size
            for _ in range(self.params.epochs):
                perm = torch.randperm(len(Z))
                total = 0.0
                for s in range(0, len(Z), bs):
                    batch = Z[perm[s:s + bs]]
                    recon, mu, logvar = self.net(batch)
                    loss, _ = _loss(recon, batch, mu, logvar)
                    opt.zero_grad()
                    loss.backward()
                    opt.step()
                    total += float(loss.detach()) * len(batch)
                history.append(total / len(Z))
            self.net.eval()
            with torch.no_grad():
                self.final_error = float(self._reconstruction_error(Z))
        self.history = history
        tail = max(2, len(history) // 5)
        self.converged = len(history) < tail or min(history[-tail:]) < history[-tail]
        if not self.converged:
            warnings.warn("MCD-VAE loss did not decrease over the last epochs", VaeNonConvergence)

    def _reconstruction_error(self, Z):
        mu, _ = self.net.encode(Z)
        return ((self.net.decoder(mu) - Z) ** 2).sum(dim=1).mean()

    def _decode(self, z: torch.Tensor, dropout: bool) -> np.ndarray:
        self.net.decoder.train(dropout)
        with torch.no_grad():
            out = self.net.decoder(z).double().numpy()
        self.net.decoder.eval()
        return self.norm.denormalize(out)

    def generate(self, count, seed=None):
        self._check(WHOLE)
        count = max(int(count), 0)
        if count == 0:
            return self._empty(0)
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(derive_seed(as_rng(seed)))
            z = torch.randn(count, self.params.latent_dim)
            return self._decode(z, dropout=False)

    def generate_around(self, x, count, seed=None):
        self._check(AROUND)
        count = max(int(count), 0)
        if count == 0:
            return self._empty(0)
        xz = torch.tensor(self.norm.normalize(np.asarray(x, dtype=float))[None, :], dtype=torch.float32)
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(derive_seed(as_rng(seed)))
            with torch.no_grad():
                mu, logvar = self.net.encode(xz)
                z = mu + torch.randn_like(mu) * torch.exp(0.5 * logvar)
            return self._decode(z.repeat(count, 1), dropout=True)

    def to_json(self):
        return {
            "name": self.name,
            "mode": self.mode,
            "seed": self.seed,
            "params": asdict(self.params),
            "state": {k: v.tolist() for k, v in self.net.state_dict().items()},
        }

    def load_state(self, n_in, state):
        self.net = _VAE(n_in, self.params, self.params.latent_dim)
        self.net.load_state_dict({k: torch.tensor(v, dtype=torch.float32) for k, v in state.items()})
        self.net.eval()
