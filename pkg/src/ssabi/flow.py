"""Conditional affine-coupling flow ``q(y | c)`` over a standard-normal base.

Direction convention: ``forward`` maps data ``y`` to latent ``z`` and returns
``log|det dz/dy|``; ``inverse`` maps latent draws back to data space.

Each coupling layer transforms the coordinates at even positions of its input
(``ceil(dim/2)`` of them) conditioned on the remaining ones and on ``c``.
Between layers the coordinates are reversed; for odd ``dim`` the reversal is
followed by a rotation by one so that every coordinate is eventually active.
"""
from __future__ import annotations

import numpy as np

from .diffmath import MLP, ParamStore, Tape
from .errors import ConfigError, NumericalError

LOG_2PI = float(np.log(2.0 * np.pi))


def between_layer_permutation(dim: int) -> np.ndarray:
    perm = np.arange(dim)[::-1]
    if dim % 2 == 1 and dim > 1:
        perm = np.roll(perm, 1)
    return perm.copy()


class AffineCoupling:
    def __init__(self, store: ParamStore, name: str, dim: int, cond_dim: int,
                 hidden: list[int], activation: str, dropout: float,
                 rng: np.random.Generator, clamp: float = 5.0):
        self.dim = dim
        self.active = np.arange(0, dim, 2)
        self.passive = np.arange(1, dim, 2)
        self.n_active = len(self.active)
        self.clamp = clamp
        self.net = MLP(store, name, len(self.passive) + cond_dim, hidden,
                       2 * self.n_active, activation=activation, dropout=dropout,
                       rng=rng, zero_output=True)

    def _params(self, passive: np.ndarray, c: np.ndarray, tape):
        inp = np.concatenate([passive, c], axis=1) if passive.shape[1] else c
        out, net_cache = self.net.forward(inp, tape)
        raw = out[:, :self.n_active]
        shift = out[:, self.n_active:]
        th = np.tanh(raw / self.clamp)
        log_scale = self.clamp * th
        return log_scale, shift, th, net_cache

    def forward(self, y: np.ndarray, c: np.ndarray, tape: Tape | None = None):
        a = y[:, self.active]
        p = y[:, self.passive]
        log_scale, shift, th, net_cache = self._params(p, c, tape)
        scale = np.exp(log_scale)
        z = np.empty_like(y)
        z[:, self.active] = a * scale + shift
        z[:, self.passive] = p
        logdet = log_scale.sum(axis=1)
        return z, logdet, (a, scale, th, net_cache, p.shape[1])

    def backward(self, cache, g_z: np.ndarray, g_logdet: np.ndarray, tape: Tape):
        a, scale, th, net_cache, n_passive = cache
        g_za = g_z[:, self.active]
        g_a = g_za * scale
        g_log_scale = g_za * a * scale + g_logdet[:, None]
        g_raw = g_log_scale * (1.0 - th * th)
        g_in = self.net.backward(net_cache, np.concatenate([g_raw, g_za], axis=1), tape)
        g_y = np.empty_like(g_z)
        g_y[:, self.active] = g_a
        g_y[:, self.passive] = g_z[:, self.passive] + g_in[:, :n_passive]
        return g_y, g_in[:, n_passive:]

    def inverse(self, z: np.ndarray, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        p = z[:, self.passive]
        log_scale, shift, _, _ = self._params(p, c, None)
        y = np.empty_like(z)
        y[:, self.active] = (z[:, self.active] - shift) * np.exp(-log_scale)
        y[:, self.passive] = p
        return y, -log_scale.sum(axis=1)


class ConditionalFlow:
    """Stack of affine couplings with fixed permutations over ``N(0, I)``."""

    def __init__(self, store: ParamStore, name: str, dim: int, cond_dim: int,
                 n_layers: int = 5, hidden: int = 128, n_hidden: int = 2,
                 activation: str = "relu", dropout: float = 0.05,
                 rng: np.random.Generator | None = None, clamp: float = 5.0,
                 transform: str = "affine"):
        if transform != "affine":
            raise ConfigError(f"unsupported transform_kind {transform!r}; only 'affine' is built")
        if dim < 1 or cond_dim < 0 or n_layers < 1:
            raise ConfigError("flow needs dim >= 1, cond_dim >= 0, n_layers >= 1")
        if dim == 1 and cond_dim == 0:
            raise ConfigError("a one-dimensional flow needs a condition")
        self.dim, self.cond_dim = dim, cond_dim
        self.transform_kind = transform
        self.layers = [
            AffineCoupling(store, f"{name}.c{i}", dim, cond_dim, [hidden] * n_hidden,
                           activation, dropout, rng, clamp)
            for i in range(n_layers)
        ]
        self.perm = between_layer_permutation(dim)
        self.inv_perm = np.argsort(self.perm)

    def _check(self, y: np.ndarray, c: np.ndarray):
        y = np.atleast_2d(np.asarray(y, dtype=np.float64))
        c = np.asarray(c, dtype=np.float64)
        if c.ndim == 1:
            c = np.broadcast_to(c, (y.shape[0], c.shape[0]))
        if y.shape[1] != self.dim or c.shape != (y.shape[0], self.cond_dim):
            raise ConfigError(f"flow expects y (n,{self.dim}) and c (n,{self.cond_dim}); "
                              f"got {y.shape} and {c.shape}")
        return y, c

    def forward(self, y, c, tape: Tape | None = None):
        """Return ``(z, logdet, cache)``."""
        y, c = self._check(y, c)
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(c))):
            raise NumericalError("non-finite input to flow forward")
        caches = []
        logdet = np.zeros(y.shape[0])
        u = y
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            u, ld, cache = layer.forward(u, c, tape)
            logdet = logdet + ld
            caches.append(cache)
            if i < last:
                u = u[:, self.perm]
        return u, logdet, caches

    def backward(self, caches, g_z: np.ndarray, g_logdet: np.ndarray, tape: Tape):
        """Return ``(g_y, g_c)``."""
        g_u = g_z
        g_c = None
        last = len(self.layers) - 1
        for i in range(last, -1, -1):
            if i < last:
                g_u = g_u[:, self.inv_perm]
            g_u, gc = self.layers[i].backward(caches[i], g_u, g_logdet, tape)
            g_c = gc if g_c is None else g_c + gc
        return g_u, g_c

    def inverse(self, z, c) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(y, logdet)`` with ``logdet = log|det dy/dz|``."""
        z, c = self._check(z, c)
        logdet = np.zeros(z.shape[0])
        u = z
        for i in range(len(self.layers) - 1, -1, -1):
            u, ld = self.layers[i].inverse(u, c)
            logdet = logdet + ld
            if i > 0:
                u = u[:, self.inv_perm]
        return u, logdet

    def log_prob_with_cache(self, y, c, tape: Tape | None = None):
        z, logdet, caches = self.forward(y, c, tape)
        lp = -0.5 * np.sum(z * z, axis=1) - 0.5 * self.dim * LOG_2PI + logdet
        return lp, (z, caches)

    def log_prob_backward(self, cache, g_lp: np.ndarray, tape: Tape):
        z, caches = cache
        return self.backward(caches, -z * g_lp[:, None], g_lp, tape)

    def log_prob(self, y, c) -> np.ndarray:
        lp, _ = self.log_prob_with_cache(y, c)
        return lp

    def sample(self, n: int, c, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` samples for one condition vector, or one per row of ``c``."""
        if n < 1:
            raise ConfigError("sample count must be >= 1")
        c = np.asarray(c, dtype=np.float64)
        if c.ndim == 1:
            c = np.broadcast_to(c, (n, self.cond_dim))
        z = rng.standard_normal((c.shape[0], self.dim))
        y, _ = self.inverse(z, c)
        return y
