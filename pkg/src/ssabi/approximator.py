"""Trainable bundle: posterior flow ``q(theta | h(x))``, optional summary network
``h``, and optional likelihood flow ``q(x^(k) | theta)`` over single data points."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .diffmath import ParamStore, Tape
from .errors import ConfigError
from .flow import ConditionalFlow
from .rng import substream
from .summary import DeepSetSummary, RecurrentSummary


@dataclass
class Architecture:
    param_dim: int
    obs_shape: tuple
    summary: str = "none"          # none | deepset | lstm
    summary_dim: int = 30
    summary_width: int = 64
    lstm_head: tuple = (256, 64)
    flow_layers: int = 5
    flow_hidden: int = 128
    activation: str = "relu"
    dropout: float = 0.05
    clamp: float = 5.0
    transform: str = "affine"
    likelihood: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["obs_shape"] = list(self.obs_shape)
        d["lstm_head"] = list(self.lstm_head)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Architecture":
        d = dict(d)
        d["obs_shape"] = tuple(d["obs_shape"])
        d["lstm_head"] = tuple(d.get("lstm_head", (256, 64)))
        return cls(**d)


class Approximator:
    """Networks sharing one ParamStore.

    Implements the conditional-density interface used by the losses:
    ``log_prob(theta, x)`` and ``sample(n, x, rng)`` for a single observation.
    """

    def __init__(self, arch: Architecture, seed: int = 0, params: ParamStore | None = None):
        self.arch = arch
        self.seed = seed
        store = ParamStore()
        rng = substream(seed, "init")
        obs_shape = tuple(arch.obs_shape)
        if arch.summary == "none":
            self.summary = None
            cond_dim = int(np.prod(obs_shape))
        elif arch.summary == "deepset":
            self.summary = DeepSetSummary(store, "summary", obs_shape[-1], arch.summary_dim,
                                          arch.summary_width, rng=rng)
            cond_dim = arch.summary_dim
        elif arch.summary == "lstm":
            self.summary = RecurrentSummary(store, "summary", obs_shape[-1], arch.summary_width,
                                            tuple(arch.lstm_head), rng=rng)
            cond_dim = self.summary.output_dim
        else:
            raise ConfigError(f"unknown summary network {arch.summary!r}")
        self.posterior = ConditionalFlow(store, "posterior", arch.param_dim, cond_dim,
                                         arch.flow_layers, arch.flow_hidden,
                                         activation=arch.activation, dropout=arch.dropout,
                                         rng=rng, clamp=arch.clamp, transform=arch.transform)
        self.likelihood = None
        if arch.likelihood:
            self.likelihood = ConditionalFlow(store, "likelihood", obs_shape[-1], arch.param_dim,
                                              arch.flow_layers, arch.flow_hidden,
                                              activation=arch.activation, dropout=arch.dropout,
                                              rng=rng, clamp=arch.clamp,
                                              transform=arch.transform)
        if params is not None:
            if params.names() != store.names():
                raise ConfigError("parameter names do not match the architecture")
            for name in store.names():
                store[name] = params[name]
        self.params = store

    def _bind(self, params: ParamStore) -> None:
        """Point every network at ``params`` (same names and shapes)."""
        self.params = params
        for net in (self.summary, self.posterior, self.likelihood):
            if net is None:
                continue
            for obj in _walk(net):
                if hasattr(obj, "store"):
                    obj.store = params

    def snapshot(self) -> "Approximator":
        """Immutable copy for evaluation."""
        other = Approximator(self.arch, self.seed)
        other._bind(self.params.frozen())
        return other

    # conditioning
    def condition(self, x, tape: Tape | None = None):
        x = np.asarray(x, dtype=np.float64)
        if self.summary is None:
            return x.reshape(x.shape[0], -1), None
        return self.summary.forward(x, tape)

    def condition_backward(self, cache, g_c: np.ndarray, tape: Tape) -> None:
        if self.summary is not None:
            self.summary.backward(cache, g_c, tape)

    def _batch(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return x[None] if x.shape == tuple(self.arch.obs_shape) else x

    # conditional-density interface
    def log_prob(self, theta, x) -> np.ndarray:
        c, _ = self.condition(self._batch(x))
        theta = np.atleast_2d(theta)
        return self.posterior.log_prob(theta, np.broadcast_to(c[0], (len(theta), c.shape[1]))
                                       if c.shape[0] == 1 else c)

    def sample(self, n: int, x, rng: np.random.Generator) -> np.ndarray:
        c, _ = self.condition(self._batch(x))
        return self.posterior.sample(n, c[0], rng)

    def sample_batch(self, n: int, x_batch, rng: np.random.Generator) -> np.ndarray:
        """``n`` draws for each observation in the batch, shape ``(B, n, D)``."""
        c, _ = self.condition(x_batch)
        B = c.shape[0]
        y = self.posterior.sample(B * n, np.repeat(c, n, axis=0), rng)
        return y.reshape(B, n, -1)

    def likelihood_density(self) -> "FlowLikelihood":
        if self.likelihood is None:
            raise ConfigError("approximator has no likelihood network")
        return FlowLikelihood(self.likelihood)


class FlowLikelihood:
    """``log q(x | theta) = sum_k log q(x^(k) | theta)`` for one observation."""

    def __init__(self, flow: ConditionalFlow):
        self.flow = flow

    def log_prob(self, x, theta) -> np.ndarray:
        theta = np.atleast_2d(theta)
        x = np.asarray(x, dtype=np.float64)
        L, K = theta.shape[0], x.shape[0]
        lp = self.flow.log_prob(np.tile(x, (L, 1)), np.repeat(theta, K, axis=0))
        return lp.reshape(L, K).sum(axis=1)


def _walk(obj):
    """Yield every object reachable through network containers."""
    seen = set()
    stack = [obj]
    while stack:
        o = stack.pop()
        if id(o) in seen or o is None:
            continue
        seen.add(id(o))
        yield o
        for v in getattr(o, "__dict__", {}).values():
            if isinstance(v, list):
                stack.extend(v)
            elif hasattr(v, "__dict__") and not isinstance(v, (np.ndarray, ParamStore, type)):
                stack.append(v)
