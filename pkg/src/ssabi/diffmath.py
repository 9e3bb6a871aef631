"""Small differentiable-computation kernel.

Gradients are hand-written per composite block (dense layer, MLP, coupling
transform, loss).  Each block exposes ``forward(..., tape) -> (out, cache)`` and
``backward(cache, grad_out, tape) -> grad_in``; parameter gradients accumulate
into ``tape.grads``.  Everything runs in float64.
"""
from __future__ import annotations

from typing import Callable, Iterator

import numpy as np

from .errors import ConfigError, NumericalError

ACTIVATIONS = ("relu", "elu", "tanh", "sigmoid", "identity")


class ParamStore:
    """Flat named collection of float64 parameter arrays.

    ``decay`` marks entries subject to L2 regularization (weight matrices, not
    biases).  Shapes are fixed at creation.
    """

    def __init__(self):
        self._values: dict[str, np.ndarray] = {}
        self._decay: dict[str, bool] = {}

    def add(self, name: str, value, decay: bool = True) -> np.ndarray:
        if name in self._values:
            raise ConfigError(f"duplicate parameter name {name!r}")
        arr = np.array(value, dtype=np.float64, copy=True)
        self._values[name] = arr
        self._decay[name] = bool(decay)
        return arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self._values[name]

    def __setitem__(self, name: str, value) -> None:
        arr = np.asarray(value, dtype=np.float64)
        if arr.shape != self._values[name].shape:
            raise ConfigError(
                f"shape mismatch for {name!r}: {arr.shape} != {self._values[name].shape}"
            )
        self._values[name] = arr.copy()

    def __contains__(self, name: str) -> bool:
        return name in self._values

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def names(self) -> list[str]:
        return list(self._values)

    def items(self):
        return self._values.items()

    def decays(self, name: str) -> bool:
        return self._decay[name]

    @property
    def total_dim(self) -> int:
        return int(sum(v.size for v in self._values.values()))

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self._values.items()}

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for k, v in self._values.items():
            out.add(k, v, decay=self._decay[k])
        return out

    def frozen(self) -> "ParamStore":
        """Copy whose arrays are read-only; safe to share between readers."""
        out = self.copy()
        for v in out._values.values():
            v.setflags(write=False)
        return out

    def flatten(self) -> np.ndarray:
        if not self._values:
            return np.zeros(0)
        return np.concatenate([v.ravel() for v in self._values.values()])

    def assign_flat(self, flat: np.ndarray) -> None:
        pos = 0
        for k, v in self._values.items():
            n = v.size
            self._values[k] = np.asarray(flat[pos:pos + n], dtype=np.float64).reshape(v.shape).copy()
            pos += n

    def all_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self._values.values())


class Tape:
    """Gradient buffer plus a log of the operations evaluated in one forward pass.

    ``training`` switches dropout on; ``rng`` supplies dropout masks.
    """

    def __init__(self, params: ParamStore | None = None, training: bool = False,
                 rng: np.random.Generator | None = None):
        self.params = params
        self.grads = params.zeros_like() if params is not None else {}
        self.training = training
        self.rng = rng
        self.ops: list[str] = []

    def record(self, op: str, value: np.ndarray) -> np.ndarray:
        self.ops.append(op)
        if not np.all(np.isfinite(value)):
            raise NumericalError(f"non-finite value produced by operation {op!r}")
        return value

    def accumulate(self, name: str, grad: np.ndarray) -> None:
        self.grads[name] += grad


def _record(tape: Tape | None, op: str, value: np.ndarray) -> np.ndarray:
    if tape is not None:
        return tape.record(op, value)
    return value


def activate(pre: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(pre, 0.0)
    if kind == "elu":
        return np.where(pre > 0, pre, np.expm1(np.minimum(pre, 0.0)))
    if kind == "tanh":
        return np.tanh(pre)
    if kind == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * pre))
    if kind == "identity":
        return pre
    raise ConfigError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def activation_grad(pre: np.ndarray, out: np.ndarray, kind: str) -> np.ndarray:
    """Elementwise derivative of the activation, from its input and output."""
    if kind == "relu":
        return (pre > 0).astype(np.float64)
    if kind == "elu":
        return np.where(pre > 0, 1.0, out + 1.0)
    if kind == "tanh":
        return 1.0 - out * out
    if kind == "sigmoid":
        return out * (1.0 - out)
    if kind == "identity":
        return np.ones_like(pre)
    raise ConfigError(f"unknown activation {kind!r}")


def dense_forward(inputs, weights, bias, activation: str = "identity",
                  tape: Tape | None = None) -> np.ndarray:
    """``activation(W @ x + b)`` for a vector or a batch of row vectors.

    ``weights`` has shape ``(n_out, n_in)``.
    """
    x = np.asarray(inputs, dtype=np.float64)
    W = np.asarray(weights, dtype=np.float64)
    b = np.asarray(bias, dtype=np.float64)
    if W.ndim != 2 or x.shape[-1] != W.shape[1] or b.shape != (W.shape[0],):
        raise ConfigError(
            f"dense shape mismatch: input {x.shape}, weights {W.shape}, bias {b.shape}"
        )
    out = activate(x @ W.T + b, activation)
    return _record(tape, f"dense[{activation}]", out)


def dropout_mask(shape, rate: float, rng: np.random.Generator,
                 training: bool = True) -> np.ndarray:
    """Inverted-dropout mask: 0 with probability ``rate``, else ``1/(1-rate)``."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return np.ones(shape)
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def l2_penalty(params: ParamStore, gamma: float) -> float:
    """``gamma * sum(p**2)`` over decayed entries (weight matrices only)."""
    if gamma < 0:
        raise ConfigError("gamma must be non-negative")
    if gamma == 0:
        return 0.0
    total = 0.0
    for name, value in params.items():
        if params.decays(name):
            total += float(np.sum(value * value))
    return gamma * total


def l2_penalty_grad(params: ParamStore, gamma: float, tape: Tape) -> None:
    if gamma == 0:
        return
    for name, value in params.items():
        if params.decays(name):
            tape.accumulate(name, 2.0 * gamma * value)


class Dense:
    """Fully connected layer whose parameters live in a shared ParamStore."""

    def __init__(self, store: ParamStore, name: str, n_in: int, n_out: int,
                 activation: str = "identity", rng: np.random.Generator | None = None,
                 zero: bool = False):
        if activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {activation!r}")
        self.store = store
        self.w_name = f"{name}.W"
        self.b_name = f"{name}.b"
        self.n_in, self.n_out = n_in, n_out
        self.activation = activation
        if zero or rng is None:
            W = np.zeros((n_out, n_in))
        else:
            # uniform He-style init scaled by fan-in
            bound = np.sqrt(6.0 / max(n_in, 1))
            W = rng.uniform(-bound, bound, size=(n_out, n_in))
        store.add(self.w_name, W, decay=True)
        store.add(self.b_name, np.zeros(n_out), decay=False)

    def forward(self, x: np.ndarray, tape: Tape | None = None):
        W = self.store[self.w_name]
        pre = x @ W.T + self.store[self.b_name]
        out = activate(pre, self.activation)
        _record(tape, self.w_name, out)
        return out, (x, pre, out)

    def backward(self, cache, g_out: np.ndarray, tape: Tape) -> np.ndarray:
        x, pre, out = cache
        g_pre = g_out if self.activation == "identity" else g_out * activation_grad(pre, out, self.activation)
        g_pre2 = g_pre.reshape(-1, self.n_out)
        tape.accumulate(self.w_name, g_pre2.T @ x.reshape(-1, self.n_in))
        tape.accumulate(self.b_name, g_pre2.sum(axis=0))
        return g_pre @ self.store[self.w_name]


class MLP:
    """Stack of Dense layers with inverted dropout after each hidden layer.

    The output layer is linear and, when ``zero_output`` is set, starts at zero.
    """

    def __init__(self, store: ParamStore, name: str, n_in: int, hidden: list[int],
                 n_out: int, activation: str = "relu", dropout: float = 0.0,
                 rng: np.random.Generator | None = None, zero_output: bool = False,
                 output_activation: str = "identity"):
        if not 0.0 <= dropout < 1.0:
            raise ConfigError(f"dropout rate must lie in [0, 1), got {dropout}")
        self.dropout = dropout
        self.layers: list[Dense] = []
        prev = n_in
        for i, h in enumerate(hidden):
            self.layers.append(Dense(store, f"{name}.h{i}", prev, h, activation, rng))
            prev = h
        self.layers.append(Dense(store, f"{name}.out", prev, n_out, output_activation,
                                 rng, zero=zero_output))

    def forward(self, x: np.ndarray, tape: Tape | None = None):
        caches = []
        h = x
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            h, c = layer.forward(h, tape)
            mask = None
            if i < last and tape is not None and tape.training and self.dropout > 0:
                mask = dropout_mask(h.shape, self.dropout, tape.rng)
                h = h * mask
            caches.append((c, mask))
        return h, caches

    def backward(self, caches, g_out: np.ndarray, tape: Tape) -> np.ndarray:
        g = g_out
        for layer, (c, mask) in zip(reversed(self.layers), reversed(caches)):
            if mask is not None:
                g = g * mask
            g = layer.backward(c, g, tape)
        return g


LossFn = Callable[[Tape], tuple]


def compute_gradient(loss_fn: LossFn, params: ParamStore, training: bool = False,
                     rng: np.random.Generator | None = None):
    """Evaluate ``loss_fn`` on a fresh tape and back-propagate.

    ``loss_fn(tape)`` returns ``(value, backward)`` where ``backward(seed)``
    pushes ``seed * d value`` into ``tape.grads``.  Returns ``(value, grads)``.
    """
    tape = Tape(params, training=training, rng=rng)
    value, backward = loss_fn(tape)
    value = float(value)
    if not np.isfinite(value):
        last = tape.ops[-1] if tape.ops else "<none>"
        raise NumericalError(f"non-finite loss (last operation {last!r})")
    backward(1.0)
    return value, tape.grads


def finite_difference_grad(value_fn: Callable[[], float], params: ParamStore,
                           step: float = 1e-5, names: list[str] | None = None):
    """Central finite differences of ``value_fn`` w.r.t. every scalar in ``params``."""
    out = {}
    for name in names or params.names():
        arr = params[name]
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            fp = value_fn()
            flat[i] = orig - step
            fm = value_fn()
            flat[i] = orig
            g.reshape(-1)[i] = (fp - fm) / (2 * step)
        out[name] = g
    return out


def max_gradient_error(analytic: dict, numeric: dict, rel: float = 1e-4,
                       floor: float = 1e-7) -> float:
    """Largest violation ratio; values <= 1 mean every entry is within tolerance.

    An entry passes when ``|a - f| <= max(rel * max(|a|, |f|), floor)``.
    """
    worst = 0.0
    for name, f in numeric.items():
        a = analytic[name]
        tol = np.maximum(rel * np.maximum(np.abs(a), np.abs(f)), floor)
        if a.size:
            worst = max(worst, float(np.max(np.abs(a - f) / tol)))
    return worst
