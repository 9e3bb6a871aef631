"""Summary networks mapping a set or a sequence to a fixed-length condition vector.

Deep set composition (the pooling order is our own reading of the
architecture): ``n_blocks`` equivariant blocks, each applying a 2-layer MLP to
``[x_k, mean_j x_j]`` per point, then an inner per-point MLP, mean pooling over
points, an outer MLP, and a linear map to ``output_dim``.
"""
from __future__ import annotations

import numpy as np

from .diffmath import MLP, ParamStore, Tape, _record
from .errors import DataError


class DeepSetSummary:
    def __init__(self, store: ParamStore, name: str, point_dim: int, output_dim: int = 30,
                 width: int = 64, n_blocks: int = 2, rng: np.random.Generator | None = None):
        self.point_dim = point_dim
        self.output_dim = output_dim
        self.blocks = []
        prev = point_dim
        for i in range(n_blocks):
            self.blocks.append(MLP(store, f"{name}.eq{i}", 2 * prev, [width], width,
                                   activation="relu", rng=rng, output_activation="relu"))
            prev = width
        self.inner = MLP(store, f"{name}.inner", prev, [width], width,
                         activation="relu", rng=rng, output_activation="relu")
        self.outer = MLP(store, f"{name}.outer", width, [width, width], output_dim,
                         activation="relu", rng=rng)

    def forward(self, x: np.ndarray, tape: Tape | None = None):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[1] < 1:
            raise DataError(f"deep set expects (batch, K>=1, dim) input, got {x.shape}")
        caches = []
        h = x
        for block in self.blocks:
            pooled = h.mean(axis=1, keepdims=True)
            inp = np.concatenate([h, np.broadcast_to(pooled, h.shape)], axis=2)
            h, c = block.forward(inp, tape)
            caches.append(c)
        e, inner_cache = self.inner.forward(h, tape)
        pooled = e.mean(axis=1)
        out, outer_cache = self.outer.forward(pooled, tape)
        _record(tape, "deepset", out)
        return out, (caches, inner_cache, outer_cache, x.shape[1])

    def backward(self, cache, g_out: np.ndarray, tape: Tape) -> np.ndarray:
        caches, inner_cache, outer_cache, K = cache
        g_pooled = self.outer.backward(outer_cache, g_out, tape)
        g_e = np.repeat(g_pooled[:, None, :] / K, K, axis=1)
        g_h = self.inner.backward(inner_cache, g_e, tape)
        for block, c in zip(reversed(self.blocks), reversed(caches)):
            g_inp = block.backward(c, g_h, tape)
            half = g_inp.shape[2] // 2
            g_h = g_inp[:, :, :half] + g_inp[:, :, half:].sum(axis=1, keepdims=True) / K
        return g_h

    def __call__(self, x):
        return self.forward(x)[0]


def _sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


class RecurrentSummary:
    """Single-layer LSTM (gate order i, f, o, g) followed by a dense head."""

    def __init__(self, store: ParamStore, name: str, input_dim: int, hidden: int = 64,
                 head: tuple[int, ...] = (256, 64), rng: np.random.Generator | None = None):
        self.input_dim, self.hidden = input_dim, hidden
        self.w_name, self.b_name = f"{name}.lstm.W", f"{name}.lstm.b"
        H = hidden
        if rng is None:
            W = np.zeros((4 * H, input_dim + H))
        else:
            bound = 1.0 / np.sqrt(H)
            W = rng.uniform(-bound, bound, size=(4 * H, input_dim + H))
        b = np.zeros(4 * H)
        b[H:2 * H] = 1.0
        self.store = store
        store.add(self.w_name, W, decay=True)
        store.add(self.b_name, b, decay=False)
        self.head = MLP(store, f"{name}.head", H, list(head[:-1]), head[-1],
                        activation="relu", rng=rng)
        self.output_dim = head[-1]

    def forward(self, x: np.ndarray, tape: Tape | None = None):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[1] < 1:
            raise DataError(f"recurrent summary expects (batch, T>=1, features), got {x.shape}")
        B, T, _ = x.shape
        H = self.hidden
        W, b = self.store[self.w_name], self.store[self.b_name]
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        steps = []
        for t in range(T):
            hx = np.concatenate([x[:, t, :], h], axis=1)
            a = hx @ W.T + b
            i = _sigmoid(a[:, :H])
            f = _sigmoid(a[:, H:2 * H])
            o = _sigmoid(a[:, 2 * H:3 * H])
            g = np.tanh(a[:, 3 * H:])
            c_prev = c
            c = f * c_prev + i * g
            tc = np.tanh(c)
            h = o * tc
            steps.append((hx, i, f, o, g, c_prev, tc))
        _record(tape, "lstm", h)
        out, head_cache = self.head.forward(h, tape)
        return out, (steps, head_cache)

    def backward(self, cache, g_out: np.ndarray, tape: Tape) -> np.ndarray:
        steps, head_cache = cache
        H, F = self.hidden, self.input_dim
        W = self.store[self.w_name]
        g_h = self.head.backward(head_cache, g_out, tape)
        g_c = np.zeros_like(g_h)
        g_W = np.zeros_like(W)
        g_b = np.zeros(4 * H)
        g_x = np.zeros((g_h.shape[0], len(steps), F))
        for t in range(len(steps) - 1, -1, -1):
            hx, i, f, o, g, c_prev, tc = steps[t]
            g_o = g_h * tc
            g_c = g_c + g_h * o * (1.0 - tc * tc)
            g_a = np.concatenate([
                g_c * g * i * (1.0 - i),
                g_c * c_prev * f * (1.0 - f),
                g_o * o * (1.0 - o),
                g_c * i * (1.0 - g * g),
            ], axis=1)
            g_c = g_c * f
            g_W += g_a.T @ hx
            g_b += g_a.sum(axis=0)
            g_hx = g_a @ W
            g_x[:, t, :] = g_hx[:, :F]
            g_h = g_hx[:, F:]
        tape.accumulate(self.w_name, g_W)
        tape.accumulate(self.b_name, g_b)
        return g_x

    def __call__(self, x):
        return self.forward(x)[0]
