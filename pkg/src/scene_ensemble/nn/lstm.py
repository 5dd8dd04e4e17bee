"""Peephole LSTM (Graves formulation) with backpropagation through time.

Gate layout along the ``4*units`` axis is ``[input, forget, candidate, output]``.
Peephole weights are diagonal: the input and forget gates see ``c_{t-1}``,
the output gate sees the freshly updated ``c_t``.
"""

from dataclasses import dataclass

import numpy as np

from .layers import Layer, MissingCacheError, ShapeError, glorot_uniform


def sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class LstmCellState:
    """Hidden/cell state after one step, plus the activations BPTT needs."""

    h: np.ndarray
    c: np.ndarray
    i: np.ndarray = None
    f: np.ndarray = None
    o: np.ndarray = None
    g: np.ndarray = None

    @classmethod
    def zeros(cls, batch, units, dtype=np.float32):
        z = np.zeros((batch, units), dtype=dtype)
        return cls(h=z, c=z.copy())


def lstm_cell_step(x_t, state, params):
    """Advance one time step. ``x_t`` is ``[N, in_dim]``; returns a new state."""
    w_x, w_h, b = params["w_x"], params["w_h"], params["b"]
    if x_t.shape[-1] != w_x.shape[0] or state.h.shape[-1] != w_h.shape[0]:
        raise ShapeError(
            f"lstm step: input dim {x_t.shape[-1]} / hidden {state.h.shape[-1]} "
            f"do not match weights {w_x.shape} / {w_h.shape}"
        )
    u = w_h.shape[0]
    a = x_t @ w_x + state.h @ w_h + b
    i = sigmoid(a[:, :u] + params["p_i"] * state.c)
    f = sigmoid(a[:, u:2 * u] + params["p_f"] * state.c)
    g = np.tanh(a[:, 2 * u:3 * u])
    c = f * state.c + i * g
    o = sigmoid(a[:, 3 * u:] + params["p_o"] * c)
    h = o * np.tanh(c)
    return LstmCellState(h=h, c=c, i=i, f=f, o=o, g=g)


class LSTM(Layer):
    """Stateless LSTM layer over ``[N, T, in_dim]``.

    Every forward starts from zero ``h`` and ``c``. With
    ``return_sequences`` the output is ``[N, T, units]``, otherwise the last
    hidden state ``[N, units]``.
    """

    def __init__(self, in_dim, units, return_sequences=False, peephole=True,
                 rng=None, dtype=np.float32):
        super().__init__()
        self.in_dim, self.units = in_dim, units
        self.return_sequences = return_sequences
        self.peephole = peephole
        rng = rng if rng is not None else np.random.default_rng(0)
        u = units
        b = np.zeros(4 * u, dtype=dtype)
        b[u:2 * u] = 1.0
        self.params = {
            "w_x": glorot_uniform(rng, (in_dim, 4 * u), in_dim, 4 * u, dtype),
            "w_h": glorot_uniform(rng, (u, 4 * u), u, 4 * u, dtype),
            "b": b,
            "p_i": np.zeros(u, dtype=dtype),
            "p_f": np.zeros(u, dtype=dtype),
            "p_o": np.zeros(u, dtype=dtype),
        }
        if not peephole:
            for k in ("p_i", "p_f", "p_o"):
                del self.params[k]
        self._init_grads()

    def _cell_params(self):
        if self.peephole:
            return self.params
        z = np.zeros(self.units, dtype=self.params["b"].dtype)
        return {**self.params, "p_i": z, "p_f": z, "p_o": z}

    def output_shape(self, in_shape):
        t, d = in_shape
        if d != self.in_dim:
            raise ShapeError(f"lstm expects input dim {self.in_dim}, got {d}")
        if t < 1:
            raise ShapeError("lstm needs a non-empty sequence")
        return (t, self.units) if self.return_sequences else (self.units,)

    def forward(self, x, training=False):
        if x.ndim != 3 or x.shape[1] < 1:
            raise ShapeError(f"lstm input must be a non-empty [N, T, D] array, got {x.shape}")
        self.output_shape(x.shape[1:])
        n, t, _ = x.shape
        p = self._cell_params()
        state = LstmCellState.zeros(n, self.units, dtype=p["b"].dtype)
        states = [state]
        for step in range(t):
            state = lstm_cell_step(x[:, step], state, p)
            states.append(state)
        self._cache = (x, states)
        if self.return_sequences:
            return np.stack([s.h for s in states[1:]], axis=1)
        return states[-1].h

    def backward(self, grad):
        if self._cache is None:
            raise MissingCacheError("LSTM.backward called without a cached forward")
        x, states = self._cache
        n, t, _ = x.shape
        u = self.units
        p = self._cell_params()
        if self.return_sequences:
            dh_out = grad
        else:
            dh_out = np.zeros((n, t, u), dtype=grad.dtype)
            dh_out[:, -1] = grad
        dx = np.zeros_like(x)
        d_wx = np.zeros_like(p["w_x"])
        d_wh = np.zeros_like(p["w_h"])
        d_b = np.zeros_like(p["b"])
        d_pi = np.zeros(u, dtype=d_b.dtype)
        d_pf = np.zeros_like(d_pi)
        d_po = np.zeros_like(d_pi)
        dh_next = np.zeros((n, u), dtype=d_b.dtype)
        dc_next = np.zeros_like(dh_next)
        da = np.empty((n, 4 * u), dtype=d_b.dtype)
        for step in reversed(range(t)):
            cur, prev = states[step + 1], states[step]
            dh = dh_out[:, step] + dh_next
            tc = np.tanh(cur.c)
            da_o = dh * tc * cur.o * (1 - cur.o)
            dc = dc_next + dh * cur.o * (1 - tc * tc) + da_o * p["p_o"]
            da_i = dc * cur.g * cur.i * (1 - cur.i)
            da_f = dc * prev.c * cur.f * (1 - cur.f)
            da_g = dc * cur.i * (1 - cur.g * cur.g)
            d_po += (da_o * cur.c).sum(axis=0)
            d_pi += (da_i * prev.c).sum(axis=0)
            d_pf += (da_f * prev.c).sum(axis=0)
            dc_next = dc * cur.f + da_i * p["p_i"] + da_f * p["p_f"]
            da[:, :u], da[:, u:2 * u], da[:, 2 * u:3 * u], da[:, 3 * u:] = da_i, da_f, da_g, da_o
            d_wx += x[:, step].T @ da
            d_wh += prev.h.T @ da
            d_b += da.sum(axis=0)
            dx[:, step] = da @ p["w_x"].T
            dh_next = da @ p["w_h"].T
        self.grads["w_x"] += d_wx
        self.grads["w_h"] += d_wh
        self.grads["b"] += d_b
        if self.peephole:
            self.grads["p_i"] += d_pi
            self.grads["p_f"] += d_pf
            self.grads["p_o"] += d_po
        return dx
