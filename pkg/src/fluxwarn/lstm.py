"""Single-layer LSTM regressor written directly in numpy.

Gate weights are stored stacked in the order input, forget, output, candidate
so that one matrix product per time step computes every pre-activation. The
per-gate views (``W_i``, ``U_f``, ...) index into the stacked arrays.

``forward`` and ``backward`` accept one window ``[lookback, S]`` or a batch
``[B, lookback, S]``; the batch loss is the mean squared error over every
window and horizon step.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .errors import DimensionMismatch

GATES = ("i", "f", "o", "g")
BLOCKS = ("W", "U", "b", "V", "c_out")


def sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(eq=False)
class LstmParams:
    W: np.ndarray  # [4H, S]
    U: np.ndarray  # [4H, H]
    b: np.ndarray  # [4H]
    V: np.ndarray  # [horizon, H]
    c_out: np.ndarray  # [horizon]

    def __post_init__(self):
        h4, _ = self.W.shape
        if h4 % 4:
            raise DimensionMismatch("stacked gate rows must be a multiple of 4")
        hidden = h4 // 4
        if self.U.shape != (h4, hidden) or self.b.shape != (h4,):
            raise DimensionMismatch(f"U {self.U.shape} / b {self.b.shape} inconsistent with H={hidden}")
        if self.V.ndim != 2 or self.V.shape[1] != hidden or self.c_out.shape != (self.V.shape[0],):
            raise DimensionMismatch(f"V {self.V.shape} / c_out {self.c_out.shape} inconsistent with H={hidden}")

    @property
    def hidden_size(self) -> int:
        return self.U.shape[1]

    @property
    def n_inputs(self) -> int:
        return self.W.shape[1]

    @property
    def horizon(self) -> int:
        return self.V.shape[0]

    def _gate(self, arr, name):
        h = self.hidden_size
        k = GATES.index(name)
        return arr[k * h:(k + 1) * h]

    W_i = property(lambda self: self._gate(self.W, "i"))
    W_f = property(lambda self: self._gate(self.W, "f"))
    W_o = property(lambda self: self._gate(self.W, "o"))
    W_g = property(lambda self: self._gate(self.W, "g"))
    U_i = property(lambda self: self._gate(self.U, "i"))
    U_f = property(lambda self: self._gate(self.U, "f"))
    U_o = property(lambda self: self._gate(self.U, "o"))
    U_g = property(lambda self: self._gate(self.U, "g"))
    b_i = property(lambda self: self._gate(self.b, "i"))
    b_f = property(lambda self: self._gate(self.b, "f"))
    b_o = property(lambda self: self._gate(self.b, "o"))
    b_g = property(lambda self: self._gate(self.b, "g"))

    @classmethod
    def from_gates(cls, W: dict, U: dict, b: dict, V, c_out) -> "LstmParams":
        """Build from per-gate pieces keyed ``"i", "f", "o", "g"``."""
        return cls(
            np.vstack([np.asarray(W[k], float) for k in GATES]),
            np.vstack([np.asarray(U[k], float) for k in GATES]),
            np.concatenate([np.asarray(b[k], float) for k in GATES]),
            np.asarray(V, float),
            np.asarray(c_out, float),
        )

    @classmethod
    def zeros(cls, n_inputs: int, hidden: int, horizon: int) -> "LstmParams":
        return cls(
            np.zeros((4 * hidden, n_inputs)),
            np.zeros((4 * hidden, hidden)),
            np.zeros(4 * hidden),
            np.zeros((horizon, hidden)),
            np.zeros(horizon),
        )

    @classmethod
    def init(cls, n_inputs: int, hidden: int, horizon: int, rng: np.random.Generator) -> "LstmParams":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, forget bias 1, other biases 0."""
        kw = 1.0 / np.sqrt(n_inputs)
        kh = 1.0 / np.sqrt(hidden)
        W = rng.uniform(-kw, kw, (4 * hidden, n_inputs))
        U = rng.uniform(-kh, kh, (4 * hidden, hidden))
        V = rng.uniform(-kh, kh, (horizon, hidden))
        b = np.zeros(4 * hidden)
        b[hidden:2 * hidden] = 1.0
        return cls(W, U, b, V, np.zeros(horizon))

    def arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def map(self, fn, *others: "LstmParams") -> "LstmParams":
        return LstmParams(**{
            name: fn(arr, *(o.arrays()[name] for o in others)) for name, arr in self.arrays().items()
        })

    def copy(self) -> "LstmParams":
        return self.map(np.copy)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays().values())


@dataclass(eq=False)
class LstmState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden: int, batch: int | None = None) -> "LstmState":
        shape = (hidden,) if batch is None else (batch, hidden)
        return cls(np.zeros(shape), np.zeros(shape))


def _gates(x, h, params: LstmParams):
    hid = params.hidden_size
    z = x @ params.W.T + h @ params.U.T + params.b
    i = sigmoid(z[..., :hid])
    f = sigmoid(z[..., hid:2 * hid])
    o = sigmoid(z[..., 2 * hid:3 * hid])
    g = np.tanh(z[..., 3 * hid:])
    return i, f, o, g


def cell_step(x, state: LstmState, params: LstmParams) -> LstmState:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.n_inputs:
        raise DimensionMismatch(f"input has {x.shape[-1]} features, params expect {params.n_inputs}")
    if state.h.shape[-1] != params.hidden_size or state.c.shape != state.h.shape:
        raise DimensionMismatch("state size does not match hidden size")
    i, f, o, g = _gates(x, state.h, params)
    c = f * state.c + i * g
    return LstmState(o * np.tanh(c), c)


def forward(window, params: LstmParams):
    """Run the recurrence from a zero state and apply the affine output head.

    Returns ``(prediction, tape)``; the tape holds what :func:`backward` needs.
    """
    X = np.asarray(window, dtype=np.float64)
    single = X.ndim == 2
    if single:
        X = X[None]
    if X.ndim != 3 or X.shape[2] != params.n_inputs:
        raise DimensionMismatch(f"window shape {np.shape(window)} incompatible with {params.n_inputs} inputs")
    batch, steps, _ = X.shape
    hid = params.hidden_size
    h = np.zeros((batch, hid))
    c = np.zeros((batch, hid))
    hs, cs, acts = [h], [c], []
    # input projection for all steps at once
    XW = X @ params.W.T + params.b
    for t in range(steps):
        z = XW[:, t] + h @ params.U.T
        i = sigmoid(z[:, :hid])
        f = sigmoid(z[:, hid:2 * hid])
        o = sigmoid(z[:, 2 * hid:3 * hid])
        g = np.tanh(z[:, 3 * hid:])
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        acts.append((i, f, o, g, tc))
        hs.append(h)
        cs.append(c)
    pred = h @ params.V.T + params.c_out
    tape = {"X": X, "hs": hs, "cs": cs, "acts": acts, "pred": pred, "params": params, "single": single}
    return (pred[0] if single else pred), tape


def loss_mse(pred, target) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionMismatch(f"prediction {pred.shape} vs target {target.shape}")
    return float(np.mean((pred - target) ** 2))


def backward(tape, target) -> LstmParams:
    """Exact gradient of the MSE loss via backpropagation through time."""
    params: LstmParams = tape["params"]
    pred = tape["pred"]
    target = np.asarray(target, dtype=np.float64)
    if tape["single"]:
        target = target[None]
    if target.shape != pred.shape:
        raise DimensionMismatch(f"target {target.shape} vs prediction {pred.shape}")
    X, hs, cs, acts = tape["X"], tape["hs"], tape["cs"], tape["acts"]
    hid = params.hidden_size

    dpred = 2.0 * (pred - target) / pred.size
    dV = dpred.T @ hs[-1]
    dc_out = dpred.sum(axis=0)
    dh = dpred @ params.V
    dc = np.zeros_like(dh)
    dZ_all = np.empty((X.shape[0], X.shape[1], 4 * hid))
    dU = np.zeros_like(params.U)
    for t in range(X.shape[1] - 1, -1, -1):
        i, f, o, g, tc = acts[t]
        dc = dc + dh * o * (1.0 - tc * tc)
        dZ = dZ_all[:, t]
        dZ[:, :hid] = dc * g * i * (1.0 - i)
        dZ[:, hid:2 * hid] = dc * cs[t] * f * (1.0 - f)
        dZ[:, 2 * hid:3 * hid] = dh * tc * o * (1.0 - o)
        dZ[:, 3 * hid:] = dc * i * (1.0 - g * g)
        dU += dZ.T @ hs[t]
        dh = dZ @ params.U
        dc = dc * f
    flatZ = dZ_all.reshape(-1, 4 * hid)
    dW = flatZ.T @ X.reshape(-1, X.shape[2])
    db = flatZ.sum(axis=0)
    return LstmParams(dW, dU, db, dV, dc_out)


@dataclass(eq=False)
class AdamState:
    m: LstmParams
    v: LstmParams
    t: int = 0

    @classmethod
    def fresh(cls, params: LstmParams) -> "AdamState":
        return cls(params.map(np.zeros_like), params.map(np.zeros_like), 0)


def adam_step(params: LstmParams, grads: LstmParams, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update; returns new ``(params, state)``."""
    t = state.t + 1
    m = state.m.map(lambda m_, g: beta1 * m_ + (1.0 - beta1) * g, grads)
    v = state.v.map(lambda v_, g: beta2 * v_ + (1.0 - beta2) * (g * g), grads)
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    new = params.map(lambda p, m_, v_: p - lr * (m_ / bc1) / (np.sqrt(v_ / bc2) + eps), m, v)
    return new, AdamState(m, v, t)


def numeric_gradient(params: LstmParams, window, target, epsilon: float = 1e-5) -> LstmParams:
    """Central differences of the MSE loss, one parameter entry at a time."""
    work = params.copy()
    out = params.map(np.zeros_like)
    for name, arr in work.arrays().items():
        grad = out.arrays()[name]
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + epsilon
            up = loss_mse(forward(window, work)[0], target)
            flat[k] = orig - epsilon
            down = loss_mse(forward(window, work)[0], target)
            flat[k] = orig
            gflat[k] = (up - down) / (2.0 * epsilon)
    return out


def grad_check(params: LstmParams, window, target, epsilon: float = 1e-5,
               abs_floor: float = 1e-6, abs_tol: float = 1e-7, rel_tol: float = 1e-4) -> float:
    """Worst relative disagreement between backprop and central differences.

    Entries whose analytic and numeric gradients are both below ``abs_floor``
    are scored as ``|a - n| * rel_tol / abs_tol``, so an absolute gap of
    ``abs_tol`` lands exactly on the ``rel_tol`` bound.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    _, tape = forward(window, params)
    analytic = backward(tape, target)
    numeric = numeric_gradient(params, window, target, epsilon)
    worst = 0.0
    for name, a in analytic.arrays().items():
        n = numeric.arrays()[name]
        diff = np.abs(a - n)
        scale = np.maximum(np.abs(a), np.abs(n))
        small = scale < abs_floor
        err = np.where(small, diff * (rel_tol / abs_tol), diff / np.where(small, 1.0, scale))
        if err.size:
            worst = max(worst, float(err.max()))
    return worst
