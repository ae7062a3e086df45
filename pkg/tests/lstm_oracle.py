"""Plain-Python LSTM used only as a test oracle; shares no code with fluxwarn.lstm."""

import math


def _sig(z):
    return 1.0 / (1.0 + math.exp(-z))


def naive_forward(window, W, U, b, V, c_out):
    """``W``/``U``/``b`` are dicts keyed "i","f","o","g" of nested lists."""
    hidden = len(b["i"])
    h = [0.0] * hidden
    c = [0.0] * hidden
    for x in window:
        pre = {}
        for gate in "ifog":
            pre[gate] = [
                sum(W[gate][r][k] * x[k] for k in range(len(x)))
                + sum(U[gate][r][k] * h[k] for k in range(hidden))
                + b[gate][r]
                for r in range(hidden)
            ]
        new_c = []
        new_h = []
        for r in range(hidden):
            i = _sig(pre["i"][r])
            f = _sig(pre["f"][r])
            o = _sig(pre["o"][r])
            g = math.tanh(pre["g"][r])
            cr = f * c[r] + i * g
            new_c.append(cr)
            new_h.append(o * math.tanh(cr))
        h, c = new_h, new_c
    return [sum(V[q][k] * h[k] for k in range(hidden)) + c_out[q] for q in range(len(c_out))]
