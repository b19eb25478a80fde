"""Independent reference implementations used as test oracles.

Everything here is written with plain Python loops and the math module so it
shares no code path with the vectorised library.
"""

import math

import numpy as np


def _sig(z):
    return 1.0 / (1.0 + math.exp(-z))


def scalar_gru_step(x, h, p, prefix="gru"):
    """One GRU step, element by element."""
    W = {k: p[f"{prefix}.{k}"] for k in ("W_ux", "W_uh", "W_rx", "W_rh", "W_hx", "W_hh", "b_u", "b_r", "b_h")}
    d, n = W["W_ux"].shape
    u, r = [0.0] * d, [0.0] * d
    for i in range(d):
        su, sr = W["b_u"][i], W["b_r"][i]
        for j in range(n):
            su += W["W_ux"][i][j] * x[j]
            sr += W["W_rx"][i][j] * x[j]
        for j in range(d):
            su += W["W_uh"][i][j] * h[j]
            sr += W["W_rh"][i][j] * h[j]
        u[i], r[i] = _sig(su), _sig(sr)
    out = [0.0] * d
    for i in range(d):
        s = W["b_h"][i]
        for j in range(n):
            s += W["W_hx"][i][j] * x[j]
        for j in range(d):
            s += W["W_hh"][i][j] * (r[j] * h[j])
        q = math.tanh(s)
        out[i] = (1.0 - u[i]) * h[i] + u[i] * q
    return np.array(out)


def scalar_attention(H, M, b, w):
    """Scores, softmax weights and context with explicit loops."""
    T, d = len(H), len(H[0])
    e = []
    for t in range(T):
        s = 0.0
        for k in range(len(w)):
            z = b[k]
            for j in range(d):
                z += M[k][j] * H[t][j]
            s += w[k] * math.tanh(z)
        e.append(s)
    m = max(e)
    ex = [math.exp(v - m) for v in e]
    tot = sum(ex)
    alpha = [v / tot for v in ex]
    c = [sum(alpha[t] * H[t][j] for t in range(T)) for j in range(d)]
    return np.array(e), np.array(alpha), np.array(c)


def central_diff_grads(loss_fn, arrays, h=1e-5):
    """Central-difference gradient of ``loss_fn()`` w.r.t. every entry of every array
    in ``arrays`` (modified in place and restored)."""
    out = {}
    for name, a in arrays.items():
        g = np.zeros_like(a)
        flat, gf = a.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            lp = loss_fn()
            flat[i] = old - h
            lm = loss_fn()
            flat[i] = old
            gf[i] = (lp - lm) / (2.0 * h)
        out[name] = g
    return out


def rel_error(a, b, floor=1e-6):
    """Elementwise |a - b| / max(|a|, |b|, floor), maximised."""
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def scalar_rmsprop(theta, g, v, lr, rho, eps):
    v = rho * v + (1.0 - rho) * g * g
    return theta - lr * g / (math.sqrt(v) + eps), v


def model_gradient_check(seed, T=10, d_in=5, hidden=8, attn=4, dense=6, n_gru=2, attention=True, batch=2, h=1e-5):
    """Max relative error between ``model_backward`` and central differences of
    ``sum(w * y_hat)`` on a random instance (dropout mask fixed by seed)."""
    from pedtrack.nn import ModelConfig, init_params, model_backward, model_forward

    rng = np.random.default_rng(seed)
    cfg = ModelConfig(input_dim=d_in, hidden=hidden, n_gru=n_gru, attention=attention, attn_width=attn, dense=dense)
    params = init_params(cfg, seed=seed)
    for name, a in params.items():
        # non-zero biases and somewhat larger weights exercise every term
        a += rng.normal(0.0, 0.3, a.shape)
    X = rng.normal(0.0, 1.0, (batch, T, d_in))
    wts = rng.normal(0.0, 1.0, batch)

    def loss():
        y, _ = model_forward(X, params, mode="train", dropout_seed=seed)
        return float(np.dot(wts, y))

    _, cache = model_forward(X, params, mode="train", dropout_seed=seed)
    analytic = model_backward(cache, wts, params)
    numeric = central_diff_grads(loss, params.arrays, h)
    return max(rel_error(analytic[k], numeric[k]) for k in analytic)
