"""Batched numpy building blocks: GRU layer, feed-forward attention, dense.

Every forward function returns ``(output, cache)`` and the matching backward
consumes the cache plus the upstream gradient. Arrays are batch-major:
sequences are ``(B, T, d)``.
"""

import numpy as np
from scipy.special import expit as sigmoid

GATES = ("u", "r", "h")


def gru_param_names(prefix):
    names = []
    for g in GATES:
        names += [f"{prefix}.W_{g}x", f"{prefix}.W_{g}h", f"{prefix}.b_{g}"]
    return names


def check_gru_shapes(p, prefix, d_in=None):
    d_out = p[f"{prefix}.b_u"].shape[0]
    if d_in is None:
        d_in = p[f"{prefix}.W_ux"].shape[1]
    for g in GATES:
        wx, wh, b = p[f"{prefix}.W_{g}x"], p[f"{prefix}.W_{g}h"], p[f"{prefix}.b_{g}"]
        if wx.shape != (d_out, d_in) or wh.shape != (d_out, d_out) or b.shape != (d_out,):
            raise ValueError(
                f"{prefix} gate {g}: got W_x{wx.shape} W_h{wh.shape} b{b.shape}, "
                f"expected ({d_out}, {d_in}), ({d_out}, {d_out}), ({d_out},)"
            )
    return d_in, d_out


def gru_cell_step(x, h_prev, p, prefix="gru"):
    """One GRU step on a single vector or a ``(B, d_in)`` batch.

    Returns the new hidden state and a cache holding the gate activations.
    """
    x = np.asarray(x, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    d_in, d_out = check_gru_shapes(p, prefix)
    if x.shape[-1] != d_in or h_prev.shape[-1] != d_out:
        raise ValueError(f"{prefix}: x{x.shape} / h{h_prev.shape} do not match ({d_in}->{d_out})")

    g_u = sigmoid(x @ p[f"{prefix}.W_ux"].T + h_prev @ p[f"{prefix}.W_uh"].T + p[f"{prefix}.b_u"])
    g_r = sigmoid(x @ p[f"{prefix}.W_rx"].T + h_prev @ p[f"{prefix}.W_rh"].T + p[f"{prefix}.b_r"])
    rh = g_r * h_prev
    q = np.tanh(x @ p[f"{prefix}.W_hx"].T + rh @ p[f"{prefix}.W_hh"].T + p[f"{prefix}.b_h"])
    h = (1.0 - g_u) * h_prev + g_u * q
    return h, {"x": x, "h_prev": h_prev, "g_u": g_u, "g_r": g_r, "q": q}


def gru_layer_forward(X, p, prefix="gru", h0=None):
    """Run a GRU over ``X`` of shape ``(B, T, d_in)``; returns ``(B, T, d_out)``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3 or X.shape[1] < 1:
        raise ValueError(f"{prefix}: expected (B, T>=1, d_in), got {X.shape}")
    d_in, d = check_gru_shapes(p, prefix)
    if X.shape[2] != d_in:
        raise ValueError(f"{prefix}: input width {X.shape[2]} != {d_in}")
    B, T, _ = X.shape

    W_x = np.concatenate([p[f"{prefix}.W_{g}x"] for g in GATES], axis=0)  # (3d, d_in)
    b = np.concatenate([p[f"{prefix}.b_{g}"] for g in GATES])
    W_urh = np.concatenate([p[f"{prefix}.W_uh"], p[f"{prefix}.W_rh"]], axis=0).T  # (d, 2d)
    W_hh_T = p[f"{prefix}.W_hh"].T

    # time-major input projections, computed once for the whole sequence
    Z = np.ascontiguousarray((X @ W_x.T + b).transpose(1, 0, 2))  # (T, B, 3d)

    H_prev = np.empty((T, B, d))
    G_u = np.empty((T, B, d))
    G_r = np.empty((T, B, d))
    Q = np.empty((T, B, d))
    h = np.zeros((B, d)) if h0 is None else np.broadcast_to(h0, (B, d)).astype(np.float64)
    for t in range(T):
        H_prev[t] = h
        z = Z[t]
        a = z[:, : 2 * d] + h @ W_urh
        gates = sigmoid(a)
        g_u = gates[:, :d]
        g_r = gates[:, d:]
        q = np.tanh(z[:, 2 * d :] + (g_r * h) @ W_hh_T)
        h = h + g_u * (q - h)
        G_u[t] = g_u
        G_r[t] = g_r
        Q[t] = q

    out = np.empty((T, B, d))
    out[:-1] = H_prev[1:]
    out[-1] = h
    out = out.transpose(1, 0, 2)
    cache = {"prefix": prefix, "X": X, "H_prev": H_prev, "G_u": G_u, "G_r": G_r, "Q": Q}
    return out, cache


def gru_layer_backward(dOut, cache, p):
    """Backprop through time. ``dOut`` is ``(B, T, d)``; returns ``(dX, grads)``."""
    prefix = cache["prefix"]
    X, H_prev, G_u, G_r, Q = cache["X"], cache["H_prev"], cache["G_u"], cache["G_r"], cache["Q"]
    T, B, d = H_prev.shape
    if dOut.shape != (B, T, d):
        raise ValueError(f"{prefix}: upstream gradient {dOut.shape} does not match cache ({B}, {T}, {d})")
    dOut = dOut.transpose(1, 0, 2)

    W_urh = np.concatenate([p[f"{prefix}.W_uh"], p[f"{prefix}.W_rh"]], axis=0)  # (2d, d)
    W_hh = p[f"{prefix}.W_hh"]

    dA = np.empty((T, B, 3 * d))  # pre-activation grads for u, r, h
    dh_next = np.zeros((B, d))
    for t in range(T - 1, -1, -1):
        dh = dOut[t] + dh_next
        h_prev, g_u, g_r, q = H_prev[t], G_u[t], G_r[t], Q[t]
        daq = dh * g_u * (1.0 - q * q)
        drh = daq @ W_hh
        dau = dh * (q - h_prev) * g_u * (1.0 - g_u)
        dar = drh * h_prev * g_r * (1.0 - g_r)
        dA[t, :, :d] = dau
        dA[t, :, d : 2 * d] = dar
        dA[t, :, 2 * d :] = daq
        dh_next = dh * (1.0 - g_u) + drh * g_r + dA[t, :, : 2 * d] @ W_urh

    flat_dA = dA.reshape(T * B, 3 * d)
    flat_hp = H_prev.reshape(T * B, d)
    flat_rh = (G_r * H_prev).reshape(T * B, d)
    flat_X = X.transpose(1, 0, 2).reshape(T * B, -1)

    dW_x = flat_dA.T @ flat_X
    db = flat_dA.sum(axis=0)
    grads = {}
    for i, g in enumerate(GATES):
        sl = slice(i * d, (i + 1) * d)
        grads[f"{prefix}.W_{g}x"] = dW_x[sl]
        grads[f"{prefix}.b_{g}"] = db[sl]
    grads[f"{prefix}.W_uh"] = flat_dA[:, :d].T @ flat_hp
    grads[f"{prefix}.W_rh"] = flat_dA[:, d : 2 * d].T @ flat_hp
    grads[f"{prefix}.W_hh"] = flat_dA[:, 2 * d :].T @ flat_rh

    W_x = np.concatenate([p[f"{prefix}.W_{g}x"] for g in GATES], axis=0)
    dX = (dA @ W_x).transpose(1, 0, 2)
    return dX, grads


def softmax(e, axis=-1):
    z = e - e.max(axis=axis, keepdims=True)
    ex = np.exp(z)
    return ex / ex.sum(axis=axis, keepdims=True)


def attention_scores(H, p, prefix="att"):
    S = np.tanh(H @ p[f"{prefix}.M"].T + p[f"{prefix}.b"])
    return S @ p[f"{prefix}.w"], S


def attention_forward(H, p, prefix="att"):
    """Feed-forward attention pooling.

    ``H`` is ``(T, d)`` or ``(B, T, d)``. Each step is scored by a one-hidden-layer
    tanh network, the scores are softmax-normalised over time and the context is
    the weighted sum of the rows of ``H``. Returns ``(c, alpha, cache)``.
    """
    H = np.asarray(H, dtype=np.float64)
    single = H.ndim == 2
    if single:
        H = H[None]
    if H.shape[1] < 1:
        raise ValueError("attention needs at least one time step")
    e, S = attention_scores(H, p, prefix)
    alpha = softmax(e, axis=1)
    c = np.einsum("bt,btd->bd", alpha, H)
    cache = {"prefix": prefix, "H": H, "S": S, "alpha": alpha}
    if single:
        return c[0], alpha[0], cache
    return c, alpha, cache


def attention_backward(dc, cache, p):
    prefix = cache["prefix"]
    H, S, alpha = cache["H"], cache["S"], cache["alpha"]
    dc = dc.reshape(H.shape[0], H.shape[2])
    dalpha = np.einsum("bd,btd->bt", dc, H)
    de = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
    dH = alpha[:, :, None] * dc[:, None, :]
    w = p[f"{prefix}.w"]
    dpre = de[:, :, None] * w * (1.0 - S * S)  # (B, T, k)
    k = S.shape[2]
    flat_dpre = dpre.reshape(-1, k)
    grads = {
        f"{prefix}.w": np.einsum("bt,btk->k", de, S),
        f"{prefix}.M": flat_dpre.T @ H.reshape(-1, H.shape[2]),
        f"{prefix}.b": flat_dpre.sum(axis=0),
    }
    dH += dpre @ p[f"{prefix}.M"]
    return dH, grads


def dense_forward(x, W, b, relu=False):
    z = x @ W + b
    out = np.maximum(z, 0.0) if relu else z
    return out, {"x": x, "z": z, "relu": relu}


def dense_backward(dout, cache, W):
    dz = dout * (cache["z"] > 0) if cache["relu"] else dout
    return dz @ W.T, cache["x"].T @ dz, dz.sum(axis=0)
