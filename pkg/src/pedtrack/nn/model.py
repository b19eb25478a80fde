"""Stacked GRU -> dropout -> attention -> dense(ReLU) -> dense(linear) regressor."""

from dataclasses import asdict, dataclass

import numpy as np

from . import layers

VARIANTS = {
    "2gru_att": {"n_gru": 2, "attention": True},
    "2gru": {"n_gru": 2, "attention": False},
    "gru": {"n_gru": 1, "attention": False},
    "3gru": {"n_gru": 3, "attention": False},
    "gru_att": {"n_gru": 1, "attention": True},
    "3gru_att": {"n_gru": 3, "attention": True},
}


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int = 12
    hidden: int = 256
    n_gru: int = 2
    attention: bool = True
    attn_width: int = 64
    dense: int = 64
    dropout: float = 0.25

    def __post_init__(self):
        if self.n_gru < 1:
            raise ValueError("n_gru must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")

    @classmethod
    def for_variant(cls, name, **overrides):
        if name not in VARIANTS:
            raise KeyError(f"unknown variant {name!r}; known variants: {', '.join(VARIANTS)}")
        return cls(**{**VARIANTS[name], **overrides})

    def to_dict(self):
        return asdict(self)


class ModelParams:
    """Weights of one regressor: an ordered ``name -> ndarray`` mapping plus its config."""

    def __init__(self, config, arrays):
        self.config = config
        self.arrays = dict(arrays)

    def __getitem__(self, name):
        return self.arrays[name]

    def __iter__(self):
        return iter(self.arrays)

    def items(self):
        return self.arrays.items()

    def copy(self):
        return ModelParams(self.config, {k: v.copy() for k, v in self.arrays.items()})

    def n_weights(self):
        return sum(v.size for v in self.arrays.values())


def param_shapes(cfg):
    shapes = {}
    d_in = cfg.input_dim
    for i in range(cfg.n_gru):
        pre = f"gru{i + 1}"
        for g in layers.GATES:
            shapes[f"{pre}.W_{g}x"] = (cfg.hidden, d_in)
            shapes[f"{pre}.W_{g}h"] = (cfg.hidden, cfg.hidden)
            shapes[f"{pre}.b_{g}"] = (cfg.hidden,)
        d_in = cfg.hidden
    if cfg.attention:
        shapes["att.M"] = (cfg.attn_width, cfg.hidden)
        shapes["att.b"] = (cfg.attn_width,)
        shapes["att.w"] = (cfg.attn_width,)
    shapes["dense1.W"] = (cfg.hidden, cfg.dense)
    shapes["dense1.b"] = (cfg.dense,)
    shapes["dense2.W"] = (cfg.dense, 1)
    shapes["dense2.b"] = (1,)
    return shapes


def _glorot_bounds(name, shape):
    if name == "att.w":
        return np.sqrt(6.0 / (shape[0] + 1))
    fan_out, fan_in = shape if not name.startswith("dense") else shape[::-1]
    return np.sqrt(6.0 / (fan_in + fan_out))


def init_params(cfg, seed=0):
    """Glorot-uniform matrices, zero biases."""
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in param_shapes(cfg).items():
        leaf = name.split(".")[1]
        if leaf.startswith("b"):
            arrays[name] = np.zeros(shape)
        else:
            s = _glorot_bounds(name, shape)
            arrays[name] = rng.uniform(-s, s, size=shape)
    return ModelParams(cfg, arrays)


def model_forward(x, params, mode="infer", dropout_seed=None, rng=None):
    """Forward pass on one window ``(T, C)`` or a batch ``(B, T, C)``.

    In ``train`` mode an inverted dropout mask is drawn per (sample, step,
    feature) from ``rng`` (or a generator seeded with ``dropout_seed``).
    Returns ``(y_hat, cache)`` with ``y_hat`` of shape ``(B,)`` (scalar for a
    single window). ``cache["shapes"]`` lists the per-layer output shapes
    without the batch axis.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    cfg = params.config
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 2
    X = x[None] if single else x
    if X.ndim != 3 or X.shape[2] != cfg.input_dim:
        raise ValueError(f"expected input (B, T, {cfg.input_dim}), got {x.shape}")

    T = X.shape[1]
    shapes = [("input", (T, cfg.input_dim))]
    caches = {"single": single, "cfg": cfg}
    H = X
    gru_caches = []
    for i in range(cfg.n_gru):
        H, c = layers.gru_layer_forward(H, params.arrays, prefix=f"gru{i + 1}")
        gru_caches.append(c)
        shapes.append((f"gru_{i + 1}", H.shape[1:]))
    caches["gru"] = gru_caches

    mask = None
    if mode == "train" and cfg.dropout > 0:
        if rng is None:
            rng = np.random.default_rng(dropout_seed)
        keep = 1.0 - cfg.dropout
        mask = (rng.random(H.shape) < keep) / keep
        H = H * mask
    caches["mask"] = mask
    shapes.append(("dropout", H.shape[1:]))

    if cfg.attention:
        c, alpha, att_cache = layers.attention_forward(H, params.arrays, prefix="att")
        caches["att"] = att_cache
        caches["alpha"] = alpha
        shapes.append(("attention", (1, c.shape[1])))
    else:
        c = H[:, -1, :]
        caches["H_last_shape"] = H.shape
        shapes.append(("last_step", (1, c.shape[1])))

    a1, d1 = layers.dense_forward(c, params["dense1.W"], params["dense1.b"], relu=True)
    shapes.append(("dense_1", (1, a1.shape[1])))
    y, d2 = layers.dense_forward(a1, params["dense2.W"], params["dense2.b"])
    shapes.append(("dense_2", (1,)))
    caches["dense1"], caches["dense2"] = d1, d2
    caches["shapes"] = shapes
    caches["batch"] = X.shape[0]
    caches["params_id"] = id(params.arrays)

    y = y[:, 0]
    return (y[0] if single else y), caches


def model_backward(caches, dy, params):
    """Exact gradients of ``sum(dy * y_hat)`` w.r.t. every parameter."""
    if caches.get("params_id") != id(params.arrays):
        raise ValueError("cache was produced with a different parameter set")
    B = caches["batch"]
    dy = np.asarray(dy, dtype=np.float64).reshape(-1)
    if dy.shape[0] != B:
        raise ValueError(f"upstream gradient has {dy.shape[0]} entries for a batch of {B}")
    cfg = caches["cfg"]
    grads = {}

    da1, grads["dense2.W"], grads["dense2.b"] = layers.dense_backward(
        dy[:, None], caches["dense2"], params["dense2.W"]
    )
    dc, grads["dense1.W"], grads["dense1.b"] = layers.dense_backward(
        da1, caches["dense1"], params["dense1.W"]
    )
    if cfg.attention:
        dH, g = layers.attention_backward(dc, caches["att"], params.arrays)
        grads.update(g)
    else:
        dH = np.zeros(caches["H_last_shape"])
        dH[:, -1, :] = dc
    if caches["mask"] is not None:
        dH = dH * caches["mask"]
    for c in reversed(caches["gru"]):
        dH, g = layers.gru_layer_backward(dH, c, params.arrays)
        grads.update(g)
    return {name: grads[name] for name in params}


def mae_loss(y_hat, y):
    """Mean absolute error and its (sub)gradient w.r.t. ``y_hat`` (0 at ties)."""
    y_hat = np.atleast_1d(np.asarray(y_hat, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if y_hat.shape != y.shape or y.size == 0:
        raise ValueError(f"mae_loss: shapes {y_hat.shape} and {y.shape} must match and be non-empty")
    diff = y_hat - y
    return float(np.mean(np.abs(diff))), np.sign(diff) / y.size


def predict(params, X, batch=64):
    X = np.asarray(X, dtype=np.float64)
    out = np.empty(X.shape[0])
    for s in range(0, X.shape[0], batch):
        out[s : s + batch], _ = model_forward(X[s : s + batch], params, mode="infer")
    return out
