"""Attention-GRU purchase-intention network with hand-written backpropagation.

Shapes used throughout: ``B`` windows per batch, ``L`` days per window,
``F`` raw features per day, ``d`` embedding width, ``w`` GRU width.
Row-vector convention: a linear layer is ``x @ W + b``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import erf, expit

from .errors import ConfigError, DimensionError, NumericError, UsageError

SQRT2 = np.sqrt(2.0)
INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)
PROB_CLAMP = 1e-7


@dataclass(frozen=True)
class ModelConfig:
    d: int = 16
    w: int = 32
    L: int = 30
    l: int | None = None
    gamma: float = 0.95
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0
    attention: bool = True
    compress: str = "last"
    value_projection: bool = False

    def __post_init__(self):
        if self.d <= 0 or self.d % 2:
            raise ConfigError(f"embedding size d must be positive and even, got {self.d}")
        if min(self.w, self.L, self.batch_size, self.max_epochs) < 1:
            raise ConfigError("w, L, batch_size and max_epochs must be positive")
        if self.patience < 0 or self.learning_rate <= 0:
            raise ConfigError("patience must be >= 0 and learning_rate > 0")
        if not 0 < self.gamma <= 1:
            raise ConfigError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.positional_base < self.L:
            raise ConfigError("positional base l must be >= L")
        if self.compress not in ("last", "mean"):
            raise ConfigError(f"compress must be 'last' or 'mean', got {self.compress!r}")

    @property
    def positional_base(self) -> int:
        return self.L if self.l is None else self.l

    def to_dict(self):
        return asdict(self)


def sigmoid(x):
    return expit(x)


def gelu(x):
    return 0.5 * x * (1.0 + erf(x / SQRT2))


def gelu_grad(x):
    return 0.5 * (1.0 + erf(x / SQRT2)) + x * INV_SQRT2PI * np.exp(-0.5 * x * x)


def softmax(S, axis=-1):
    e = np.exp(S - S.max(axis=axis, keepdims=True))
    A = e / e.sum(axis=axis, keepdims=True)
    if not np.all(np.isfinite(A)):
        raise NumericError("non-finite attention weights")
    return A


def positional_embedding(L, d, l, gamma) -> np.ndarray:
    """Interleaved sin/cos position codes damped toward older days.

    Row ``m`` is ``gamma ** (L - 1 - m)`` times
    ``[sin(m / l**(0/d)), cos(m / l**(0/d)), sin(m / l**(2/d)), ...]``.
    """
    if d % 2:
        raise ConfigError(f"d must be even, got {d}")
    if l < L:
        raise ConfigError("positional base l must be >= L")
    m = np.arange(L, dtype=np.float64)[:, None]
    freq = l ** (-2.0 * np.arange(d // 2) / d)
    pe = np.empty((L, d))
    pe[:, 0::2] = np.sin(m * freq)
    pe[:, 1::2] = np.cos(m * freq)
    decay = gamma ** (L - 1 - np.arange(L, dtype=np.float64))
    return pe * decay[:, None]


def embed_window(window, W, b) -> np.ndarray:
    x = np.asarray(window, dtype=np.float64)
    if x.shape[-1] != W.shape[0]:
        raise DimensionError(f"feature dim {x.shape[-1]} != embedding input {W.shape[0]}")
    return x @ W + b


def concat_embeddings(X_d, PE) -> np.ndarray:
    X_d = np.asarray(X_d, dtype=np.float64)
    PE = np.asarray(PE, dtype=np.float64)
    if X_d.shape[-2:] != PE.shape:
        raise DimensionError(f"embedding {X_d.shape} and positions {PE.shape} disagree")
    PE = np.broadcast_to(PE, X_d.shape)
    return np.concatenate([X_d, PE], axis=-1)


def gru_forward(Xbar, p, return_cache=False):
    """Run the gated recurrent unit from a zero state.

    ``Xbar`` is ``(L, 2d)`` or ``(B, L, 2d)``. Returns every hidden state
    ``Y`` and the final state ``h_n``.
    """
    X = np.asarray(Xbar, dtype=np.float64)
    single = X.ndim == 2
    if single:
        X = X[None]
    B, L, _ = X.shape
    w = p["gru.Uz"].shape[0]
    # time-major buffers keep every per-step slice contiguous
    Xt = np.ascontiguousarray(X.transpose(1, 0, 2))
    # update and reset gates share one matmul per step
    xzr = Xt @ np.hstack([p["gru.Wz"], p["gru.Wr"]]) + np.concatenate([p["gru.bz"], p["gru.br"]])
    xh = Xt @ p["gru.Wh"] + p["gru.bh"]
    Uzr, Uh = np.hstack([p["gru.Uz"], p["gru.Ur"]]), p["gru.Uh"]
    Yt = np.empty((L, B, w))
    ZR, HH = np.empty((L, B, 2 * w)), np.empty((L, B, w))
    h = np.zeros((B, w))
    for t in range(L):
        zr = expit(xzr[t] + h @ Uzr)
        r = zr[:, w:]
        hh = np.tanh(xh[t] + (r * h) @ Uh)
        h = h + zr[:, :w] * (hh - h)
        Yt[t], ZR[t], HH[t] = h, zr, hh
    if not np.all(np.isfinite(Yt)):
        bad = int(np.flatnonzero(~np.isfinite(Yt).all(axis=(1, 2)))[0])
        raise NumericError(f"non-finite GRU state at step {bad}")
    Y = Yt.transpose(1, 0, 2)
    out = (Y[0], Y[0, -1]) if single else (Y, Y[:, -1])
    if return_cache:
        return out + ({"Xt": Xt, "Yt": Yt, "ZR": ZR, "HH": HH},)
    return out


def attention_compress(Y, Wq, Wk, Wv=None, compress="last", return_cache=False):
    """Self-attention over GRU outputs reduced to one vector per window.

    Scores are the unscaled products ``(Y Wq)(Y Wk)^T``; the context is
    ``softmax(scores) @ Y`` (or ``@ Y Wv`` with a value projection).
    ``compress="last"`` keeps the context row of the final day.
    """
    Y = np.asarray(Y, dtype=np.float64)
    single = Y.ndim == 2
    if single:
        Y = Y[None]
    Q = Y @ Wq
    K = Y @ Wk
    A = softmax(Q @ np.swapaxes(K, 1, 2))
    V = Y if Wv is None else Y @ Wv
    C = A @ V
    ybar = C[:, -1] if compress == "last" else C.mean(axis=1)
    ybar = ybar[0] if single else ybar
    if return_cache:
        return ybar, {"Q": Q, "K": K, "A": A, "V": V}
    return ybar


def predict(ybar, p, return_cache=False):
    """GeLU projection followed by a single sigmoid output unit."""
    o = ybar @ p["out.W"] + p["out.b"]
    g = gelu(o)
    s = g @ p["head.W"] + p["head.b"][0]
    prob = sigmoid(np.asarray(s, dtype=np.float64))
    if return_cache:
        return prob, {"o": o, "g": g}
    return prob


def bce_loss(y, p) -> float:
    y = np.asarray(y, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if y.shape != p.shape:
        raise DimensionError(f"label shape {y.shape} != probability shape {p.shape}")
    q = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-np.mean(y * np.log(q) + (1.0 - y) * np.log(1.0 - q)))


PARAM_ORDER = (
    "embed.W", "embed.b",
    "gru.Wz", "gru.Wr", "gru.Wh", "gru.Uz", "gru.Ur", "gru.Uh", "gru.bz", "gru.br", "gru.bh",
    "attn.Wq", "attn.Wk", "attn.Wv",
    "out.W", "out.b", "head.W", "head.b",
)


def param_shapes(config: ModelConfig, n_features: int):
    d, w = config.d, config.w
    shapes = {
        "embed.W": (n_features, d), "embed.b": (d,),
        "gru.Wz": (2 * d, w), "gru.Wr": (2 * d, w), "gru.Wh": (2 * d, w),
        "gru.Uz": (w, w), "gru.Ur": (w, w), "gru.Uh": (w, w),
        "gru.bz": (w,), "gru.br": (w,), "gru.bh": (w,),
        "out.W": (w, w), "out.b": (w,), "head.W": (w,), "head.b": (1,),
    }
    if config.attention:
        shapes["attn.Wq"] = (w, w)
        shapes["attn.Wk"] = (w, w)
        if config.value_projection:
            shapes["attn.Wv"] = (w, w)
    return {k: shapes[k] for k in PARAM_ORDER if k in shapes}


def _fan_in(name, config, n_features):
    layer = name.split(".")[0]
    return {"embed": n_features, "gru": 2 * config.d, "attn": config.w,
            "out": config.w, "head": config.w}[layer] if not name.startswith("gru.U") else config.w


class ForecastModel:
    """Parameters plus forward/backward passes for one cluster's forecaster."""

    def __init__(self, config: ModelConfig, n_features: int, params=None):
        self.config = config
        self.n_features = n_features
        self.pe = positional_embedding(config.L, config.d, config.positional_base, config.gamma)
        self._cache = None
        if params is None:
            params = self.init_params(config, n_features)
        shapes = param_shapes(config, n_features)
        if set(params) != set(shapes):
            raise DimensionError(f"parameter names {sorted(params)} != {sorted(shapes)}")
        for k, shape in shapes.items():
            if params[k].shape != shape:
                raise DimensionError(f"{k}: shape {params[k].shape} != {shape}")
        self.params = {k: np.asarray(params[k], dtype=np.float64) for k in shapes}

    @staticmethod
    def init_params(config: ModelConfig, n_features: int):
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every tensor, seeded."""
        rng = np.random.default_rng(config.seed)
        out = {}
        for name, shape in param_shapes(config, n_features).items():
            bound = 1.0 / np.sqrt(_fan_in(name, config, n_features))
            out[name] = rng.uniform(-bound, bound, size=shape)
        return out

    def forward(self, X, keep_cache=False):
        """Purchase probability for each window in ``X`` of shape ``(B, L, F)``."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 3 or X.shape[1:] != (self.config.L, self.n_features):
            raise DimensionError(
                f"expected windows of shape (B, {self.config.L}, {self.n_features}), got {X.shape}"
            )
        p = self.params
        E = embed_window(X, p["embed.W"], p["embed.b"])
        Xbar = concat_embeddings(E, self.pe)
        Y, h_n, gcache = gru_forward(Xbar, p, return_cache=True)
        acache = None
        if self.config.attention:
            ybar, acache = attention_compress(
                Y, p["attn.Wq"], p["attn.Wk"], p.get("attn.Wv"), self.config.compress, return_cache=True
            )
        else:
            ybar = h_n
        prob, hcache = predict(ybar, p, return_cache=True)
        if not np.all(np.isfinite(prob)):
            raise NumericError("non-finite prediction")
        if keep_cache:
            self._cache = {"raw": X, "gru": gcache, "attn": acache, "head": hcache,
                           "ybar": ybar, "prob": prob}
        return prob

    predict_proba = forward

    def loss(self, X, y):
        return bce_loss(y, self.forward(X))

    def backward(self, y):
        """Gradients of the mean BCE loss for the batch cached by the last
        ``forward(..., keep_cache=True)`` call."""
        if self._cache is None:
            raise UsageError("backward() needs a cached forward pass")
        c, p, cfg = self._cache, self.params, self.config
        y = np.asarray(y, dtype=np.float64)
        prob = c["prob"]
        if y.shape != prob.shape:
            raise DimensionError("label count does not match cached batch")
        B = len(y)
        g = {}

        # sigmoid + BCE collapse to (p - y) / B at the logit
        ds = (prob - y) / B
        hc = c["head"]
        g["head.W"] = hc["g"].T @ ds
        g["head.b"] = np.array([ds.sum()])
        do = np.outer(ds, p["head.W"]) * gelu_grad(hc["o"])
        g["out.W"] = c["ybar"].T @ do
        g["out.b"] = do.sum(axis=0)
        dybar = do @ p["out.W"].T

        gc = c["gru"]
        Y = gc["Yt"].transpose(1, 0, 2)
        L = Y.shape[1]
        dY = np.zeros_like(Y)
        if cfg.attention:
            ac = c["attn"]
            A, Q, K, V = ac["A"], ac["Q"], ac["K"], ac["V"]
            dC = np.zeros_like(Y)
            if cfg.compress == "last":
                dC[:, -1] = dybar
            else:
                dC[:] = dybar[:, None, :] / L
            dA = dC @ np.swapaxes(V, 1, 2)
            dV = np.swapaxes(A, 1, 2) @ dC
            dS = A * (dA - (dA * A).sum(axis=-1, keepdims=True))
            dQ = dS @ K
            dK = np.swapaxes(dS, 1, 2) @ Q
            Yf = Y.reshape(-1, Y.shape[-1]).T
            g["attn.Wq"] = Yf @ dQ.reshape(-1, dQ.shape[-1])
            g["attn.Wk"] = Yf @ dK.reshape(-1, dK.shape[-1])
            dY += dQ @ p["attn.Wq"].T + dK @ p["attn.Wk"].T
            if "attn.Wv" in p:
                g["attn.Wv"] = Yf @ dV.reshape(-1, dV.shape[-1])
                dY += dV @ p["attn.Wv"].T
            else:
                dY += dV
        else:
            dY[:, -1] = dybar

        w = cfg.w
        Xt, Yt, ZR, HH = gc["Xt"], gc["Yt"], gc["ZR"], gc["HH"]
        Z, R = ZR[..., :w], ZR[..., w:]
        dYt = np.ascontiguousarray(dY.transpose(1, 0, 2))
        Hprev = np.concatenate([np.zeros_like(Yt[:1]), Yt[:-1]], axis=0)
        # derivative factors that do not depend on the incoming gradient
        Kz = (HH - Hprev) * Z * (1.0 - Z)
        Kr = Hprev * R * (1.0 - R)
        Kh = Z * (1.0 - HH * HH)
        omZ = 1.0 - Z
        dAzr, dAh = np.empty((L, B, 2 * w)), np.empty((L, B, w))
        UzrT = np.hstack([p["gru.Uz"], p["gru.Ur"]]).T
        UhT = p["gru.Uh"].T
        dh_next = np.zeros((B, w))
        for t in range(L - 1, -1, -1):
            dh = dYt[t] + dh_next
            da_h = dh * Kh[t]
            drh = da_h @ UhT
            da_zr = dAzr[t]
            np.multiply(dh, Kz[t], out=da_zr[:, :w])
            np.multiply(drh, Kr[t], out=da_zr[:, w:])
            dAh[t] = da_h
            dh_next = dh * omZ[t] + drh * R[t] + da_zr @ UzrT

        def outer(a, b):
            return a.reshape(-1, a.shape[-1]).T @ b.reshape(-1, b.shape[-1])

        gWzr = outer(Xt, dAzr)
        g["gru.Wz"], g["gru.Wr"] = gWzr[:, :w], gWzr[:, w:]
        g["gru.Wh"] = outer(Xt, dAh)
        gbzr = dAzr.sum(axis=(0, 1))
        g["gru.bz"], g["gru.br"] = gbzr[:w], gbzr[w:]
        g["gru.bh"] = dAh.sum(axis=(0, 1))
        gUzr = outer(Hprev, dAzr)
        g["gru.Uz"], g["gru.Ur"] = gUzr[:, :w], gUzr[:, w:]
        g["gru.Uh"] = outer(R * Hprev, dAh)

        dXbar = (dAzr @ np.vstack([p["gru.Wz"].T, p["gru.Wr"].T]) + dAh @ p["gru.Wh"].T).transpose(1, 0, 2)
        dE = dXbar[..., : cfg.d]
        g["embed.W"] = outer(c["raw"], dE)
        g["embed.b"] = dE.sum(axis=(0, 1))
        return {k: g[k] for k in self.params}

    def loss_and_grad(self, X, y):
        prob = self.forward(X, keep_cache=True)
        return bce_loss(y, prob), self.backward(y)

    def copy(self):
        return ForecastModel(self.config, self.n_features,
                             {k: v.copy() for k, v in self.params.items()})
