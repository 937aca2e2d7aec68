"""Windowed multi-head self-attention with relative position bias.

Tokens are rows: a linear layer maps ``X`` to ``X @ W.T + b``. A window
tensor has shape ``(N, M*M, C)``. Backward passes are written out by hand
and checked against central differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .dense import MulCounter, as_real, matmul, softmax_rows, trunc_normal_init

__all__ = [
    "AttentionConfig",
    "AttentionWeights",
    "AttentionCache",
    "init_weights",
    "partition",
    "reverse",
    "relative_index",
    "relative_bias",
    "msa_forward",
    "msa_backward",
    "PARAM_NAMES",
]

PARAM_NAMES = ("wq", "wk", "wv", "wo", "bq", "bk", "bv", "bo", "bhat")


@dataclass(frozen=True)
class AttentionConfig:
    n: int
    m: int
    c: int
    p: int

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError(f"window count and side must be >= 1, got n={self.n}, m={self.m}")
        if self.p < 1 or self.c % self.p:
            raise ValueError(f"{self.p} heads do not divide {self.c} channels")

    @property
    def tokens(self) -> int:
        return self.m * self.m

    @property
    def head_dim(self) -> int:
        return self.c // self.p


@dataclass
class AttentionWeights:
    """Projection weights, biases and per-head bias tables of one block.

    ``frozen`` names parameters that receive zero gradient. ``version`` is
    bumped by every in-place update so stale caches can be detected.
    """

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    bq: np.ndarray
    bk: np.ndarray
    bv: np.ndarray
    bo: np.ndarray
    bhat: np.ndarray  # (P, 2M-1, 2M-1)
    frozen: frozenset = field(default_factory=frozenset)
    version: int = 0

    def __post_init__(self):
        for name in PARAM_NAMES:
            arr = as_real(getattr(self, name)).copy()
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
            setattr(self, name, arr)
        self.frozen = frozenset(self.frozen)
        unknown = self.frozen - set(PARAM_NAMES)
        if unknown:
            raise ValueError(f"unknown frozen parameters: {sorted(unknown)}")
        for name in ("wq", "wk", "wv"):
            if getattr(self, name).shape != self.wq.shape:
                raise ValueError(f"{name} shape {getattr(self, name).shape} != wq shape {self.wq.shape}")
        inner = self.wq.shape[0]
        for name in ("bq", "bk", "bv"):
            if getattr(self, name).shape != (inner,):
                raise ValueError(f"{name} must have shape ({inner},)")
        if self.wo.ndim != 2 or self.wo.shape[0] != self.wo.shape[1]:
            raise ValueError(f"wo must be square, got {self.wo.shape}")
        if self.bo.shape != (self.wo.shape[0],):
            raise ValueError(f"bo must have shape ({self.wo.shape[0]},)")
        if self.bhat.ndim != 3 or self.bhat.shape[1] != self.bhat.shape[2] or self.bhat.shape[1] % 2 == 0:
            raise ValueError(f"bhat must have shape (P, 2M-1, 2M-1), got {self.bhat.shape}")

    @property
    def heads(self) -> int:
        return self.bhat.shape[0]

    @property
    def window(self) -> int:
        return (self.bhat.shape[1] + 1) // 2

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def trainable(self) -> list[str]:
        return [name for name in PARAM_NAMES if name not in self.frozen]

    def copy(self, dtype=None):
        """Deep copy; ``dtype`` optionally converts every parameter (e.g. to ``np.longdouble``)."""
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        for name in PARAM_NAMES:
            kw[name] = kw[name].astype(dtype) if dtype is not None else kw[name].copy()
        return type(self)(**kw)


def init_weights(c: int, m: int, p: int, seed: int | np.random.Generator = 0, std: float = 0.02) -> AttentionWeights:
    """Swin-style defaults: truncated-normal weights, zero biases and bias tables."""
    if c % p:
        raise ValueError(f"{p} heads do not divide {c} channels")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    w = {name: trunc_normal_init(c, c, std, rng) for name in ("wq", "wk", "wv", "wo")}
    b = {name: np.zeros(c) for name in ("bq", "bk", "bv", "bo")}
    return AttentionWeights(**w, **b, bhat=np.zeros((p, 2 * m - 1, 2 * m - 1)))


def partition(image: np.ndarray, m: int) -> np.ndarray:
    """Split an ``(H, W, C)`` image into ``(H W / M^2, M^2, C)`` windows.

    Windows and the tokens inside each window are both in raster order.
    """
    image = np.asarray(image)
    if image.ndim != 3:
        raise ValueError(f"image must be (H, W, C), got shape {image.shape}")
    h, w, c = image.shape
    if m < 1 or h % m or w % m:
        raise ValueError(f"window side {m} does not divide image size {h}x{w}")
    x = image.reshape(h // m, m, w // m, m, c).transpose(0, 2, 1, 3, 4)
    return x.reshape(-1, m * m, c).copy()


def reverse(windows: np.ndarray, h: int, w: int) -> np.ndarray:
    """Inverse of :func:`partition`."""
    windows = np.asarray(windows)
    n, t, c = windows.shape
    m = int(round(np.sqrt(t)))
    if m * m != t or h % m or w % m or n != (h // m) * (w // m):
        raise ValueError(f"cannot reassemble {windows.shape} windows into {h}x{w}")
    x = windows.reshape(h // m, w // m, m, m, c).transpose(0, 2, 1, 3, 4)
    return x.reshape(h, w, c).copy()


def relative_index(m: int) -> np.ndarray:
    """Flat index into a ``(2M-1) x (2M-1)`` table for every token pair."""
    ys, xs = np.divmod(np.arange(m * m), m)
    dy = ys[:, None] - ys[None, :] + m - 1
    dx = xs[:, None] - xs[None, :] + m - 1
    return dy * (2 * m - 1) + dx


def relative_bias(bhat: np.ndarray, m: int) -> np.ndarray:
    """Expand one table (or a stack of per-head tables) to ``M^2 x M^2`` biases."""
    bhat = as_real(bhat)
    side = 2 * m - 1
    if bhat.shape[-2:] != (side, side):
        raise ValueError(f"bias table shape {bhat.shape} does not match window side {m}")
    flat = bhat.reshape(*bhat.shape[:-2], side * side)
    return flat[..., relative_index(m)]


def _bias_table_grad(d_bias: np.ndarray, m: int) -> np.ndarray:
    """Scatter-add ``(P, M^2, M^2)`` bias gradients back onto the tables."""
    p = d_bias.shape[0]
    side = 2 * m - 1
    idx = relative_index(m).ravel()
    out = np.zeros((p, side * side))
    for h in range(p):
        np.add.at(out[h], idx, d_bias[h].ravel())
    return out.reshape(p, side, side)


def _split_heads(t: np.ndarray, p: int) -> np.ndarray:
    n, tok, c = t.shape
    return t.reshape(n, tok, p, c // p).transpose(0, 2, 1, 3)


def _merge_heads(t: np.ndarray) -> np.ndarray:
    n, p, tok, d = t.shape
    return t.transpose(0, 2, 1, 3).reshape(n, tok, p * d)


@dataclass
class _CoreCache:
    qh: np.ndarray
    kh: np.ndarray
    vh: np.ndarray
    probs: np.ndarray
    scale: float
    m: int


def attend(q, k, v, bhat, m, counter=None):
    """Per-head ``softmax(Q K^T / sqrt(d) + B) V`` over every window, heads merged."""
    p = bhat.shape[0]
    if q.shape[-1] % p:
        raise ValueError(f"{p} heads do not divide projection width {q.shape[-1]}")
    qh, kh, vh = (_split_heads(t, p) for t in (q, k, v))
    scale = 1.0 / np.sqrt(qh.shape[-1])
    scores = matmul(qh, kh.transpose(0, 1, 3, 2), counter) * scale + relative_bias(bhat, m)[None]
    probs = softmax_rows(scores)
    a = _merge_heads(matmul(probs, vh, counter))
    return a, _CoreCache(qh, kh, vh, probs, scale, m)


def attend_backward(cache: _CoreCache, da: np.ndarray):
    """Gradients of :func:`attend` w.r.t. ``q``, ``k``, ``v`` and the bias tables."""
    p = cache.probs.shape[1]
    dah = _split_heads(da, p)
    dvh = cache.probs.transpose(0, 1, 3, 2) @ dah
    dprobs = dah @ cache.vh.transpose(0, 1, 3, 2)
    dscores = cache.probs * (dprobs - np.sum(dprobs * cache.probs, axis=-1, keepdims=True))
    dbhat = _bias_table_grad(dscores.sum(axis=0), cache.m)
    dqh = (dscores @ cache.kh) * cache.scale
    dkh = (dscores.transpose(0, 1, 3, 2) @ cache.qh) * cache.scale
    return _merge_heads(dqh), _merge_heads(dkh), _merge_heads(dvh), dbhat


def _linear(x, w, b, counter=None):
    return matmul(x, w.T, counter) + b


def _linear_backward(x, w, dy):
    """Returns ``(dx, dw, db)`` for ``y = x @ w.T + b`` over any leading axes."""
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    return dy @ w, dy2.T @ x2, dy2.sum(axis=0)


@dataclass
class AttentionCache:
    x: np.ndarray
    y_shape: tuple
    weights: AttentionWeights
    version: int
    core: _CoreCache
    a: np.ndarray


def _check_input(x, cfg: AttentionConfig, c: int):
    x = as_real(x)
    expected = (cfg.n, cfg.tokens, c)
    if x.shape != expected:
        raise ValueError(f"input shape {x.shape} != expected {expected}")
    return x


def msa_forward(x, w: AttentionWeights, cfg: AttentionConfig, counter: MulCounter | None = None):
    """Vanilla window attention. Returns ``(y, cache)``."""
    x = _check_input(x, cfg, cfg.c)
    if w.wq.shape != (cfg.c, cfg.c) or w.wo.shape != (cfg.c, cfg.c):
        raise ValueError(f"weights {w.wq.shape}/{w.wo.shape} do not match C={cfg.c}")
    if w.heads != cfg.p or w.window != cfg.m:
        raise ValueError(f"bias tables {w.bhat.shape} do not match P={cfg.p}, M={cfg.m}")
    q = _linear(x, w.wq, w.bq, counter)
    # the key bias adds q_i . bk to every score in row i; softmax cancels it exactly
    k = matmul(x, w.wk.T, counter)
    v = _linear(x, w.wv, w.bv, counter)
    a, core = attend(q, k, v, w.bhat, cfg.m, counter)
    y = _linear(a, w.wo, w.bo, counter)
    return y, AttentionCache(x=x, y_shape=y.shape, weights=w, version=w.version, core=core, a=a)


def _check_cache(cache, dy):
    dy = as_real(dy)
    if dy.shape != cache.y_shape:
        raise ValueError(f"upstream gradient shape {dy.shape} != output shape {cache.y_shape}")
    if cache.weights.version != cache.version:
        raise ValueError("cache is stale: weights were updated after the forward pass")
    return dy


def _mask_frozen(grads: dict, w) -> dict:
    for name in w.frozen:
        grads[name] = np.zeros_like(grads[name])
    return grads


def msa_backward(cache: AttentionCache, dy) -> dict[str, np.ndarray]:
    """Gradients for every parameter (zero when frozen) and for the input, key ``"x"``."""
    dy = _check_cache(cache, dy)
    w = cache.weights
    da, dwo, dbo = _linear_backward(cache.a, w.wo, dy)
    dq, dk, dv, dbhat = attend_backward(cache.core, da)
    dxq, dwq, dbq = _linear_backward(cache.x, w.wq, dq)
    dxk, dwk, _ = _linear_backward(cache.x, w.wk, dk)
    dbk = np.zeros_like(w.bk)
    dxv, dwv, dbv = _linear_backward(cache.x, w.wv, dv)
    grads = dict(wq=dwq, wk=dwk, wv=dwv, wo=dwo, bq=dbq, bk=dbk, bv=dbv, bo=dbo, bhat=dbhat,
                 x=dxq + dxk + dxv)
    return _mask_frozen(grads, w)
