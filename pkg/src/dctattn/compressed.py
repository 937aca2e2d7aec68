"""DCT initialization and DCT-compressed window attention.

Compressed attention encodes each token's channels with the leading
``kept`` DCT rows, runs attention at width ``kept`` and maps back to C
channels either explicitly (``naive``: zero-pad, inverse DCT, output
projection) or through the fused ``wo @ dbar_inv`` matrix (``simplified``).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .attention import (
    AttentionConfig,
    AttentionWeights,
    _check_cache,
    _check_input,
    _CoreCache,
    _linear,
    _linear_backward,
    _mask_frozen,
    attend,
    attend_backward,
)
from .dense import MulCounter, as_real, matmul, trunc_normal_init
from .transform import DctBasis, TruncatedDct, kept_count, selection

__all__ = [
    "InitTarget",
    "CompressedWeights",
    "Variant",
    "CompressedCache",
    "dct_init",
    "init_compressed_weights",
    "compressed_forward",
    "compressed_backward",
    "fuse_output",
    "conjugate_tau1",
    "truncate_no_dct_forward",
]

_TARGET_MATRIX = {"Q": "wq", "K": "wk", "V": "wv"}


@dataclass(frozen=True)
class InitTarget:
    """Which of the Q/K/V projections start from the DCT matrix, and whether they stay fixed."""

    targets: frozenset
    frozen: bool = False

    def __init__(self, targets, frozen: bool = False):
        targets = frozenset(t.upper() for t in targets)
        if not targets:
            raise ValueError("at least one of Q, K, V must be targeted")
        bad = targets - set(_TARGET_MATRIX)
        if bad:
            raise ValueError(f"unknown init targets: {sorted(bad)}")
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "frozen", bool(frozen))


class Variant(str, Enum):
    NAIVE = "naive"
    SIMPLIFIED = "simplified"


class CompressedWeights(AttentionWeights):
    """Attention weights with ``kept x kept`` projections and a full ``C x C`` output matrix."""

    @property
    def kept(self) -> int:
        return self.wq.shape[0]

    @property
    def channels(self) -> int:
        return self.wo.shape[0]


def dct_init(w: AttentionWeights, target: InitTarget, basis: DctBasis) -> AttentionWeights:
    """Copy of ``w`` with each targeted projection set to the DCT matrix and its bias zeroed."""
    c = w.wq.shape[0]
    if basis.size != c or w.wq.shape != (c, c):
        raise ValueError(f"DCT size {basis.size} does not match projection shape {w.wq.shape}")
    out = w.copy()
    frozen = set(out.frozen)
    for t in sorted(target.targets):
        name = _TARGET_MATRIX[t]
        setattr(out, name, np.array(basis.d, dtype=np.float64))
        setattr(out, "b" + name[1], np.zeros(c))
        if target.frozen:
            frozen.add(name)
    out.frozen = frozenset(frozen)
    return out


def init_compressed_weights(c: int, m: int, p: int, tau: float, seed: int | np.random.Generator = 0,
                            std: float = 0.02) -> CompressedWeights:
    kept = kept_count(c, tau)
    if kept % p:
        raise ValueError(f"{p} heads do not divide {kept} retained coefficients")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    w = {name: trunc_normal_init(kept, kept, std, rng) for name in ("wq", "wk", "wv")}
    w["wo"] = trunc_normal_init(c, c, std, rng)
    b = {name: np.zeros(kept) for name in ("bq", "bk", "bv")}
    return CompressedWeights(**w, **b, bo=np.zeros(c), bhat=np.zeros((p, 2 * m - 1, 2 * m - 1)))


def fuse_output(wo: np.ndarray, trunc: TruncatedDct) -> np.ndarray:
    """``wo @ dbar_inv``: inverse transform and output projection as one ``C x kept`` matrix."""
    wo = as_real(wo)
    if wo.shape != (trunc.size, trunc.size):
        raise ValueError(f"wo shape {wo.shape} does not match C={trunc.size}")
    return wo @ trunc.dbar_inv


@dataclass
class CompressedCache:
    x: np.ndarray
    y_shape: tuple
    weights: CompressedWeights
    version: int
    trunc: TruncatedDct
    variant: Variant
    core: _CoreCache
    xt: np.ndarray
    a: np.ndarray
    out_in: np.ndarray  # input of the final matmul: padded+inverted A (naive) or A (simplified)
    out_w: np.ndarray   # matrix of the final matmul: wo (naive) or fused wo @ dbar_inv


def _check_compressed(cw: CompressedWeights, cfg: AttentionConfig, trunc: TruncatedDct):
    if trunc.size != cfg.c:
        raise ValueError(f"transform size {trunc.size} does not match C={cfg.c}")
    if trunc.kept != cw.kept:
        raise ValueError(f"transform keeps {trunc.kept} coefficients but weights expect {cw.kept}")
    if cw.channels != cfg.c:
        raise ValueError(f"output projection {cw.wo.shape} does not match C={cfg.c}")
    if cw.kept % cfg.p:
        raise ValueError(f"{cfg.p} heads do not divide {cw.kept} retained coefficients")
    if cw.heads != cfg.p or cw.window != cfg.m:
        raise ValueError(f"bias tables {cw.bhat.shape} do not match P={cfg.p}, M={cfg.m}")


def compressed_forward(x, cw: CompressedWeights, cfg: AttentionConfig, trunc: TruncatedDct,
                       variant: Variant | str = Variant.SIMPLIFIED, counter: MulCounter | None = None):
    """Compressed attention forward pass. Returns ``(y, cache)`` with ``y`` of shape ``(N, M^2, C)``.

    The fused matrix of the simplified variant is rebuilt from ``cw.wo``
    on every call and is not charged to ``counter`` (it is a weight-side
    cost independent of the token count).
    """
    variant = Variant(variant)
    _check_compressed(cw, cfg, trunc)
    x = _check_input(x, cfg, cfg.c)
    xt = matmul(x, trunc.dbar.T, counter)
    q = _linear(xt, cw.wq, cw.bq, counter)
    # the key bias adds q_i . bk to every score in row i; softmax cancels it exactly
    k = matmul(xt, cw.wk.T, counter)
    v = _linear(xt, cw.wv, cw.bv, counter)
    a, core = attend(q, k, v, cw.bhat, cfg.m, counter)
    if variant is Variant.NAIVE:
        # zero-pad then inverse transform == multiply by the truncated rows
        out_in = matmul(a, trunc.dbar, counter)
        out_w = cw.wo
    else:
        out_in = a
        out_w = fuse_output(cw.wo, trunc)
    y = _linear(out_in, out_w, cw.bo, counter)
    cache = CompressedCache(x=x, y_shape=y.shape, weights=cw, version=cw.version, trunc=trunc,
                            variant=variant, core=core, xt=xt, a=a, out_in=out_in, out_w=out_w)
    return y, cache


def compressed_backward(cache: CompressedCache, dy) -> dict[str, np.ndarray]:
    dy = _check_cache(cache, dy)
    cw, trunc = cache.weights, cache.trunc
    d_in, d_outw, dbo = _linear_backward(cache.out_in, cache.out_w, dy)
    if cache.variant is Variant.NAIVE:
        dwo = d_outw
        da = d_in @ trunc.dbar.T
    else:
        # fused = wo @ dbar.T, so d wo = d fused @ dbar
        dwo = d_outw @ trunc.dbar
        da = d_in
    dq, dk, dv, dbhat = attend_backward(cache.core, da)
    dxq, dwq, dbq = _linear_backward(cache.xt, cw.wq, dq)
    dxk, dwk, _ = _linear_backward(cache.xt, cw.wk, dk)
    dbk = np.zeros_like(cw.bk)
    dxv, dwv, dbv = _linear_backward(cache.xt, cw.wv, dv)
    dx = (dxq + dxk + dxv) @ trunc.dbar
    grads = dict(wq=dwq, wk=dwk, wv=dwv, wo=dwo, bq=dbq, bk=dbk, bv=dbv, bo=dbo, bhat=dbhat, x=dx)
    return _mask_frozen(grads, cw)


def conjugate_tau1(cw: CompressedWeights, basis: DctBasis) -> AttentionWeights:
    """Vanilla weights computing the same function as ``cw`` compressed at tau = 1."""
    c = basis.size
    if cw.kept != c or cw.channels != c:
        raise ValueError(f"conjugation needs kept == C, got kept={cw.kept}, C={c}")
    d = basis.d
    return AttentionWeights(
        wq=cw.wq @ d, wk=cw.wk @ d, wv=cw.wv @ d, wo=cw.wo @ d.T,
        bq=cw.bq.copy(), bk=cw.bk.copy(), bv=cw.bv.copy(), bo=cw.bo.copy(),
        bhat=cw.bhat.copy(), frozen=cw.frozen,
    )


def truncate_no_dct_forward(x, cw: CompressedWeights, cfg: AttentionConfig, tau: float,
                            counter: MulCounter | None = None):
    """Ablation: keep the first channels as-is and zero-pad the output, no transform."""
    y, _ = compressed_forward(x, cw, cfg, selection(cfg.c, tau), Variant.NAIVE, counter)
    return y
