"""Cross-checks shared by the CLI and the test suite.

Each check returns plain data; callers decide what counts as a failure.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .attention import AttentionConfig, msa_forward, init_weights
from .compressed import Variant, compressed_forward, conjugate_tau1, init_compressed_weights
from .cost import BlockShape, block_mults
from .dense import MulCounter
from .transform import ar1_samples, dct_matrix, kept_count, truncate

__all__ = [
    "CheckResult",
    "random_compressed",
    "equivalence_grid",
    "naive_vs_simplified",
    "tau1_conjugation",
    "measure_block_mults",
    "bench_grid",
    "reconstruction_errors",
]


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    threshold: float

    @property
    def passed(self) -> bool:
        return bool(self.value < self.threshold)


def random_compressed(c: int, m: int, p: int, tau: float, rng: np.random.Generator, scale: float = 0.5):
    """Compressed weights with every parameter drawn at ``scale`` (non-trivial biases and tables)."""
    cw = init_compressed_weights(c, m, p, tau, rng, std=scale)
    for name in ("bq", "bk", "bv", "bo", "bhat"):
        arr = getattr(cw, name)
        arr[...] = scale * rng.standard_normal(arr.shape)
    return cw


def equivalence_grid(count: int = 20, seed: int = 0) -> list[tuple[int, float, int, int]]:
    """First ``count`` valid ``(C, tau, P, seed)`` points over C in {4,8,16}, tau quarters, P in {1,2}."""
    points = []
    for c, tau, p in itertools.product((4, 8, 16), (0.25, 0.5, 0.75, 1.0), (1, 2)):
        if kept_count(c, tau) % p == 0:
            points.append((c, tau, p, seed + len(points)))
    if len(points) < count:
        raise ValueError(f"grid only has {len(points)} valid points")
    return points[:count]


def naive_vs_simplified(c: int, tau: float, p: int, seed: int, n: int = 2, m: int = 2) -> float:
    """Max absolute difference between the two compressed variants on random data."""
    rng = np.random.default_rng(seed)
    cw = random_compressed(c, m, p, tau, rng)
    cfg = AttentionConfig(n, m, c, p)
    trunc = truncate(dct_matrix(c), tau)
    x = rng.standard_normal((n, m * m, c))
    y_naive, _ = compressed_forward(x, cw, cfg, trunc, Variant.NAIVE)
    y_simple, _ = compressed_forward(x, cw, cfg, trunc, Variant.SIMPLIFIED)
    return float(np.max(np.abs(y_naive - y_simple)))


def tau1_conjugation(seed: int, c: int = 8, p: int = 2, n: int = 2, m: int = 2) -> float:
    """Max absolute difference between compressed attention at tau=1 and its vanilla conjugate."""
    rng = np.random.default_rng(seed)
    basis = dct_matrix(c)
    cw = random_compressed(c, m, p, 1.0, rng)
    cfg = AttentionConfig(n, m, c, p)
    x = rng.standard_normal((n, m * m, c))
    y_cmp, _ = compressed_forward(x, cw, cfg, truncate(basis, 1.0), Variant.SIMPLIFIED)
    y_van, _ = msa_forward(x, conjugate_tau1(cw, basis), cfg)
    return float(np.max(np.abs(y_cmp - y_van)))


def measure_block_mults(n: int, m: int, c: int, p: int, variant: str, tau: float = 1.0, seed: int = 0) -> int:
    """Multiplications counted while running one real forward pass."""
    rng = np.random.default_rng(seed)
    cfg = AttentionConfig(n, m, c, p)
    x = rng.standard_normal((n, m * m, c))
    counter = MulCounter()
    if variant == "vanilla":
        msa_forward(x, init_weights(c, m, p, rng), cfg, counter)
    else:
        cw = init_compressed_weights(c, m, p, tau, rng)
        compressed_forward(x, cw, cfg, truncate(dct_matrix(c), tau), Variant(variant), counter)
    return counter.count


def bench_grid(full: bool = True) -> list[dict]:
    """Closed-form versus counted multiplications over a grid of block shapes."""
    ns = (1, 2, 3) if full else (1,)
    ms = (1, 2, 3) if full else (2,)
    cs = (4, 8, 12, 16) if full else (4, 8)
    rows = []
    for n, m, c, p in itertools.product(ns, ms, cs, (1, 2, 4)):
        if c % p:
            continue
        for variant in ("vanilla", "naive", "simplified"):
            taus = (1.0,) if variant == "vanilla" else (0.25, 0.5, 0.75, 1.0)
            for tau in taus:
                if variant != "vanilla" and kept_count(c, tau) % p:
                    continue
                closed = block_mults(BlockShape(n * m * m, c, m, p), variant, tau).total
                measured = measure_block_mults(n, m, c, p, variant, tau, seed=len(rows))
                rows.append(dict(n=n, m=m, c=c, p=p, variant=variant, tau=tau,
                                 closed_form=closed, measured=measured, match=closed == measured))
    return rows


def reconstruction_errors(samples: int = 100, c: int = 8, rho: float = 0.9, tau: float = 0.5,
                          seed: int = 0) -> tuple[float, float]:
    """Mean squared error of keeping the first channels versus the first DCT coefficients.

    Returns ``(plain_truncation_mse, dct_truncation_mse)`` for unit-variance
    AR(1) channel vectors, each reconstructed by zero padding (plus the
    inverse DCT for the second).
    """
    x = ar1_samples(samples, c, rho, np.random.default_rng(seed))
    kept = kept_count(c, tau)
    plain = x.copy()
    plain[:, kept:] = 0.0
    trunc = truncate(dct_matrix(c), tau)
    dct = (x @ trunc.dbar.T) @ trunc.dbar
    return float(np.mean((x - plain) ** 2)), float(np.mean((x - dct) ** 2))
