"""Toy-scale trainability harness.

A single attention block (in any of the supported modes) followed by
mean pooling and a two-way linear classifier, trained with momentum SGD on
synthetic AR(1) data labelled by DCT band energy.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .attention import AttentionConfig, init_weights, msa_backward, msa_forward
from .compressed import (
    InitTarget,
    Variant,
    compressed_backward,
    compressed_forward,
    dct_init,
    init_compressed_weights,
)
from .dense import as_real, trunc_normal_init
from .transform import ar1_samples, dct_matrix, selection, toeplitz_cov, truncate

__all__ = [
    "MODES",
    "ToyDatasetSpec",
    "Dataset",
    "ToyModel",
    "TrainHistory",
    "DivergenceError",
    "gen_synthetic",
    "build_model",
    "grad_check",
    "train",
]

MODES = (
    "linear",
    "vanilla",
    "dct-q",
    "dct-k",
    "dct-v",
    "dct-q-frozen",
    "dct-k-frozen",
    "dct-v-frozen",
    "dct-qk",
    "dct-qkv",
    "compressed-naive",
    "compressed-simplified",
    "truncate-no-dct",
)


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class ToyDatasetSpec:
    samples: int = 512
    n: int = 1
    m: int = 2
    c: int = 8
    rho: float = 0.9
    level: float = 2.0  # per-sample mean drawn from U[0, level]
    margin: float = 0.5
    seed: int = 0


@dataclass
class Dataset:
    x: np.ndarray  # (samples, N, M^2, C)
    y: np.ndarray  # (samples,) int labels
    spec: ToyDatasetSpec


def _band_score(x: np.ndarray, basis: np.ndarray, offset: float) -> np.ndarray:
    """Log ratio of lowest- to highest-quarter DCT energy, centred by ``offset``."""
    c = basis.shape[0]
    band = max(c // 4, 1)
    coeffs = x @ basis.T
    energy = np.sum(coeffs**2, axis=tuple(range(1, x.ndim - 1)))
    low = energy[:, :band].sum(axis=1)
    high = energy[:, -band:].sum(axis=1)
    return np.log(low / high) - offset


def gen_synthetic(spec: ToyDatasetSpec) -> Dataset:
    """Draw AR(1) samples and label them by low- versus high-band DCT energy.

    Every token's channel vector is a stationary AR(1) sequence around a
    per-sample mean level drawn from ``U[0, level]``. The level makes the
    label visible to a mean-pooled linear read-out; with zero-mean data the
    classes are symmetric under ``x -> -x`` and a bias-free block cannot
    separate them. A sample's score is the log ratio of its energy in the
    lowest and highest C/4 DCT coefficients, minus the same log ratio of the
    expected energies under the AR(1) covariance. Scores above ``margin`` are class 1,
    below ``-margin`` class 0, anything in between is redrawn. Classes are
    filled to equal size; generation fails after 100x oversampling.
    """
    if spec.samples < 2:
        raise ValueError("need at least two samples")
    if spec.margin < 0 or spec.level < 0:
        raise ValueError("margin and level must be non-negative")
    cfg = AttentionConfig(spec.n, spec.m, spec.c, 1)
    rng = np.random.default_rng(spec.seed)
    d = dct_matrix(spec.c).d
    variances = np.diag(d @ toeplitz_cov(spec.c, spec.rho) @ d.T)
    band = max(spec.c // 4, 1)
    offset = math.log(variances[:band].sum() / variances[-band:].sum())

    need = [spec.samples // 2, spec.samples - spec.samples // 2]
    xs, ys = [], []
    drawn = 0
    budget = 100 * spec.samples
    batch = max(spec.samples, 64)
    while (need[0] or need[1]) and drawn < budget:
        count = min(batch, budget - drawn)
        x = ar1_samples(count * cfg.n * cfg.tokens, spec.c, spec.rho, rng)
        x = x.reshape(count, cfg.n, cfg.tokens, spec.c)
        x += rng.uniform(0.0, spec.level, count)[:, None, None, None]
        score = _band_score(x, d, offset)
        drawn += count
        for xi, si in zip(x, score):
            if si > spec.margin:
                label = 1
            elif si < -spec.margin:
                label = 0
            else:
                continue
            if need[label]:
                need[label] -= 1
                xs.append(xi)
                ys.append(label)
    if need[0] or need[1]:
        raise ValueError(
            f"could not balance classes after {drawn} draws: still need {need[0]} of class 0 "
            f"and {need[1]} of class 1 (rho={spec.rho}, margin={spec.margin})"
        )
    return Dataset(x=np.stack(xs), y=np.array(ys, dtype=np.int64), spec=spec)


@dataclass
class ToyModel:
    mode: str
    cfg: AttentionConfig  # per-sample shape
    block: object | None
    head_w: np.ndarray
    head_b: np.ndarray
    tau: float = 1.0
    trunc: object | None = None
    variant: Variant | None = None

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        if self.block is not None:
            out.update({f"block.{k}": v for k, v in self.block.params().items()})
        out["head.w"] = self.head_w
        out["head.b"] = self.head_b
        return out

    def trainable(self) -> list[str]:
        names = [f"block.{k}" for k in self.block.trainable()] if self.block is not None else []
        return names + ["head.w", "head.b"]

    def _block_forward(self, x):
        cfg = AttentionConfig(x.shape[0], self.cfg.m, self.cfg.c, self.cfg.p)
        if self.trunc is None:
            return msa_forward(x, self.block, cfg)
        return compressed_forward(x, self.block, cfg, self.trunc, self.variant)

    def _block_backward(self, cache, dy):
        if self.trunc is None:
            return msa_backward(cache, dy)
        return compressed_backward(cache, dy)

    def _forward(self, x, y):
        x = as_real(x)
        b = x.shape[0]
        flat = x.reshape(b * self.cfg.n, self.cfg.tokens, self.cfg.c)
        if self.block is not None:
            out, cache = self._block_forward(flat)
        else:
            out, cache = flat, None
        pooled = out.reshape(b, -1, self.cfg.c).mean(axis=1)
        logits = pooled @ self.head_w.T + self.head_b
        shift = logits - logits.max(axis=1, keepdims=True)
        logp = shift - np.log(np.exp(shift).sum(axis=1, keepdims=True))
        loss = -np.mean(logp[np.arange(b), y])
        return loss, (out, cache, pooled, logp)

    def loss(self, x, y):
        """Mean cross-entropy in the working precision of the parameters."""
        return self._forward(x, y)[0]

    def loss_and_grads(self, x, y):
        """Mean cross-entropy over the batch and gradients keyed like :meth:`params`."""
        loss, (out, cache, pooled, logp) = self._forward(x, y)
        b = pooled.shape[0]
        per_sample = out.shape[0] * out.shape[1] // b
        dlogits = np.exp(logp)
        dlogits[np.arange(b), y] -= 1.0
        dlogits /= b
        grads = {"head.w": dlogits.T @ pooled, "head.b": dlogits.sum(axis=0)}
        if self.block is not None:
            dpooled = dlogits @ self.head_w
            dout = np.repeat(dpooled[:, None, :] / per_sample, per_sample, axis=1)
            g = self._block_backward(cache, dout.reshape(out.shape))
            grads.update({f"block.{k}": v for k, v in g.items() if k != "x"})
        return float(loss), grads

    def copy(self, dtype=None) -> "ToyModel":
        """Deep copy, optionally converting every parameter to ``dtype``."""
        conv = (lambda a: a.astype(dtype)) if dtype is not None else (lambda a: a.copy())
        block = self.block.copy(dtype) if self.block is not None else None
        return replace(self, block=block, head_w=conv(self.head_w), head_b=conv(self.head_b))

    def predict(self, x) -> np.ndarray:
        logp = self._forward(x, np.zeros(len(x), dtype=np.int64))[1][3]
        return np.argmax(logp, axis=1)

    def bump_version(self):
        if self.block is not None:
            self.block.version += 1


def build_model(mode: str, n: int = 1, m: int = 2, c: int = 8, p: int = 2, tau: float = 0.5,
                seed: int = 0, std: float = 0.02, bias_std: float = 0.0) -> ToyModel:
    """Build a toy model in ``mode`` (see :data:`MODES`).

    ``std`` is the truncated-normal scale of every random weight matrix.
    ``bias_std > 0`` replaces the zero biases and bias tables with Gaussian
    draws; gradient checks use this so no gradient is degenerate at init.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    cfg = AttentionConfig(n, m, c, p)
    rng = np.random.default_rng(seed)
    block, trunc, variant = None, None, None
    if mode in ("compressed-naive", "compressed-simplified", "truncate-no-dct"):
        block = init_compressed_weights(c, m, p, tau, rng, std)
        if mode == "truncate-no-dct":
            trunc, variant = selection(c, tau), Variant.NAIVE
        else:
            trunc, variant = truncate(dct_matrix(c), tau), Variant(mode.split("-", 1)[1])
    else:
        tau = 1.0
        if mode != "linear":
            block = init_weights(c, m, p, rng, std)
    if block is not None and bias_std > 0:
        for name in ("bq", "bk", "bv", "bo", "bhat"):
            arr = getattr(block, name)
            arr[...] = bias_std * rng.standard_normal(arr.shape)
    if mode.startswith("dct-"):
        parts = mode.split("-")
        block = dct_init(block, InitTarget(parts[1], frozen="frozen" in parts), dct_matrix(c))
    head_w = trunc_normal_init(2, c, std, rng)
    head_b = bias_std * rng.standard_normal(2) if bias_std > 0 else np.zeros(2)
    return ToyModel(mode, cfg, block, head_w, head_b, tau, trunc, variant)


def grad_check(model: ToyModel, x, y, step: float = 1e-5) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``x`` is one sample (or a batch) and ``y`` its label(s). The error per
    entry is ``|a - n| / max(|a|, |n|, 1e-8)``; frozen parameters are skipped.
    The central differences are evaluated on a ``longdouble`` copy of the
    model so float64 cancellation does not swamp small gradient entries.
    """
    x = np.asarray(x)
    if x.ndim == 3:
        x = x[None]
    y = np.atleast_1d(np.asarray(y))
    loss, grads = model.loss_and_grads(x, y)
    if not math.isfinite(loss):
        raise ValueError("loss is not finite")
    probe = model.copy(np.longdouble)
    xl = x.astype(np.longdouble)
    params = probe.params()
    h = np.longdouble(step)
    worst = 0.0
    for name in model.trainable():
        p = params[name]
        analytic = grads[name]
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            lp = probe.loss(xl, y)
            p[idx] = orig - h
            lm = probe.loss(xl, y)
            p[idx] = orig
            num = float((lp - lm) / (2 * h))
            a = float(analytic[idx])
            err = abs(a - num) / max(abs(a), abs(num), 1e-8)
            worst = max(worst, err)
    return worst


@dataclass
class TrainHistory:
    losses: list = field(default_factory=list)
    final_accuracy: float = float("nan")
    seed: int = 0
    config: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        lines = ["step,loss"]
        lines += [f"{i},{loss:.17g}" for i, loss in enumerate(self.losses)]
        return "\n".join(lines) + "\n"


def train(model: ToyModel, data: Dataset, lr: float = 0.05, momentum: float = 0.9, steps: int = 300,
          seed: int = 0) -> TrainHistory:
    """Full-batch SGD with momentum. Frozen parameters are never touched.

    ``losses[i]`` is the loss before update ``i``.
    """
    params = model.params()
    names = model.trainable()
    velocity = {name: np.zeros_like(params[name]) for name in names}
    hist = TrainHistory(seed=seed, config={
        "mode": model.mode, "lr": lr, "momentum": momentum, "steps": steps, "tau": model.tau,
        **{f"cfg_{k}": v for k, v in asdict(model.cfg).items()},
        **{f"data_{k}": v for k, v in asdict(data.spec).items()},
    })
    for step in range(steps):
        loss, grads = model.loss_and_grads(data.x, data.y)
        if not math.isfinite(loss) or loss > 1e6:
            raise DivergenceError(f"training diverged at step {step}: loss={loss}")
        hist.losses.append(loss)
        for name in names:
            velocity[name] = momentum * velocity[name] + grads[name]
            params[name] -= lr * velocity[name]
        model.bump_version()
    hist.final_accuracy = float(np.mean(model.predict(data.x) == data.y))
    return hist
