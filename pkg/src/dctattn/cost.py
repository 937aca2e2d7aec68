"""Closed-form multiplication and parameter accounting for attention blocks.

Counts are exact: a linear layer on T tokens costs ``T * C_in * C_out``
multiplications and each attention product costs ``T * M^2 * d`` per head.
One multiply-accumulate is one FLOP; softmax, bias additions and the
one-off fused output matrix are not counted.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path

from .transform import kept_count

__all__ = [
    "BlockShape",
    "Stage",
    "ModelSpec",
    "CostBreakdown",
    "ParamBreakdown",
    "VARIANTS",
    "block_mults",
    "block_params",
    "model_totals",
    "fusion_break_even",
    "builtin_spec",
    "load_spec",
    "resolve_spec",
]

VARIANTS = ("vanilla", "naive", "simplified")


@dataclass(frozen=True)
class BlockShape:
    t: int  # tokens, N * M^2
    c: int
    m: int
    p: int

    def __post_init__(self):
        if self.t < 1 or self.c < 1 or self.m < 1:
            raise ValueError(f"invalid block shape {self}")
        if self.p < 1 or self.c % self.p:
            raise ValueError(f"{self.p} heads do not divide {self.c} channels")


@dataclass(frozen=True)
class CostBreakdown:
    dct: int = 0
    qkv: int = 0
    attn_scores: int = 0
    attn_values: int = 0
    idct: int = 0
    out_proj: int = 0

    @property
    def total(self) -> int:
        return self.dct + self.qkv + self.attn_scores + self.attn_values + self.idct + self.out_proj

    def __add__(self, other: "CostBreakdown") -> "CostBreakdown":
        return CostBreakdown(*(a + b for a, b in zip(self.astuple(), other.astuple())))

    def scaled(self, k: int) -> "CostBreakdown":
        return CostBreakdown(*(k * a for a in self.astuple()))

    def astuple(self) -> tuple:
        return (self.dct, self.qkv, self.attn_scores, self.attn_values, self.idct, self.out_proj)

    def as_dict(self) -> dict:
        return {**asdict(self), "total": self.total}


@dataclass(frozen=True)
class ParamBreakdown:
    qkv_weights: int
    qkv_biases: int
    out_weight: int
    out_bias: int
    rel_bias: int

    @property
    def total(self) -> int:
        return self.qkv_weights + self.qkv_biases + self.out_weight + self.out_bias + self.rel_bias

    def as_dict(self) -> dict:
        return {**asdict(self), "total": self.total}


def _check_variant(variant: str) -> str:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    return variant


def _width(c: int, p: int, variant: str, tau: float) -> int:
    if variant == "vanilla":
        return c
    kept = kept_count(c, tau)
    if kept % p:
        raise ValueError(f"{p} heads do not divide {kept} retained coefficients")
    return kept


def block_mults(shape: BlockShape, variant: str, tau: float = 1.0) -> CostBreakdown:
    variant = _check_variant(variant)
    t, c, m2 = shape.t, shape.c, shape.m * shape.m
    k = _width(c, shape.p, variant, tau)
    attn = t * m2 * k
    if variant == "vanilla":
        return CostBreakdown(qkv=3 * t * c * c, attn_scores=attn, attn_values=attn, out_proj=t * c * c)
    common = dict(dct=t * c * k, qkv=3 * t * k * k, attn_scores=attn, attn_values=attn)
    if variant == "naive":
        return CostBreakdown(**common, idct=t * k * c, out_proj=t * c * c)
    return CostBreakdown(**common, out_proj=t * k * c)


def block_params(c: int, m: int, p: int, variant: str = "vanilla", tau: float = 1.0) -> ParamBreakdown:
    variant = _check_variant(variant)
    if p < 1 or c % p:
        raise ValueError(f"{p} heads do not divide {c} channels")
    k = _width(c, p, variant, tau)
    return ParamBreakdown(
        qkv_weights=3 * k * k,
        qkv_biases=3 * k,
        out_weight=c * c,
        out_bias=c,
        rel_bias=p * (2 * m - 1) ** 2,
    )


def fusion_break_even(tau) -> dict:
    """TC^2 coefficients of computing Q, K, V after a shared DCT versus folding the DCT in.

    Shared: ``tau`` for the DCT plus ``tau^2`` per projection. Folded:
    ``tau`` per projection (each maps C channels to ``tau C``). Exact
    rational arithmetic is used when ``tau`` is given as a ``Fraction``.
    """
    if not 0 < tau <= 1:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    separate = tau + 3 * tau * tau
    fused = 3 * tau
    if separate == fused:
        winner = "tie"
    else:
        winner = "fused" if fused < separate else "separate"
    return {"separate_coeff": separate, "fused_coeff": fused, "winner": winner}


@dataclass(frozen=True)
class Stage:
    name: str
    tokens: int
    channels: int
    heads: int
    depth: int


@dataclass(frozen=True)
class ModelSpec:
    name: str
    window: int
    stages: tuple

    def __post_init__(self):
        if self.window < 1 or not self.stages:
            raise ValueError(f"model spec {self.name!r} needs a window side and at least one stage")
        for s in self.stages:
            BlockShape(s.tokens, s.channels, self.window, s.heads)
            if s.depth < 0:
                raise ValueError(f"stage {s.name!r} has negative depth")


def _swin(name: str, depths) -> ModelSpec:
    tokens = (3136, 784, 196, 49)
    channels = (96, 192, 384, 768)
    heads = (3, 6, 12, 24)
    stages = tuple(
        Stage(f"stage{i + 1}", t, c, p, d) for i, (t, c, p, d) in enumerate(zip(tokens, channels, heads, depths))
    )
    return ModelSpec(name, 7, stages)


_BUILTIN = {
    "swin-t": _swin("swin-t", (2, 2, 6, 2)),
    "swin-s": _swin("swin-s", (2, 2, 18, 2)),
}


def builtin_spec(name: str) -> ModelSpec:
    try:
        return _BUILTIN[name.lower()]
    except KeyError:
        raise ValueError(f"unknown model spec {name!r}; built-ins are {sorted(_BUILTIN)}") from None


def load_spec(path) -> ModelSpec:
    """Read a model spec from a key-value text file.

    Format (``#`` starts a comment)::

        name = my-model
        window = 7
        stage1 = tokens=3136 channels=96 heads=3 depth=2
        stage2 = tokens=784 channels=192 heads=6 depth=2

    Every key other than ``name`` and ``window`` declares a stage, in file order.
    """
    path = Path(path)
    name, window, stages = path.stem, None, []
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "name":
            name = value
        elif key == "window":
            window = int(value)
        else:
            fields = {}
            for item in value.split():
                k, sep, v = item.partition("=")
                if not sep:
                    raise ValueError(f"{path}:{lineno}: expected field=value, got {item!r}")
                fields[k] = int(v)
            missing = {"tokens", "channels", "heads", "depth"} - set(fields)
            if missing:
                raise ValueError(f"{path}:{lineno}: stage {key!r} missing {sorted(missing)}")
            stages.append(Stage(key, fields["tokens"], fields["channels"], fields["heads"], fields["depth"]))
    if window is None:
        raise ValueError(f"{path}: missing 'window'")
    return ModelSpec(name, window, tuple(stages))


def resolve_spec(name_or_path) -> ModelSpec:
    if str(name_or_path).lower() in _BUILTIN:
        return builtin_spec(str(name_or_path))
    path = Path(name_or_path)
    if not path.is_file():
        raise ValueError(f"unknown model spec {name_or_path!r}; built-ins are {sorted(_BUILTIN)}")
    return load_spec(path)


def model_totals(spec: ModelSpec | str, tau: float, variant: str = "simplified") -> dict:
    """Parameter and multiplication savings of compressing every attention block.

    Returns ``param_delta`` and ``mult_delta`` (vanilla minus compressed,
    summed over all blocks) plus per-stage breakdowns.
    """
    if isinstance(spec, str):
        spec = builtin_spec(spec)
    variant = _check_variant(variant)
    stages = []
    param_delta = mult_delta = 0
    for s in spec.stages:
        shape = BlockShape(s.tokens, s.channels, spec.window, s.heads)
        van_m = block_mults(shape, "vanilla")
        cmp_m = block_mults(shape, variant, tau)
        van_p = block_params(s.channels, spec.window, s.heads, "vanilla")
        cmp_p = block_params(s.channels, spec.window, s.heads, variant, tau)
        dp = s.depth * (van_p.total - cmp_p.total)
        dm = s.depth * (van_m.total - cmp_m.total)
        param_delta += dp
        mult_delta += dm
        stages.append({
            "stage": s.name,
            "tokens": s.tokens,
            "channels": s.channels,
            "heads": s.heads,
            "depth": s.depth,
            "vanilla_block": van_m.as_dict(),
            "compressed_block": cmp_m.as_dict(),
            "param_delta": dp,
            "mult_delta": dm,
        })
    return {
        "model": spec.name,
        "tau": tau,
        "variant": variant,
        "param_delta": param_delta,
        "mult_delta": mult_delta,
        "stages": stages,
    }


def exact_tau(tau: float) -> Fraction:
    """Rational form of a decimal tau, e.g. 0.75 -> 3/4."""
    return Fraction(str(tau)).limit_denominator(10_000)
