"""Transformer shapes, the X[x] scaling family and the critical batch size law."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping

# Critical batch in tokens ~ p^(1/3), normalised so GPT-3 trains at 3.2M tokens.
CRITICAL_BATCH_COEFF = 573.0


@dataclass(frozen=True)
class ModelShape:
    """Hyperparameters of a stack of identical transformer layers.

    Only the transformer layers are described; embeddings and the LM head are
    excluded from every count derived from this object.
    """

    d_l: int  # layers
    d_a: int  # attention heads
    d_h: int  # head size
    d_s: int  # sequence length (tokens)
    n_I: int = 4  # feed-forward width factor
    name: str = ""

    def __post_init__(self):
        for field_name in ("d_l", "d_a", "d_h", "d_s", "n_I"):
            value = getattr(self, field_name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ValueError(f"{field_name} must be a positive integer, got {value!r}")

    @property
    def d_m(self) -> int:
        return self.d_a * self.d_h

    @property
    def d_I(self) -> int:
        return self.n_I * self.d_m

    @property
    def p(self) -> int:
        return param_count(self)

    @property
    def p_l(self) -> int:
        return layer_param_count(self)

    def label(self) -> str:
        return self.name or f"d_l={self.d_l},d_m={self.d_m},d_s={self.d_s}"


def make_x_model(x: int) -> ModelShape:
    """Member of the single-parameter family: d_l=x, d_m=x^2, d_s=16x, d_h=2x."""
    if not isinstance(x, int) or isinstance(x, bool) or x < 2 or x % 2:
        raise ValueError(f"x must be an even integer >= 2, got {x!r}")
    return ModelShape(d_l=x, d_a=x // 2, d_h=2 * x, d_s=16 * x, n_I=4, name=f"X_{x}")


def layer_param_count(shape: ModelShape) -> int:
    # weights (4 + 2 n_I) d_m^2, biases (5 + n_I) d_m = 9 d_m, two layer norms 4 d_m
    return (4 + 2 * shape.n_I) * shape.d_m**2 + 13 * shape.d_m


def param_count(shape: ModelShape) -> int:
    return shape.d_l * layer_param_count(shape)


def leading_param_count(shape: ModelShape) -> int:
    """Weight-matrix parameters only, (4 + 2 n_I) d_m^2 d_l."""
    return (4 + 2 * shape.n_I) * shape.d_m**2 * shape.d_l


def critical_batch(shape: ModelShape) -> float:
    """Critical batch size in sequences, ``573 p^(1/3) / d_s``.

    The law was fitted on weight-matrix parameter counts, so the leading-order
    count is used; it agrees with the exact count to <0.1% except for toy
    models such as X_2, where the bias terms are a large fraction of p.
    """
    return CRITICAL_BATCH_COEFF * leading_param_count(shape) ** (1.0 / 3.0) / shape.d_s


# Existing models from the comparison table; ``trained_batch`` is the batch
# size actually used for training, where reported.
NAMED_MODELS: dict[str, tuple[ModelShape, int | None]] = {
    "bert": (ModelShape(d_l=24, d_a=16, d_h=64, d_s=512, name="BERT"), 256),
    "megatron-lm": (ModelShape(d_l=72, d_a=32, d_h=96, d_s=1024, name="Megatron-LM"), 512),
    "t-nlg": (ModelShape(d_l=78, d_a=28, d_h=152, d_s=1024, name="T-NLG"), 512),
    "gpt-3": (ModelShape(d_l=96, d_a=96, d_h=128, d_s=2048, name="GPT-3"), None),
}


def named_model(name: str) -> ModelShape:
    key = name.lower()
    if key in NAMED_MODELS:
        return NAMED_MODELS[key][0]
    if key.startswith("x_") or key.startswith("x"):
        return make_x_model(int(key.lstrip("x_")))
    raise KeyError(f"unknown model {name!r}")


def shape_from_config(cfg: Mapping[str, Any]) -> ModelShape:
    """Build a shape from ``{x: 160}``, ``{name: gpt-3}`` or explicit fields."""
    if "x" in cfg:
        return make_x_model(int(cfg["x"]))
    if "name" in cfg and not any(k in cfg for k in ("d_l", "d_a", "d_h", "d_s")):
        return named_model(str(cfg["name"]))
    missing = [k for k in ("d_l", "d_a", "d_h", "d_s") if k not in cfg]
    if missing:
        raise ValueError(f"model config is missing {', '.join(missing)}")
    return ModelShape(
        d_l=int(cfg["d_l"]),
        d_a=int(cfg["d_a"]),
        d_h=int(cfg["d_h"]),
        d_s=int(cfg["d_s"]),
        n_I=int(cfg.get("n_I", 4)),
        name=str(cfg.get("name", "")),
    )
