"""Training configuration and its flat ``key=value`` file format."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, fields

from .errors import ParameterError

REG_SIGNS = ("positive", "negative")
NEG_WEIGHTINGS = ("straight_through", "scaled")


@dataclass(frozen=True)
class TrainConfig:
    lr_d: float = 1e-3
    lr_g: float = 1e-3
    batch_size: int = 32
    epochs: int = 100
    k: float = 0.5
    p: float = 2.0
    beta: float = 0.1
    d: int = 64
    layers: int = 2
    channels: int = 32
    noise_dim: int = 16
    seed: int = 0
    eval_every: int = 5
    # "positive" adds +beta * penalty to the generator objective; "negative"
    # uses the negated penalty instead.
    reg_sign: str = "positive"
    reg_eps: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    guided: bool = True
    # how generated negatives reach the critic: "scaled" multiplies member
    # embeddings by their membership probability in the forward pass,
    # "straight_through" uses hard membership forward and the scaled
    # gradient backward
    neg_weighting: str = "straight_through"
    min_size: int = 2

    def __post_init__(self):
        if not 0.0 < self.k < 1.0:
            raise ParameterError(f"k must lie in (0, 1), got {self.k}")
        if self.p < 1.0:
            raise ParameterError(f"p must be >= 1, got {self.p}")
        if self.beta < 0.0:
            raise ParameterError(f"beta must be >= 0, got {self.beta}")
        if self.reg_sign not in REG_SIGNS:
            raise ParameterError(f"reg_sign must be one of {REG_SIGNS}, got {self.reg_sign!r}")
        if self.neg_weighting not in NEG_WEIGHTINGS:
            raise ParameterError(f"neg_weighting must be one of {NEG_WEIGHTINGS}, got {self.neg_weighting!r}")
        if not 0.0 < self.reg_eps < 0.5:
            raise ParameterError(f"reg_eps must lie in (0, 0.5), got {self.reg_eps}")
        for name in ("batch_size", "d", "channels", "noise_dim", "eval_every"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.epochs < 0 or self.layers < 0:
            raise ParameterError("epochs and layers must be >= 0")
        if self.lr_d < 0 or self.lr_g < 0:
            raise ParameterError("learning rates must be >= 0")

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_text(self) -> str:
        return "".join(f"{k}={_format(v)}\n" for k, v in self.to_dict().items())

    @classmethod
    def from_mapping(cls, raw: dict[str, str], base: "TrainConfig | None" = None) -> "TrainConfig":
        base = base if base is not None else cls()
        types = {f.name: f.type for f in fields(cls)}
        changes = {}
        for key, text in raw.items():
            if key not in types:
                raise ParameterError(f"unknown config key {key!r}")
            changes[key] = _coerce(key, types[key], text)
        return base.replace(**changes)

    @classmethod
    def from_file(cls, path: str | os.PathLike, base: "TrainConfig | None" = None) -> "TrainConfig":
        return cls.from_mapping(read_key_values(path), base)


def read_key_values(path: str | os.PathLike) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for no, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ParameterError(f"{path}:{no}: expected key=value, got {line!r}")
            out[key.strip()] = value.strip()
    return out


def parse_assignments(items: list[str]) -> dict[str, str]:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep:
            raise ParameterError(f"expected key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def _format(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def _coerce(key: str, typ, text: str):
    typ = typ if isinstance(typ, str) else typ.__name__
    try:
        if typ == "bool":
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if typ == "int":
            return int(text)
        if typ == "float":
            return float(text)
        return text
    except ValueError:
        raise ParameterError(f"config key {key!r}: cannot parse {text!r} as {typ}") from None
