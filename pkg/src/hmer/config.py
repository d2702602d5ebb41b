"""Flat key=value run configuration merging encoder, decoder and training settings."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .decoder import DecoderConfig
from .encoder import EncoderConfig
from .trainer import TrainConfig


@dataclass(frozen=True)
class RunConfig:
    # encoder
    stem_channels: int = 48
    growth_rate: int = 4
    layers_per_block: tuple[int, int, int] = (2, 2, 2)
    reduced_channels: int = 16
    # decoder
    hidden_dim: int = 32
    embed_dim: int = 16
    attn_dim: int = 16
    coverage_kernel_size: int = 5
    coverage_channels: int = 16
    max_decode_len: int = 200
    coverage: bool = True
    share_attention: bool = False
    # training
    learning_rate: float = 1e-4
    teacher_forcing_rate: float = 0.2
    epochs: int = 10
    max_steps: int = 0
    checkpoint_interval: int = 0
    clip_norm: float = 100.0
    holdout_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "layers_per_block", tuple(int(n) for n in self.layers_per_block))
        # sub-config constructors carry the validation
        self.encoder_config()
        self.decoder_config()
        self.train_config()

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(self.stem_channels, self.growth_rate, self.layers_per_block,
                             self.reduced_channels)

    def decoder_config(self) -> DecoderConfig:
        return DecoderConfig(self.hidden_dim, self.embed_dim, self.attn_dim, self.coverage_kernel_size,
                             self.coverage_channels, self.max_decode_len, self.coverage,
                             self.share_attention)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            teacher_forcing_rate=self.teacher_forcing_rate,
            epochs=self.epochs,
            max_steps=self.max_steps,
            seed=self.seed,
            checkpoint_interval=self.checkpoint_interval,
            clip_norm=self.clip_norm,
            holdout_fraction=self.holdout_fraction,
        )

    def to_dict(self) -> dict[str, str]:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            else:
                v = repr(v)
            out[f.name] = v
        return out

    def dumps(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.to_dict().items())

    @classmethod
    def from_dict(cls, values: dict[str, str], base: RunConfig | None = None) -> RunConfig:
        kwargs = dataclasses.asdict(base) if base is not None else {}
        kwargs.update(parse_fields(cls, values))
        return cls(**kwargs)

    @classmethod
    def loads(cls, text: str, base: RunConfig | None = None) -> RunConfig:
        return cls.from_dict(parse_kv(text), base)

    @classmethod
    def load(cls, path) -> RunConfig:
        return cls.loads(Path(path).read_text(encoding="utf-8"))

    def replace(self, **changes) -> RunConfig:
        return dataclasses.replace(self, **changes)


def parse_kv(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key=value, got {line!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _convert(name: str, typ: str, raw: str):
    try:
        if typ == "bool":
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
        if typ.startswith("tuple"):
            return tuple(int(x) for x in raw.replace(" ", "").split(",") if x)
    except ValueError:
        raise ValueError(f"config key {name!r}: cannot parse {raw!r} as {typ}") from None
    return raw


def parse_fields(cls, values: dict[str, str]) -> dict:
    types = {f.name: str(f.type) for f in dataclasses.fields(cls)}
    out = {}
    for k, raw in values.items():
        if k not in types:
            raise ValueError(f"unknown config key {k!r}")
        out[k] = _convert(k, types[k], raw)
    return out
