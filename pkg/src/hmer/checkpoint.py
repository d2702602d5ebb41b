"""Little-endian binary checkpoints.

Layout::

    magic  b"HMERCKPT"
    u32    format version
    u32    config length, then UTF-8 key=value text
    u64    step counter
    i64    seed
    u64    optimizer step count
    u32    record count
    records: u16 name length, name, u8 rank, rank x u64 extents, float64 values
    magic  b"END."

Record names are ``param/<name>``, ``adam.m/<name>`` and ``adam.v/<name>``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"HMERCKPT"
TRAILER = b"END."
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: dict[str, str]
    params: dict[str, np.ndarray]
    adam_m: dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: dict[str, np.ndarray] = field(default_factory=dict)
    adam_t: int = 0
    step: int = 0
    seed: int = 0
    version: int = VERSION


def _config_text(config: dict[str, str]) -> str:
    return "".join(f"{k}={v}\n" for k, v in config.items())


def _parse_config(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if line:
            k, _, v = line.partition("=")
            out[k] = v
    return out


def dumps(ckpt: Checkpoint) -> bytes:
    parts = [MAGIC, struct.pack("<I", ckpt.version)]
    cfg = _config_text(ckpt.config).encode("utf-8")
    parts += [struct.pack("<I", len(cfg)), cfg]
    parts.append(struct.pack("<QqQ", ckpt.step, ckpt.seed, ckpt.adam_t))
    records = [(f"param/{k}", v) for k, v in ckpt.params.items()]
    records += [(f"adam.m/{k}", v) for k, v in ckpt.adam_m.items()]
    records += [(f"adam.v/{k}", v) for k, v in ckpt.adam_v.items()]
    parts.append(struct.pack("<I", len(records)))
    for name, arr in records:
        arr = np.asarray(arr, dtype="<f8", order="C")  # keeps rank 0
        raw = name.encode("utf-8")
        parts += [struct.pack("<H", len(raw)), raw, struct.pack("<B", arr.ndim)]
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    parts.append(TRAILER)
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(
                f"truncated checkpoint: reading {what} needs {n} bytes at offset {self.pos}, "
                f"file has {len(self.buf)}"
            )
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def loads(buf: bytes) -> Checkpoint:
    r = _Reader(buf)
    magic = r.take(len(MAGIC), "magic")
    if magic != MAGIC:
        bad = next(i for i, (a, b) in enumerate(zip(magic, MAGIC)) if a != b)
        raise CheckpointError(f"bad checkpoint magic at offset {bad}: got {magic!r}, expected {MAGIC!r}")
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (this build reads {VERSION})")
    (n,) = r.unpack("<I", "config length")
    config = _parse_config(r.take(n, "config block").decode("utf-8"))
    step, seed, adam_t = r.unpack("<QqQ", "counters")
    (count,) = r.unpack("<I", "record count")
    groups = {"param": {}, "adam.m": {}, "adam.v": {}}
    for _ in range(count):
        at = r.pos
        (ln,) = r.unpack("<H", "record name length")
        name = r.take(ln, "record name").decode("utf-8")
        kind, _, key = name.partition("/")
        if kind not in groups:
            raise CheckpointError(f"unknown record kind {kind!r} at offset {at}")
        (rank,) = r.unpack("<B", f"rank of {name}")
        shape = r.unpack(f"<{rank}Q", f"extents of {name}")
        size = int(np.prod(shape, dtype=np.int64))
        raw = r.take(8 * size, f"values of {name}")
        groups[kind][key] = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)
    if r.take(len(TRAILER), "trailer") != TRAILER:
        raise CheckpointError(f"bad checkpoint trailer at offset {r.pos - len(TRAILER)}")
    return Checkpoint(config, groups["param"], groups["adam.m"], groups["adam.v"],
                      adam_t, step, seed, version)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(dumps(ckpt))
    tmp.replace(path)


def load_checkpoint(path, expected_shapes: dict[str, tuple[int, ...]] | None = None) -> Checkpoint:
    """Read a checkpoint; optionally verify it against a model's parameter shapes."""
    try:
        ckpt = loads(Path(path).read_bytes())
    except CheckpointError as exc:
        raise CheckpointError(f"{path}: {exc}") from None
    if expected_shapes is not None:
        check_shapes(ckpt, expected_shapes)
    return ckpt


def check_shapes(ckpt: Checkpoint, expected: dict[str, tuple[int, ...]]) -> None:
    problems = []
    for name, shape in expected.items():
        if name not in ckpt.params:
            problems.append(f"{name}: missing from checkpoint (expected {shape})")
        elif ckpt.params[name].shape != tuple(shape):
            problems.append(f"{name}: checkpoint {ckpt.params[name].shape} vs model {tuple(shape)}")
    for name in ckpt.params:
        if name not in expected:
            problems.append(f"{name}: not a parameter of the current model")
    if problems:
        raise CheckpointError("checkpoint does not match the model:\n  " + "\n  ".join(problems))
