"""Image and label I/O, padding policy and the synthetic corpus generator."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .encoder import DOWNSAMPLE_FACTOR
from .glyphs import DIGITS, GLYPHS, LAYOUT_TOKENS, LETTERS, OPERATORS
from .tensor import Tensor
from .vocab import EOL, SOS, Vocabulary, normalize_label_tokens


class PGMError(ValueError):
    pass


class CorpusError(ValueError):
    pass


# ---------------------------------------------------------------------------
# PGM
# ---------------------------------------------------------------------------

_WS = b" \t\r\n"


def _header_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    while pos < len(buf):
        ch = buf[pos:pos + 1]
        if ch == b"#":
            end = buf.find(b"\n", pos)
            pos = len(buf) if end < 0 else end + 1
        elif ch in _WS:
            pos += 1
        else:
            break
    start = pos
    while pos < len(buf) and buf[pos:pos + 1] not in _WS and buf[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise PGMError(f"truncated PGM header at byte offset {start}")
    return buf[start:pos], pos


def decode_pgm(buf: bytes) -> np.ndarray:
    """Parse binary P5 bytes into a uint8 array of shape [H, W]."""
    if buf[:2] != b"P5":
        raise PGMError(f"bad PGM magic {buf[:2]!r} at byte offset 0 (expected b'P5')")
    pos = 2
    fields = []
    for name in ("width", "height", "maxval"):
        start = pos
        tok, pos = _header_token(buf, pos)
        if not tok.isdigit():
            raise PGMError(f"malformed PGM {name} {tok!r} at byte offset {start}")
        fields.append(int(tok))
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise PGMError(f"PGM size {width}x{height} must be positive")
    if not 1 <= maxval <= 255:
        raise PGMError(f"unsupported PGM maxval {maxval}; only 8-bit graymaps are read")
    if pos >= len(buf) or buf[pos:pos + 1] not in _WS:
        raise PGMError(f"missing whitespace after PGM header at byte offset {pos}")
    pos += 1
    need = width * height
    have = len(buf) - pos
    if have < need:
        raise PGMError(
            f"truncated PGM payload: expected {need} bytes from offset {pos}, file ends at offset {len(buf)}"
        )
    pixels = np.frombuffer(buf, dtype=np.uint8, count=need, offset=pos).reshape(height, width)
    if maxval != 255:
        pixels = np.minimum(pixels, maxval)
        pixels = np.round(pixels.astype(np.float64) * 255.0 / maxval).astype(np.uint8)
    return pixels.copy()


def encode_pgm(pixels: np.ndarray) -> bytes:
    pixels = np.asarray(pixels, dtype=np.uint8)
    h, w = pixels.shape
    return b"P5\n%d %d\n255\n" % (w, h) + pixels.tobytes()


def pixels_to_ink(pixels: np.ndarray) -> np.ndarray:
    return (255.0 - pixels.astype(np.float64)) / 255.0


def ink_to_pixels(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.size and (not np.all(np.isfinite(values)) or values.min() < 0.0 or values.max() > 1.0):
        raise ValueError(
            f"map values must lie in [0, 1], got range [{np.nanmin(values)}, {np.nanmax(values)}]"
        )
    return np.round(255.0 * (1.0 - values)).astype(np.uint8)


def load_image(path) -> Tensor:
    """Read a P5 graymap; dark ink maps to 1.0. Shape [1, 1, H, W]."""
    try:
        arr = decode_pgm(Path(path).read_bytes())
    except PGMError as exc:
        raise PGMError(f"{path}: {exc}") from None
    return Tensor(pixels_to_ink(arr)[None, None])


def export_gray_image(values: np.ndarray, path) -> None:
    """Write a [0, 1] map as an 8-bit graymap; high values render dark."""
    Path(path).write_bytes(encode_pgm(ink_to_pixels(values)))


def pad_to_factor(image: Tensor | np.ndarray, factor: int = DOWNSAMPLE_FACTOR):
    """Zero-pad right and bottom so H and W are multiples of ``factor``."""
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    data = image.data if isinstance(image, Tensor) else np.asarray(image, dtype=np.float64)
    h, w = data.shape[-2], data.shape[-1]
    ph, pw = -h % factor, -w % factor
    if ph or pw:
        widths = [(0, 0)] * (data.ndim - 2) + [(0, ph), (0, pw)]
        data = np.pad(data, widths)
    return Tensor(data) if isinstance(image, Tensor) else data


# ---------------------------------------------------------------------------
# corpus
# ---------------------------------------------------------------------------


@dataclass
class Sample:
    image: Tensor  # [1, 1, H, W], padded, ink = 1
    target: list[int]
    ident: str


def parse_label_line(line: str, lineno: int) -> tuple[str, list[str]]:
    if "\t" not in line:
        raise CorpusError(f"label line {lineno} has no TAB separator: {line!r}")
    ident, rest = line.split("\t", 1)
    ident = ident.strip()
    if not ident:
        raise CorpusError(f"label line {lineno} has an empty id")
    return ident, normalize_label_tokens(rest.split())


def load_corpus(root, vocab: Vocabulary | None = None, factor: int = DOWNSAMPLE_FACTOR) -> list[Sample]:
    """Load ``labels.txt`` and ``images/<id>.pgm`` from a corpus directory.

    When ``vocab`` is omitted the directory's ``vocab.txt`` is used.
    """
    from .vocab import load_vocab

    root = Path(root)
    if not root.is_dir():
        raise CorpusError(f"corpus directory {root} does not exist")
    if vocab is None:
        vocab = load_vocab(root / "vocab.txt")
    samples: list[Sample] = []
    seen: set[str] = set()
    text = (root / "labels.txt").read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        ident, tokens = parse_label_line(line, lineno)
        if ident in seen:
            raise CorpusError(f"duplicate sample id {ident!r} at label line {lineno}")
        seen.add(ident)
        for tok in tokens:
            if tok not in vocab:
                raise CorpusError(f"sample {ident!r}: unknown token {tok!r}")
            if tok in (SOS, EOL):
                raise CorpusError(f"sample {ident!r}: sentinel {tok!r} inside a target sequence")
        if not tokens:
            raise CorpusError(f"sample {ident!r}: empty target sequence")
        path = root / "images" / f"{ident}.pgm"
        if not path.is_file():
            raise CorpusError(f"sample {ident!r}: missing image {path}")
        image = pad_to_factor(load_image(path), factor)
        samples.append(Sample(image, vocab.encode(tokens), ident))
    return samples


def write_corpus(root, samples: Sequence[tuple[str, np.ndarray, list[str]]], vocab: Vocabulary) -> None:
    """Write ``(ident, ink_image[H, W], tokens)`` triples in the corpus layout."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    lines = []
    for ident, img, tokens in samples:
        export_gray_image(img, root / "images" / f"{ident}.pgm")
        lines.append(f"{ident}\t{' '.join(tokens)}\n")
    (root / "labels.txt").write_text("".join(lines), encoding="utf-8")
    vocab.save(root / "vocab.txt")


# ---------------------------------------------------------------------------
# synthetic expressions
# ---------------------------------------------------------------------------


def default_vocab() -> Vocabulary:
    tokens = [SOS, EOL, *DIGITS, *LETTERS, *OPERATORS, "(", ")", "\\sqrt", *LAYOUT_TOKENS]
    return Vocabulary(tuple(tokens))


@dataclass(frozen=True)
class SynthSpec:
    glyphs: tuple[str, ...] = ("1", "2", "3", "a", "b", "c", "x", "+", "-", "=", "\\sqrt")
    depth: int = 2
    count: int = 50
    shift: int = 1
    scale: float = 0.0
    seed: int = 7
    sup_prob: float = 0.2
    sqrt_prob: float = 0.15
    mode: str = "free"
    id_prefix: str = "s"

    def __post_init__(self):
        object.__setattr__(self, "glyphs", tuple(self.glyphs))
        if not self.glyphs:
            raise ValueError("glyph set must be non-empty")
        for g in self.glyphs:
            if g not in GLYPHS:
                raise ValueError(f"glyph {g!r} has no bitmap")
        if self.mode not in ("free", "repeat"):
            raise ValueError(f"unknown synth mode {self.mode!r}")
        if self.depth < 1 or self.count < 0 or self.shift < 0 or not 0.0 <= self.scale < 1.0:
            raise ValueError(f"invalid synth parameters: {self}")
        if not self.symbols:
            raise ValueError("glyph set needs at least one letter or digit")

    @property
    def symbols(self) -> tuple[str, ...]:
        return tuple(g for g in self.glyphs if g in DIGITS or g in LETTERS)

    @property
    def operators(self) -> tuple[str, ...]:
        return tuple(g for g in self.glyphs if g in OPERATORS)

    def dumps(self) -> str:
        out = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out.append(f"{f.name}={' '.join(v) if isinstance(v, tuple) else v}\n")
        return "".join(out)

    @classmethod
    def loads(cls, text: str) -> SynthSpec:
        kwargs = {}
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"synth spec line {lineno}: expected key=value, got {line!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ValueError(f"synth spec line {lineno}: unknown key {key!r}")
            t = types[key]
            if key == "glyphs":
                kwargs[key] = tuple(val.split())
            elif t in ("int", int):
                kwargs[key] = int(val)
            elif t in ("float", float):
                kwargs[key] = float(val)
            else:
                kwargs[key] = val
        return cls(**kwargs)


def synth_tokens(spec: SynthSpec, rng: np.random.Generator) -> list[list[str]]:
    """Token groups: each group renders as one horizontal unit."""
    symbols, ops = spec.symbols, spec.operators or ("+",)
    digits = tuple(s for s in symbols if s in DIGITS) or symbols

    def pick(seq):
        return seq[int(rng.integers(len(seq)))]

    if spec.mode == "repeat":
        sym, op = pick(symbols), pick(ops)
        n = int(rng.integers(2, spec.depth + 2))
        groups = [[sym]]
        for _ in range(n - 1):
            groups += [[op], [sym]]
        return groups

    def term():
        r = rng.random()
        if "\\sqrt" in spec.glyphs and r < spec.sqrt_prob:
            return ["\\sqrt", "{", pick(symbols), "}"]
        if r < spec.sqrt_prob + spec.sup_prob:
            return [pick(symbols), "^", "{", pick(digits), "}"]
        return [pick(symbols)]

    groups = [term()]
    for _ in range(int(rng.integers(1, spec.depth + 1))):
        groups += [[pick(ops)], term()]
    return groups


_CANVAS_H = 24
_BASE_TOP = 10
_SUP_RAISE = 7


def _scaled(bm: np.ndarray, factor: float) -> np.ndarray:
    if factor == 1.0:
        return bm
    n = max(4, int(round(bm.shape[0] * factor)))
    idx = np.minimum((np.arange(n) * bm.shape[0] / n).astype(int), bm.shape[0] - 1)
    return bm[np.ix_(idx, idx)]


def render(groups: list[list[str]], spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    """Rasterize token groups onto an ink canvas (ink = 1.0)."""
    placements = []  # (bitmap, top, left)
    bars = []  # (row, left, right)
    x = 2
    for g in groups:
        body_token = g[2] if g[0] == "\\sqrt" else g[0]

        def glyph():
            f = 1.0 + (rng.uniform(-spec.scale, spec.scale) if spec.scale else 0.0)
            return _scaled(_glyph(body_token), f)

        dy = int(rng.integers(-spec.shift, spec.shift + 1)) if spec.shift else 0
        if g[0] == "\\sqrt":
            rad = GLYPHS["\\sqrt"]
            placements.append((rad, _BASE_TOP + dy, x))
            x += rad.shape[1]
            body = glyph()
            placements.append((body, _BASE_TOP + dy, x + 1))
            bars.append((_BASE_TOP + dy - 1, x - 1, x + body.shape[1] + 1))
            x += body.shape[1] + 2
        elif len(g) == 5 and g[1] == "^":
            base = glyph()
            placements.append((base, _BASE_TOP + dy, x))
            x += base.shape[1]
            sup = _glyph(g[3])
            placements.append((sup, _BASE_TOP + dy - _SUP_RAISE, x))
            x += sup.shape[1]
        else:
            bm = glyph()
            placements.append((bm, _BASE_TOP + dy, x))
            x += bm.shape[1]
        x += 1 + (int(rng.integers(0, spec.shift + 1)) if spec.shift else 0)
    width = x + 1
    canvas = np.zeros((_CANVAS_H + 4, width))
    for bm, top, left in placements:
        top = max(top, 0)
        h, w = bm.shape
        canvas[top:top + h, left:left + w] = np.maximum(canvas[top:top + h, left:left + w], bm)
    for row, lo, hi in bars:
        canvas[max(row, 0), lo:hi] = 1.0
    return canvas


def _glyph(token: str) -> np.ndarray:
    try:
        return GLYPHS[token]
    except KeyError:
        raise ValueError(f"token {token!r} has no glyph bitmap") from None


def synth_sample(spec: SynthSpec, index: int) -> tuple[str, np.ndarray, list[str]]:
    """Deterministic in ``(spec, index)``."""
    rng = np.random.default_rng([spec.seed, index])
    groups = synth_tokens(spec, rng)
    image = render(groups, spec, rng)
    tokens = [t for g in groups for t in g]
    return f"{spec.id_prefix}{index:05d}", image, tokens


def generate_synth(spec: SynthSpec, out_dir=None, vocab: Vocabulary | None = None,
                   start: int = 0):
    """Generate ``spec.count`` samples; written as a corpus when ``out_dir`` is given."""
    vocab = vocab or default_vocab()
    items = [synth_sample(spec, start + i) for i in range(spec.count)]
    for ident, _, tokens in items:
        vocab.encode(tokens)
    if out_dir is not None:
        write_corpus(out_dir, items, vocab)
    return items


def samples_from_synth(items, vocab: Vocabulary, factor: int = DOWNSAMPLE_FACTOR) -> list[Sample]:
    """In-memory equivalent of writing then loading a synthetic corpus."""
    out = []
    for ident, img, tokens in items:
        # quantize exactly like the on-disk path
        ink = pixels_to_ink(ink_to_pixels(img))
        out.append(Sample(Tensor(pad_to_factor(ink, factor)[None, None]), vocab.encode(tokens), ident))
    return out

