"""LaTeX token vocabulary with start/end sentinels."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

SOS = "<sos>"
EOL = "<eol>"
# label files may use the paper-era spelling of the stop symbol
EOL_ALIASES = {"<eos>": EOL}


class VocabError(ValueError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        index: dict[str, int] = {}
        for i, tok in enumerate(self.tokens):
            if tok in index:
                raise VocabError(f"duplicate token {tok!r} at line {i + 1}")
            index[tok] = i
        for sentinel in (SOS, EOL):
            if sentinel not in index:
                raise VocabError(f"vocabulary is missing the sentinel {sentinel!r}")
        object.__setattr__(self, "index", index)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    @property
    def sos_id(self) -> int:
        return self.index[SOS]

    @property
    def eol_id(self) -> int:
        return self.index[EOL]

    def id(self, token: str) -> int:
        try:
            return self.index[token]
        except KeyError:
            raise VocabError(f"unknown token {token!r}") from None

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.id(t) for t in tokens]

    def decode(self, ids: Sequence[int]) -> list[str]:
        out = []
        for i in ids:
            if not 0 <= i < len(self.tokens):
                raise VocabError(f"id {i} out of range [0, {len(self.tokens)})")
            out.append(self.tokens[i])
        return out

    def dumps(self) -> str:
        return "".join(t + "\n" for t in self.tokens)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")


def parse_vocab(lines: Iterable[str]) -> Vocabulary:
    """Build a vocabulary from one token per line; ids follow line order."""
    tokens: list[str] = []
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(lines, start=1):
        tok = raw.strip()
        if not tok:
            raise VocabError(f"empty token at line {lineno}")
        if tok in seen:
            raise VocabError(f"duplicate token {tok!r} at line {lineno} (first seen at line {seen[tok]})")
        seen[tok] = lineno
        tokens.append(tok)
    for sentinel in (SOS, EOL):
        if sentinel not in seen:
            raise VocabError(f"vocabulary is missing the sentinel {sentinel!r} (checked {len(tokens)} lines)")
    return Vocabulary(tuple(tokens))


def load_vocab(source) -> Vocabulary:
    """Load from a path or an iterable of lines."""
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
        return parse_vocab(text.splitlines())
    return parse_vocab(source)


def encode_sequence(tokens: Sequence[str], v: Vocabulary) -> list[int]:
    return v.encode(tokens)


def decode_sequence(ids: Sequence[int], v: Vocabulary) -> list[str]:
    return v.decode(ids)


def normalize_label_tokens(tokens: Sequence[str]) -> list[str]:
    return [EOL_ALIASES.get(t, t) for t in tokens]
