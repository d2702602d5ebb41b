"""Edit distance, WER and ExpRate over token sequences."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

# (op, pred_token, truth_token); op in {"match", "sub", "del", "ins"}
EditOp = tuple[str, Hashable, Hashable]


@dataclass(frozen=True)
class EditBreakdown:
    """One optimal alignment from prediction to truth.

    ``insertions`` count truth tokens missing from the prediction, ``deletions``
    count surplus prediction tokens.
    """

    insertions: int
    deletions: int
    substitutions: int
    truth_length: int
    script: tuple[EditOp, ...] = field(default=(), repr=False)

    @property
    def distance(self) -> int:
        return self.insertions + self.deletions + self.substitutions


def edit_distance(pred: Sequence, truth: Sequence) -> EditBreakdown:
    pred, truth = list(pred), list(truth)
    n, m = len(pred), len(truth)
    d = np.zeros((n + 1, m + 1), dtype=np.int64)
    d[:, 0] = np.arange(n + 1)
    d[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        p = pred[i - 1]
        for j in range(1, m + 1):
            cost = 0 if p == truth[j - 1] else 1
            d[i, j] = min(d[i - 1, j - 1] + cost, d[i - 1, j] + 1, d[i, j - 1] + 1)

    # backtrace; prefer substitution/match, then deletion, then insertion
    ops: list[EditOp] = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            cost = 0 if pred[i - 1] == truth[j - 1] else 1
            if d[i, j] == d[i - 1, j - 1] + cost:
                ops.append(("match" if cost == 0 else "sub", pred[i - 1], truth[j - 1]))
                i, j = i - 1, j - 1
                continue
        if i > 0 and d[i, j] == d[i - 1, j] + 1:
            ops.append(("del", pred[i - 1], None))
            i -= 1
        else:
            ops.append(("ins", None, truth[j - 1]))
            j -= 1
    ops.reverse()
    counts = {"ins": 0, "del": 0, "sub": 0}
    for op, _, _ in ops:
        if op in counts:
            counts[op] += 1
    return EditBreakdown(counts["ins"], counts["del"], counts["sub"], m, tuple(ops))


def apply_script(pred: Sequence, script: Sequence[EditOp]) -> list:
    """Replay an alignment over ``pred``; returns the sequence it edits into."""
    out = []
    k = 0
    for op, p, t in script:
        if op in ("match", "sub", "del"):
            if k >= len(pred) or pred[k] != p:
                raise ValueError(f"script does not fit prediction at position {k}")
            k += 1
        if op == "match":
            out.append(p)
        elif op in ("sub", "ins"):
            out.append(t)
    if k != len(pred):
        raise ValueError("script does not consume the whole prediction")
    return out


def wer(pred: Sequence, truth: Sequence) -> float:
    if len(truth) == 0:
        raise ValueError("WER is undefined for an empty truth sequence")
    return edit_distance(pred, truth).distance / len(truth)


def _check_pairs(pairs):
    pairs = list(pairs)
    if not pairs:
        raise ValueError("need at least one (prediction, truth) pair")
    for k, (_, t) in enumerate(pairs):
        if len(t) == 0:
            raise ValueError(f"pair {k} has an empty truth sequence")
    return pairs


def exprate(pairs) -> float:
    pairs = _check_pairs(pairs)
    return sum(list(p) == list(t) for p, t in pairs) / len(pairs)


def corpus_wer(pairs) -> float:
    """Pooled WER: total edits over total truth length."""
    pairs = _check_pairs(pairs)
    edits = sum(edit_distance(p, t).distance for p, t in pairs)
    return edits / sum(len(t) for _, t in pairs)


def mean_wer(pairs) -> float:
    pairs = _check_pairs(pairs)
    return sum(wer(p, t) for p, t in pairs) / len(pairs)


@dataclass
class EvalReport:
    ids: list[str]
    breakdowns: list[EditBreakdown]
    exprate: float
    wer: float
    wer_mean: float

    def table(self) -> str:
        lines = [f"{'id':<16} {'dist':>4} {'ins':>4} {'del':>4} {'sub':>4} {'len':>4} {'wer':>8}"]
        for ident, b in zip(self.ids, self.breakdowns):
            lines.append(
                f"{ident:<16} {b.distance:>4} {b.insertions:>4} {b.deletions:>4} "
                f"{b.substitutions:>4} {b.truth_length:>4} {b.distance / b.truth_length:>8.4f}"
            )
        return "\n".join(lines)

    def summary(self) -> str:
        return f"exprate={self.exprate!r} wer={self.wer!r} wer_mean={self.wer_mean!r} samples={len(self.ids)}"


def evaluate_pairs(pairs, ids: Sequence[str] | None = None) -> EvalReport:
    pairs = _check_pairs(pairs)
    ids = list(ids) if ids is not None else [str(k) for k in range(len(pairs))]
    return EvalReport(
        ids=ids,
        breakdowns=[edit_distance(p, t) for p, t in pairs],
        exprate=exprate(pairs),
        wer=corpus_wer(pairs),
        wer_mean=mean_wer(pairs),
    )
