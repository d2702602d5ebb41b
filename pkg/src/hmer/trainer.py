"""Teacher-forced training with cross-entropy and Adam."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .checkpoint import Checkpoint, check_shapes, save_checkpoint
from .data import Sample
from .decoder import init_state, step as decoder_step
from .metrics import EvalReport, evaluate_pairs
from .model import Model
from .tensor import Tensor

# independent RNG streams derived from the run seed
_SPLIT, _SHUFFLE, _STEP = 0, 1, 2


class TrainingAborted(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    teacher_forcing_rate: float = 0.2
    epochs: int = 10
    max_steps: int = 0  # 0: no cap beyond epochs
    seed: int = 0
    checkpoint_interval: int = 0  # steps; 0 writes only the final checkpoint
    clip_norm: float = 100.0  # 0 disables clipping
    holdout_fraction: float = 0.1

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.teacher_forcing_rate <= 1.0:
            raise ValueError(f"teacher_forcing_rate must be in [0, 1], got {self.teacher_forcing_rate}")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ValueError(f"holdout_fraction must be in [0, 1), got {self.holdout_fraction}")
        if self.epochs < 0 or self.max_steps < 0 or self.checkpoint_interval < 0 or self.clip_norm < 0:
            raise ValueError(f"counts must be non-negative: {self}")


class Adam:
    def __init__(self, params: dict[str, Tensor], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, p in self.params.items():
            g = p.grad
            m = self.m[k]
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_grad_norm(params: dict[str, Tensor], max_norm: float) -> float:
    total = math.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params.values()))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for p in params.values():
            p.grad *= scale
    return total


def use_truth(rng: np.random.Generator, rate: float) -> bool:
    """One per-step Bernoulli draw: does the truth token replace the prediction?"""
    return bool(rng.random() < rate)


@dataclass
class Unroll:
    loss: Tensor
    inputs: list[int]  # decoder input at every step, <sos> first
    forced: list[bool]  # for steps after the first: was the input the truth token


def sequence_loss(model: Model, image: Tensor, target: Sequence[int], teacher_forcing_rate: float,
                  rng: np.random.Generator, argmax: Callable[[np.ndarray], int] = np.argmax) -> Unroll:
    """Mean per-step cross-entropy of the decoder over ``target + <eol>``."""
    if len(target) == 0:
        raise ValueError("target sequence must be non-empty")
    params, cfg, vocab = model.params, model.dec_cfg, model.vocab
    targets = list(target) + [vocab.eol_id]
    state = init_state(model.encode(image), params, cfg, vocab.sos_id)
    token = vocab.sos_id
    inputs, forced, losses = [], [], []
    for t, y in enumerate(targets):
        inputs.append(token)
        logits, state = decoder_step(state, token, params, cfg)
        losses.append(T.cross_entropy(logits, y))
        if t + 1 < len(targets):
            truth = use_truth(rng, teacher_forcing_rate)
            forced.append(truth)
            token = y if truth else int(argmax(logits.data))
    total = losses[0]
    for item in losses[1:]:
        total = T.add(total, item)
    return Unroll(T.mul(total, 1.0 / len(losses)), inputs, forced)


def train_step(model: Model, sample: Sample, cfg: TrainConfig, rng: np.random.Generator,
               optimizer: Adam, step_index: int = 0) -> float:
    out = sequence_loss(model, sample.image, sample.target, cfg.teacher_forcing_rate, rng)
    loss = out.loss.item()
    if not math.isfinite(loss):
        norms = {k: float(np.linalg.norm(p.data)) for k, p in model.params.items()}
        bad = [k for k, n in norms.items() if not math.isfinite(n)]
        worst = sorted(((k, n) for k, n in norms.items() if k not in bad), key=lambda kv: -kv[1])[:5]
        raise TrainingAborted(
            f"non-finite loss {loss} at step {step_index} on sample {sample.ident!r}; "
            f"non-finite parameters: {bad or 'none'}; largest parameter norms: {worst}"
        )
    out.loss.backward()
    clip_grad_norm(model.params, cfg.clip_norm)
    optimizer.step()
    model.zero_grad()
    return loss


def split_corpus(corpus: Sequence[Sample], cfg: TrainConfig) -> tuple[list[Sample], list[Sample]]:
    """Seeded permutation; the last ``holdout_fraction`` of it is held out."""
    n = len(corpus)
    order = np.random.default_rng([cfg.seed, _SPLIT]).permutation(n)
    n_hold = int(round(cfg.holdout_fraction * n))
    if n_hold >= n:
        n_hold = n - 1
    keep = [corpus[i] for i in order[: n - n_hold]]
    held = [corpus[i] for i in order[n - n_hold:]]
    return keep, held


def evaluate(model: Model, samples: Sequence[Sample], workers: int = 1) -> EvalReport:
    """Greedy-decode every sample; results are merged in input order."""
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            preds = list(pool.map(lambda s: model.predict(s.image), samples))
    else:
        preds = [model.predict(s.image) for s in samples]
    return evaluate_pairs([(p, s.target) for p, s in zip(preds, samples)], [s.ident for s in samples])


@dataclass
class TrainResult:
    model: Model
    optimizer: Adam
    step: int
    losses: list[float] = field(default_factory=list)
    log: list[str] = field(default_factory=list)
    epochs: list[dict] = field(default_factory=list)
    checkpoints: list[Path] = field(default_factory=list)
    train_samples: list[Sample] = field(default_factory=list)
    heldout_samples: list[Sample] = field(default_factory=list)


def make_checkpoint(model: Model, optimizer: Adam, step: int, seed: int,
                    config: dict[str, str] | None = None) -> Checkpoint:
    config = dict(config or {})
    config["vocab"] = " ".join(model.vocab.tokens)
    return Checkpoint(
        config=config,
        params={k: p.data.copy() for k, p in model.params.items()},
        adam_m={k: v.copy() for k, v in optimizer.m.items()},
        adam_v={k: v.copy() for k, v in optimizer.v.items()},
        adam_t=optimizer.t,
        step=step,
        seed=seed,
    )


def restore(model: Model, optimizer: Adam, ckpt: Checkpoint) -> None:
    check_shapes(ckpt, model.shapes())
    for k, p in model.params.items():
        p.data[...] = ckpt.params[k]
        p.zero_grad()
    for k in model.params:
        optimizer.m[k] = ckpt.adam_m[k].copy() if k in ckpt.adam_m else np.zeros_like(optimizer.m[k])
        optimizer.v[k] = ckpt.adam_v[k].copy() if k in ckpt.adam_v else np.zeros_like(optimizer.v[k])
    optimizer.t = ckpt.adam_t


def fit(model: Model, corpus: Sequence[Sample], cfg: TrainConfig, out_dir=None,
        config_echo: dict[str, str] | None = None, resume: Checkpoint | None = None,
        stop_at: int | None = None, eval_workers: int = 1,
        on_step: Callable[[int, float], None] | None = None) -> TrainResult:
    """Epoch loop with seeded shuffling.

    Every random choice is a function of ``(seed, step)``, so a run resumed
    from a checkpoint retraces the uninterrupted run exactly. ``stop_at``
    ends the run early at that global step (used to cut a run in two).
    """
    if not corpus:
        raise ValueError("cannot train on an empty corpus")
    train, held = split_corpus(corpus, cfg)
    optimizer = Adam(model.params, cfg.learning_rate)
    start = 0
    if resume is not None:
        restore(model, optimizer, resume)
        start = resume.step
    total = cfg.epochs * len(train)
    if cfg.max_steps:
        total = min(total, cfg.max_steps)
    end = total if stop_at is None else min(total, stop_at)

    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
    result = TrainResult(model, optimizer, start, train_samples=train, heldout_samples=held)
    log_file = open(out_path / "train.log", "a", encoding="utf-8") if out_path else None

    def emit(line: str) -> None:
        result.log.append(line)
        if log_file is not None:
            log_file.write(line + "\n")
            log_file.flush()

    def checkpoint(k: int) -> None:
        if out_path is None:
            return
        path = out_path / f"checkpoint_{k:07d}.ckpt"
        save_checkpoint(path, make_checkpoint(model, optimizer, k, cfg.seed, config_echo))
        save_checkpoint(out_path / "final.ckpt", make_checkpoint(model, optimizer, k, cfg.seed, config_echo))
        result.checkpoints.append(path)

    n = len(train)
    order = None
    epoch_losses: list[float] = []
    try:
        for k in range(start, end):
            epoch, pos = divmod(k, n)
            if order is None or pos == 0:
                order = np.random.default_rng([cfg.seed, _SHUFFLE, epoch]).permutation(n)
            rng = np.random.default_rng([cfg.seed, _STEP, k])
            loss = train_step(model, train[order[pos]], cfg, rng, optimizer, k)
            result.losses.append(loss)
            epoch_losses.append(loss)
            emit(f"step={k} loss={loss!r}")
            if on_step is not None:
                on_step(k, loss)
            if pos == n - 1:
                summary = {"epoch": epoch, "mean_loss": float(np.mean(epoch_losses))}
                if held:
                    rep = evaluate(model, held, eval_workers)
                    summary.update(heldout_wer=rep.wer, heldout_exprate=rep.exprate)
                result.epochs.append(summary)
                emit(" ".join(f"{key}={val!r}" for key, val in summary.items()))
                epoch_losses = []
            if cfg.checkpoint_interval and (k + 1) % cfg.checkpoint_interval == 0:
                checkpoint(k + 1)
        result.step = max(start, end)
        if out_path is not None and (not result.checkpoints or result.checkpoints[-1].name
                                     != f"checkpoint_{result.step:07d}.ckpt"):
            checkpoint(result.step)
    finally:
        if log_file is not None:
            log_file.close()
    return result


def lr_sweep(make_model: Callable[[], Model], corpus: Sequence[Sample], cfg: TrainConfig,
             rates: Sequence[float] = (1e-4, 9e-5, 5e-5)) -> dict[float, TrainResult]:
    """One training run per learning rate, each from an identical initialization."""
    from dataclasses import replace

    return {lr: fit(make_model(), corpus, replace(cfg, learning_rate=lr)) for lr in rates}
