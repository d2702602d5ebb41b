"""Command-line front end: ``synth``, ``train``, ``eval`` and ``predict``.

Exit status is 0 on success, 2 for unusable inputs (missing paths, invalid
config, mismatched checkpoint) and 1 when training aborts.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint, CheckpointError, load_checkpoint
from .config import RunConfig
from .data import (CorpusError, PGMError, SynthSpec, export_gray_image, generate_synth, load_corpus,
                   load_image, pad_to_factor, default_vocab)
from .encoder import dump_stem_features
from .model import Model, init_model
from .tensor import Tensor
from .trainer import TrainingAborted, evaluate, fit
from .vocab import VocabError, Vocabulary

CONFIG_ECHO = "config.txt"


class CLIError(Exception):
    def __init__(self, message: str, code: int = 2):
        super().__init__(message)
        self.code = code


def model_from_checkpoint(ckpt: Checkpoint) -> Model:
    """Rebuild the model a checkpoint was written from, verifying every tensor shape."""
    cfg = dict(ckpt.config)
    tokens = cfg.pop("vocab", None)
    if tokens is None:
        raise CheckpointError("checkpoint config has no vocab entry")
    run = RunConfig.from_dict(cfg)
    model = init_model(Vocabulary(tuple(tokens.split(" "))), run.encoder_config(), run.decoder_config(),
                       seed=run.seed)
    from .checkpoint import check_shapes

    check_shapes(ckpt, model.shapes())
    for k, p in model.params.items():
        p.data[...] = ckpt.params[k]
    return model


def _existing(path: str, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise CLIError(f"{what} not found: {p}")
    return p


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> None:
    spec = SynthSpec.loads(_existing(args.spec, "synth spec").read_text(encoding="utf-8"))
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise CLIError(f"output directory {out} exists and is not empty; pass --force to overwrite")
    vocab = default_vocab()
    items = generate_synth(spec, out, vocab)
    (out / "synth_spec.txt").write_text(spec.dumps(), encoding="utf-8")
    print(f"samples={len(items)} vocab={len(vocab)}")


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(_existing(args.config, "config file")) if args.config else RunConfig()
    overrides = {
        "learning_rate": args.lr,
        "teacher_forcing_rate": args.teacher_forcing,
        "epochs": args.epochs,
        "max_steps": args.max_steps,
        "seed": args.seed,
        "checkpoint_interval": args.checkpoint_interval,
    }
    changes = {k: v for k, v in overrides.items() if v is not None}
    if args.no_coverage:
        changes["coverage"] = False
    return cfg.replace(**changes)


def cmd_train(args) -> None:
    corpus_dir = _existing(args.corpus, "corpus directory")
    run = resolve_config(args)
    corpus = load_corpus(corpus_dir)
    vocab = _corpus_vocab(corpus_dir)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / CONFIG_ECHO).write_text(run.dumps(), encoding="utf-8")
    model = init_model(vocab, run.encoder_config(), run.decoder_config(), seed=run.seed)
    resume = None
    if args.resume:
        resume = load_checkpoint(_existing(args.resume, "checkpoint"), model.shapes())
    res = fit(model, corpus, run.train_config(), out_dir=out, config_echo=run.to_dict(), resume=resume,
              eval_workers=args.workers)
    last = res.losses[-1] if res.losses else float("nan")
    print(f"steps={res.step} final_loss={last!r} checkpoint={out / 'final.ckpt'}")


def _corpus_vocab(corpus_dir: Path) -> Vocabulary:
    from .vocab import load_vocab

    return load_vocab(corpus_dir / "vocab.txt")


def _load_model(path: str) -> Model:
    return model_from_checkpoint(load_checkpoint(_existing(path, "checkpoint")))


def cmd_eval(args) -> None:
    corpus_dir = _existing(args.corpus, "corpus directory")
    model = _load_model(args.checkpoint)
    samples = load_corpus(corpus_dir, model.vocab)
    rep = evaluate(model, samples, args.workers)
    if not args.quiet:
        print(rep.table())
    print(rep.summary())


def cmd_predict(args) -> None:
    model = _load_model(args.checkpoint)
    image = pad_to_factor(load_image(_existing(args.image, "image")))
    result = model.decode(image)
    sys.stdout.write(" ".join(model.vocab.decode(result.ids)) + "\n")
    if args.dump_attention:
        dump_attention(result, image, model, Path(args.dump_attention))


def dump_attention(result, image: Tensor, model: Model, out: Path) -> int:
    """One graymap per decode step and scale, plus one per stem channel.

    Attention maps are divided by their peak so the most attended cell is black.
    """
    out.mkdir(parents=True, exist_ok=True)
    count = 0
    for t, maps in enumerate(result.attention):
        for s, alpha in enumerate(maps, start=1):
            peak = alpha.max()
            export_gray_image(alpha / peak if peak > 0 else alpha, out / f"step{t:03d}_scale{s}.pgm")
            count += 1
    for c, fmap in enumerate(dump_stem_features(image, model.params)):
        export_gray_image(fmap, out / f"stem_{c:02d}.pgm")
        count += 1
    return count


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hmer", description="Image-to-LaTeX recognizer for math expressions.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="render a synthetic corpus")
    s.add_argument("--spec", required=True, help="key=value synth spec file")
    s.add_argument("--out", required=True)
    s.add_argument("--force", action="store_true", help="write into a non-empty directory")
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train a model on a corpus")
    t.add_argument("--corpus", required=True)
    t.add_argument("--config", help="key=value run config; flags override it")
    t.add_argument("--out", required=True)
    t.add_argument("--lr", type=float)
    t.add_argument("--teacher-forcing", type=float, help="probability of feeding the truth token")
    t.add_argument("--no-coverage", action="store_true")
    t.add_argument("--epochs", type=int)
    t.add_argument("--max-steps", type=int)
    t.add_argument("--checkpoint-interval", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("--workers", type=int, default=1, help="threads for held-out decoding")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint on a corpus")
    e.add_argument("--corpus", required=True)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--quiet", action="store_true", help="print only the summary line")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("predict", help="transcribe one image")
    r.add_argument("--image", required=True)
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--dump-attention", metavar="DIR")
    r.set_defaults(func=cmd_predict)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except TrainingAborted as exc:
        print(f"error: training aborted: {exc}", file=sys.stderr)
        return 1
    except (CorpusError, PGMError, CheckpointError, VocabError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
