"""Handwritten math expression recognition: multi-scale dense encoder, coverage-attention decoder."""

from .data import SynthSpec, default_vocab, generate_synth, load_corpus, load_image, samples_from_synth
from .decoder import DecoderConfig, greedy_decode
from .encoder import EncoderConfig, encode
from .metrics import corpus_wer, edit_distance, exprate, wer
from .model import Model, init_model
from .trainer import TrainConfig, fit
from .vocab import Vocabulary, load_vocab

__version__ = "0.1.0"
