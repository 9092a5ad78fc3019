"""Desk-scale comparison of plain beam search and edit-constrained decoding
on the synthetic corpus, with weights tuned on the validation split."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from .constraints import extract_oracle
from .decoder import DecoderConfig, decode_corpus
from .metrics import EvaluationReport, evaluate
from .scorer import CopyBiasedScorer, train_ngram_lm
from .synthetic import generate_corpus, lm_corpus, split_corpus
from .tuning import TuneResult, tune


@dataclass
class ExperimentSetup:
    n_pairs: int = 500
    corpus_seed: int = 0
    lm_order: int = 3
    lm_k: float = 0.1
    copy_weight: float = 0.3
    beam_size: int = 5
    max_len: int = 25
    n_valid_used: int = 40
    n_trials: int = 100
    tune_seed: int = 0
    del_mode: str = "f1"
    workers: int = 1


@dataclass
class ExperimentResult:
    setup: ExperimentSetup
    tuned: TuneResult
    plain: EvaluationReport
    constrained: EvaluationReport
    outputs: dict = field(default_factory=dict)


def prepare(setup: ExperimentSetup):
    """Corpus splits, copy-biased scorer and decoder config for ``setup``."""
    train, valid, test = split_corpus(generate_corpus(setup.n_pairs, setup.corpus_seed))
    lm = train_ngram_lm(lm_corpus(train), order=setup.lm_order, k=setup.lm_k)
    scorer = CopyBiasedScorer(lm, setup.copy_weight)
    cfg = DecoderConfig(beam_size=setup.beam_size, max_len=setup.max_len)
    return train, valid[:setup.n_valid_used], test, scorer, cfg


def _triples(pairs, weights=None):
    src = [list(p.complex) for p in pairs]
    refs = [[list(p.simple)] for p in pairs]
    cs = [extract_oracle(p.complex, p.simple, p.alignment, weights) for p in pairs]
    return src, refs, cs


def run(setup: Optional[ExperimentSetup] = None, tuned: Optional[TuneResult] = None) -> ExperimentResult:
    setup = setup or ExperimentSetup()
    _, valid, test, scorer, cfg = prepare(setup)
    if tuned is None:
        vs, vr, vc = _triples(valid)
        tuned = tune(vs, vr, vc, scorer, cfg, setup.n_trials, setup.tune_seed, setup.del_mode, setup.workers)
    src, refs, cs = _triples(test, tuned.weights)
    plain = [r.tokens for r in decode_corpus(src, scorer, None, cfg, workers=setup.workers)]
    ours = [r.tokens for r in decode_corpus(src, scorer, cs, replace(cfg, delta=tuned.delta), workers=setup.workers)]
    return ExperimentResult(
        setup, tuned,
        evaluate(plain, refs, src, cs, setup.del_mode),
        evaluate(ours, refs, src, cs, setup.del_mode),
        {"plain": plain, "constrained": ours},
    )
