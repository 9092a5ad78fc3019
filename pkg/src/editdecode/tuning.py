"""Seeded uniform random search over edit weights and the delta gap."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .core import EditWeights
from .decoder import DecoderConfig, decode_corpus
from .metrics import corpus_sari

log = logging.getLogger(__name__)

LAMBDA_RANGE = (0.0, 1.0)
DELTA_RANGE = (0.0, 2.0)


@dataclass
class Trial:
    index: int
    weights: EditWeights
    delta: float
    score: float

    def to_dict(self) -> dict:
        return {"trial": self.index, "weights": self.weights.to_dict(), "delta": self.delta, "sari": self.score}


@dataclass
class TuneResult:
    weights: EditWeights
    delta: float
    score: float
    trials: list = field(default_factory=list)
    seed: Optional[int] = None

    @property
    def best_trial(self) -> Trial:
        return max(self.trials, key=lambda t: t.score)

    def to_dict(self) -> dict:
        return {"weights": self.weights.to_dict(), "delta": self.delta, "sari": self.score,
                "seed": self.seed, "n_trials": len(self.trials)}

    def write_log(self, fh) -> None:
        for t in self.trials:
            fh.write(json.dumps(t.to_dict()) + "\n")


def sample_trials(n_trials: int, seed: int, lambda_range=LAMBDA_RANGE, delta_range=DELTA_RANGE) -> list:
    """The ``(weights, delta)`` pairs a search with this seed will try, in order."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_trials):
        lam = rng.uniform(*lambda_range, size=3)
        d = rng.uniform(*delta_range)
        out.append((EditWeights(*(float(x) for x in lam)), float(d)))
    return out


def random_search(objective: Callable[[EditWeights, float], float], n_trials: int = 100, seed: int = 0,
                  lambda_range=LAMBDA_RANGE, delta_range=DELTA_RANGE) -> TuneResult:
    """Maximize ``objective(weights, delta)``; the earliest trial wins ties."""
    if n_trials < 1:
        raise ValueError("need at least one trial")
    trials = []
    best = None
    for i, (w, d) in enumerate(sample_trials(n_trials, seed, lambda_range, delta_range)):
        score = float(objective(w, d))
        t = Trial(i, w, d, score)
        trials.append(t)
        if best is None or score > best.score:
            best = t
        log.debug("trial %d: %s delta=%.3f sari=%.3f", i, w, d, score)
    return TuneResult(best.weights, best.delta, best.score, trials, seed)


def sari_objective(sources: Sequence, references: Sequence, constraint_sets: Sequence, scorer,
                   cfg: DecoderConfig, del_mode: str = "f1", workers: int = 1) -> Callable:
    """Validation SARI of edit-constrained decoding as a function of the weights."""

    def objective(weights: EditWeights, delta: float) -> float:
        sets = [cs.with_weights(weights) for cs in constraint_sets]
        results = decode_corpus(sources, scorer, sets, replace(cfg, delta=delta), workers=workers)
        return corpus_sari(sources, [r.tokens for r in results], references, del_mode).overall

    return objective


def tune(sources, references, constraint_sets, scorer, cfg: DecoderConfig, n_trials: int = 100, seed: int = 0,
         del_mode: str = "f1", workers: int = 1) -> TuneResult:
    objective = sari_objective(sources, references, constraint_sets, scorer, cfg, del_mode, workers)
    return random_search(objective, n_trials, seed)
