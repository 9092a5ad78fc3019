"""Deterministic random scorers and constraint sets shared by the tests."""

import random
import zlib

import numpy as np

from editdecode.core import Constraint, ConstraintSet, EditWeights
from editdecode.scorer import BOS, EOS, Scorer, Vocabulary


class HashedToyScorer(Scorer):
    """Pseudo-random next-token distributions keyed on (seed, prefix).

    The same prefix always gets the same distribution, so any two search
    procedures see one consistent model.  ``eos_boost`` grows with the
    prefix length so that hypotheses tend to finish.
    """

    def __init__(self, n_words: int, seed: int, eos_boost: float = 0.6, spread: float = 2.0):
        self.words = [f"w{i}" for i in range(n_words)]
        self.vocab = Vocabulary([BOS, EOS] + self.words, BOS, EOS)
        self.seed = seed
        self.eos_boost = eos_boost
        self.spread = spread

    def score_next(self, source, prefix):
        key = f"{self.seed}|{' '.join(prefix)}".encode()
        rng = np.random.default_rng(zlib.crc32(key))
        logits = rng.normal(0.0, self.spread, len(self.vocab))
        logits[self.vocab.bos_id] = -np.inf
        logits[self.vocab.eos_id] += self.eos_boost * len(prefix)
        finite = logits[np.isfinite(logits)]
        top = finite.max()
        lse = top + np.log(np.exp(finite - top).sum())
        return logits - lse


def random_constraints(rng: random.Random, words, n_max: int = 4, max_phrase: int = 2,
                       weights=None) -> ConstraintSet:
    def phrase():
        return tuple(rng.choice(words) for _ in range(rng.randint(1, max_phrase)))

    out = []
    for _ in range(rng.randint(0, n_max)):
        kind = rng.choice("IDR")
        if kind == "I":
            out.append(Constraint.insertion(phrase()))
        elif kind == "D":
            out.append(Constraint.deletion(phrase()))
        else:
            src = phrase()
            alts = [a for a in {phrase() for _ in range(rng.randint(1, 2))} if a != src]
            if alts:
                out.append(Constraint.substitution(src, sorted(alts)))
    if weights is None:
        weights = EditWeights(*(round(rng.uniform(0, 1), 3) for _ in range(3)))
    return ConstraintSet(tuple(out), weights)
