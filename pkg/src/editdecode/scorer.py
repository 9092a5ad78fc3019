"""Next-token scorers: n-gram LM, copy-biased mixture, scripted tables.

Every scorer exposes ``vocab`` and ``score_next(source, prefix)`` returning
a float64 array of natural-log probabilities, one entry per vocabulary
item, whose exponentials sum to one.
"""

from __future__ import annotations

import json
import math
from collections import Counter, defaultdict
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"

NORM_TOL = 1e-9


class ScorerError(Exception):
    """Base class for scorer failures."""


class UnscriptedStateError(ScorerError, LookupError):
    """A scripted scorer was asked about a prefix it has no table for."""


class Vocabulary:
    """Ordered, duplicate-free token list with reserved BOS/EOS (and optional UNK)."""

    def __init__(self, tokens: Sequence[str], bos: str = BOS, eos: str = EOS, unk: Optional[str] = None):
        tokens = list(tokens)
        if len(set(tokens)) != len(tokens):
            raise ValueError("vocabulary tokens must be unique")
        for name, tok in (("bos", bos), ("eos", eos), ("unk", unk)):
            if tok is not None and tok not in tokens:
                raise ValueError(f"{name} symbol {tok!r} missing from vocabulary")
        self.tokens = tokens
        self._index = {t: i for i, t in enumerate(tokens)}
        self.bos, self.eos, self.unk = bos, eos, unk
        self.bos_id = self._index[bos]
        self.eos_id = self._index[eos]
        self.unk_id = None if unk is None else self._index[unk]

    @classmethod
    def build(cls, words: Iterable[str], unk: bool = True) -> "Vocabulary":
        """Specials first (BOS, EOS[, UNK]), then ``words`` sorted."""
        specials = [BOS, EOS] + ([UNK] if unk else [])
        rest = sorted(set(words) - set(specials))
        return cls(specials + rest, BOS, EOS, UNK if unk else None)

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self._index

    def __eq__(self, other):
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return (self.tokens, self.bos, self.eos, self.unk) == (other.tokens, other.bos, other.eos, other.unk)

    def __hash__(self):
        return hash((tuple(self.tokens), self.bos, self.eos, self.unk))

    def __repr__(self):
        return f"Vocabulary({len(self)} tokens)"

    def id(self, token: str) -> int:
        """Index of ``token``; unknown tokens map to UNK when the vocabulary has one."""
        i = self._index.get(token)
        if i is None:
            if self.unk_id is None:
                raise KeyError(token)
            return self.unk_id
        return i

    def get(self, token: str) -> Optional[int]:
        return self._index.get(token)

    def token(self, i: int) -> str:
        return self.tokens[i]

    def canonical(self, token: str) -> str:
        """``token`` if known, else the UNK symbol."""
        return token if token in self._index else self.tokens[self.id(token)]

    def generatable(self) -> np.ndarray:
        """Boolean mask of ids a decoder may emit (everything but BOS and UNK)."""
        mask = np.ones(len(self), dtype=bool)
        mask[self.bos_id] = False
        if self.unk_id is not None:
            mask[self.unk_id] = False
        return mask

    def to_dict(self) -> dict:
        return {"tokens": self.tokens, "bos": self.bos, "eos": self.eos, "unk": self.unk}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Vocabulary":
        return cls(d["tokens"], d["bos"], d["eos"], d.get("unk"))


def check_normalized(logprobs: np.ndarray, tol: float = NORM_TOL) -> bool:
    total = math.fsum(np.exp(logprobs).tolist())
    return bool(np.all(np.isfinite(logprobs))) and abs(total - 1.0) <= tol


class Scorer:
    """Interface: ``score_next(source, prefix) -> log-probabilities``."""

    vocab: Vocabulary

    def score_next(self, source: Sequence[str], prefix: Sequence[str]) -> np.ndarray:
        raise NotImplementedError


class UniformScorer(Scorer):
    def __init__(self, vocab: Vocabulary):
        self.vocab = vocab
        self._row = np.full(len(vocab), -math.log(len(vocab)))

    def score_next(self, source, prefix):
        return self._row.copy()


class NGramLM(Scorer):
    """Add-k smoothed n-gram model over a closed vocabulary (source ignored).

    ``counts`` maps a context tuple of ``order - 1`` tokens to a Counter of
    next tokens.  Sentences are padded with ``order - 1`` BOS symbols and a
    final EOS before counting.
    """

    def __init__(self, order: int, vocab: Vocabulary, counts: Mapping[tuple, Mapping[str, int]], k: float = 0.1):
        if order < 1:
            raise ValueError("order must be >= 1")
        if not k > 0:
            raise ValueError("add-k smoothing needs k > 0")
        self.order = order
        self.vocab = vocab
        self.k = float(k)
        self.counts = {tuple(ctx): Counter(c) for ctx, c in counts.items()}
        self._cache: dict[tuple, np.ndarray] = {}

    def context(self, prefix: Sequence[str]) -> tuple:
        if self.order == 1:
            return ()
        padded = [self.vocab.bos] * (self.order - 1) + [self.vocab.canonical(t) for t in prefix]
        return tuple(padded[-(self.order - 1):])

    def distribution(self, context: tuple) -> np.ndarray:
        row = self._cache.get(context)
        if row is None:
            counts = np.zeros(len(self.vocab))
            for tok, c in self.counts.get(context, {}).items():
                counts[self.vocab.id(tok)] += c
            denom = counts.sum() + self.k * len(self.vocab)
            row = np.log(counts + self.k) - math.log(denom)
            self._cache[context] = row
        return row

    def score_next(self, source, prefix):
        return self.distribution(self.context(prefix)).copy()

    def prob(self, token: str, context: Sequence[str] = ()) -> float:
        return float(np.exp(self.distribution(tuple(context))[self.vocab.id(token)]))

    def to_dict(self) -> dict:
        counts = [[list(ctx), dict(sorted(c.items()))] for ctx, c in sorted(self.counts.items())]
        return {"type": "ngram", "order": self.order, "k": self.k, "vocab": self.vocab.to_dict(), "counts": counts}

    @classmethod
    def from_dict(cls, d: Mapping) -> "NGramLM":
        if d.get("type") != "ngram":
            raise ValueError("not an n-gram model file")
        counts = {tuple(ctx): c for ctx, c in d["counts"]}
        return cls(d["order"], Vocabulary.from_dict(d["vocab"]), counts, d["k"])

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, ensure_ascii=False, indent=None)
            f.write("\n")

    @classmethod
    def load(cls, path) -> "NGramLM":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_cache"] = {}
        return state


def train_ngram_lm(corpus: Sequence[Sequence[str]], order: int = 2, k: float = 0.1,
                   vocab: Optional[Vocabulary] = None) -> NGramLM:
    """Count padded n-grams; the vocabulary defaults to the corpus words plus specials."""
    if not corpus:
        raise ValueError("cannot train on an empty corpus")
    if order < 1:
        raise ValueError("order must be >= 1")
    if vocab is None:
        vocab = Vocabulary.build(tok for sent in corpus for tok in sent)
    counts: dict[tuple, Counter] = defaultdict(Counter)
    for sent in corpus:
        padded = [vocab.bos] * (order - 1) + [vocab.canonical(t) for t in sent] + [vocab.eos]
        for i in range(order - 1, len(padded)):
            counts[tuple(padded[i - order + 1:i])][padded[i]] += 1
    return NGramLM(order, vocab, counts, k)


class CopyBiasedScorer(Scorer):
    """Mixture ``mu * Uniform(source tokens + EOS) + (1 - mu) * base``."""

    def __init__(self, base: Scorer, copy_weight: float = 0.3):
        if not 0.0 <= copy_weight <= 1.0:
            raise ValueError("copy_weight must lie in [0, 1]")
        self.base = base
        self.vocab = base.vocab
        self.copy_weight = float(copy_weight)
        self._copy_cache: dict[tuple, np.ndarray] = {}

    def _copy_row(self, source: tuple) -> np.ndarray:
        row = self._copy_cache.get(source)
        if row is None:
            ids = {self.vocab.eos_id}
            for tok in source:
                i = self.vocab.get(tok)
                if i is None:
                    i = self.vocab.unk_id
                if i is not None and i != self.vocab.bos_id:
                    ids.add(i)
            row = np.zeros(len(self.vocab))
            row[sorted(ids)] = 1.0 / len(ids)
            self._copy_cache[source] = row
        return row

    def score_next(self, source, prefix):
        base = self.base.score_next(source, prefix)
        mu = self.copy_weight
        if mu == 0.0:
            return base
        copy = self._copy_row(tuple(source))
        if mu == 1.0:
            with np.errstate(divide="ignore"):
                return np.log(copy)
        with np.errstate(divide="ignore"):
            return np.log(mu * copy + (1.0 - mu) * np.exp(base))

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_copy_cache"] = {}
        return state


class ScriptedScorer(Scorer):
    """Replays explicit per-prefix tables; anything unscripted is an error.

    ``table`` maps a prefix (tuple of tokens) to either a full array of
    log-probabilities or a ``{token: logprob}`` dict covering the whole
    vocabulary.
    """

    def __init__(self, vocab: Vocabulary, table: Mapping[tuple, object]):
        self.vocab = vocab
        self.table: dict[tuple, np.ndarray] = {}
        for prefix, row in table.items():
            if isinstance(row, Mapping):
                missing = set(vocab.tokens) - set(row)
                if missing:
                    raise ValueError(f"table for {prefix} misses {sorted(missing)}")
                row = [row[t] for t in vocab.tokens]
            row = np.asarray(row, dtype=float)
            if row.shape != (len(vocab),) or not check_normalized(row):
                raise ValueError(f"table for {prefix} is not a normalized distribution")
            self.table[tuple(prefix)] = row

    @classmethod
    def from_probs(cls, vocab: Vocabulary, probs: Mapping[tuple, Mapping[str, float]]) -> "ScriptedScorer":
        """Tables given as partial probability dicts; leftover mass is spread evenly."""
        table = {}
        for prefix, p in probs.items():
            rest = [t for t in vocab.tokens if t not in p]
            left = 1.0 - math.fsum(p.values())
            if left <= 0 or not rest:
                raise ValueError(f"no mass left for unlisted tokens after {prefix}")
            row = {t: math.log(v) for t, v in p.items()}
            row.update({t: math.log(left / len(rest)) for t in rest})
            table[prefix] = row
        return cls(vocab, table)

    def score_next(self, source, prefix):
        row = self.table.get(tuple(prefix))
        if row is None:
            raise UnscriptedStateError(f"no scripted distribution for prefix {list(prefix)}")
        return row.copy()


def load_scorer_file(path) -> Scorer:
    with open(path, encoding="utf-8") as f:
        d = json.load(f)
    if d.get("type") == "ngram":
        return NGramLM.from_dict(d)
    raise ValueError(f"{path}: unknown model type {d.get('type')!r}")
