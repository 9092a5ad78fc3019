"""Constraint sets built from data.

Oracle constraints come from a word alignment between a source sentence
and its reference; substitution candidates come from a lexical
translation table (``src tgt prob`` rows, as in a Moses lex file).
"""

from __future__ import annotations

import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .core import Constraint, ConstraintSet, EditWeights, Kind

_LINK = re.compile(r"^(\d+)-(\d+)$")


class AlignmentError(ValueError):
    pass


class TranslationTableError(ValueError):
    pass


@dataclass(frozen=True)
class Alignment:
    src_len: int
    ref_len: int
    links: frozenset

    def __post_init__(self):
        object.__setattr__(self, "links", frozenset(self.links))
        for i, j in self.links:
            if not (0 <= i < self.src_len and 0 <= j < self.ref_len):
                raise AlignmentError(f"link {i}-{j} out of range for lengths {self.src_len}x{self.ref_len}")

    def targets(self, i: int) -> list:
        return sorted(j for s, j in self.links if s == i)

    def to_text(self) -> str:
        return " ".join(f"{i}-{j}" for i, j in sorted(self.links))


def load_alignment(text: str, src_len: Optional[int] = None, ref_len: Optional[int] = None) -> Alignment:
    """Parse one line of ``i-j`` pairs (0-based, source index first).

    Sentence lengths default to the smallest ones the links allow.
    """
    links = set()
    for pos, item in enumerate(text.split()):
        m = _LINK.match(item)
        if not m:
            raise AlignmentError(f"item {pos} ({item!r}) is not of the form i-j")
        links.add((int(m.group(1)), int(m.group(2))))
    if src_len is None:
        src_len = max((i for i, _ in links), default=-1) + 1
    if ref_len is None:
        ref_len = max((j for _, j in links), default=-1) + 1
    return Alignment(src_len, ref_len, frozenset(links))


def classify_tokens(src: Sequence[str], ref: Sequence[str], a: Alignment) -> list:
    """Per source position: ``("delete", tok)``, ``("insert", tok)`` or
    ``("subst", tok, [alternatives])``."""
    if a.src_len != len(src) or a.ref_len != len(ref):
        raise AlignmentError(
            f"alignment sized {a.src_len}x{a.ref_len} but sentences have {len(src)} and {len(ref)} tokens")
    linked = defaultdict(list)
    for i, j in sorted(a.links):
        linked[i].append(j)
    out = []
    for i, tok in enumerate(src):
        js = linked.get(i)
        if not js:
            out.append(("delete", tok))
            continue
        differing = []
        for j in js:
            if ref[j] != tok and ref[j] not in differing:
                differing.append(ref[j])
        if differing:
            out.append(("subst", tok, differing))
        else:
            out.append(("insert", tok))
    return out


def extract_oracle(src: Sequence[str], ref: Sequence[str], a: Alignment,
                   weights: Optional[EditWeights] = None) -> ConstraintSet:
    """Oracle edit constraints from an aligned source/reference pair.

    Unaligned source tokens become deletions, tokens aligned only to
    identical surfaces become insertions, and tokens aligned to different
    surfaces become substitutions whose alternatives are those surfaces.
    Unaligned reference tokens are ignored.  Duplicates are dropped.
    """
    constraints = []
    seen = set()
    for entry in classify_tokens(src, ref, a):
        if entry[0] == "delete":
            c = Constraint.deletion((entry[1],))
        elif entry[0] == "insert":
            c = Constraint.insertion((entry[1],))
        else:
            c = Constraint.substitution((entry[1],), [(t,) for t in entry[2]])
        if c not in seen:
            seen.add(c)
            constraints.append(c)
    return ConstraintSet(tuple(constraints), weights or EditWeights())


class TranslationTable(dict):
    """``source token -> [(target token, probability), ...]``, most probable first."""

    def __init__(self, entries=(), min_prob: float = 0.0):
        super().__init__(entries)
        self.min_prob = min_prob

    def targets(self, token: str) -> list:
        return self.get(token, [])


def _rows(rows) -> Iterable[tuple]:
    for lineno, row in enumerate(rows, 1):
        if isinstance(row, str):
            if not row.strip():
                continue
            fields = row.split()
            if len(fields) != 3:
                raise TranslationTableError(f"row {lineno}: expected 'src tgt prob', got {row.strip()!r}")
        else:
            fields = list(row)
            if len(fields) != 3:
                raise TranslationTableError(f"row {lineno}: expected 3 fields")
        src, tgt, prob = fields
        try:
            p = float(prob)
        except (TypeError, ValueError):
            raise TranslationTableError(f"row {lineno}: probability {prob!r} is not a number") from None
        if not 0.0 <= p <= 1.0:
            raise TranslationTableError(f"row {lineno}: probability {p} outside [0, 1]")
        yield src, tgt, p


def load_translation_table(rows, min_prob: float = 0.002) -> TranslationTable:
    """Read ``src tgt prob`` rows, dropping targets below ``min_prob``.

    Repeated ``(src, tgt)`` rows keep the highest probability.
    """
    best: dict = {}
    for src, tgt, p in _rows(rows):
        key = (src, tgt)
        if key not in best or p > best[key]:
            best[key] = p
    grouped = defaultdict(list)
    for (src, tgt), p in best.items():
        if p >= min_prob:
            grouped[src].append((tgt, p))
    for src in grouped:
        grouped[src].sort(key=lambda tp: (-tp[1], tp[0]))
    return TranslationTable(sorted(grouped.items()), min_prob)


def estimate_translation_table(triples: Iterable[tuple], min_prob: float = 0.002) -> TranslationTable:
    """Maximum-likelihood ``p(tgt | src)`` from aligned ``(src, ref, alignment)`` triples.

    Unaligned source tokens count towards a NULL target, which is not
    emitted, so their mass lowers the other targets' probabilities.
    """
    pair = Counter()
    total = Counter()
    for src, ref, a in triples:
        linked = defaultdict(list)
        for i, j in a.links:
            linked[i].append(j)
        for i, tok in enumerate(src):
            js = linked.get(i) or [None]
            for j in js:
                total[tok] += 1
                if j is not None:
                    pair[tok, ref[j]] += 1
    rows = [(s, t, c / total[s]) for (s, t), c in pair.items()]
    return load_translation_table(rows, min_prob)


def substitution_candidates(token: str, table: TranslationTable) -> Optional[Constraint]:
    """All non-identical targets of ``token`` as one OR-substitution, or ``None``."""
    alts = [(t,) for t, _ in table.targets(token) if t != token]
    if not alts:
        return None
    return Constraint.substitution((token,), alts)


LABELS = {"I": Kind.INSERTION, "D": Kind.DELETION, "R": Kind.SUBSTITUTION}


def constraints_from_labels(src: Sequence[str], labels: Sequence[str], table: Optional[TranslationTable],
                            weights: Optional[EditWeights] = None) -> ConstraintSet:
    """Turn per-token edit labels into constraints.

    Labels are ``I`` (keep/insert), ``D`` (delete), ``R`` (replace) or
    ``O`` (no constraint).  ``R`` tokens draw their replacements from
    ``table``; tokens without candidates are skipped.
    """
    if len(labels) != len(src):
        raise ValueError(f"{len(labels)} labels for {len(src)} tokens")
    constraints = []
    for tok, lab in zip(src, labels):
        kind = LABELS.get(lab)
        if lab not in LABELS and lab != "O":
            raise ValueError(f"unknown label {lab!r}")
        if kind is Kind.INSERTION:
            c = Constraint.insertion((tok,))
        elif kind is Kind.DELETION:
            c = Constraint.deletion((tok,))
        elif kind is Kind.SUBSTITUTION and table is not None:
            c = substitution_candidates(tok, table)
        else:
            c = None
        if c is not None and c not in constraints:
            constraints.append(c)
    return ConstraintSet(tuple(constraints), weights or EditWeights())
