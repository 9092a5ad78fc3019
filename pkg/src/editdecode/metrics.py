"""Simplification metrics: SARI (with operation breakdown), BLEU, FKGL,
output length and constraint-satisfaction rates.

All functions take pre-tokenized sentences (lists of strings).
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

from .core import ConstraintSet, Kind, contains_phrase

MAX_N = 4
DEL_MODES = ("f1", "precision")


class MetricError(ValueError):
    pass


def ngrams(tokens: Sequence[str], n: int) -> list:
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p > 0 or r > 0 else 0.0


@dataclass
class SariScore:
    overall: float
    add: float
    keep: float
    delete: float
    per_n: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"overall": self.overall, "add": self.add, "keep": self.keep, "del": self.delete,
                "per_n": {str(k): v for k, v in self.per_n.items()}}


def _sari_ngram(s: list, c: list, refs: list, del_mode: str) -> tuple:
    """(add, keep, del) in [0, 1] for one n-gram order."""
    numref = len(refs)
    rcount = Counter(g for r in refs for g in r)
    s_rep = Counter({g: k * numref for g, k in Counter(s).items()})
    c_rep = Counter({g: k * numref for g, k in Counter(c).items()})

    keep = s_rep & c_rep
    keep_good = keep & rcount
    keep_all = s_rep & rcount
    p_sum = sum(keep_good[g] / keep[g] for g in keep_good)
    r_sum = sum(keep_good[g] / keep_all[g] for g in keep_good)
    keep_p = p_sum / len(keep) if keep else 0.0
    keep_r = r_sum / len(keep_all) if keep_all else 0.0
    keep_score = _f1(keep_p, keep_r)

    dele = s_rep - c_rep
    del_good = dele - rcount
    del_all = s_rep - rcount
    p_sum = sum(del_good[g] / dele[g] for g in del_good)
    r_sum = sum(del_good[g] / del_all[g] for g in del_good)
    del_p = p_sum / len(dele) if dele else 0.0
    if del_mode == "precision":
        del_score = del_p
    else:
        del_r = r_sum / len(del_all) if del_all else 0.0
        del_score = _f1(del_p, del_r)

    s_set, c_set, r_set = set(s), set(c), set(rcount)
    added = c_set - s_set
    add_good = added & r_set
    add_all = r_set - s_set
    add_p = len(add_good) / len(added) if added else 0.0
    add_r = len(add_good) / len(add_all) if add_all else 0.0
    return _f1(add_p, add_r), keep_score, del_score


def sari(src: Sequence[str], out: Sequence[str], refs: Sequence[Sequence[str]], del_mode: str = "f1") -> SariScore:
    """Sentence-level SARI on lowercased tokens, n = 1..4, scaled to [0, 100].

    ``del_mode="precision"`` reproduces the widely used reference script;
    ``"f1"`` scores deletion with F1 like the other two operations.
    """
    if del_mode not in DEL_MODES:
        raise MetricError(f"del_mode must be one of {DEL_MODES}")
    if not refs:
        raise MetricError("SARI needs at least one reference")
    s1 = [t.lower() for t in src]
    c1 = [t.lower() for t in out]
    r1 = [[t.lower() for t in r] for r in refs]
    per_n = {}
    for n in range(1, MAX_N + 1):
        per_n[n] = tuple(100.0 * x for x in _sari_ngram(ngrams(s1, n), ngrams(c1, n),
                                                        [ngrams(r, n) for r in r1], del_mode))
    add = sum(v[0] for v in per_n.values()) / MAX_N
    keep = sum(v[1] for v in per_n.values()) / MAX_N
    dele = sum(v[2] for v in per_n.values()) / MAX_N
    per_n = {n: {"add": v[0], "keep": v[1], "del": v[2]} for n, v in per_n.items()}
    return SariScore((add + keep + dele) / 3, add, keep, dele, per_n)


def corpus_sari(sources, outputs, references, del_mode: str = "f1") -> SariScore:
    """Mean of sentence-level scores.  ``references[i]`` lists sentence i's references."""
    if not (len(sources) == len(outputs) == len(references)):
        raise MetricError(f"{len(sources)} sources, {len(outputs)} outputs, {len(references)} reference lists")
    if not sources:
        raise MetricError("empty corpus")
    scores = [sari(s, o, r, del_mode) for s, o, r in zip(sources, outputs, references)]
    k = len(scores)
    per_n = {n: {op: sum(sc.per_n[n][op] for sc in scores) / k for op in ("add", "keep", "del")}
             for n in range(1, MAX_N + 1)}
    add = sum(sc.add for sc in scores) / k
    keep = sum(sc.keep for sc in scores) / k
    dele = sum(sc.delete for sc in scores) / k
    return SariScore((add + keep + dele) / 3, add, keep, dele, per_n)


def bleu(outputs: Sequence[Sequence[str]], references: Sequence[Sequence[Sequence[str]]]) -> float:
    """Corpus 4-gram BLEU in [0, 100] with exponential smoothing of zero counts.

    Clipping uses the maximum count over each sentence's references; the
    brevity penalty uses the reference length closest to each output
    (shorter wins ties).
    """
    if len(outputs) != len(references):
        raise MetricError(f"{len(outputs)} outputs but {len(references)} reference lists")
    if not outputs:
        raise MetricError("empty corpus")
    correct = [0] * MAX_N
    total = [0] * MAX_N
    sys_len = ref_len = 0
    for out, refs in zip(outputs, references):
        if not refs:
            raise MetricError("every output needs at least one reference")
        sys_len += len(out)
        ref_len += min((abs(len(r) - len(out)), len(r)) for r in refs)[1]
        for n in range(1, MAX_N + 1):
            counts = Counter(ngrams(out, n))
            best: Counter = Counter()
            for r in refs:
                best |= Counter(ngrams(r, n))
            correct[n - 1] += sum(min(k, best[g]) for g, k in counts.items())
            total[n - 1] += sum(counts.values())

    precisions = [0.0] * MAX_N
    smooth = 1.0
    for n in range(MAX_N):
        if total[n] == 0:
            break
        if correct[n] == 0:
            smooth *= 2
            precisions[n] = 100.0 / (smooth * total[n])
        else:
            precisions[n] = 100.0 * correct[n] / total[n]
    if min(precisions) == 0.0:
        return 0.0
    if sys_len == 0:
        bp = 0.0
    elif sys_len < ref_len:
        bp = math.exp(1 - ref_len / sys_len)
    else:
        bp = 1.0
    return bp * math.exp(sum(math.log(p) for p in precisions) / MAX_N)


_VOWELS = re.compile(r"[aeiouy]+")
_WORDLIKE = re.compile(r"[A-Za-z0-9]")


def syllables(word: str) -> int:
    """Vowel-group count, minus a silent final 'e', at least one."""
    w = word.lower()
    count = len(_VOWELS.findall(w))
    if w.endswith("e") and count > 1:
        count -= 1
    return max(1, count)


def fkgl(sentences: Sequence[Sequence[str]]) -> float:
    """Flesch-Kincaid grade level; punctuation-only tokens are not words."""
    if not sentences:
        raise MetricError("FKGL needs at least one sentence")
    words = [t for s in sentences for t in s if _WORDLIKE.search(t)]
    if not words:
        raise MetricError("FKGL undefined: no words")
    n_syll = sum(syllables(w) for w in words)
    return 0.39 * len(words) / len(sentences) + 11.8 * n_syll / len(words) - 15.59


def mean_len(outputs: Sequence[Sequence[str]]) -> float:
    if not outputs:
        raise MetricError("mean length of an empty list")
    return sum(len(o) for o in outputs) / len(outputs)


def constraint_met(tokens: Sequence[str], c) -> bool:
    """Surface check of one constraint against a finished output."""
    if c.kind is Kind.INSERTION:
        return contains_phrase(tokens, c.insert_phrase)
    if c.kind is Kind.DELETION:
        return not contains_phrase(tokens, c.delete_phrase)
    return (any(contains_phrase(tokens, a) for a in c.subst_to)
            and not contains_phrase(tokens, c.subst_from))


def satisfaction_counts(outputs, constraint_sets) -> dict:
    """``{kind: [satisfied, total]}`` over all sentences."""
    if len(outputs) != len(constraint_sets):
        raise MetricError(f"{len(outputs)} outputs but {len(constraint_sets)} constraint sets")
    counts = {k.value: [0, 0] for k in Kind}
    for out, cs in zip(outputs, constraint_sets):
        for c in cs or ():
            counts[c.kind.value][0] += constraint_met(out, c)
            counts[c.kind.value][1] += 1
    return counts


def satisfaction_rate(outputs, constraint_sets) -> dict:
    """Percent satisfied per constraint kind; ``None`` for kinds that never occur."""
    return {k: (100.0 * met / n if n else None) for k, (met, n) in satisfaction_counts(outputs, constraint_sets).items()}


@dataclass
class EvaluationReport:
    sari: Optional[SariScore]
    bleu: float
    fkgl: float
    mean_len: float
    satisfaction: Optional[dict] = None
    n_sentences: int = 0
    del_mode: str = "f1"
    first_ref_only: bool = False

    COLUMNS = ("SARI", "add", "keep", "del", "BLEU", "FKGL", "Len")

    def row(self) -> dict:
        s = self.sari
        vals = {"SARI": s and s.overall, "add": s and s.add, "keep": s and s.keep, "del": s and s.delete,
                "BLEU": self.bleu, "FKGL": self.fkgl, "Len": self.mean_len}
        if self.satisfaction is not None:
            for k, v in self.satisfaction.items():
                vals[f"sat:{k}"] = v
        return vals

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sari"] = self.sari.to_dict() if self.sari else None
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table(self) -> str:
        return format_table({"": self})


def format_table(reports: dict) -> str:
    """Aligned plain-text table, one row per named report."""
    cols = list(EvaluationReport.COLUMNS)
    for rep in reports.values():
        for k in rep.row():
            if k not in cols:
                cols.append(k)
    name_w = max([len("system")] + [len(n) for n in reports])
    widths = [max(len(c), 6) for c in cols]
    lines = ["  ".join(["system".ljust(name_w)] + [c.rjust(w) for c, w in zip(cols, widths)])]
    for name, rep in reports.items():
        row = rep.row()
        cells = []
        for c, w in zip(cols, widths):
            v = row.get(c)
            cells.append(("-" if v is None else f"{v:.2f}").rjust(w))
        lines.append("  ".join([(name or "-").ljust(name_w)] + cells))
    return "\n".join(lines)


def evaluate(outputs, references, sources=None, constraint_sets=None, del_mode: str = "f1",
             first_ref_only: bool = False) -> EvaluationReport:
    """Full report.  SARI is skipped (``None``) when no sources are given."""
    if first_ref_only:
        references = [refs[:1] for refs in references]
    s = corpus_sari(sources, outputs, references, del_mode) if sources is not None else None
    sat = satisfaction_rate(outputs, constraint_sets) if constraint_sets is not None else None
    return EvaluationReport(s, bleu(outputs, references), fkgl(outputs), mean_len(outputs), sat,
                            len(outputs), del_mode, first_ref_only)
