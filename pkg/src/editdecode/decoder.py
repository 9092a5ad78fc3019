"""Edit-constrained beam search and the plain beam-search baseline.

Each timestep of :func:`decode` runs four stages over the current beam:

1. ``expand``: every live hypothesis proposes a sibling set of next tokens
   (its top-``fanout`` tokens plus any token that advances a pending
   insertion or substitution-output phrase) and each node is scored with
   its edit delta.
2. ``prune``: keep the ``alpha`` most likely nodes, then drop nodes whose
   cumulative edit score trails the best by more than ``delta``.
3. ``group_and_select``: bucket nodes by constraint-status vector and fill
   the next beam round-robin across buckets.
4. nodes that emitted EOS move to the finished pool.

Timesteps in traces count the start symbol as step 1, so the first
generated token belongs to step 2.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .core import (
    Constraint,
    ConstraintSet,
    EditWeights,
    Hypothesis,
    Kind,
    MatchState,
    SatisfactionState,
    Status,
    advance_match,
    completer,
)
from .scorer import Scorer

log = logging.getLogger(__name__)


class DecoderError(ValueError):
    pass


@dataclass(frozen=True)
class DecoderConfig:
    beam_size: int = 20
    fanout: Optional[int] = None
    alpha: Optional[int] = None
    delta: float = 0.12
    max_len: int = 50
    length_norm_gamma: float = 1.0
    casefold: bool = False

    def __post_init__(self):
        if self.fanout is None:
            object.__setattr__(self, "fanout", self.beam_size)
        if self.alpha is None:
            object.__setattr__(self, "alpha", self.beam_size * self.fanout)
        if self.beam_size < 1 or self.fanout < 1 or self.alpha < 1:
            raise DecoderError("beam_size, fanout and alpha must all be >= 1")
        if not self.delta >= 0:
            raise DecoderError("delta must be >= 0")
        if self.max_len < 1:
            raise DecoderError("max_len must be >= 1")
        if not self.length_norm_gamma >= 0:
            raise DecoderError("length_norm_gamma must be >= 0")

    def normalize(self, logprob: float, length: int) -> float:
        return logprob / max(1, length) ** self.length_norm_gamma


@dataclass(eq=False)
class CandidateNode:
    parent: Hypothesis
    token: str
    token_id: int
    incr_logprob: float
    edit_delta: float
    new_sat: SatisfactionState
    sibling_set_id: int
    parent_rank: int = 0
    injected: bool = False
    finishes: bool = False
    events: list = field(default_factory=list)
    norm: float = 0.0

    @property
    def logprob(self) -> float:
        return self.parent.logprob + self.incr_logprob

    @property
    def edit_score(self) -> float:
        return self.parent.edit_score + self.edit_delta

    @property
    def tiebreak(self) -> tuple:
        return (self.parent_rank, self.token_id)

    def to_hypothesis(self, uid: int = -1) -> Hypothesis:
        tokens = self.parent.tokens if self.finishes else self.parent.tokens + (self.token,)
        return Hypothesis(tokens, self.logprob, self.edit_score, self.new_sat, self.finishes,
                          self.parent, self.edit_delta, self.incr_logprob, uid)


@dataclass
class DecodeResult:
    best: Hypothesis
    finished_pool: list
    trace: Optional[list] = None
    truncated: bool = False
    unreachable: list = field(default_factory=list)

    @property
    def tokens(self) -> list:
        return list(self.best.tokens)

    @property
    def text(self) -> str:
        return self.best.text


# -- edit scores -------------------------------------------------------------


def _fold_cs(cs: ConstraintSet) -> ConstraintSet:
    def low(p):
        return tuple(t.lower() for t in p)

    out = []
    for c in cs:
        if c.kind is Kind.INSERTION:
            out.append(Constraint.insertion(low(c.insert_phrase)))
        elif c.kind is Kind.DELETION:
            out.append(Constraint.deletion(low(c.delete_phrase)))
        else:
            alts = [low(a) for a in c.subst_to if low(a) != low(c.subst_from)]
            if not alts:
                raise DecoderError(f"{c} maps onto itself once case is folded")
            out.append(Constraint.substitution(low(c.subst_from), alts))
    return ConstraintSet(tuple(out), cs.weights)


def _completers(sat: SatisfactionState) -> list:
    """Per constraint and role: the token that would complete the phrase now."""
    return [[completer(m.phrase, m.matched_prefix_len) for m in ms] for ms in sat.matches]


def _phrase_tokens(cs: ConstraintSet) -> tuple:
    return tuple(frozenset(t for p in c.phrases() for t in p) for c in cs)


def _reset(ms: tuple) -> tuple:
    if all(m.matched_prefix_len == 0 for m in ms):
        return ms
    return tuple(MatchState(m.constraint_index, m.role, m.phrase, 0) for m in ms)


def _score_node(token: str, others, sat: SatisfactionState, cs: ConstraintSet, w: EditWeights,
                completers: list, vocab_of: Optional[tuple] = None, resets: Optional[list] = None) -> tuple:
    if not len(cs):
        return 0.0, sat, []
    statuses = list(sat.statuses)
    violations = list(sat.violations)
    matches = []
    events = []
    delta = 0.0
    if vocab_of is None:
        vocab_of = _phrase_tokens(cs)
    if resets is None:
        resets = [_reset(ms) for ms in sat.matches]
    for i, c in enumerate(cs):
        comp = completers[i]
        if token not in vocab_of[i]:
            # a token outside every phrase of this constraint only resets progress
            matches.append(resets[i])
            if c.kind is Kind.DELETION and comp[0] is not None and comp[0] in others:
                if statuses[i] is Status.PENDING:
                    statuses[i] = Status.SATISFIED
                events.append({"constraint": i, "kind": "delete", "event": "satisfied", "score": 0.0})
            continue
        new = tuple(advance_match(m, token) for m in sat.matches[i])
        matches.append(new)

        def sib(k):
            return comp[k] is not None and comp[k] != token and comp[k] in others

        if c.kind is Kind.INSERTION:
            if statuses[i] is Status.PENDING and new[0].complete:
                delta += w.lambda_insert
                statuses[i] = Status.SATISFIED
                events.append({"constraint": i, "kind": "insert", "event": "reward", "score": w.lambda_insert})
        elif c.kind is Kind.DELETION:
            if new[0].complete:
                delta -= w.lambda_delete
                violations[i] += 1
                statuses[i] = Status.VIOLATED
                events.append({"constraint": i, "kind": "delete", "event": "penalty", "score": -w.lambda_delete})
            elif sib(0):
                if statuses[i] is Status.PENDING:
                    statuses[i] = Status.SATISFIED
                events.append({"constraint": i, "kind": "delete", "event": "satisfied", "score": 0.0})
        else:
            alt_done = any(m.complete for m in new[1:])
            if alt_done and statuses[i] is Status.PENDING and sib(0):
                delta += w.lambda_subst
                statuses[i] = Status.SATISFIED
                events.append({"constraint": i, "kind": "subst", "event": "reward", "score": w.lambda_subst})
            elif new[0].complete and any(sib(k) for k in range(1, len(new))):
                delta -= w.lambda_subst
                events.append({"constraint": i, "kind": "subst", "event": "penalty", "score": -w.lambda_subst})
    return delta, SatisfactionState(tuple(statuses), tuple(violations), tuple(matches)), events


def edit_delta(token: str, siblings: Iterable[str], sat: SatisfactionState, cs: ConstraintSet,
               weights: Optional[EditWeights] = None) -> tuple:
    """Edit-score change and successor state for choosing ``token``.

    ``siblings`` is the whole sibling set (it may include ``token``
    itself).  Returns ``(delta, new_state)``.
    """
    others = set(siblings)
    others.discard(token)
    delta, new_sat, _ = _score_node(token, others, sat, cs, weights or cs.weights, _completers(sat))
    return delta, new_sat


def finish_state(sat: SatisfactionState, cs: ConstraintSet) -> SatisfactionState:
    """Unmet insertions and substitutions can no longer be met once EOS is emitted."""
    statuses = tuple(
        Status.VIOLATED if s is Status.PENDING and c.kind is not Kind.DELETION else s
        for s, c in zip(sat.statuses, cs)
    )
    return SatisfactionState(statuses, sat.violations, sat.matches)


# -- search stages -----------------------------------------------------------


class _Context:
    """Per-decode lookup tables shared by the stages."""

    def __init__(self, source, scorer: Scorer, cs: ConstraintSet, cfg: DecoderConfig):
        self.source = list(source)
        self.scorer = scorer
        self.vocab = scorer.vocab
        self.cfg = cfg
        self.cs = _fold_cs(cs) if cfg.casefold else cs
        self.weights = cs.weights
        self.fold: Callable[[str], str] = str.lower if cfg.casefold else (lambda t: t)
        self.mask = self.vocab.generatable()
        self.lookup: dict[str, int] = {}
        for i, tok in enumerate(self.vocab.tokens):
            if self.mask[i]:
                self.lookup.setdefault(self.fold(tok), i)
        self.folded = [self.fold(t) for t in self.vocab.tokens]
        self.vocab_of = _phrase_tokens(self.cs)
        self.unreachable = [i for i, c in enumerate(self.cs)
                            if any(t not in self.lookup for p in c.phrases() for t in p)]


def _expand(h: Hypothesis, rank: int, set_id: int, ctx: _Context) -> list:
    cfg, vocab = ctx.cfg, ctx.vocab
    row = np.asarray(ctx.scorer.score_next(ctx.source, h.tokens), dtype=float)
    if row.shape != (len(vocab),):
        raise DecoderError(f"scorer returned {row.shape} scores for a {len(vocab)}-token vocabulary")
    order = np.argsort(-row, kind="stable")
    ok = ctx.mask[order] & np.isfinite(row[order])
    natural = [int(i) for i in order[ok][:cfg.fanout]]

    ids = list(natural)
    injected = set()
    seen = set(natural)
    for i, c in enumerate(ctx.cs):
        if c.kind is Kind.DELETION or h.sat.statuses[i] is not Status.PENDING:
            continue
        roles = h.sat.matches[i] if c.kind is Kind.INSERTION else h.sat.matches[i][1:]
        for m in roles:
            tid = ctx.lookup.get(m.phrase[m.matched_prefix_len]) if not m.complete else None
            if tid is not None and tid not in seen and np.isfinite(row[tid]):
                ids.append(tid)
                seen.add(tid)
                injected.add(tid)

    pi = {ctx.folded[t] for t in ids}
    completers = _completers(h.sat)
    resets = [_reset(ms) for ms in h.sat.matches]
    eos = vocab.eos_id
    nodes = []
    for tid in ids:
        tok = ctx.folded[tid]
        others = pi - {tok}
        delta, sat, events = _score_node(tok, others, h.sat, ctx.cs, ctx.weights, completers, ctx.vocab_of, resets)
        finishes = tid == eos
        if finishes:
            sat = finish_state(sat, ctx.cs)
        node = CandidateNode(h, vocab.token(tid), tid, float(row[tid]), delta, sat, set_id, rank,
                             tid in injected, finishes, events)
        node.norm = cfg.normalize(node.logprob, len(h.tokens) + 1)
        nodes.append(node)
    return nodes


def expand(h: Hypothesis, scorer: Scorer, cs: ConstraintSet, cfg: DecoderConfig, source=()) -> list:
    """Sibling set of candidate nodes for one hypothesis."""
    if h.finished:
        raise DecoderError("cannot expand a finished hypothesis")
    return _expand(h, 0, 0, _Context(source, scorer, cs, cfg))


def _likelihood_key(n: CandidateNode):
    return (-n.norm,) + n.tiebreak


def _prune(pool: list, cfg: DecoderConfig) -> tuple:
    ranked = sorted(pool, key=_likelihood_key)
    kept, cut_alpha = ranked[:cfg.alpha], ranked[cfg.alpha:]
    if not kept:
        return kept, cut_alpha, []
    top = max(n.edit_score for n in kept)
    floor = top - cfg.delta
    survivors = [n for n in kept if n.edit_score >= floor]
    cut_delta = [n for n in kept if n.edit_score < floor]
    return survivors, cut_alpha, cut_delta


def prune(pool: list, cfg: DecoderConfig) -> list:
    """Top-``alpha`` by normalized likelihood, then the ``delta`` edit-score gap."""
    return _prune(pool, cfg)[0]


def _member_key(n: CandidateNode):
    return (-n.edit_score, -n.norm) + n.tiebreak


def _groups(pool: list) -> list:
    buckets: dict = {}
    for n in pool:
        buckets.setdefault(n.new_sat.key, []).append(n)
    groups = [sorted(members, key=_member_key) for members in buckets.values()]

    def order(members):
        best = min(members, key=_likelihood_key)
        return (-members[0].new_sat.n_satisfied,) + _likelihood_key(best)

    return sorted(groups, key=order)


def _select(groups: list, beam_size: int) -> list:
    chosen = []
    for layer in itertools.zip_longest(*groups):
        for n in layer:
            if n is None:
                continue
            chosen.append(n)
            if len(chosen) == beam_size:
                return chosen
    return chosen


def group_and_select(pool: list, cfg: DecoderConfig) -> list:
    """Fill the next beam round-robin across constraint-status groups."""
    return _select(_groups(pool), cfg.beam_size)


def _final_key(cfg: DecoderConfig):
    return lambda h: (-h.edit_score, -cfg.normalize(h.logprob, h.length))


def _node_record(n: CandidateNode, idx: int) -> dict:
    return {"node": idx, "token": n.token, "incr_logprob": n.incr_logprob, "logprob": n.logprob,
            "norm": n.norm, "edit_delta": n.edit_delta, "edit_score": n.edit_score,
            "injected": n.injected, "events": n.events,
            "status": [s.value for s in n.new_sat.statuses]}


def decode(source: Sequence[str], scorer: Scorer, cs: Optional[ConstraintSet], cfg: DecoderConfig,
           trace: bool = False) -> DecodeResult:
    """Edit-constrained beam search for one source sentence."""
    if cs is None:
        cs = ConstraintSet()
    if len(scorer.vocab) == 0:
        raise DecoderError("empty vocabulary")
    ctx = _Context(source, scorer, cs, cfg)
    for i in ctx.unreachable:
        warnings.warn(f"constraint {i} ({cs[i]}) uses tokens outside the scorer vocabulary; "
                      "it can never be satisfied", stacklevel=2)

    uid = itertools.count()
    root = Hypothesis((), 0.0, 0.0, SatisfactionState.initial(ctx.cs), uid=next(uid))
    beam = [root]
    finished: list = []
    records: Optional[list] = [] if trace else None
    if trace:
        records.append({"timestep": 1, "selected": [{"uid": root.uid, "tokens": [scorer.vocab.bos],
                                                     "logprob": 0.0, "edit_score": 0.0, "finished": False}]})

    for step in range(cfg.max_len):
        pool = []
        expansions = []
        for rank, h in enumerate(beam):
            nodes = _expand(h, rank, rank, ctx)
            expansions.append((h, nodes))
            pool.extend(nodes)
        kept, cut_alpha, cut_delta = _prune(pool, cfg)
        groups = _groups(kept)
        chosen = _select(groups, cfg.beam_size)

        beam = []
        selected = []
        for n in chosen:
            h = n.to_hypothesis(next(uid))
            (finished if h.finished else beam).append(h)
            selected.append(h)

        if trace:
            index = {id(n): k for k, n in enumerate(pool)}
            records.append({
                "timestep": step + 2,
                "expansions": [{"parent": h.uid, "prefix": list(h.tokens), "sibling_set": k,
                                "nodes": [_node_record(n, index[id(n)]) for n in nodes]}
                               for k, (h, nodes) in enumerate(expansions)],
                "pruned_alpha": [index[id(n)] for n in cut_alpha],
                "pruned_delta": [index[id(n)] for n in cut_delta],
                "groups": [{"status": [s.value for s in g[0].new_sat.statuses],
                            "members": [index[id(n)] for n in g]} for g in groups],
                "selected": [{"node": index[id(n)], "uid": h.uid, "parent": n.parent.uid,
                              "tokens": list(h.tokens), "logprob": h.logprob, "edit_score": h.edit_score,
                              "edit_delta": h.step_delta, "finished": h.finished}
                             for n, h in zip(chosen, selected)],
            })
        if not beam:
            break

    key = _final_key(cfg)
    if finished:
        best, truncated = min(finished, key=key), False
    else:
        best, truncated = min(beam, key=key), True
    return DecodeResult(best, finished, records, truncated, ctx.unreachable)


def plain_beam_search(source: Sequence[str], scorer: Scorer, cfg: DecoderConfig,
                      trace: bool = False) -> DecodeResult:
    """Length-normalized beam search with no constraint machinery."""
    vocab = scorer.vocab
    if len(vocab) == 0:
        raise DecoderError("empty vocabulary")
    mask = vocab.generatable()
    empty = SatisfactionState((), (), ())
    beam = [Hypothesis((), 0.0, 0.0, empty)]
    finished = []
    records = [] if trace else None
    for step in range(cfg.max_len):
        cands = []
        for rank, h in enumerate(beam):
            row = np.asarray(scorer.score_next(source, h.tokens), dtype=float)
            for tid in np.flatnonzero(mask & np.isfinite(row)):
                lp = h.logprob + float(row[tid])
                cands.append((-cfg.normalize(lp, len(h.tokens) + 1), rank, int(tid), lp, h, float(row[tid])))
        cands.sort(key=lambda c: c[:3])
        beam = []
        selected = []
        for _, _, tid, lp, parent, inc in cands[:cfg.beam_size]:
            done = tid == vocab.eos_id
            tokens = parent.tokens if done else parent.tokens + (vocab.token(tid),)
            h = Hypothesis(tokens, lp, 0.0, empty, done, parent, 0.0, inc)
            (finished if done else beam).append(h)
            selected.append(h)
        if trace:
            records.append({"timestep": step + 2,
                            "selected": [{"tokens": list(h.tokens), "logprob": h.logprob, "finished": h.finished}
                                         for h in selected]})
        if not beam:
            break
    key = _final_key(cfg)
    if finished:
        return DecodeResult(min(finished, key=key), finished, records, False)
    return DecodeResult(min(beam, key=key), finished, records, True)


# -- corpus-level helpers ----------------------------------------------------

_WORKER: dict = {}


def _worker_init(scorer, cfg, trace):
    _WORKER.update(scorer=scorer, cfg=cfg, trace=trace)


def _decode_one(args):
    source, cs = args
    w = _WORKER
    if cs is None:
        return plain_beam_search(source, w["scorer"], w["cfg"], w["trace"])
    return decode(source, w["scorer"], cs, w["cfg"], w["trace"])


def decode_corpus(sources: Sequence[Sequence[str]], scorer: Scorer, constraint_sets, cfg: DecoderConfig,
                  workers: int = 1, trace: bool = False) -> list:
    """Decode many sentences; ``None`` constraint sets select plain beam search.

    Results come back in input order whatever ``workers`` is.
    """
    if constraint_sets is None:
        constraint_sets = [None] * len(sources)
    if len(constraint_sets) != len(sources):
        raise DecoderError("sources and constraint sets are not line-aligned")
    jobs = list(zip(sources, constraint_sets))
    if workers <= 1 or len(jobs) < 2:
        _worker_init(scorer, cfg, trace)
        try:
            return [_decode_one(j) for j in jobs]
        finally:
            _WORKER.clear()
    chunk = max(1, math.ceil(len(jobs) / (workers * 4)))
    with ProcessPoolExecutor(workers, initializer=_worker_init, initargs=(scorer, cfg, trace)) as ex:
        return list(ex.map(_decode_one, jobs, chunksize=chunk))


def write_trace(records: Iterable[dict], fh, sentence: Optional[int] = None) -> None:
    """One JSON object per timestep; ``sentence`` tags records from corpus runs."""
    for rec in records:
        if sentence is not None:
            rec = dict(rec, sentence=sentence)
        fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
