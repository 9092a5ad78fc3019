"""Tokens, edit constraints, phrase matching and hypothesis bookkeeping."""

from __future__ import annotations

import enum
import functools
import json
import string
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Tuple

Phrase = Tuple[str, ...]

_PUNCT = frozenset(string.punctuation)


def tokenize(text: str) -> list[str]:
    """Split on whitespace, then peel punctuation off both word ends.

    >>> tokenize("He left.")
    ['He', 'left', '.']
    """
    tokens: list[str] = []
    for chunk in text.split():
        lead: list[str] = []
        trail: list[str] = []
        start, end = 0, len(chunk)
        while start < end and chunk[start] in _PUNCT:
            lead.append(chunk[start])
            start += 1
        while end > start and chunk[end - 1] in _PUNCT:
            trail.append(chunk[end - 1])
            end -= 1
        tokens.extend(lead)
        if start < end:
            tokens.append(chunk[start:end])
        tokens.extend(reversed(trail))
    return tokens


def detokenize(tokens: Iterable[str]) -> str:
    return " ".join(tokens)


def as_phrase(value) -> Phrase:
    if isinstance(value, str):
        return tuple(tokenize(value))
    return tuple(value)


def contains_phrase(tokens: Sequence[str], phrase: Sequence[str]) -> bool:
    n = len(phrase)
    if n == 0:
        return False
    phrase = list(phrase)
    return any(list(tokens[i:i + n]) == phrase for i in range(len(tokens) - n + 1))


class Kind(str, enum.Enum):
    INSERTION = "insert"
    DELETION = "delete"
    SUBSTITUTION = "subst"


_KIND_ORDER = {Kind.INSERTION: 0, Kind.DELETION: 1, Kind.SUBSTITUTION: 2}


class ConstraintError(ValueError):
    """A constraint or constraint document is malformed."""


@dataclass(frozen=True)
class Constraint:
    kind: Kind
    insert_phrase: Optional[Phrase] = None
    delete_phrase: Optional[Phrase] = None
    subst_from: Optional[Phrase] = None
    subst_to: Optional[Tuple[Phrase, ...]] = None

    def __post_init__(self):
        populated = {
            Kind.INSERTION: self.insert_phrase is not None,
            Kind.DELETION: self.delete_phrase is not None,
            Kind.SUBSTITUTION: self.subst_from is not None or self.subst_to is not None,
        }
        for kind, present in populated.items():
            if present != (kind == self.kind):
                raise ConstraintError(f"{self.kind.value} constraint has fields of kind {kind.value}")
        for phrase in self.phrases():
            if len(phrase) == 0 or any(tok == "" for tok in phrase):
                raise ConstraintError(f"empty phrase in {self.kind.value} constraint")
        if self.kind is Kind.SUBSTITUTION:
            if self.subst_from is None or not self.subst_to:
                raise ConstraintError("substitution needs a source phrase and at least one alternative")
            if self.subst_from in self.subst_to:
                raise ConstraintError(f"substitution {' '.join(self.subst_from)!r} maps onto itself")

    @classmethod
    def insertion(cls, phrase) -> "Constraint":
        return cls(Kind.INSERTION, insert_phrase=as_phrase(phrase))

    @classmethod
    def deletion(cls, phrase) -> "Constraint":
        return cls(Kind.DELETION, delete_phrase=as_phrase(phrase))

    @classmethod
    def substitution(cls, source, alternatives) -> "Constraint":
        if isinstance(alternatives, str):
            alternatives = [alternatives]
        alts: list[Phrase] = []
        for alt in alternatives:
            alt = as_phrase(alt)
            if alt not in alts:
                alts.append(alt)
        return cls(Kind.SUBSTITUTION, subst_from=as_phrase(source), subst_to=tuple(alts))

    def phrases(self) -> list[Phrase]:
        """Every phrase this constraint tracks, in role order."""
        if self.kind is Kind.INSERTION:
            return [self.insert_phrase]
        if self.kind is Kind.DELETION:
            return [self.delete_phrase]
        out = [] if self.subst_from is None else [self.subst_from]
        return out + list(self.subst_to or ())

    def __str__(self):
        if self.kind is Kind.SUBSTITUTION:
            alts = " | ".join(detokenize(p) for p in self.subst_to)
            return f"subst({detokenize(self.subst_from)} -> {alts})"
        return f"{self.kind.value}({detokenize(self.phrases()[0])})"


@dataclass(frozen=True)
class EditWeights:
    lambda_insert: float = 0.11
    lambda_delete: float = 0.66
    lambda_subst: float = 0.23

    def __post_init__(self):
        for name in ("lambda_insert", "lambda_delete", "lambda_subst"):
            value = getattr(self, name)
            if not value >= 0:
                raise ConstraintError(f"{name} must be non-negative, got {value}")
            if value > 1:
                warnings.warn(f"{name}={value} lies outside the usual [0, 1] search range", stacklevel=3)

    def to_dict(self) -> dict:
        return {"insert": self.lambda_insert, "delete": self.lambda_delete, "subst": self.lambda_subst}

    @classmethod
    def from_dict(cls, d: Mapping) -> "EditWeights":
        unknown = set(d) - {"insert", "delete", "subst"}
        if unknown:
            raise ConstraintError(f"unknown weight keys: {sorted(unknown)}")
        default = cls()
        try:
            return cls(float(d.get("insert", default.lambda_insert)),
                       float(d.get("delete", default.lambda_delete)),
                       float(d.get("subst", default.lambda_subst)))
        except (TypeError, ValueError) as exc:
            raise ConstraintError(f"bad weight value: {exc}") from None


ZERO_WEIGHTS = EditWeights(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class ConstraintSet:
    """Constraints grouped by kind (insertions, deletions, substitutions).

    Within a kind, the given order is kept.  Indices into ``constraints``
    are the stable identifiers used by satisfaction states and traces.
    """

    constraints: Tuple[Constraint, ...] = ()
    weights: EditWeights = field(default_factory=EditWeights)

    def __post_init__(self):
        ordered = sorted(self.constraints, key=lambda c: _KIND_ORDER[c.kind])
        object.__setattr__(self, "constraints", tuple(ordered))

    def __len__(self):
        return len(self.constraints)

    def __iter__(self):
        return iter(self.constraints)

    def __getitem__(self, i):
        return self.constraints[i]

    def with_weights(self, weights: EditWeights) -> "ConstraintSet":
        return ConstraintSet(self.constraints, weights)

    def of_kind(self, kind: Kind) -> list[Constraint]:
        return [c for c in self.constraints if c.kind is kind]

    def to_dict(self, include_weights: bool = True) -> dict:
        doc: dict = {}
        ins = [detokenize(c.insert_phrase) for c in self.of_kind(Kind.INSERTION)]
        dels = [detokenize(c.delete_phrase) for c in self.of_kind(Kind.DELETION)]
        subs = [[detokenize(c.subst_from), [detokenize(a) for a in c.subst_to]]
                for c in self.of_kind(Kind.SUBSTITUTION)]
        if ins:
            doc["insert"] = ins
        if dels:
            doc["delete"] = dels
        if subs:
            doc["subst"] = subs
        if include_weights:
            doc["weights"] = self.weights.to_dict()
        return doc


def _phrase_entry(value, where: str) -> Phrase:
    if not isinstance(value, str):
        raise ConstraintError(f"{where}: phrase must be a string, got {type(value).__name__}")
    phrase = as_phrase(value)
    if not phrase:
        raise ConstraintError(f"{where}: empty phrase")
    return phrase


def parse_constraints(doc, weights: Optional[EditWeights] = None) -> ConstraintSet:
    """Build a ConstraintSet from a constraint document (dict or JSON text).

    ``weights`` overrides whatever the document carries; otherwise the
    document's ``"weights"`` entry, and failing that the defaults, apply.
    """
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ConstraintError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, Mapping):
        raise ConstraintError("constraint document must be a JSON object")
    unknown = set(doc) - {"insert", "delete", "subst", "weights"}
    if unknown:
        raise ConstraintError(f"unknown keys: {sorted(unknown)}")

    constraints: list[Constraint] = []
    for key, make in (("insert", Constraint.insertion), ("delete", Constraint.deletion)):
        entries = doc.get(key, [])
        if not isinstance(entries, list):
            raise ConstraintError(f"{key!r} must be a list")
        for i, entry in enumerate(entries):
            constraints.append(make(_phrase_entry(entry, f"{key}[{i}]")))

    entries = doc.get("subst", [])
    if not isinstance(entries, list):
        raise ConstraintError("'subst' must be a list")
    for i, entry in enumerate(entries):
        where = f"subst[{i}]"
        if not (isinstance(entry, list) and len(entry) == 2 and isinstance(entry[1], list)):
            raise ConstraintError(f"{where}: expected [from_phrase, [to_phrase, ...]]")
        if not entry[1]:
            raise ConstraintError(f"{where}: empty alternative list")
        src = _phrase_entry(entry[0], where)
        alts = [_phrase_entry(a, f"{where}[1][{j}]") for j, a in enumerate(entry[1])]
        try:
            constraints.append(Constraint.substitution(src, alts))
        except ConstraintError as exc:
            raise ConstraintError(f"{where}: {exc}") from None

    if weights is None:
        w = doc.get("weights")
        if w is None:
            weights = EditWeights()
        elif isinstance(w, Mapping):
            weights = EditWeights.from_dict(w)
        else:
            raise ConstraintError("'weights' must be an object")
    return ConstraintSet(tuple(constraints), weights)


def serialize_constraints(cs: ConstraintSet, include_weights: bool = True) -> str:
    return json.dumps(cs.to_dict(include_weights), ensure_ascii=False)


# -- phrase matching ---------------------------------------------------------


@functools.lru_cache(maxsize=4096)
def _failure(phrase: Phrase) -> Tuple[int, ...]:
    fail = [0] * len(phrase)
    k = 0
    for i in range(1, len(phrase)):
        while k > 0 and phrase[i] != phrase[k]:
            k = fail[k - 1]
        if phrase[i] == phrase[k]:
            k += 1
        fail[i] = k
    return tuple(fail)


def advance_length(phrase: Phrase, matched: int, token: str) -> int:
    """KMP transition: longest phrase prefix that is a suffix of the text."""
    if matched == len(phrase):
        matched = _failure(phrase)[matched - 1]
    while matched > 0 and phrase[matched] != token:
        matched = _failure(phrase)[matched - 1]
    if phrase[matched] == token:
        matched += 1
    return matched


def completer(phrase: Phrase, matched: int) -> Optional[str]:
    """The single token that would complete ``phrase`` from this state, if any."""
    last = phrase[-1]
    return last if advance_length(phrase, matched, last) == len(phrase) else None


@dataclass(frozen=True)
class MatchState:
    """Progress of one constraint phrase against the output so far.

    ``role`` is ``"insert"``, ``"delete"``, ``"from"`` or ``"to:<k>"``.
    """

    constraint_index: int
    role: str
    phrase: Phrase
    matched_prefix_len: int = 0

    @property
    def complete(self) -> bool:
        return self.matched_prefix_len == len(self.phrase)


def advance_match(state: MatchState, token: str) -> MatchState:
    m = advance_length(state.phrase, state.matched_prefix_len, token)
    if m == state.matched_prefix_len:
        return state
    return MatchState(state.constraint_index, state.role, state.phrase, m)


# -- satisfaction ------------------------------------------------------------


class Status(str, enum.Enum):
    PENDING = "pending"
    SATISFIED = "satisfied"
    VIOLATED = "violated"


@dataclass(frozen=True, eq=False)
class SatisfactionState:
    """Per-constraint status plus the phrase-match progress behind it.

    Equality and hashing look at the status vector only, so the state can
    be used directly as a grouping key.
    """

    statuses: Tuple[Status, ...]
    violations: Tuple[int, ...]
    matches: Tuple[Tuple[MatchState, ...], ...]

    @classmethod
    def initial(cls, cs: ConstraintSet) -> "SatisfactionState":
        matches = []
        for i, c in enumerate(cs):
            if c.kind is Kind.INSERTION:
                roles = [("insert", c.insert_phrase)]
            elif c.kind is Kind.DELETION:
                roles = [("delete", c.delete_phrase)]
            else:
                roles = [("from", c.subst_from)] + [(f"to:{k}", p) for k, p in enumerate(c.subst_to)]
            matches.append(tuple(MatchState(i, role, p) for role, p in roles))
        n = len(cs)
        return cls((Status.PENDING,) * n, (0,) * n, tuple(matches))

    @property
    def key(self) -> Tuple[Status, ...]:
        return self.statuses

    @property
    def n_satisfied(self) -> int:
        return sum(s is Status.SATISFIED for s in self.statuses)

    def __eq__(self, other):
        if not isinstance(other, SatisfactionState):
            return NotImplemented
        return self.statuses == other.statuses

    def __hash__(self):
        return hash(self.statuses)


# -- hypotheses --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Hypothesis:
    """A partial (or finished) output with its running scores.

    ``parent``/``step_delta``/``step_logprob`` link back along the search
    path; walking them reproduces the cumulative scores.
    """

    tokens: Tuple[str, ...]
    logprob: float
    edit_score: float
    sat: SatisfactionState
    finished: bool = False
    parent: Optional["Hypothesis"] = field(default=None, repr=False)
    step_delta: float = 0.0
    step_logprob: float = 0.0
    uid: int = -1

    @property
    def length(self) -> int:
        """Number of scored steps, counting the end-of-sentence step."""
        return len(self.tokens) + (1 if self.finished else 0)

    def normalized(self, gamma: float = 1.0) -> float:
        return self.logprob / max(1, self.length) ** gamma

    def path(self) -> list["Hypothesis"]:
        out = []
        h = self
        while h is not None:
            out.append(h)
            h = h.parent
        return out[::-1]

    @property
    def text(self) -> str:
        return detokenize(self.tokens)
