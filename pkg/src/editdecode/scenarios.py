"""Small scripted decoding scenarios with hand-set next-token tables."""

from __future__ import annotations

from dataclasses import dataclass

from .core import Constraint, ConstraintSet, EditWeights
from .decoder import DecoderConfig
from .scorer import BOS, EOS, ScriptedScorer, Vocabulary

WORDS = ["artisans", "craftsmen", "remain", "aged", "are", "old", "many", "."]

# Explicit next-token probabilities for the prefixes the walkthrough is about.
_SCRIPT = {
    (): {"are": 0.40, "artisans": 0.30, "many": 0.10, "craftsmen": 0.05, "remain": 0.04, "old": 0.01},
    ("craftsmen",): {"are": 0.45, "remain": 0.35, ".": 0.05, "aged": 0.02, "old": 0.001},
    ("are",): {"old": 0.60, "aged": 0.20, ".": 0.10, "craftsmen": 0.005},
    ("old",): {".": 0.50, "are": 0.20, "many": 0.10},
    ("artisans",): {"remain": 0.60, "are": 0.20, "aged": 0.10},
    ("craftsmen", "are"): {"old": 0.70, "aged": 0.20, ".": 0.05},
    ("craftsmen", "old"): {".": 0.90, "are": 0.03, "many": 0.02},
    ("are", "old"): {".": 0.80, "remain": 0.05, "many": 0.04},
    ("craftsmen", "are", "old"): {".": 0.90, "many": 0.02, "are": 0.02},
}


def _default(prefix: tuple) -> dict:
    if prefix and prefix[-1] == ".":
        return {EOS: 0.95, "many": 0.02, ".": 0.01}
    return {".": 0.40, EOS: 0.20, "many": 0.10}


@dataclass(frozen=True)
class Scenario:
    source: tuple
    scorer: ScriptedScorer
    constraints: ConstraintSet
    config: DecoderConfig


def craftsmen_walkthrough(weights: EditWeights = EditWeights(0.5, 0.5, 0.5)) -> Scenario:
    """Beam-3 replay: ``artisans`` must become ``craftsmen``, ``old`` must
    appear, ``remain`` and ``aged`` must go.

    With non-zero weights the decoder returns ``craftsmen are old .``; with
    all weights at zero the short, likely ``are old .`` wins instead.
    """
    vocab = Vocabulary([BOS, EOS] + WORDS, BOS, EOS)
    cs = ConstraintSet((
        Constraint.insertion("old"),
        Constraint.deletion("remain"),
        Constraint.deletion("aged"),
        Constraint.substitution("artisans", ["craftsmen"]),
    ), weights)
    config = DecoderConfig(beam_size=3, fanout=3, delta=1.0, max_len=6)

    # every prefix the search can reach: natural top-3 plus injected tokens
    probs = {}
    frontier = [()]
    for _ in range(config.max_len):
        nxt = []
        for prefix in frontier:
            p = _SCRIPT.get(prefix) or _default(prefix)
            probs[prefix] = p
            top = sorted(p, key=lambda t: -p[t])[:config.fanout]
            for tok in set(top) | {"old", "craftsmen"}:
                if tok != EOS:
                    nxt.append(prefix + (tok,))
        frontier = nxt
    scorer = ScriptedScorer.from_probs(vocab, probs)
    source = ("many", "artisans", "remain", "aged", ".")
    return Scenario(source, scorer, cs, config)
