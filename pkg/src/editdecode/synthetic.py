"""Rule-generated complex/simple sentence pairs with gold word alignments.

Each complex sentence is filled from slot templates.  Its simple
counterpart replaces words found in a fixed substitution dictionary and
drops hedging modifiers, so the edits (and hence the oracle constraints)
are known exactly.
"""

from __future__ import annotations

import json
import os
import random
from dataclasses import dataclass
from typing import Optional

from .constraints import Alignment

# complex word -> simple word
SUBSTITUTIONS = {
    "physicians": "doctors", "artisans": "craftsmen", "individuals": "people", "pupils": "students",
    "purchased": "bought", "constructed": "built", "obtained": "got", "utilized": "used",
    "demonstrated": "showed", "required": "needed", "repaired": "fixed", "observed": "saw",
    "enormous": "big", "elderly": "old", "miniature": "small", "costly": "expensive", "rapid": "fast",
    "residence": "home", "automobile": "car", "beverage": "drink", "apparatus": "tool", "vessel": "ship",
    "commenced": "started", "attempted": "tried", "assisted": "helped",
}

SUBJECTS = (["physicians", "artisans", "individuals", "pupils"], ["farmers", "workers", "children", "teachers"])
VERBS = (["purchased", "constructed", "obtained", "utilized", "demonstrated", "required", "repaired", "observed"],
         ["painted", "sold", "cleaned", "moved", "found"])
ADJECTIVES = (["enormous", "elderly", "miniature", "costly", "rapid"], ["red", "new", "wooden", "quiet"])
OBJECTS = (["residence", "automobile", "beverage", "apparatus", "vessel"], ["house", "table", "boat", "bag"])
PLACES = ["river", "market", "station", "school", "village", "harbor"]
PREPOSITIONS = ["near", "at", "behind"]
DETERMINERS = ["the", "some", "many"]
MODIFIERS = ["very", "extremely", "remarkably", "somewhat", "particularly"]
ADVERBS = ["eventually", "reportedly", "apparently", "subsequently"]
OPENERS = ["yesterday", "recently", "today"]


@dataclass(frozen=True)
class Pair:
    complex: tuple
    simple: tuple
    alignment: Alignment

    def to_dict(self) -> dict:
        return {"complex": list(self.complex), "simple": list(self.simple), "alignment": self.alignment.to_text()}


def _pick(rng: random.Random, options: tuple, p_complex: float) -> str:
    hard, plain = options
    return rng.choice(hard if rng.random() < p_complex else plain)


def make_pair(rng: random.Random, p_complex: float = 0.6, p_modifier: float = 0.6, p_adverb: float = 0.4,
              p_opener: float = 0.3) -> Pair:
    """One complex sentence, its simplification and their alignment.

    Each source token is tagged ``keep``, ``swap`` or ``drop``; the simple
    side and the alignment follow directly from the tags.
    """
    tagged = []
    if rng.random() < p_opener:
        tagged += [rng.choice(OPENERS), ","]
    tagged += [rng.choice(DETERMINERS), _pick(rng, SUBJECTS, p_complex)]
    if rng.random() < p_adverb:
        tagged.append(rng.choice(ADVERBS))
    tagged += [_pick(rng, VERBS, p_complex), "a"]
    if rng.random() < p_modifier:
        tagged.append(rng.choice(MODIFIERS))
    tagged += [_pick(rng, ADJECTIVES, p_complex), _pick(rng, OBJECTS, p_complex),
               rng.choice(PREPOSITIONS), "the", rng.choice(PLACES), "."]

    simple = []
    links = set()
    for i, tok in enumerate(tagged):
        if tok in MODIFIERS or tok in ADVERBS:
            continue
        links.add((i, len(simple)))
        simple.append(SUBSTITUTIONS.get(tok, tok))
    return Pair(tuple(tagged), tuple(simple), Alignment(len(tagged), len(simple), frozenset(links)))


def generate_corpus(n: int = 500, seed: int = 0, **kw) -> list:
    rng = random.Random(seed)
    return [make_pair(rng, **kw) for _ in range(n)]


def split_corpus(pairs: list, n_valid: int = 100, n_test: int = 100) -> tuple:
    """``(train, valid, test)`` in corpus order."""
    if n_valid + n_test > len(pairs):
        raise ValueError("corpus too small for the requested splits")
    cut = len(pairs) - n_valid - n_test
    return pairs[:cut], pairs[cut:cut + n_valid], pairs[cut + n_valid:]


def lm_corpus(pairs: list) -> list:
    """Both sides of every pair, as language-model training sentences."""
    out = []
    for p in pairs:
        out.append(list(p.complex))
        out.append(list(p.simple))
    return out


def translation_rows(pairs: Optional[list] = None) -> list:
    """``src tgt prob`` rows for the substitution dictionary (plus self-links)."""
    rows = []
    for src, tgt in sorted(SUBSTITUTIONS.items()):
        rows.append(f"{src} {tgt} 0.7")
        rows.append(f"{src} {src} 0.3")
    return rows


def write_corpus(pairs: list, out_dir: str, prefix: str) -> dict:
    """Write ``.complex``, ``.simple`` and ``.align`` files; returns their paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for kind, get in (("complex", lambda p: " ".join(p.complex)), ("simple", lambda p: " ".join(p.simple)),
                      ("align", lambda p: p.alignment.to_text())):
        path = os.path.join(out_dir, f"{prefix}.{kind}")
        with open(path, "w", encoding="utf-8") as f:
            for p in pairs:
                f.write(get(p) + "\n")
        paths[kind] = path
    return paths


def dump_jsonl(pairs: list, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for p in pairs:
            f.write(json.dumps(p.to_dict()) + "\n")
