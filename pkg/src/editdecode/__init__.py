"""Edit-operation constrained beam search for sentence simplification."""

from .core import (
    Constraint,
    ConstraintError,
    ConstraintSet,
    EditWeights,
    Hypothesis,
    Kind,
    MatchState,
    SatisfactionState,
    Status,
    advance_match,
    detokenize,
    parse_constraints,
    serialize_constraints,
    tokenize,
)
from .constraints import Alignment, extract_oracle, load_alignment, load_translation_table
from .decoder import DecodeResult, DecoderConfig, decode, decode_corpus, plain_beam_search
from .metrics import EvaluationReport, bleu, corpus_sari, evaluate, fkgl, sari, satisfaction_rate
from .scorer import (
    CopyBiasedScorer,
    NGramLM,
    ScriptedScorer,
    UniformScorer,
    Vocabulary,
    train_ngram_lm,
)
from .tuning import TuneResult, random_search, tune

__version__ = "0.1.0"
