"""``editdecode`` command line.

Exit codes: 0 success, 1 usage error, 2 data error, 3 scorer/protocol error.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import random
import sys
from dataclasses import dataclass, field, fields
from importlib import resources
from typing import Optional

import numpy as np

from .constraints import (
    AlignmentError,
    TranslationTableError,
    constraints_from_labels,
    extract_oracle,
    load_alignment,
    load_translation_table,
)
from .core import ConstraintError, EditWeights, detokenize, parse_constraints, serialize_constraints, tokenize
from .decoder import DecoderConfig, DecoderError, decode_corpus, write_trace
from .metrics import DEL_MODES, MetricError, evaluate
from .scorer import CopyBiasedScorer, NGramLM, ScorerError, load_scorer_file, train_ngram_lm

log = logging.getLogger("editdecode")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SCORER = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- configuration -----------------------------------------------------------


@dataclass
class RunConfig:
    source: Optional[str] = None
    references: list = field(default_factory=list)
    constraints: Optional[str] = None
    output: Optional[str] = None
    model: Optional[str] = None
    endpoint: Optional[str] = None
    copy_weight: float = 0.0
    beam_size: int = 20
    fanout: Optional[int] = None
    alpha: Optional[int] = None
    delta: float = 0.12
    max_len: int = 50
    length_norm_gamma: float = 1.0
    casefold: bool = False
    weights: Optional[dict] = None
    workers: int = 1
    seed: int = 0
    trace_out: Optional[str] = None
    del_mode: str = "f1"
    first_ref_only: bool = False
    n_trials: int = 100

    def decoder_config(self) -> DecoderConfig:
        return DecoderConfig(self.beam_size, self.fanout, self.alpha, self.delta, self.max_len,
                             self.length_norm_gamma, self.casefold)

    def edit_weights(self) -> Optional[EditWeights]:
        return None if self.weights is None else EditWeights.from_dict(self.weights)


_CONFIG_KEYS = {f.name for f in fields(RunConfig)}
_IGNORED_KEYS = {"corpus", "constraints_kind", "comment"}


def preset_names() -> list:
    return sorted(p.name[:-5] for p in resources.files("editdecode").joinpath("configs").iterdir()
                  if p.name.endswith(".json"))


def _load_config_doc(text: str, where: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"{where}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise DataError(f"{where}: config must be a JSON object")
    if doc.get("constraints") in ("oracle", "predicted"):
        doc = dict(doc)
        doc["constraints_kind"] = doc.pop("constraints")
    unknown = set(doc) - _CONFIG_KEYS - _IGNORED_KEYS
    if unknown:
        raise DataError(f"{where}: unknown config keys {sorted(unknown)}")
    return {k: v for k, v in doc.items() if k in _CONFIG_KEYS}


def build_config(args) -> RunConfig:
    """Defaults, then ``--preset``, then ``--config``, then explicit flags."""
    values: dict = {}
    if getattr(args, "preset", None):
        if args.preset not in preset_names():
            raise UsageError(f"unknown preset {args.preset!r}; choose from {', '.join(preset_names())}")
        text = resources.files("editdecode").joinpath("configs", f"{args.preset}.json").read_text()
        values.update(_load_config_doc(text, f"preset {args.preset}"))
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as f:
            values.update(_load_config_doc(f.read(), args.config))
    for key in _CONFIG_KEYS:
        v = getattr(args, key, None)
        if v is not None and v is not False and v != []:
            values[key] = v
    lam = {k: getattr(args, f"lambda_{k}", None) for k in ("insert", "delete", "subst")}
    if any(v is not None for v in lam.values()):
        weights = dict(values.get("weights") or EditWeights().to_dict())
        weights.update({k: v for k, v in lam.items() if v is not None})
        values["weights"] = weights
    try:
        cfg = RunConfig(**values)
        cfg.decoder_config()
        cfg.edit_weights()
    except (TypeError, DecoderError, ConstraintError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None
    if cfg.del_mode not in DEL_MODES:
        raise UsageError(f"--del-mode must be one of {DEL_MODES}")
    for name in ("source", "constraints", "model"):
        path = getattr(cfg, name)
        if path is not None and not os.path.exists(path):
            raise DataError(f"{name} file {path!r} does not exist")
    for path in cfg.references:
        if not os.path.exists(path):
            raise DataError(f"reference file {path!r} does not exist")
    return cfg


# -- file helpers ------------------------------------------------------------


def read_lines(path: str) -> list:
    with open(path, encoding="utf-8") as f:
        return [line.rstrip("\n") for line in f]


def read_sentences(path: str) -> list:
    return [tokenize(line) for line in read_lines(path)]


def check_aligned(named: dict) -> None:
    """All files must have the same number of lines; report where they diverge."""
    counts = {name: len(lines) for name, lines in named.items()}
    if len(set(counts.values())) > 1:
        short = min(counts.values())
        detail = ", ".join(f"{n}: {c} lines" for n, c in counts.items())
        raise DataError(f"files are not line-aligned at line {short + 1} ({detail})")


def read_constraint_file(path: str, weights: Optional[EditWeights]) -> list:
    out = []
    for lineno, line in enumerate(read_lines(path), 1):
        if not line.strip():
            out.append(parse_constraints({}, weights))
            continue
        try:
            out.append(parse_constraints(line, weights))
        except ConstraintError as exc:
            raise DataError(f"{path} line {lineno}: {exc}") from None
    return out


def _open_out(path: Optional[str]):
    """Writable text handle as a context manager; ``None`` or ``-`` is stdout (left open)."""
    if path is None or path == "-":
        return contextlib.nullcontext(sys.stdout)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    return open(path, "w", encoding="utf-8")


def make_scorer(cfg: RunConfig):
    if cfg.endpoint:
        from .protocol import ExternalScorer

        scorer = ExternalScorer(cfg.endpoint)
    elif cfg.model:
        try:
            scorer = load_scorer_file(cfg.model)
        except (KeyError, TypeError, ValueError) as exc:
            raise ScorerError(f"cannot load model {cfg.model}: {exc}") from None
    else:
        raise UsageError("give a scorer with --model or --endpoint")
    if cfg.copy_weight:
        scorer = CopyBiasedScorer(scorer, cfg.copy_weight)
    return scorer


def _seed(cfg: RunConfig) -> None:
    random.seed(cfg.seed)
    np.random.seed(cfg.seed % 2**32)


# -- subcommands -------------------------------------------------------------


def cmd_train_lm(args) -> int:
    corpus = []
    for path in args.corpus:
        corpus.extend(read_sentences(path))
    corpus = [s for s in corpus if s]
    if not corpus:
        raise DataError("training corpus is empty")
    lm = train_ngram_lm(corpus, order=args.order, k=args.k)
    lm.save(args.out)
    log.info("wrote %d-gram model with %d tokens to %s", lm.order, len(lm.vocab), args.out)
    return EXIT_OK


def cmd_extract(args) -> int:
    src = read_sentences(args.source)
    weights = None if args.weights is None else EditWeights.from_dict(json.loads(args.weights))
    rows = []
    if args.labels:
        labels = [line.split() for line in read_lines(args.labels)]
        check_aligned({"source": src, "labels": labels})
        table = None
        if args.table:
            try:
                table = load_translation_table(read_lines(args.table), args.min_prob)
            except TranslationTableError as exc:
                raise DataError(f"{args.table}: {exc}") from None
        for lineno, (s, lab) in enumerate(zip(src, labels), 1):
            try:
                rows.append(constraints_from_labels(s, lab, table, weights))
            except ValueError as exc:
                raise DataError(f"{args.labels} line {lineno}: {exc}") from None
    else:
        if not (args.reference and args.alignment):
            raise UsageError("oracle extraction needs --reference and --alignment (or use --labels)")
        ref = read_sentences(args.reference)
        align = read_lines(args.alignment)
        check_aligned({"source": src, "reference": ref, "alignment": align})
        for lineno, (s, r, a) in enumerate(zip(src, ref, align), 1):
            try:
                rows.append(extract_oracle(s, r, load_alignment(a, len(s), len(r)), weights))
            except (AlignmentError, ConstraintError) as exc:
                raise DataError(f"{args.alignment} line {lineno}: {exc}") from None
    with _open_out(args.out) as out:
        for cs in rows:
            out.write(serialize_constraints(cs, include_weights=weights is not None) + "\n")
    return EXIT_OK


def cmd_decode(args) -> int:
    cfg = build_config(args)
    if cfg.source is None:
        raise UsageError("decode needs --source")
    _seed(cfg)
    sources = read_sentences(cfg.source)
    sets = None
    if cfg.constraints:
        sets = read_constraint_file(cfg.constraints, cfg.edit_weights())
        check_aligned({"source": sources, "constraints": sets})
    scorer = make_scorer(cfg)
    results = decode_corpus(sources, scorer, sets, cfg.decoder_config(), workers=cfg.workers,
                            trace=cfg.trace_out is not None)
    with _open_out(cfg.output) as out:
        for r in results:
            out.write(detokenize(r.tokens) + "\n")
    if cfg.trace_out:
        with _open_out(cfg.trace_out) as fh:
            for k, r in enumerate(results):
                write_trace(r.trace or [], fh, sentence=k)
    n_trunc = sum(r.truncated for r in results)
    if n_trunc:
        log.warning("%d of %d outputs hit max_len without finishing", n_trunc, len(results))
    return EXIT_OK


def _references(paths: list, n: int) -> list:
    per_file = [read_sentences(p) for p in paths]
    check_aligned({"outputs": range(n), **{p: refs for p, refs in zip(paths, per_file)}})
    return [list(refs) for refs in zip(*per_file)]


def cmd_evaluate(args) -> int:
    cfg = build_config(args)
    if not cfg.references:
        raise UsageError("evaluate needs at least one --refs file")
    outputs = read_sentences(args.hypotheses)
    if cfg.source is None and not args.no_sari:
        raise UsageError("SARI needs --source (pass --no-sari to skip it)")
    refs = _references(cfg.references, len(outputs))
    sources = None
    if cfg.source is not None and not args.no_sari:
        sources = read_sentences(cfg.source)
        check_aligned({"outputs": outputs, "source": sources})
    sets = None
    if cfg.constraints:
        sets = read_constraint_file(cfg.constraints, None)
        check_aligned({"outputs": outputs, "constraints": sets})
    report = evaluate(outputs, refs, sources, sets, cfg.del_mode, cfg.first_ref_only)
    print(report.table())
    if args.json:
        with _open_out(args.json) as fh:
            fh.write(report.to_json() + "\n")
    if args.figures:
        from .plotting import plot_reports

        plot_reports({os.path.basename(args.hypotheses): report}, os.path.join(args.figures, "report.png"))
    return EXIT_OK


def cmd_tune(args) -> int:
    from .tuning import tune

    cfg = build_config(args)
    if not (cfg.source and cfg.references and cfg.constraints):
        raise UsageError("tune needs --source, --refs and --constraints")
    if cfg.n_trials < 1:
        raise UsageError("--trials must be at least 1")
    _seed(cfg)
    sources = read_sentences(cfg.source)
    refs = _references(cfg.references, len(sources))
    if cfg.first_ref_only:
        refs = [r[:1] for r in refs]
    sets = read_constraint_file(cfg.constraints, None)
    check_aligned({"source": sources, "constraints": sets})
    scorer = make_scorer(cfg)
    result = tune(sources, refs, sets, scorer, cfg.decoder_config(), cfg.n_trials, cfg.seed, cfg.del_mode,
                  cfg.workers)
    best = {"weights": result.weights.to_dict(), "delta": result.delta, "beam_size": cfg.beam_size}
    with _open_out(args.out) as fh:
        json.dump(best, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if args.log:
        with _open_out(args.log) as fh:
            result.write_log(fh)
    if args.figures:
        from .plotting import plot_tuning

        plot_tuning(result, os.path.join(args.figures, "tuning.png"))
    print(f"best validation SARI {result.score:.4f} with {json.dumps(best['weights'])} delta={result.delta:.4f}")
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synthetic import generate_corpus, split_corpus, translation_rows, write_corpus

    pairs = generate_corpus(args.n, args.seed)
    for name, part in zip(("train", "valid", "test"), split_corpus(pairs, args.n_valid, args.n_test)):
        write_corpus(part, args.out_dir, name)
    with open(os.path.join(args.out_dir, "lex.txt"), "w", encoding="utf-8") as f:
        f.write("\n".join(translation_rows()) + "\n")
    return EXIT_OK


def cmd_serve(args) -> int:
    from .protocol import ScorerServer, serve_stdio

    scorer = NGramLM.load(args.model)
    if args.copy_weight:
        scorer = CopyBiasedScorer(scorer, args.copy_weight)
    if args.stdio:
        serve_stdio(scorer)
        return EXIT_OK
    server = ScorerServer(scorer, args.host, args.port)
    print(server.endpoint, flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def _decoder_flags(p) -> None:
    g = p.add_argument_group("decoding")
    g.add_argument("--config", help="JSON config file; explicit flags override it")
    g.add_argument("--preset", help=f"bundled hyper-parameter preset ({', '.join(preset_names())})")
    g.add_argument("--model", help="n-gram model file from train-lm")
    g.add_argument("--endpoint", help="external scorer: host:port or exec:<command>")
    g.add_argument("--copy-weight", dest="copy_weight", type=float, help="mix in a copy-the-source distribution")
    g.add_argument("--beam-size", dest="beam_size", type=int)
    g.add_argument("--fanout", type=int, help="natural candidates per hypothesis (default: beam size)")
    g.add_argument("--alpha", type=int, help="likelihood cut before the delta gap (default: beam*fanout)")
    g.add_argument("--delta", type=float, help="allowed edit-score gap to the best candidate")
    g.add_argument("--max-len", dest="max_len", type=int)
    g.add_argument("--length-norm", dest="length_norm_gamma", type=float)
    g.add_argument("--casefold", action="store_true", default=None)
    g.add_argument("--lambda-insert", dest="lambda_insert", type=float)
    g.add_argument("--lambda-delete", dest="lambda_delete", type=float)
    g.add_argument("--lambda-subst", dest="lambda_subst", type=float)
    g.add_argument("--workers", type=int)
    g.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="editdecode", description="Edit-constrained decoding for text simplification.")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("train-lm", help="train an add-k n-gram language model")
    p.add_argument("--corpus", nargs="+", required=True)
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--k", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_lm)

    p = sub.add_parser("extract-constraints", help="oracle or label-based constraint extraction")
    p.add_argument("--source", required=True)
    p.add_argument("--reference")
    p.add_argument("--alignment")
    p.add_argument("--labels", help="per-token I/D/R/O labels instead of a reference")
    p.add_argument("--table", help="lexical translation table for R labels")
    p.add_argument("--min-prob", dest="min_prob", type=float, default=0.002)
    p.add_argument("--weights", help='JSON weights to embed, e.g. \'{"insert": 0.1}\'')
    p.add_argument("--out")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("decode", help="decode a source file")
    p.add_argument("--source")
    p.add_argument("--constraints", help="JSONL, one constraint object per source line")
    p.add_argument("--out", dest="output")
    p.add_argument("--trace-out", dest="trace_out")
    _decoder_flags(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("evaluate", help="SARI/BLEU/FKGL/length/satisfaction report")
    p.add_argument("--hypotheses", "--output", dest="hypotheses", required=True)
    p.add_argument("--refs", dest="references", nargs="+")
    p.add_argument("--source")
    p.add_argument("--constraints")
    p.add_argument("--del-mode", dest="del_mode", choices=DEL_MODES)
    p.add_argument("--first-ref-only", dest="first_ref_only", action="store_true", default=None)
    p.add_argument("--no-sari", dest="no_sari", action="store_true")
    p.add_argument("--json")
    p.add_argument("--figures", help="directory for report figures")
    p.add_argument("--config")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("tune", help="random search over edit weights and delta")
    p.add_argument("--source")
    p.add_argument("--refs", dest="references", nargs="+")
    p.add_argument("--constraints")
    p.add_argument("--trials", dest="n_trials", type=int)
    p.add_argument("--del-mode", dest="del_mode", choices=DEL_MODES)
    p.add_argument("--first-ref-only", dest="first_ref_only", action="store_true", default=None)
    p.add_argument("--out", required=True, help="best settings as a decode config")
    p.add_argument("--log", help="JSONL trial log")
    p.add_argument("--figures")
    _decoder_flags(p)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("make-synthetic", help="write the rule-generated complex/simple corpus")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--n-valid", dest="n_valid", type=int, default=100)
    p.add_argument("--n-test", dest="n_test", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("serve-scorer", help="serve an n-gram model over the scorer protocol")
    p.add_argument("--model", required=True)
    p.add_argument("--copy-weight", dest="copy_weight", type=float, default=0.0)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)
    p.add_argument("--stdio", action="store_true")
    p.set_defaults(func=cmd_serve)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(message)s")
        if not getattr(args, "func", None):
            raise UsageError("editdecode: choose a subcommand (see --help)")
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ScorerError as exc:
        print(f"scorer error: {exc}", file=sys.stderr)
        return EXIT_SCORER
    except (DataError, ConstraintError, AlignmentError, TranslationTableError, MetricError, DecoderError,
            OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
