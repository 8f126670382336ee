"""Command-line entry points for the batch workflow.

Every command is pipe-friendly: JSONL goes to stdout when ``--out`` is
omitted, diagnostics go to stderr.  Exit codes: 0 success, 1 usage error,
2 data error.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .annotation import (
    AnnotationMethod,
    AnnotationStore,
    Decision,
    export_conll,
    export_jsonl,
    import_jsonl,
    merge_datasets,
    to_training_set,
)
from .corpus import Document, ingest_plaintext, ingest_s2orc_jsonl, segment_sentences, write_manifest
from .errors import MentionKitError
from .loop import LoopConfig, derive_patterns
from .matcher import (
    CandidateLevel,
    candidate_to_record,
    compile_rules,
    extract_candidates,
    load_rules,
    save_rules,
)
from .ner import GoldSentence, evaluate, load_model, save_model, train

logger = logging.getLogger(__name__)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # exit code 1, not argparse's 2
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="mentionkit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"mentionkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="read a corpus and write a document manifest")
    p.add_argument("input", help="input file (plain text or S2ORC-style JSONL)")
    p.add_argument("--format", choices=("text", "s2orc"), default="text")
    p.add_argument("--doc-id", default=None, help="document id for plain-text input")
    p.add_argument("--out", default=None, help="manifest path (default: stdout)")

    p = sub.add_parser("extract", help="stream candidate sentences as JSONL")
    p.add_argument("input")
    p.add_argument("--format", choices=("text", "s2orc"), default="text")
    p.add_argument("--doc-id", default=None)
    p.add_argument("--min-level", choices=("HIGH", "MID", "LOW"), default="LOW")
    p.add_argument("--rules", default=None, help="JSONL file of learned rules to add")
    p.add_argument("--out", default=None)

    p = sub.add_parser("train", help="train a model on an annotation store")
    p.add_argument("--store", required=True)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rules", default=None)
    p.add_argument("--no-teach", action="store_true", help="exclude TEACH examples")
    p.add_argument("--out", required=True, help="snapshot output path")

    p = sub.add_parser("eval", help="exact-span evaluation against a gold store")
    p.add_argument("--model", required=True)
    p.add_argument("--gold", required=True, help="store JSONL of fully observed examples")
    p.add_argument("--rules", default=None)

    p = sub.add_parser("patterns", help="derive learned rules from accepted spans")
    p.add_argument("--store", required=True)
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--out", default=None)

    p = sub.add_parser("serve", help="run the annotation HTTP service")
    p.add_argument("--store", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--format", choices=("text", "s2orc"), default="text")
    p.add_argument("--doc-id", default=None)
    p.add_argument("--rules", default=None)
    p.add_argument("--model", default=None, help="promoted snapshot to start from")
    p.add_argument("--holdout", default=None, help="gold store used to gate promotion")
    p.add_argument("--min-level", choices=("HIGH", "MID", "LOW"), default="LOW")
    p.add_argument("--max-tasks", type=int, default=100)
    p.add_argument(
        "--methods",
        default="MANUAL,MANUAL,CORRECT,TEACH",
        help="comma-separated iteration method sequence",
    )
    p.add_argument("--port", type=int, default=8400)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=5)

    p = sub.add_parser("export", help="export a store as CoNLL or canonical JSONL")
    p.add_argument("--store", required=True)
    p.add_argument("--format", choices=("conll", "jsonl"), default="jsonl")
    p.add_argument("--out", default=None)

    p = sub.add_parser("report", help="render CSV and figures from loop/experiment logs")
    p.add_argument("--log", default=None, help="iteration log JSONL")
    p.add_argument("--experiment", default=None, help="sampling experiment rows JSONL")
    p.add_argument("--out-dir", required=True)

    return parser


@contextlib.contextmanager
def _out_stream(path: str | None):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8") as handle:
            yield handle


def _documents(path: str, fmt: str, doc_id: str | None):
    if fmt == "s2orc":
        yield from ingest_s2orc_jsonl(
            path,
            on_skip=lambda line, reason: print(f"skip line {line}: {reason}", file=sys.stderr),
        )
    else:
        yield ingest_plaintext(path, doc_id or Path(path).stem)


def _iter_documents(args):
    yield from _documents(args.input, args.format, args.doc_id)


def _load_ruleset(path: str | None):
    extra = load_rules(path) if path else []
    return compile_rules(extra)


def cmd_ingest(args) -> int:
    with _out_stream(args.out) as out:
        count = write_manifest(_iter_documents(args), out)
    print(f"ingested {count} document(s)", file=sys.stderr)
    return 0


def cmd_extract(args) -> int:
    rules = _load_ruleset(args.rules)
    min_level = CandidateLevel[args.min_level]
    count = 0
    with _out_stream(args.out) as out:
        for doc in _iter_documents(args):
            for candidate in extract_candidates(rules, segment_sentences(doc), min_level):
                out.write(json.dumps(candidate_to_record(candidate), ensure_ascii=False) + "\n")
                count += 1
    print(f"extracted {count} candidate(s)", file=sys.stderr)
    return 0


def cmd_train(args) -> int:
    store = import_jsonl(args.store)
    merged = merge_datasets([store]).store
    training_set = to_training_set(merged, include_teach=not args.no_teach)
    rules = _load_ruleset(args.rules)
    snapshot = train(training_set, rules, epochs=args.epochs, seed=args.seed)
    save_model(snapshot, args.out)
    print(
        json.dumps(
            {"version": snapshot.version, "trained_on": snapshot.trained_on, "path": args.out}
        )
    )
    return 0


def _gold_sentences(path: str) -> list[GoldSentence]:
    store = import_jsonl(path)
    gold = []
    for ex in store:
        if ex.method is AnnotationMethod.TEACH or ex.decision is not Decision.ACCEPT:
            continue
        gold.append(GoldSentence(text=ex.text, spans=ex.spans))
    return gold


def cmd_eval(args) -> int:
    model = load_model(args.model)
    gold = _gold_sentences(args.gold)
    rules = _load_ruleset(args.rules)
    report = evaluate(model, gold, rules)
    print(json.dumps(report.as_dict()))
    print(
        f"P={report.precision:.3f} R={report.recall:.3f} F1={report.f1:.3f}",
        file=sys.stderr,
    )
    return 0


def cmd_patterns(args) -> int:
    store = import_jsonl(args.store)
    learned = derive_patterns(store=store, min_count=args.min_count)
    with _out_stream(args.out) as out:
        save_rules(learned, out)
    print(f"derived {len(learned)} rule(s)", file=sys.stderr)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .ner import load_model as _load
    from .service import build_state, create_app

    sentences = []
    for doc in _documents(args.corpus, args.format, args.doc_id):
        sentences.extend(segment_sentences(doc))
    store = AnnotationStore.open(args.store)
    extra = tuple(load_rules(args.rules)) if args.rules else ()
    model = _load(args.model) if args.model else None
    holdout = _gold_sentences(args.holdout) if args.holdout else None
    try:
        methods = tuple(
            AnnotationMethod[name.strip().upper()] for name in args.methods.split(",") if name.strip()
        )
    except KeyError as exc:
        raise UsageError(f"unknown annotation method {exc}")
    if not methods:
        raise UsageError("--methods must name at least one method")
    config = LoopConfig(
        method_sequence=methods,
        min_level=CandidateLevel[args.min_level],
        max_tasks=args.max_tasks,
        epochs=args.epochs,
        seed=args.seed,
    )
    state = build_state(
        sentences, store, config, extra_rules=extra, holdout=holdout, model=model
    )
    app = create_app(state)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_export(args) -> int:
    store = import_jsonl(args.store)
    with _out_stream(args.out) as out:
        if args.format == "conll":
            skipped = export_conll(store, out)
            print(f"skipped {skipped} partial/ignored example(s)", file=sys.stderr)
        else:
            export_jsonl(store, out)
    return 0


def cmd_report(args) -> int:
    from .report import load_jsonl, render_experiment_report, render_iteration_report

    if not args.log and not args.experiment:
        raise UsageError("report needs --log and/or --experiment")
    written = []
    if args.log:
        written += render_iteration_report(load_jsonl(args.log), args.out_dir)
    if args.experiment:
        written += render_experiment_report(load_jsonl(args.experiment), args.out_dir)
    for path in written:
        print(str(path), file=sys.stderr)
    return 0


_COMMANDS = {
    "ingest": cmd_ingest,
    "extract": cmd_extract,
    "train": cmd_train,
    "eval": cmd_eval,
    "patterns": cmd_patterns,
    "serve": cmd_serve,
    "export": cmd_export,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except MentionKitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
