"""Append-only store of human annotation decisions.

Examples are recorded in three modes — MANUAL (free highlighting), CORRECT
(editing model proposals), TEACH (binary accept/reject of proposals) — and
accumulate across loop iterations.  Nothing is ever mutated or deleted;
merging produces new stores.  The on-disk format is JSONL with a canonical
field order so exports diff cleanly.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence

from .corpus import Token, tokenize
from .errors import StoreError

logger = logging.getLogger(__name__)

LABEL = "DATASET"

# Canonical JSONL field order; keep exports diff-able.
_FIELD_ORDER = (
    "example_id", "doc_id", "sent_index", "text", "spans",
    "decision", "method", "iteration", "annotator", "timestamp", "model_version",
)


class AnnotationMethod(enum.Enum):
    MANUAL = "MANUAL"
    CORRECT = "CORRECT"
    TEACH = "TEACH"


class Decision(enum.Enum):
    ACCEPT = "ACCEPT"
    REJECT = "REJECT"
    IGNORE = "IGNORE"


@dataclass(frozen=True, order=True)
class LabeledSpan:
    start: int
    end: int
    label: str = LABEL


@dataclass(frozen=True)
class AnnotationExample:
    """One human decision about one sentence.

    ``spans`` holds the asserted-gold spans for ACCEPT and the model-proposed
    spans that were refused for REJECT.
    """

    example_id: str
    doc_id: str
    sent_index: int
    text: str
    spans: tuple[LabeledSpan, ...]
    decision: Decision
    method: AnnotationMethod
    iteration: int
    annotator: str
    timestamp: str
    model_version: str | None = None

    def dedup_key(self) -> tuple[str, str, int, str]:
        return (self.example_id, self.method.value, self.iteration, self.decision.value)


def make_example_id(doc_id: str, sent_index: int, text: str) -> str:
    digest = hashlib.sha256(f"{doc_id}\x00{sent_index}\x00{text}".encode("utf-8"))
    return digest.hexdigest()[:16]


def new_example(
    doc_id: str,
    sent_index: int,
    text: str,
    spans: Iterable[LabeledSpan],
    decision: Decision,
    method: AnnotationMethod,
    iteration: int,
    annotator: str,
    timestamp: str,
    model_version: str | None = None,
) -> AnnotationExample:
    """Build an example with its content-hash id and validate it."""
    example = AnnotationExample(
        example_id=make_example_id(doc_id, sent_index, text),
        doc_id=doc_id,
        sent_index=sent_index,
        text=text,
        spans=tuple(sorted(spans)),
        decision=decision,
        method=method,
        iteration=iteration,
        annotator=annotator,
        timestamp=timestamp,
        model_version=model_version,
    )
    validate_example(example)
    return example


def validate_example(ex: AnnotationExample) -> None:
    """Raise StoreError with a field-level message on any invariant violation."""
    if ex.example_id != make_example_id(ex.doc_id, ex.sent_index, ex.text):
        raise StoreError(f"example_id {ex.example_id!r} does not match its content hash")
    if ex.iteration < 0:
        raise StoreError(f"{ex.example_id}: iteration must be non-negative")
    prev_end = -1
    for span in ex.spans:
        if span.label != LABEL:
            raise StoreError(f"{ex.example_id}: unsupported label {span.label!r}")
        if not (0 <= span.start < span.end <= len(ex.text)):
            raise StoreError(
                f"{ex.example_id}: span out of bounds "
                f"({span.start},{span.end}) for text of length {len(ex.text)}"
            )
        if span.start < prev_end:
            raise StoreError(f"{ex.example_id}: overlapping spans")
        prev_end = span.end
    if ex.method is AnnotationMethod.TEACH:
        if ex.decision is Decision.IGNORE:
            raise StoreError(f"{ex.example_id}: TEACH examples carry ACCEPT or REJECT only")
        if not ex.spans:
            raise StoreError(f"{ex.example_id}: TEACH examples need proposed spans")
    else:
        if ex.decision is Decision.REJECT:
            raise StoreError(
                f"{ex.example_id}: REJECT is only valid for TEACH "
                f"(got {ex.method.value})"
            )


@dataclass(frozen=True)
class Receipt:
    example_id: str
    stored: bool
    duplicate: bool


def example_to_record(ex: AnnotationExample) -> dict:
    record = {
        "example_id": ex.example_id,
        "doc_id": ex.doc_id,
        "sent_index": ex.sent_index,
        "text": ex.text,
        "spans": [
            {"start": s.start, "end": s.end, "label": s.label} for s in ex.spans
        ],
        "decision": ex.decision.value,
        "method": ex.method.value,
        "iteration": ex.iteration,
        "annotator": ex.annotator,
        "timestamp": ex.timestamp,
        "model_version": ex.model_version,
    }
    return {key: record[key] for key in _FIELD_ORDER}


def example_from_record(record: dict) -> AnnotationExample:
    try:
        example = AnnotationExample(
            example_id=record["example_id"],
            doc_id=record["doc_id"],
            sent_index=int(record["sent_index"]),
            text=record["text"],
            spans=tuple(
                sorted(
                    LabeledSpan(start=s["start"], end=s["end"], label=s.get("label", LABEL))
                    for s in record["spans"]
                )
            ),
            decision=Decision(record["decision"]),
            method=AnnotationMethod(record["method"]),
            iteration=int(record["iteration"]),
            annotator=record["annotator"],
            timestamp=record["timestamp"],
            model_version=record.get("model_version"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise StoreError(f"malformed example record: {exc}") from exc
    validate_example(example)
    return example


class AnnotationStore:
    """Append-only example store, optionally backed by a JSONL file.

    A store owns at most one writer; concurrent readers are safe because
    examples are immutable and the list only grows.
    """

    def __init__(self, path: str | Path | None = None) -> None:
        self.path = Path(path) if path is not None else None
        self._examples: list[AnnotationExample] = []
        self._keys: set[tuple[str, str, int, str]] = set()

    @classmethod
    def open(cls, path: str | Path) -> "AnnotationStore":
        """Load (or lazily create) a file-backed store, validating every line."""
        store = cls(path)
        if store.path is not None and store.path.exists():
            for ex in _read_jsonl(store.path):
                store._add(ex)
        return store

    def _add(self, ex: AnnotationExample) -> bool:
        key = ex.dedup_key()
        if key in self._keys:
            return False
        self._keys.add(key)
        self._examples.append(ex)
        return True

    def append_example(self, ex: AnnotationExample) -> Receipt:
        """Persist one example; duplicate submissions are idempotent."""
        validate_example(ex)
        if not self._add(ex):
            return Receipt(example_id=ex.example_id, stored=False, duplicate=True)
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as handle:
                handle.write(json.dumps(example_to_record(ex), ensure_ascii=False) + "\n")
        return Receipt(example_id=ex.example_id, stored=True, duplicate=False)

    @property
    def examples(self) -> tuple[AnnotationExample, ...]:
        return tuple(self._examples)

    def __len__(self) -> int:
        return len(self._examples)

    def __iter__(self) -> Iterator[AnnotationExample]:
        return iter(self._examples)


class ConflictPolicy(enum.Enum):
    LATEST_ITERATION_WINS = "LATEST_ITERATION_WINS"


@dataclass(frozen=True)
class MergeConflict:
    example_id: str
    kept_iteration: int
    discarded: int


@dataclass
class MergeResult:
    store: AnnotationStore
    conflicts: list[MergeConflict] = field(default_factory=list)


def merge_datasets(
    stores: Sequence[Iterable[AnnotationExample]],
    policy: ConflictPolicy = ConflictPolicy.LATEST_ITERATION_WINS,
) -> MergeResult:
    """Union stores keyed by example_id, resolving conflicts by the policy.

    Under LATEST_ITERATION_WINS the record with the highest (iteration,
    timestamp) survives; every collapsed disagreement is reported.
    """
    if policy is not ConflictPolicy.LATEST_ITERATION_WINS:
        raise StoreError(f"unknown conflict policy {policy!r}")
    groups: dict[str, list[AnnotationExample]] = {}
    for store in stores:
        for ex in store:
            groups.setdefault(ex.example_id, []).append(ex)

    merged = AnnotationStore()
    conflicts: list[MergeConflict] = []
    for example_id, group in groups.items():
        distinct = list(dict.fromkeys(group))
        winner = max(distinct, key=lambda ex: (ex.iteration, ex.timestamp))
        if len(distinct) > 1:
            conflicts.append(
                MergeConflict(
                    example_id=example_id,
                    kept_iteration=winner.iteration,
                    discarded=len(distinct) - 1,
                )
            )
        merged._add(winner)
    return MergeResult(store=merged, conflicts=conflicts)


@dataclass(frozen=True)
class TrainingExample:
    """Token sequence with BIO tags and a per-token observation mask.

    ``observed[i]`` is False for tokens whose true tag is unknown (the
    unconstrained remainder of a TEACH sentence); training updates must not
    touch those positions.
    """

    example_id: str
    text: str
    tokens: tuple[Token, ...]
    tags: tuple[str, ...]
    observed: tuple[bool, ...]
    snapped: bool = False


def _span_token_range(
    tokens: Sequence[Token], span: LabeledSpan, example_id: str
) -> tuple[int, int, bool]:
    """Token index range covering a span, snapped outward; (first, last, snapped)."""
    covered = [
        i for i, tok in enumerate(tokens) if tok.start < span.end and span.start < tok.end
    ]
    if not covered:
        raise StoreError(
            f"{example_id}: span ({span.start},{span.end}) covers no tokens"
        )
    first, last = covered[0], covered[-1]
    snapped = tokens[first].start != span.start or tokens[last].end != span.end
    if snapped:
        logger.warning(
            "%s: span (%d,%d) snapped outward to token bounds (%d,%d)",
            example_id, span.start, span.end, tokens[first].start, tokens[last].end,
        )
    return first, last, snapped


def _example_to_training(ex: AnnotationExample) -> TrainingExample:
    tokens = tuple(tokenize(ex.text))
    tags = ["O"] * len(tokens)
    snapped = False

    fully_observed = ex.method in (AnnotationMethod.MANUAL, AnnotationMethod.CORRECT)
    observed = [fully_observed] * len(tokens)

    claimed: set[int] = set()
    for span in ex.spans:
        first, last, did_snap = _span_token_range(tokens, span, ex.example_id)
        snapped = snapped or did_snap
        indices = range(first, last + 1)
        if claimed.intersection(indices):
            raise StoreError(f"{ex.example_id}: spans overlap after token snapping")
        claimed.update(indices)
        if ex.decision is Decision.ACCEPT:
            tags[first] = "B-DATASET"
            for i in range(first + 1, last + 1):
                tags[i] = "I-DATASET"
        # REJECT: the refused span is known to be wrong, so those tokens are
        # constrained to O; tags[] already holds O.
        for i in indices:
            observed[i] = True

    return TrainingExample(
        example_id=ex.example_id,
        text=ex.text,
        tokens=tokens,
        tags=tuple(tags),
        observed=tuple(observed),
        snapped=snapped,
    )


def to_training_set(
    store: Iterable[AnnotationExample], include_teach: bool = True
) -> list[TrainingExample]:
    """Convert stored decisions into (tokens, BIO tags, observation mask) triples.

    ACCEPT in MANUAL/CORRECT yields fully observed sequences.  TEACH ACCEPT
    observes only the accepted spans; TEACH REJECT constrains the refused
    spans to O and leaves everything else unobserved.  IGNORE examples are
    excluded.  Spans that cut through tokens are snapped outward and the snap
    is reported.
    """
    out: list[TrainingExample] = []
    for ex in store:
        if ex.decision is Decision.IGNORE:
            continue
        if ex.method is AnnotationMethod.TEACH and not include_teach:
            continue
        out.append(_example_to_training(ex))
    return out


def export_conll(store: Iterable[AnnotationExample], out: IO[str]) -> int:
    """Write fully observed examples as ``token<TAB>tag`` blocks.

    Partial (TEACH) and IGNORE examples are skipped; returns the skip count.
    """
    skipped = 0
    for ex in store:
        if ex.method is AnnotationMethod.TEACH or ex.decision is not Decision.ACCEPT:
            skipped += 1
            continue
        training = _example_to_training(ex)
        for token, tag in zip(training.tokens, training.tags):
            out.write(f"{token.text}\t{tag}\n")
        out.write("\n")
    return skipped


def read_conll(text: str) -> list[tuple[tuple[str, ...], tuple[str, ...]]]:
    """Parse CoNLL-style two-column text back into (tokens, tags) sequences."""
    sentences: list[tuple[tuple[str, ...], tuple[str, ...]]] = []
    tokens: list[str] = []
    tags: list[str] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            if tokens:
                sentences.append((tuple(tokens), tuple(tags)))
                tokens, tags = [], []
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise StoreError(f"CoNLL line {line_no}: expected token<TAB>tag, got {line!r}")
        tokens.append(parts[0])
        tags.append(parts[1])
    if tokens:
        sentences.append((tuple(tokens), tuple(tags)))
    return sentences


def export_jsonl(store: Iterable[AnnotationExample], out: IO[str]) -> int:
    count = 0
    for ex in store:
        out.write(json.dumps(example_to_record(ex), ensure_ascii=False) + "\n")
        count += 1
    return count


def _read_jsonl(path: Path) -> Iterator[AnnotationExample]:
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise StoreError(f"{path} line {line_no}: invalid JSON: {exc.msg}") from exc
            try:
                yield example_from_record(record)
            except StoreError as exc:
                raise StoreError(f"{path} line {line_no}: {exc}") from exc


def import_jsonl(path: str | Path) -> AnnotationStore:
    """Read and validate a store file; in-memory result, not bound to the file."""
    store = AnnotationStore()
    for ex in _read_jsonl(Path(path)):
        store._add(ex)
    return store
