"""Corpus ingestion: documents, sentence segmentation, and tokenization.

Every downstream span (matcher suggestions, annotations, model predictions)
refers back to the character offsets produced here, so segmentation and
tokenization are deterministic, rule-based, and offset-preserving.  Offsets
count Unicode scalar values, never bytes.
"""

from __future__ import annotations

import enum
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator

from .errors import CorpusError

logger = logging.getLogger(__name__)


class Source(enum.Enum):
    PLAIN_TEXT = "PLAIN_TEXT"
    S2ORC_JSONL = "S2ORC_JSONL"


@dataclass(frozen=True)
class Document:
    """A single ingested publication with its full body text."""

    doc_id: str
    body: str
    source: Source
    title: str | None = None
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise CorpusError("doc_id must be non-empty")


@dataclass(frozen=True)
class Sentence:
    """One sentence of a document; ``body[start:end] == text``."""

    doc_id: str
    sent_index: int
    text: str
    start: int
    end: int


@dataclass(frozen=True)
class Token:
    """One token of a sentence; offsets index into the sentence text."""

    text: str
    start: int
    end: int
    shape: str


def ingest_plaintext(path: str | Path, doc_id: str) -> Document:
    """Read a UTF-8 text file as one document, normalizing line endings to ``\\n``."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CorpusError(f"cannot read {path}: {exc}") from exc
    try:
        text = raw.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise CorpusError(
            f"{path} is not valid UTF-8 at byte offset {exc.start}: {exc.reason}"
        ) from exc
    body = text.replace("\r\n", "\n").replace("\r", "\n")
    return Document(doc_id=doc_id, body=body, source=Source.PLAIN_TEXT)


def ingest_s2orc_jsonl(
    path: str | Path,
    on_skip: Callable[[int, str], None] | None = None,
) -> Iterator[Document]:
    """Stream documents from an S2ORC-style JSONL file.

    Each line must carry ``paper_id`` (string) and ``body_text`` (a list of
    objects each with a ``text`` string); the body is the ``text`` fields
    joined with blank lines.  Malformed lines and duplicate ids are skipped
    and reported through ``on_skip(line_no, reason)`` (default: a warning log)
    so the stream keeps going.
    """

    def skip(line_no: int, reason: str) -> None:
        if on_skip is not None:
            on_skip(line_no, reason)
        else:
            logger.warning("%s line %d skipped: %s", path, line_no, reason)

    seen: set[str] = set()
    try:
        handle = open(path, encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read {path}: {exc}") from exc
    with handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                skip(line_no, f"invalid JSON: {exc.msg}")
                continue
            if not isinstance(record, dict):
                skip(line_no, "record is not an object")
                continue
            paper_id = record.get("paper_id")
            if not isinstance(paper_id, str) or not paper_id:
                skip(line_no, "missing or non-string paper_id")
                continue
            if paper_id in seen:
                skip(line_no, f"duplicate paper_id {paper_id!r}")
                continue
            body_text = record.get("body_text")
            if not isinstance(body_text, list):
                skip(line_no, "missing or non-list body_text")
                continue
            parts: list[str] = []
            bad = False
            for entry in body_text:
                if not isinstance(entry, dict) or not isinstance(entry.get("text"), str):
                    skip(line_no, "body_text entry without a text string")
                    bad = True
                    break
                parts.append(entry["text"])
            if bad:
                continue
            seen.add(paper_id)
            title = record.get("title") if isinstance(record.get("title"), str) else None
            meta = {
                key: str(value)
                for key, value in record.items()
                if key not in ("paper_id", "body_text", "title")
                and isinstance(value, (str, int, float))
            }
            yield Document(
                doc_id=paper_id,
                body="\n\n".join(parts),
                source=Source.S2ORC_JSONL,
                title=title,
                meta=meta,
            )


# Periods after these strings never end a sentence.  The list is closed on
# purpose: a fixed rule set keeps segmentation identical across runs.
_ABBREVIATIONS = (
    "Dr", "Mr", "Mrs", "Ms", "Prof", "Fig", "Eq", "et al",
    "e.g", "i.e", "vs", "U.S", "Inc",
)

_PARAGRAPH_BREAK = re.compile(r"\n{2,}")


def _is_abbreviation_end(body: str, dot: int) -> bool:
    """True when the period at ``dot`` terminates a known abbreviation or initial."""
    for abbr in _ABBREVIATIONS:
        start = dot - len(abbr)
        if start < 0 or body[start:dot] != abbr:
            continue
        if start == 0 or not (body[start - 1].isalnum() or body[start - 1] == "_"):
            return True
    # A single uppercase initial such as "J." in "J. Smith".
    if dot >= 1 and body[dot - 1].isupper():
        if dot == 1 or not body[dot - 2].isalpha():
            return True
    return False


def segment_sentences(doc: Document) -> list[Sentence]:
    """Split a document body into sentences with stable character offsets.

    A sentence ends after ``.``, ``?``, or ``!`` followed by whitespace and an
    uppercase letter, except when the period terminates a listed abbreviation
    or a single uppercase initial.  Paragraph breaks always split.  Leading and
    trailing whitespace is trimmed, with offsets adjusted, so every
    non-whitespace character lands in exactly one sentence.
    """
    body = doc.body
    n = len(body)
    breaks: set[int] = set()

    for i, ch in enumerate(body):
        if ch not in ".?!":
            continue
        j = i + 1
        while j < n and body[j].isspace():
            j += 1
        if j == i + 1 or j >= n or not body[j].isupper():
            continue
        if ch == "." and _is_abbreviation_end(body, i):
            continue
        breaks.add(i + 1)

    for match in _PARAGRAPH_BREAK.finditer(body):
        breaks.add(match.start())
        breaks.add(match.end())

    sentences: list[Sentence] = []
    prev = 0
    for cut in sorted(breaks | {n}):
        start, end = prev, cut
        prev = cut
        while start < end and body[start].isspace():
            start += 1
        while end > start and body[end - 1].isspace():
            end -= 1
        if start == end:
            continue
        sentences.append(
            Sentence(
                doc_id=doc.doc_id,
                sent_index=len(sentences),
                text=body[start:end],
                start=start,
                end=end,
            )
        )
    return sentences


# Maximal alphanumeric runs are tokens; every other non-space character is a
# token of its own.
_TOKEN_RE = re.compile(r"[^\W_]+|[^\w\s]|_")


def token_shape(text: str) -> str:
    """Shape string: uppercase→X, lowercase→x, digit→d, other kept verbatim.

    Runs of one class longer than four characters are collapsed to three,
    e.g. "ANES"→"XXXX" but "Election"→"Xxxx".
    """
    out: list[str] = []
    run_char = ""
    run_len = 0

    def flush() -> None:
        if run_len:
            out.append(run_char * (run_len if run_len <= 4 else 3))

    for ch in text:
        if ch.isupper():
            cls = "X"
        elif ch.islower():
            cls = "x"
        elif ch.isdigit():
            cls = "d"
        else:
            cls = ch
        if cls == run_char:
            run_len += 1
        else:
            flush()
            run_char, run_len = cls, 1
    flush()
    return "".join(out)


def tokenize(text: str) -> list[Token]:
    """Tokenize sentence text into offset-stable tokens."""
    return [
        Token(text=m.group(), start=m.start(), end=m.end(), shape=token_shape(m.group()))
        for m in _TOKEN_RE.finditer(text)
    ]


def tokenize_sentence(sentence: Sentence) -> list[Token]:
    return tokenize(sentence.text)


def iter_sentences(docs: Iterable[Document]) -> Iterator[Sentence]:
    """Segment a document stream into one flat, ordered sentence stream."""
    for doc in docs:
        yield from segment_sentences(doc)


def write_manifest(docs: Iterable[Document], out) -> int:
    """Write one ``{"doc_id", "source", "n_sentences"}`` line per document.

    Returns the number of documents written.
    """
    count = 0
    for doc in docs:
        record = {
            "doc_id": doc.doc_id,
            "source": doc.source.value,
            "n_sentences": len(segment_sentences(doc)),
        }
        out.write(json.dumps(record, ensure_ascii=False) + "\n")
        count += 1
    return count
