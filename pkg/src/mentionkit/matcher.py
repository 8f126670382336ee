"""Three-level rule matching for candidate sentences.

Sentences are flagged as HIGH / MID / LOW possibility candidates:

* HIGH — dataset keywords and their variations, matched case-insensitively
  inside word boundaries;
* MID — acronym-shaped tokens (``\\b[A-Z]{3,}s?\\b``), case-sensitive;
* LOW — runs of three or more title-case words, case-sensitive.

A matched sentence also gets suggested spans (pre-highlights for the
annotation UI): LOW matches, optionally merged with a parenthesized acronym
that immediately follows, plus standalone acronyms.  HIGH keywords flag the
sentence but are never suggested as the dataset name itself.
"""

from __future__ import annotations

import enum
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .corpus import Sentence
from .errors import RuleError


class CandidateLevel(enum.IntEnum):
    LOW = 1
    MID = 2
    HIGH = 3


class RuleOrigin(enum.Enum):
    BUILTIN = "BUILTIN"
    LEARNED = "LEARNED"


@dataclass(frozen=True)
class PatternRule:
    rule_id: str
    level: CandidateLevel
    regex_source: str
    case_insensitive: bool
    origin: RuleOrigin


@dataclass(frozen=True)
class MatchSpan:
    """A matched region of one sentence; offsets index into the sentence text."""

    start: int
    end: int
    text: str
    rule_id: str
    level: CandidateLevel


@dataclass(frozen=True)
class CandidateSentence:
    sentence: Sentence
    level: CandidateLevel
    matches: tuple[MatchSpan, ...]
    suggested_spans: tuple[MatchSpan, ...]


# The twelve HIGH keyword patterns, verbatim.  Each is wrapped as
# \b(?:...)\b at compile time; without boundaries "data" would match inside
# unrelated words, and with them "data" does not match inside "datasets",
# which keeps the separate dataset/database rule meaningful.
HIGH_KEYWORD_SOURCES: tuple[tuple[str, str], ...] = (
    ("train_test_set", r"(?:train|test|validation|testing|trainings?)\s*(?:set)"),
    ("data", r"data"),
    ("dataset_database", r"data\s*(?:set|base)s?"),
    ("corpus", r"corp(us|ora)"),
    ("treebank", r"tree\s*bank"),
    ("collection", r"collections?"),
    ("benchmark", r"benchmarks?"),
    ("survey", r"surveys?"),
    ("sample", r"samples?"),
    ("study", r"stud(y|ies)"),
    ("report", r"reports?"),
    ("census", r"census(es)?"),
)

MID_ACRONYM_SOURCE = r"\b[A-Z]{3,}s?\b"
LOW_TITLE_SEQ_SOURCE = r"([A-Z][a-z]+\s){2,}[A-Z][a-z]+"


def builtin_rules() -> list[PatternRule]:
    """The 14 built-in rules: 12 HIGH keywords, 1 MID acronym, 1 LOW title run."""
    rules = [
        PatternRule(
            rule_id=f"high_{name}",
            level=CandidateLevel.HIGH,
            regex_source=rf"\b(?:{source})\b",
            case_insensitive=True,
            origin=RuleOrigin.BUILTIN,
        )
        for name, source in HIGH_KEYWORD_SOURCES
    ]
    rules.append(
        PatternRule(
            rule_id="mid_acronym",
            level=CandidateLevel.MID,
            regex_source=MID_ACRONYM_SOURCE,
            case_insensitive=False,
            origin=RuleOrigin.BUILTIN,
        )
    )
    rules.append(
        PatternRule(
            rule_id="low_title_seq",
            level=CandidateLevel.LOW,
            regex_source=LOW_TITLE_SEQ_SOURCE,
            case_insensitive=False,
            origin=RuleOrigin.BUILTIN,
        )
    )
    return rules


@dataclass(frozen=True)
class CompiledRule:
    rule: PatternRule
    pattern: re.Pattern[str]


@dataclass(frozen=True)
class RuleSet:
    """Immutable compiled rule collection, shareable across threads."""

    rules: tuple[CompiledRule, ...]

    def __len__(self) -> int:
        return len(self.rules)

    @property
    def pattern_rules(self) -> list[PatternRule]:
        return [c.rule for c in self.rules]

    def fingerprint(self) -> str:
        payload = json.dumps(
            [
                (c.rule.rule_id, c.rule.regex_source, c.rule.case_insensitive)
                for c in self.rules
            ],
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


def compile_rules(extra: Iterable[PatternRule] = ()) -> RuleSet:
    """Compile the built-in rules plus any learned extras into a RuleSet."""
    compiled: list[CompiledRule] = []
    for rule in [*builtin_rules(), *extra]:
        flags = re.IGNORECASE if rule.case_insensitive else 0
        try:
            pattern = re.compile(rule.regex_source, flags)
        except re.error as exc:
            raise RuleError(
                f"rule {rule.rule_id!r} does not compile at position {exc.pos}: {exc.msg}"
            ) from exc
        compiled.append(CompiledRule(rule=rule, pattern=pattern))
    return RuleSet(rules=tuple(compiled))


def scan_text(rules: RuleSet, text: str) -> list[MatchSpan]:
    """All matches from all rules over raw text, leftmost non-overlapping per rule."""
    matches: list[MatchSpan] = []
    for compiled in rules.rules:
        for m in compiled.pattern.finditer(text):
            if m.start() == m.end():
                continue
            matches.append(
                MatchSpan(
                    start=m.start(),
                    end=m.end(),
                    text=m.group(),
                    rule_id=compiled.rule.rule_id,
                    level=compiled.rule.level,
                )
            )
    matches.sort(key=lambda s: (s.start, s.end, s.rule_id))
    return matches


def scan_sentence(rules: RuleSet, sentence: Sentence) -> CandidateSentence | None:
    """Scan one sentence; return a candidate when any rule matches, else None."""
    matches = scan_text(rules, sentence.text)
    if not matches:
        return None
    level = max(m.level for m in matches)
    suggested = _suggest(sentence.text, matches)
    return CandidateSentence(
        sentence=sentence,
        level=level,
        matches=tuple(matches),
        suggested_spans=tuple(suggested),
    )


def suggest_spans(candidate: CandidateSentence) -> list[MatchSpan]:
    """Pre-highlight suggestions for a candidate (see module docstring)."""
    return _suggest(candidate.sentence.text, list(candidate.matches))


def _skip_ws(text: str, i: int) -> int:
    while i < len(text) and text[i].isspace():
        i += 1
    return i


def _suggest(text: str, matches: list[MatchSpan]) -> list[MatchSpan]:
    lows = [m for m in matches if m.level == CandidateLevel.LOW]
    mids = [m for m in matches if m.level == CandidateLevel.MID]

    emitted: list[MatchSpan] = []
    for low in lows:
        merged = _merge_with_acronym(text, low, mids)
        emitted.append(merged if merged is not None else low)

    for mid in mids:
        if any(_overlaps_or_adjacent(text, mid, span) for span in emitted):
            continue
        emitted.append(mid)

    emitted.sort(key=lambda s: (s.start, s.end))
    for prev, cur in zip(emitted, emitted[1:]):
        if cur.start < prev.end:
            raise AssertionError(f"overlapping suggestions {prev} / {cur}")
    return emitted


def _merge_with_acronym(
    text: str, low: MatchSpan, mids: list[MatchSpan]
) -> MatchSpan | None:
    """Merge a LOW match with a parenthesized acronym that directly follows it."""
    i = _skip_ws(text, low.end)
    if i >= len(text) or text[i] != "(":
        return None
    i = _skip_ws(text, i + 1)
    mid = next((m for m in mids if m.start == i), None)
    if mid is None:
        return None
    j = _skip_ws(text, mid.end)
    if j >= len(text) or text[j] != ")":
        return None
    end = j + 1
    return MatchSpan(
        start=low.start,
        end=end,
        text=text[low.start:end],
        rule_id=f"{low.rule_id}+{mid.rule_id}",
        level=CandidateLevel.MID,
    )


def _overlaps_or_adjacent(text: str, mid: MatchSpan, span: MatchSpan) -> bool:
    if mid.start < span.end and span.start < mid.end:
        return True
    # Adjacent: separated only by whitespace and/or parentheses.
    if mid.start >= span.end:
        gap = text[span.end:mid.start]
    else:
        gap = text[mid.end:span.start]
    return all(ch.isspace() or ch in "()" for ch in gap)


def extract_candidates(
    rules: RuleSet,
    sentences: Iterable[Sentence],
    min_level: CandidateLevel = CandidateLevel.LOW,
) -> Iterator[CandidateSentence]:
    """Filter a sentence stream down to candidates at or above ``min_level``."""
    for sentence in sentences:
        candidate = scan_sentence(rules, sentence)
        if candidate is not None and candidate.level >= min_level:
            yield candidate


def candidate_to_record(candidate: CandidateSentence) -> dict:
    """Wire form of one candidate for the candidates JSONL output."""
    return {
        "doc_id": candidate.sentence.doc_id,
        "sent_index": candidate.sentence.sent_index,
        "text": candidate.sentence.text,
        "level": candidate.level.name,
        "matches": [
            {"start": m.start, "end": m.end, "rule": m.rule_id, "level": m.level.name}
            for m in candidate.matches
        ],
        "suggested": [{"start": s.start, "end": s.end} for s in candidate.suggested_spans],
    }


def candidate_from_record(record: dict) -> CandidateSentence:
    sentence = Sentence(
        doc_id=record["doc_id"],
        sent_index=record["sent_index"],
        text=record["text"],
        start=0,
        end=len(record["text"]),
    )
    matches = tuple(
        MatchSpan(
            start=m["start"],
            end=m["end"],
            text=record["text"][m["start"]:m["end"]],
            rule_id=m["rule"],
            level=CandidateLevel[m["level"]],
        )
        for m in record["matches"]
    )
    suggested = tuple(
        MatchSpan(
            start=s["start"],
            end=s["end"],
            text=record["text"][s["start"]:s["end"]],
            rule_id="suggested",
            level=CandidateLevel.LOW,
        )
        for s in record["suggested"]
    )
    level = CandidateLevel[record["level"]]
    return CandidateSentence(
        sentence=sentence, level=level, matches=matches, suggested_spans=suggested
    )


def save_rules(rules: Iterable[PatternRule], out) -> None:
    for rule in rules:
        record = {
            "rule_id": rule.rule_id,
            "level": rule.level.name,
            "regex": rule.regex_source,
            "case_insensitive": rule.case_insensitive,
            "origin": rule.origin.value,
        }
        out.write(json.dumps(record, ensure_ascii=False) + "\n")


def load_rules(path: str | Path) -> list[PatternRule]:
    rules: list[PatternRule] = []
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                rules.append(
                    PatternRule(
                        rule_id=record["rule_id"],
                        level=CandidateLevel[record["level"]],
                        regex_source=record["regex"],
                        case_insensitive=bool(record["case_insensitive"]),
                        origin=RuleOrigin(record["origin"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise RuleError(f"{path} line {line_no}: invalid rule record: {exc}") from exc
    return rules
