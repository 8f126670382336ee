"""Trainable span labeler: averaged structured perceptron over BIO tags.

No numerical dependencies: weights live in a plain dict keyed by
(feature, tag), decoding is Viterbi constrained to valid BIO transitions,
and training is deterministic for a fixed (data, epochs, seed).  Span
confidences come from the margin between the best path and the best path
with the span forced to O, squashed through a logistic.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .annotation import LabeledSpan, TrainingExample
from .corpus import Token, tokenize
from .errors import ModelError
from .matcher import RuleSet, scan_text

TAGS: tuple[str, ...] = ("O", "B-DATASET", "I-DATASET")
_START = "<s>"
_B, _I, _O = "B-DATASET", "I-DATASET", "O"

DEFAULT_TEMPERATURE = 1.0

FEATURE_TEMPLATES: tuple[str, ...] = (
    "word", "shape", "prefix3", "suffix3",
    "is_title", "is_upper", "is_acronym",
    "word[-2]", "word[-1]", "word[+1]", "word[+2]",
    "shape[-2]", "shape[-1]", "shape[+1]", "shape[+2]",
    "in_high", "in_mid", "in_low", "in_suggested",
    "prev_tag",
)

Weights = dict[tuple[str, str], float]


@dataclass(frozen=True)
class ModelSnapshot:
    """Immutable trained model; decoding with a snapshot is deterministic."""

    version: str
    feature_templates: tuple[str, ...]
    weights: Weights
    averaged: bool
    tagset: tuple[str, ...]
    trained_on: int
    created: str


@dataclass(frozen=True)
class SpanPrediction:
    span: LabeledSpan
    confidence: float
    # Raw decode margin behind the confidence; confidence saturates to 1.0 in
    # floats for large margins, so rank by margin when resolution matters.
    margin: float = 0.0


@dataclass(frozen=True)
class EvalReport:
    true_positives: int
    false_positives: int
    false_negatives: int
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "EvalReport":
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        return cls(tp, fp, fn, precision, recall, f1)

    def as_dict(self) -> dict:
        return {
            "true_positives": self.true_positives,
            "false_positives": self.false_positives,
            "false_negatives": self.false_negatives,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


def _match_flags(text: str, tokens: Sequence[Token], rules: RuleSet | None) -> list[list[str]]:
    """Per-token matcher flags: inside a HIGH/MID/LOW match or a suggested span."""
    flags: list[list[str]] = [[] for _ in tokens]
    if rules is None or not text:
        return flags
    from .matcher import _suggest  # avoid a cycle at import time

    matches = scan_text(rules, text)
    regions = [(m.start, m.end, f"m{m.level.name[0]}") for m in matches]
    if matches:
        regions += [(s.start, s.end, "mS") for s in _suggest(text, matches)]
    for start, end, flag in regions:
        for i, tok in enumerate(tokens):
            if tok.start < end and start < tok.end and flag not in flags[i]:
                flags[i].append(flag)
    for per_token in flags:
        per_token.sort()
    return flags


def _token_features(tokens: Sequence[Token], index: int, flags: Sequence[str]) -> list[str]:
    tok = tokens[index]
    lower = tok.text.lower()
    feats = [
        f"w={lower}",
        f"sh={tok.shape}",
        f"p3={lower[:3]}",
        f"s3={lower[-3:]}",
    ]
    if tok.text.istitle():
        feats.append("it")
    if tok.text.isupper() and len(tok.text) > 1:
        feats.append("iu")
    if _is_acronym(tok.text):
        feats.append("ia")
    for offset in (-2, -1, 1, 2):
        j = index + offset
        if 0 <= j < len(tokens):
            feats.append(f"w{offset:+d}={tokens[j].text.lower()}")
            feats.append(f"sh{offset:+d}={tokens[j].shape}")
        else:
            sentinel = _START if j < 0 else "</s>"
            feats.append(f"w{offset:+d}={sentinel}")
            feats.append(f"sh{offset:+d}={sentinel}")
    feats.extend(flags)
    return feats


def _is_acronym(text: str) -> bool:
    if len(text) < 3:
        return False
    core = text[:-1] if text.endswith("s") else text
    return len(core) >= 3 and core.isalpha() and core.isupper()


def featurize(
    tokens: Sequence[Token], index: int, rules: RuleSet | None = None, text: str = ""
) -> list[str]:
    """Static features of one token (the previous-tag feature is added while decoding)."""
    if not 0 <= index < len(tokens):
        raise ModelError(f"token index {index} out of bounds for {len(tokens)} tokens")
    flags = _match_flags(text, tokens, rules)
    return _token_features(tokens, index, flags[index])


def featurize_sentence(
    text: str, tokens: Sequence[Token], rules: RuleSet | None
) -> list[list[str]]:
    """Feature lists for every token, scanning the matcher rules once."""
    flags = _match_flags(text, tokens, rules)
    return [_token_features(tokens, i, flags[i]) for i in range(len(tokens))]


def _valid_transition(prev: str, tag: str) -> bool:
    if tag == _I:
        return prev in (_B, _I)
    return True


def _emission_scores(feats: Sequence[Sequence[str]], weights: Weights) -> list[list[float]]:
    scores = []
    get = weights.get
    for token_feats in feats:
        scores.append(
            [sum(get((f, tag), 0.0) for f in token_feats) for tag in TAGS]
        )
    return scores


def viterbi(
    feats: Sequence[Sequence[str]],
    weights: Weights,
    allowed: Sequence[Sequence[str] | None] | None = None,
) -> tuple[float, list[str]]:
    """Best-scoring valid BIO tag sequence; ``allowed`` restricts tags per position."""
    n = len(feats)
    if n == 0:
        return 0.0, []
    emissions = _emission_scores(feats, weights)
    get = weights.get

    def permitted(i: int, t: int) -> bool:
        return allowed is None or allowed[i] is None or TAGS[t] in allowed[i]

    NEG = float("-inf")
    score = [
        emissions[0][t] + get((f"t-1={_START}", TAGS[t]), 0.0)
        if permitted(0, t) and _valid_transition(_START, TAGS[t])
        else NEG
        for t in range(len(TAGS))
    ]
    back: list[list[int]] = []
    for i in range(1, n):
        nxt = [NEG] * len(TAGS)
        ptr = [0] * len(TAGS)
        for t in range(len(TAGS)):
            if not permitted(i, t):
                continue
            tag = TAGS[t]
            best, best_p = NEG, 0
            for p in range(len(TAGS)):
                if score[p] == NEG or not _valid_transition(TAGS[p], tag):
                    continue
                cand = score[p] + get((f"t-1={TAGS[p]}", tag), 0.0)
                if cand > best:
                    best, best_p = cand, p
            if best > NEG:
                nxt[t] = best + emissions[i][t]
                ptr[t] = best_p
        score = nxt
        back.append(ptr)

    best_t = max(range(len(TAGS)), key=lambda t: score[t])
    if score[best_t] == NEG:
        raise ModelError("no valid tag sequence under the given constraints")
    tags = [best_t]
    for ptr in reversed(back):
        tags.append(ptr[tags[-1]])
    tags.reverse()
    return score[best_t], [TAGS[t] for t in tags]


class _AveragedWeights:
    """Perceptron weights with lazily computed running averages."""

    def __init__(self) -> None:
        self.weights: Weights = {}
        self._totals: Weights = {}
        self._stamps: dict[tuple[str, str], int] = {}
        self.step = 0

    def update(self, feature: str, tag: str, delta: float) -> None:
        key = (feature, tag)
        current = self.weights.get(key, 0.0)
        self._totals[key] = self._totals.get(key, 0.0) + (self.step - self._stamps.get(key, 0)) * current
        self._stamps[key] = self.step
        self.weights[key] = current + delta

    def averaged(self) -> Weights:
        if self.step == 0:
            return dict(self.weights)
        out: Weights = {}
        for key, weight in self.weights.items():
            total = self._totals.get(key, 0.0) + (self.step - self._stamps.get(key, 0)) * weight
            avg = total / self.step
            if avg:
                out[key] = avg
        return out


def _snapshot_version(weights: Weights, trained_on: int) -> str:
    payload = json.dumps(
        {
            "templates": FEATURE_TEMPLATES,
            "tagset": TAGS,
            "trained_on": trained_on,
            "weights": {f"{f}\t{t}": w for (f, t), w in sorted(weights.items())},
        },
        sort_keys=True,
    )
    return "asp-" + hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


def train(
    training_set: Sequence[TrainingExample],
    rules: RuleSet | None = None,
    *,
    epochs: int = 5,
    seed: int = 0,
    averaged: bool = True,
    created: str = "1970-01-01T00:00:00Z",
    on_update: Callable[[int], None] | None = None,
) -> ModelSnapshot:
    """Train an averaged structured perceptron on (possibly partial) BIO data.

    Per epoch the examples are shuffled with ``seed``, each sentence is
    Viterbi-decoded, and mismatches trigger additive updates restricted to
    observed positions of the constraint mask (transition updates need both
    endpoints observed).  The returned snapshot holds the running average of
    all weights (or the raw final weights with ``averaged=False``, kept for
    comparison).  ``created`` defaults to the epoch so identical inputs give
    byte-identical snapshots; pass a real timestamp for provenance.
    """
    if epochs < 1:
        raise ModelError(f"epochs must be >= 1, got {epochs}")
    examples = list(training_set)
    if not examples:
        raise ModelError("training set is empty")
    if not any(any(ex.observed) for ex in examples):
        raise ModelError("training set has no observed positions; nothing to learn")

    featurized = [
        featurize_sentence(ex.text, ex.tokens, rules) for ex in examples
    ]

    acc = _AveragedWeights()
    rng = random.Random(seed)
    order = list(range(len(examples)))
    for _ in range(epochs):
        rng.shuffle(order)
        for idx in order:
            acc.step += 1
            ex = examples[idx]
            feats = featurized[idx]
            if not ex.tokens:
                continue
            _, predicted = viterbi(feats, acc.weights)
            _apply_updates(acc, feats, ex, predicted, on_update)

    weights = acc.averaged() if averaged else {k: w for k, w in acc.weights.items() if w}
    return ModelSnapshot(
        version=_snapshot_version(weights, len(examples)),
        feature_templates=FEATURE_TEMPLATES,
        weights=weights,
        averaged=averaged,
        tagset=TAGS,
        trained_on=len(examples),
        created=created,
    )


def _apply_updates(
    acc: _AveragedWeights,
    feats: Sequence[Sequence[str]],
    ex: TrainingExample,
    predicted: Sequence[str],
    on_update: Callable[[int], None] | None,
) -> None:
    gold, observed = ex.tags, ex.observed
    for i in range(len(feats)):
        if not observed[i]:
            continue
        if predicted[i] != gold[i]:
            if on_update is not None:
                on_update(i)
            for f in feats[i]:
                acc.update(f, gold[i], +1.0)
                acc.update(f, predicted[i], -1.0)
        prev_ok = i == 0 or observed[i - 1]
        if not prev_ok:
            continue
        gold_prev = _START if i == 0 else gold[i - 1]
        pred_prev = _START if i == 0 else predicted[i - 1]
        if (gold_prev, gold[i]) != (pred_prev, predicted[i]):
            if on_update is not None:
                on_update(i)
            acc.update(f"t-1={gold_prev}", gold[i], +1.0)
            acc.update(f"t-1={pred_prev}", predicted[i], -1.0)


def tags_to_spans(tokens: Sequence[Token], tags: Sequence[str]) -> list[LabeledSpan]:
    """Contiguous B/I runs as character spans over the sentence text."""
    spans: list[LabeledSpan] = []
    start_idx: int | None = None
    for i, tag in enumerate(tags):
        if tag == _B:
            if start_idx is not None:
                spans.append(LabeledSpan(tokens[start_idx].start, tokens[i - 1].end))
            start_idx = i
        elif tag == _O and start_idx is not None:
            spans.append(LabeledSpan(tokens[start_idx].start, tokens[i - 1].end))
            start_idx = None
    if start_idx is not None:
        spans.append(LabeledSpan(tokens[start_idx].start, tokens[-1].end))
    return spans


def _forced_o_score(
    feats: Sequence[Sequence[str]], weights: Weights, first: int, last: int
) -> float:
    allowed: list[Sequence[str] | None] = [None] * len(feats)
    for i in range(first, last + 1):
        allowed[i] = (_O,)
    score, _ = viterbi(feats, weights, allowed)
    return score


def _margin_confidence(margin: float, temperature: float) -> float:
    return 1.0 / (1.0 + math.exp(-margin / temperature))


def predict_featurized(
    model: ModelSnapshot,
    tokens: Sequence[Token],
    feats: Sequence[Sequence[str]],
    temperature: float = DEFAULT_TEMPERATURE,
) -> list[SpanPrediction]:
    """Decode with precomputed features (the hot path for pool scoring)."""
    if not tokens:
        return []
    best_score, tags = viterbi(feats, model.weights)
    predictions: list[SpanPrediction] = []
    for span in tags_to_spans(tokens, tags):
        first = next(i for i, t in enumerate(tokens) if t.start == span.start)
        last = next(i for i, t in enumerate(tokens) if t.end == span.end)
        margin = best_score - _forced_o_score(feats, model.weights, first, last)
        predictions.append(
            SpanPrediction(
                span=span,
                confidence=_margin_confidence(margin, temperature),
                margin=margin,
            )
        )
    return predictions


def predict(
    model: ModelSnapshot,
    tokens: Sequence[Token],
    rules: RuleSet | None = None,
    text: str = "",
    temperature: float = DEFAULT_TEMPERATURE,
) -> list[SpanPrediction]:
    """Decode one sentence into scored, non-overlapping span predictions."""
    if not tokens:
        return []
    feats = featurize_sentence(text, tokens, rules)
    return predict_featurized(model, tokens, feats, temperature)


def score_confidence(
    model: ModelSnapshot,
    tokens: Sequence[Token],
    span: LabeledSpan,
    rules: RuleSet | None = None,
    text: str = "",
    temperature: float = DEFAULT_TEMPERATURE,
) -> float:
    """Confidence that ``span`` is a mention: logistic margin of best vs forced-O path."""
    covered = [
        i for i, tok in enumerate(tokens) if tok.start < span.end and span.start < tok.end
    ]
    if not covered:
        raise ModelError(f"span ({span.start},{span.end}) is out of token bounds")
    feats = featurize_sentence(text, tokens, rules)
    best_score, _ = viterbi(feats, model.weights)
    margin = best_score - _forced_o_score(feats, model.weights, covered[0], covered[-1])
    return _margin_confidence(margin, temperature)


@dataclass(frozen=True)
class GoldSentence:
    """A fully observed evaluation sentence."""

    text: str
    spans: tuple[LabeledSpan, ...]


def score_spans(
    pairs: Iterable[tuple[Iterable[LabeledSpan], Iterable[LabeledSpan]]]
) -> EvalReport:
    """Micro-averaged exact-span P/R/F1 from (predicted, gold) span pairs."""
    tp = fp = fn = 0
    for predicted, gold in pairs:
        pred_set, gold_set = set(predicted), set(gold)
        tp += len(pred_set & gold_set)
        fp += len(pred_set - gold_set)
        fn += len(gold_set - pred_set)
    return EvalReport.from_counts(tp, fp, fn)


def evaluate(
    model: ModelSnapshot,
    gold: Sequence[GoldSentence],
    rules: RuleSet | None = None,
) -> EvalReport:
    """Exact-span evaluation of the model against fully observed sentences."""
    if not gold:
        raise ModelError("empty gold set")
    pairs = []
    for sentence in gold:
        tokens = tokenize(sentence.text)
        predicted = [p.span for p in predict(model, tokens, rules, sentence.text)]
        pairs.append((predicted, sentence.spans))
    return score_spans(pairs)


def save_model(model: ModelSnapshot, path: str | Path) -> None:
    """Write a snapshot as self-describing JSON; load(save(m)) decodes identically."""
    payload = {
        "format": "mentionkit-model",
        "version": model.version,
        "feature_templates": list(model.feature_templates),
        "tagset": list(model.tagset),
        "averaged": model.averaged,
        "trained_on": model.trained_on,
        "created": model.created,
        "weights": {f"{f}\t{t}": w for (f, t), w in sorted(model.weights.items())},
    }
    Path(path).write_text(
        json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=0) + "\n",
        encoding="utf-8",
    )


def load_model(path: str | Path) -> ModelSnapshot:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelError(f"cannot read model {path}: {exc}") from exc
    if payload.get("format") != "mentionkit-model":
        raise ModelError(f"{path} is not a model snapshot file")
    weights: Weights = {}
    for key, value in payload["weights"].items():
        feature, _, tag = key.rpartition("\t")
        weights[(feature, tag)] = float(value)
    return ModelSnapshot(
        version=payload["version"],
        feature_templates=tuple(payload["feature_templates"]),
        weights=weights,
        averaged=bool(payload["averaged"]),
        tagset=tuple(payload["tagset"]),
        trained_on=int(payload["trained_on"]),
        created=payload["created"],
    )
