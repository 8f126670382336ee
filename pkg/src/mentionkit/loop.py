"""Orchestration of the human-in-the-loop annotation iterations.

The default plan mirrors the workflow the toolkit is built around: a first
manual pass over rule-flagged candidates, a second manual pass with patterns
learned from the first model, a correction pass over model proposals, then
binary teach rounds driven by uncertainty sampling.  Each iteration retrains
from scratch on the merged store and promotes the new snapshot only when it
does not regress on the holdout.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, replace
from typing import IO, Callable, Iterable, Sequence

from .annotation import (
    AnnotationExample,
    AnnotationMethod,
    AnnotationStore,
    Decision,
    LabeledSpan,
    make_example_id,
    merge_datasets,
    new_example,
    to_training_set,
)
from .corpus import Sentence, tokenize
from .errors import LoopError
from .matcher import (
    CandidateLevel,
    CandidateSentence,
    PatternRule,
    RuleOrigin,
    RuleSet,
    compile_rules,
    extract_candidates,
)
from .ner import EvalReport, GoldSentence, ModelSnapshot, SpanPrediction, evaluate, predict, train


@dataclass(frozen=True)
class LoopConfig:
    method_sequence: tuple[AnnotationMethod, ...] = (
        AnnotationMethod.MANUAL,
        AnnotationMethod.MANUAL,
        AnnotationMethod.CORRECT,
        AnnotationMethod.TEACH,
    )
    min_level: CandidateLevel = CandidateLevel.LOW
    max_tasks: int = 100
    epochs: int = 5
    seed: int = 0
    pattern_min_count: int = 1
    pattern_confidence: float = 0.9
    requeue_rejects: bool = True
    annotator: str = "librarian"


@dataclass(frozen=True)
class IterationState:
    iteration: int
    method: AnnotationMethod
    model_version: str | None
    rules_version: str
    queue: tuple[str, ...]
    completed: int = 0


@dataclass(frozen=True)
class Task:
    task_id: str
    candidate: CandidateSentence
    proposed_spans: tuple[SpanPrediction, ...]
    method: AnnotationMethod
    iteration: int

    @property
    def example_id(self) -> str:
        s = self.candidate.sentence
        return make_example_id(s.doc_id, s.sent_index, s.text)


@dataclass(frozen=True)
class PlannedIteration:
    state: IterationState
    tasks: tuple[Task, ...]
    rules: RuleSet
    learned_rules: tuple[PatternRule, ...]


def _task_id(iteration: int, sentence: Sentence) -> str:
    return f"{iteration}:{make_example_id(sentence.doc_id, sentence.sent_index, sentence.text)}"


def uncertainty_sample(
    model: ModelSnapshot,
    candidates: Sequence[CandidateSentence],
    k: int,
    rules: RuleSet | None = None,
    iteration: int = 0,
) -> list[Task]:
    """Top-k teach tasks by model uncertainty.

    Uncertainty is ``1 - |2c - 1|`` where c is the highest span confidence,
    so c = 0.5 ranks first; ties break on (doc_id, sent_index).  Ordering by
    uncertainty is the same as ordering by the raw decode margin, which is
    what we sort on because the logistic saturates for large margins.
    Candidates the model proposes nothing on cannot be teach-answered and
    are skipped.
    """
    if k < 1:
        raise LoopError(f"k must be >= 1, got {k}")
    if model is None:
        raise LoopError("uncertainty sampling needs a trained model")
    scored: list[tuple[float, str, int, CandidateSentence, tuple[SpanPrediction, ...]]] = []
    for candidate in candidates:
        sentence = candidate.sentence
        predictions = predict(model, tokenize(sentence.text), rules, sentence.text)
        if not predictions:
            continue
        margin = max(p.margin for p in predictions)
        scored.append(
            (margin, sentence.doc_id, sentence.sent_index, candidate, tuple(predictions))
        )
    scored.sort(key=lambda item: item[:3])
    return [
        Task(
            task_id=_task_id(iteration, candidate.sentence),
            candidate=candidate,
            proposed_spans=predictions,
            method=AnnotationMethod.TEACH,
            iteration=iteration,
        )
        for _, _, _, candidate, predictions in scored[:k]
    ]


_WS_JOIN = "\\s+"
_ADJ_JOIN = "\\s*"


def _char_class_regex(text: str) -> str:
    """Regex for one token generalized by character-class runs."""
    parts: list[str] = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch.isupper():
            cls, body = "u", "[A-Z]"
        elif ch.islower():
            cls, body = "l", "[a-z]"
        elif ch.isdigit():
            cls, body = "d", "[0-9]"
        else:
            parts.append(re.escape(ch))
            i += 1
            continue
        run = 1
        while i + run < len(text) and _char_kind(text[i + run]) == cls:
            run += 1
        parts.append(body if run == 1 else body + ("{2,}" if cls == "u" else "+"))
        i += run
    return "".join(parts)


def _char_kind(ch: str) -> str:
    if ch.isupper():
        return "u"
    if ch.islower():
        return "l"
    if ch.isdigit():
        return "d"
    return "o"


def shape_regex(text: str) -> str | None:
    """Surface regex generalizing a span by token shapes.

    Repeated word classes collapse into an at-least repetition (capped at
    three) so e.g. a four-word title-case name with a parenthesized acronym
    also matches three-word names of the same shape.  Single-token spans are
    not generalized (a lone class would match far too much).
    """
    tokens = tokenize(text)
    if len(tokens) < 2:
        return None
    classes = [_char_class_regex(t.text) for t in tokens]
    joins = [
        _WS_JOIN if tokens[i + 1].start > tokens[i].end else _ADJ_JOIN
        for i in range(len(tokens) - 1)
    ]

    out: list[str] = []
    i = 0
    while i < len(classes):
        run = 1
        while (
            i + run < len(classes)
            and classes[i + run] == classes[i]
            and joins[i + run - 1] == _WS_JOIN
        ):
            run += 1
        if run >= 2:
            at_least = min(run, 3) - 1
            out.append(f"(?:{classes[i]}\\s+){{{at_least},}}{classes[i]}")
        else:
            out.append(classes[i])
        i += run
        if i < len(classes):
            out.append(joins[i - 1])
    return "".join(out)


def shape_string(text: str) -> str:
    """Human-readable shape sequence of a span, e.g. ``Xxxx Xxxx ( XXXX )``."""
    return " ".join(tok.shape for tok in tokenize(text))


def literal_regex(text: str) -> str:
    """Escaped-literal rule for a surface string, word-bounded where sensible."""
    source = re.escape(text)
    if text and (text[0].isalnum() or text[0] == "_"):
        source = r"\b" + source
    if text and (text[-1].isalnum() or text[-1] == "_"):
        source = source + r"\b"
    return source


def derive_patterns(
    store: Iterable[AnnotationExample] | None = None,
    model: ModelSnapshot | None = None,
    pool: Sequence[CandidateSentence] | None = None,
    rules: RuleSet | None = None,
    min_count: int = 1,
    confidence_threshold: float = 0.9,
) -> list[PatternRule]:
    """Learn matching rules from accepted spans and confident model predictions.

    Every span yields an escaped-literal surface rule and (for multi-token
    spans) a token-shape rule; rules seen fewer than ``min_count`` times are
    dropped.  Learned rules are level MID and never override built-ins.
    """
    if store is None and model is None:
        raise LoopError("derive_patterns needs a store or a model")
    span_texts: list[str] = []
    if store is not None:
        for ex in store:
            if ex.decision is Decision.ACCEPT:
                span_texts.extend(ex.text[s.start:s.end] for s in ex.spans)
    if model is not None and pool:
        for candidate in pool:
            sentence = candidate.sentence
            for prediction in predict(model, tokenize(sentence.text), rules, sentence.text):
                if prediction.confidence >= confidence_threshold:
                    span = prediction.span
                    span_texts.append(sentence.text[span.start:span.end])

    counts: dict[str, int] = {}
    descriptions: dict[str, str] = {}
    for text in span_texts:
        candidates = [("lit", literal_regex(text), text)]
        shape = shape_regex(text)
        if shape is not None:
            candidates.append(("shape", shape, shape_string(text)))
        for kind, source, description in candidates:
            key = f"{kind}\x00{source}"
            counts[key] = counts.get(key, 0) + 1
            descriptions.setdefault(key, description)

    learned: list[PatternRule] = []
    for key, count in counts.items():
        if count < min_count:
            continue
        kind, source = key.split("\x00", 1)
        digest = hashlib.sha256(source.encode("utf-8")).hexdigest()[:8]
        learned.append(
            PatternRule(
                rule_id=f"learned_{kind}_{digest}",
                level=CandidateLevel.MID,
                regex_source=source,
                case_insensitive=False,
                origin=RuleOrigin.LEARNED,
            )
        )
    return learned


@dataclass(frozen=True)
class PromotionDecision:
    promoted: bool
    candidate_version: str
    baseline_version: str | None
    candidate_eval: EvalReport
    baseline_eval: EvalReport | None


def promote_model(
    candidate: ModelSnapshot,
    baseline: ModelSnapshot | None,
    holdout: Sequence[GoldSentence],
    rules: RuleSet | None = None,
) -> PromotionDecision:
    """Promote the candidate iff it does not regress on the shared holdout."""
    if not holdout:
        raise LoopError("promotion needs a non-empty holdout")
    candidate_eval = evaluate(candidate, holdout, rules)
    if baseline is None:
        return PromotionDecision(True, candidate.version, None, candidate_eval, None)
    baseline_eval = evaluate(baseline, holdout, rules)
    return PromotionDecision(
        promoted=candidate_eval.f1 >= baseline_eval.f1,
        candidate_version=candidate.version,
        baseline_version=baseline.version,
        candidate_eval=candidate_eval,
        baseline_eval=baseline_eval,
    )


@dataclass
class LoopResources:
    sentences: list[Sentence]
    store: AnnotationStore
    promoted_model: ModelSnapshot | None = None
    extra_rules: tuple[PatternRule, ...] = ()


def _latest_decisions(store: Iterable[AnnotationExample]) -> dict[str, Decision]:
    latest: dict[str, tuple[int, str, Decision]] = {}
    for ex in store:
        key = (ex.iteration, ex.timestamp, ex.decision)
        if ex.example_id not in latest or key[:2] >= latest[ex.example_id][:2]:
            latest[ex.example_id] = key
    return {example_id: entry[2] for example_id, entry in latest.items()}


def plan_iteration(
    history: Sequence[IterationState],
    config: LoopConfig,
    resources: LoopResources,
) -> PlannedIteration:
    """Plan the next iteration: method, rule set, and an ordered task queue.

    Manual iterations after the first recompile the rules with patterns
    derived from the promoted model and the accepted spans so far.  Teach
    iterations are uncertainty-sampled.  Sentences whose latest decision is
    REJECT are re-queued for repair when ``requeue_rejects`` is on.
    """
    iteration = len(history)
    sequence = config.method_sequence
    if not sequence:
        raise LoopError("method sequence is empty")
    method = sequence[iteration] if iteration < len(sequence) else sequence[-1]
    model = resources.promoted_model
    if method in (AnnotationMethod.CORRECT, AnnotationMethod.TEACH) and model is None:
        raise LoopError(f"{method.value} iteration requested before any model exists")

    learned: tuple[PatternRule, ...] = ()
    if method is AnnotationMethod.MANUAL and iteration > 0 and (
        model is not None or len(resources.store) > 0
    ):
        base_rules = compile_rules(resources.extra_rules)
        pool = None
        if model is not None:
            pool = list(
                extract_candidates(base_rules, resources.sentences, config.min_level)
            )
        learned = tuple(
            derive_patterns(
                store=resources.store,
                model=model,
                pool=pool,
                rules=base_rules,
                min_count=config.pattern_min_count,
                confidence_threshold=config.pattern_confidence,
            )
        )
    rules = compile_rules([*resources.extra_rules, *learned])

    decisions = _latest_decisions(resources.store)

    def eligible(candidate: CandidateSentence) -> bool:
        s = candidate.sentence
        example_id = make_example_id(s.doc_id, s.sent_index, s.text)
        if example_id not in decisions:
            return True
        return (
            config.requeue_rejects
            and decisions[example_id] is Decision.REJECT
            and method is not AnnotationMethod.TEACH
        )

    candidates = [
        c
        for c in extract_candidates(rules, resources.sentences, config.min_level)
        if eligible(c)
    ]

    if method is AnnotationMethod.TEACH:
        tasks = uncertainty_sample(model, candidates, config.max_tasks, rules, iteration)
    else:
        tasks = []
        for candidate in candidates[: config.max_tasks]:
            proposals: tuple[SpanPrediction, ...] = ()
            if method is AnnotationMethod.CORRECT:
                sentence = candidate.sentence
                proposals = tuple(
                    predict(model, tokenize(sentence.text), rules, sentence.text)
                )
            tasks.append(
                Task(
                    task_id=_task_id(iteration, candidate.sentence),
                    candidate=candidate,
                    proposed_spans=proposals,
                    method=method,
                    iteration=iteration,
                )
            )

    state = IterationState(
        iteration=iteration,
        method=method,
        model_version=model.version if model is not None else None,
        rules_version=rules.fingerprint(),
        queue=tuple(task.task_id for task in tasks),
    )
    return PlannedIteration(
        state=state, tasks=tuple(tasks), rules=rules, learned_rules=learned
    )


# An annotator maps a task to (decision, asserted spans).  Spans are ignored
# for TEACH, where the stored spans are always the model's proposals.
Annotator = Callable[[Task], tuple[Decision, Sequence[LabeledSpan]]]


class LoopRunner:
    """Drive full iterations against a scripted or interactive annotator."""

    def __init__(
        self,
        sentences: Sequence[Sentence],
        config: LoopConfig | None = None,
        store: AnnotationStore | None = None,
        holdout: Sequence[GoldSentence] | None = None,
    ) -> None:
        self.config = config or LoopConfig()
        self.resources = LoopResources(
            sentences=list(sentences), store=store or AnnotationStore()
        )
        self.holdout = list(holdout) if holdout else None
        self.history: list[IterationState] = []
        self.models: dict[str, ModelSnapshot] = {}
        self.log_records: list[dict] = []
        self._tick = 0

    @property
    def store(self) -> AnnotationStore:
        return self.resources.store

    @property
    def promoted_model(self) -> ModelSnapshot | None:
        return self.resources.promoted_model

    def _now(self) -> str:
        self._tick += 1
        return f"1970-01-01T00:00:00.{self._tick:06d}Z"

    def run_iteration(self, annotator: Annotator) -> IterationState:
        planned = plan_iteration(self.history, self.config, self.resources)
        completed = 0
        for task in planned.tasks:
            decision, spans = annotator(task)
            sentence = task.candidate.sentence
            if task.method is AnnotationMethod.TEACH:
                stored_spans: Sequence[LabeledSpan] = [p.span for p in task.proposed_spans]
            else:
                stored_spans = spans
            example = new_example(
                doc_id=sentence.doc_id,
                sent_index=sentence.sent_index,
                text=sentence.text,
                spans=stored_spans,
                decision=decision,
                method=task.method,
                iteration=task.iteration,
                annotator=self.config.annotator,
                timestamp=self._now(),
                model_version=self.resources.promoted_model.version
                if self.resources.promoted_model
                else None,
            )
            self.store.append_example(example)
            completed += 1

        state = replace(planned.state, completed=completed)
        eval_report = self._retrain(planned.rules)
        self.history.append(state)
        self.log_records.append(iteration_log_record(state, eval_report))
        return state

    def _retrain(self, rules: RuleSet) -> EvalReport | None:
        merged = merge_datasets([self.store]).store
        training_set = to_training_set(merged, include_teach=True)
        if not training_set or not any(any(ex.observed) for ex in training_set):
            return None
        snapshot = train(
            training_set, rules, epochs=self.config.epochs, seed=self.config.seed
        )
        self.models[snapshot.version] = snapshot
        if self.holdout:
            decision = promote_model(
                snapshot, self.resources.promoted_model, self.holdout, rules
            )
            if decision.promoted:
                self.resources.promoted_model = snapshot
            return decision.candidate_eval
        self.resources.promoted_model = snapshot
        return None


def iteration_log_record(state: IterationState, eval_report: EvalReport | None) -> dict:
    return {
        "iteration": state.iteration,
        "method": state.method.value,
        "model_version": state.model_version,
        "rules_version": state.rules_version,
        "n_tasks": len(state.queue),
        "n_completed": state.completed,
        "eval": eval_report.as_dict() if eval_report is not None else None,
    }


def write_iteration_log(records: Iterable[dict], out: IO[str]) -> None:
    for record in records:
        out.write(json.dumps(record, ensure_ascii=False) + "\n")
