"""HTTP API for the annotation loop: task queue, submissions, training.

Single-annotator, single-queue server.  The queue cursor and the append-only
store are the only mutable state; restarting against the same store file
resumes with identical progress.  Submits are serialized through one lock,
and at most one training job runs at a time.
"""

from __future__ import annotations

import itertools
import logging
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone

from fastapi import FastAPI, HTTPException, Response
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .annotation import (
    AnnotationMethod,
    AnnotationStore,
    Decision,
    LabeledSpan,
    merge_datasets,
    new_example,
    to_training_set,
)
from .corpus import Sentence
from .errors import LoopError, StoreError
from .loop import (
    LoopConfig,
    LoopResources,
    PlannedIteration,
    Task,
    plan_iteration,
    promote_model,
)
from .matcher import PatternRule, RuleSet, compile_rules
from .ner import EvalReport, GoldSentence, ModelSnapshot, train

logger = logging.getLogger(__name__)


@dataclass
class ServiceState:
    """Everything the endpoints share; guarded by ``lock``."""

    store: AnnotationStore
    sentences: list[Sentence]
    config: LoopConfig
    extra_rules: tuple[PatternRule, ...] = ()
    holdout: list[GoldSentence] | None = None
    promoted: ModelSnapshot | None = None
    promoted_eval: EvalReport | None = None
    plan: PlannedIteration | None = None
    cursor: int = 0
    base_completed: int = 0
    last_submitted_task: str | None = None
    last_submitted_example: str | None = None
    training_thread: threading.Thread | None = None
    training_error: str | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)
    job_counter: itertools.count = field(default_factory=itertools.count)


def build_state(
    sentences: list[Sentence],
    store: AnnotationStore,
    config: LoopConfig | None = None,
    extra_rules: tuple[PatternRule, ...] = (),
    holdout: list[GoldSentence] | None = None,
    model: ModelSnapshot | None = None,
) -> ServiceState:
    """Assemble service state and plan the iteration the store is in."""
    state = ServiceState(
        store=store,
        sentences=sentences,
        config=config or LoopConfig(),
        extra_rules=extra_rules,
        holdout=holdout,
        promoted=model,
    )
    _replan(state)
    return state


def _replan(state: ServiceState) -> None:
    """Resume the latest iteration in the store, or advance when it is done.

    An iteration counts as done once its task budget is spent or no eligible
    candidates remain for it.
    """
    resources = LoopResources(
        sentences=state.sentences,
        store=state.store,
        promoted_model=state.promoted,
        extra_rules=state.extra_rules,
    )
    start = max((ex.iteration for ex in state.store), default=0)
    done_in_start = sum(1 for ex in state.store if ex.iteration == start)
    if done_in_start >= state.config.max_tasks:
        start += 1
    plan: PlannedIteration | None = None
    for iteration in (start, start + 1):
        try:
            candidate = plan_iteration([None] * iteration, state.config, resources)
        except LoopError as exc:
            logger.warning("cannot plan iteration %d: %s", iteration, exc)
            break
        plan = candidate
        if candidate.tasks:
            break
    state.plan = plan
    state.cursor = 0
    if plan is not None:
        state.base_completed = sum(
            1 for ex in state.store if ex.iteration == plan.state.iteration
        )


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class SubmitBody(BaseModel):
    task_id: str
    decision: str
    spans: list[dict] | None = None


def _task_payload(state: ServiceState, task: Task) -> dict:
    sentence = task.candidate.sentence
    if task.method is AnnotationMethod.MANUAL:
        highlights = [
            {"start": s.start, "end": s.end, "source": "matcher", "confidence": None}
            for s in task.candidate.suggested_spans
        ]
    else:
        highlights = [
            {
                "start": p.span.start,
                "end": p.span.end,
                "source": "model",
                "confidence": p.confidence,
            }
            for p in task.proposed_spans
        ]
    return {
        "task_id": task.task_id,
        "text": sentence.text,
        "pre_highlights": highlights,
        "method": task.method.value,
        "iteration": task.iteration,
        "progress": _progress_counts(state),
    }


def _progress_counts(state: ServiceState) -> dict:
    completed = state.base_completed + state.cursor
    remaining = len(state.plan.tasks) - state.cursor if state.plan else 0
    return {"completed": completed, "total": completed + remaining}


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="mentionkit annotation service")

    @app.get("/api/task/next")
    def next_task():
        with state.lock:
            if state.plan is None:
                raise HTTPException(status_code=409, detail="no active iteration")
            if state.cursor >= len(state.plan.tasks):
                return Response(status_code=204)
            task = state.plan.tasks[state.cursor]
            return JSONResponse(_task_payload(state, task))

    @app.post("/api/task/submit")
    def submit(body: SubmitBody) -> dict:
        with state.lock:
            if state.plan is None:
                raise HTTPException(status_code=409, detail="no active iteration")
            exhausted = state.cursor >= len(state.plan.tasks)
            head = None if exhausted else state.plan.tasks[state.cursor]
            if head is None or body.task_id != head.task_id:
                if body.task_id == state.last_submitted_task:
                    # Idempotent client retry after a lost response.
                    return {
                        "example_id": state.last_submitted_example,
                        "duplicate": True,
                        "progress": _progress_counts(state),
                    }
                detail = (
                    "queue is exhausted"
                    if head is None
                    else f"stale task_id {body.task_id!r}; head is {head.task_id!r}"
                )
                raise HTTPException(status_code=409, detail=detail)

            try:
                decision = Decision(body.decision)
            except ValueError:
                raise HTTPException(
                    status_code=422, detail=f"unknown decision {body.decision!r}"
                )

            sentence = head.candidate.sentence
            if head.method is AnnotationMethod.TEACH:
                if body.spans:
                    raise HTTPException(
                        status_code=422, detail="TEACH submissions must not carry spans"
                    )
                if decision is Decision.IGNORE:
                    # A teach answer is binary; ignoring skips the task and
                    # stores nothing.
                    state.cursor += 1
                    state.last_submitted_task = body.task_id
                    state.last_submitted_example = None
                    return {
                        "example_id": None,
                        "duplicate": False,
                        "skipped": True,
                        "progress": _progress_counts(state),
                    }
                spans = [p.span for p in head.proposed_spans]
            else:
                if decision is Decision.REJECT:
                    raise HTTPException(
                        status_code=422,
                        detail=f"REJECT is only valid for TEACH tasks "
                        f"({head.method.value} given)",
                    )
                if decision is Decision.ACCEPT and body.spans is None:
                    raise HTTPException(status_code=422, detail="ACCEPT requires a spans list")
                try:
                    spans = [
                        LabeledSpan(start=int(s["start"]), end=int(s["end"]))
                        for s in (body.spans or [])
                    ]
                except (KeyError, TypeError, ValueError) as exc:
                    raise HTTPException(status_code=422, detail=f"bad span: {exc}")

            try:
                example = new_example(
                    doc_id=sentence.doc_id,
                    sent_index=sentence.sent_index,
                    text=sentence.text,
                    spans=spans,
                    decision=decision,
                    method=head.method,
                    iteration=head.iteration,
                    annotator=state.config.annotator,
                    timestamp=_now(),
                    model_version=state.promoted.version if state.promoted else None,
                )
                receipt = state.store.append_example(example)
            except StoreError as exc:
                raise HTTPException(status_code=422, detail=str(exc))

            state.cursor += 1
            state.last_submitted_task = body.task_id
            state.last_submitted_example = receipt.example_id
            return {
                "example_id": receipt.example_id,
                "duplicate": receipt.duplicate,
                "progress": _progress_counts(state),
            }

    @app.post("/api/train")
    def start_training() -> dict:
        with state.lock:
            if state.training_thread is not None and state.training_thread.is_alive():
                raise HTTPException(status_code=409, detail="a training job is already running")
            merged = merge_datasets([state.store]).store
            training_set = to_training_set(merged, include_teach=True)
            if not training_set or not any(any(ex.observed) for ex in training_set):
                raise HTTPException(status_code=422, detail="no trainable examples in store")
            job_id = f"train-{next(state.job_counter)}"
            rules = state.plan.rules if state.plan is not None else compile_rules()
            thread = threading.Thread(
                target=_train_job,
                args=(state, training_set, rules),
                name=job_id,
                daemon=True,
            )
            state.training_thread = thread
            state.training_error = None
            thread.start()
            return {"job_id": job_id}

    @app.get("/api/model")
    def model_info() -> dict:
        with state.lock:
            if state.promoted is None:
                raise HTTPException(status_code=404, detail="no model has been promoted yet")
            return {
                "version": state.promoted.version,
                "eval": state.promoted_eval.as_dict() if state.promoted_eval else None,
                "trained_on": state.promoted.trained_on,
            }

    @app.get("/api/progress")
    def progress() -> dict:
        with state.lock:
            training = (
                state.training_thread is not None and state.training_thread.is_alive()
            )
            if state.plan is None:
                return {"iteration": None, "training": training}
            return {
                "iteration": state.plan.state.iteration,
                "method": state.plan.state.method.value,
                "model_version": state.promoted.version if state.promoted else None,
                "rules_version": state.plan.state.rules_version,
                "n_tasks": len(state.plan.tasks),
                "n_completed": state.base_completed + state.cursor,
                "training": training,
                "training_error": state.training_error,
            }

    return app


def _train_job(state: ServiceState, training_set, rules: RuleSet) -> None:
    try:
        snapshot = train(
            training_set, rules, epochs=state.config.epochs, seed=state.config.seed
        )
        eval_report: EvalReport | None = None
        promoted = True
        if state.holdout:
            decision = promote_model(snapshot, state.promoted, state.holdout, rules)
            promoted = decision.promoted
            eval_report = decision.candidate_eval
        with state.lock:
            if promoted:
                state.promoted = snapshot
                state.promoted_eval = eval_report
    except Exception as exc:  # surfaced through /api/progress
        logger.exception("training job failed")
        with state.lock:
            state.training_error = str(exc)
