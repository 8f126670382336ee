from __future__ import annotations

import io
import re

import pytest

from mentionkit.annotation import (
    AnnotationMethod,
    AnnotationStore,
    Decision,
    LabeledSpan,
    export_jsonl,
    to_training_set,
)
from mentionkit.errors import LoopError
from mentionkit.loop import (
    LoopConfig,
    LoopResources,
    LoopRunner,
    derive_patterns,
    iteration_log_record,
    literal_regex,
    plan_iteration,
    promote_model,
    shape_regex,
    shape_string,
    uncertainty_sample,
    write_iteration_log,
)
from mentionkit.matcher import CandidateLevel, RuleOrigin, compile_rules, extract_candidates
from mentionkit.ner import GoldSentence, save_model, train
from mentionkit.synth import (
    generate_corpus,
    gold_index,
    manual_store,
    oracle_annotator,
    stratified_seed,
)


@pytest.fixture(scope="module")
def small_world():
    corpus = generate_corpus(120, seed=50)
    rules = compile_rules()
    store = manual_store(stratified_seed(corpus))
    model = train(to_training_set(store), rules, epochs=5, seed=0)
    return corpus, rules, store, model


class TestUncertaintySample:
    def test_midpoint_confidence_ranks_first(self, small_world, monkeypatch):
        corpus, rules, _, model = small_world
        candidates = [
            c
            for c in extract_candidates(rules, [x.sentence() for x in corpus], CandidateLevel.LOW)
        ][:3]

        from mentionkit import loop as loop_mod
        from mentionkit.ner import SpanPrediction

        margins = {0: 4.0, 1: 0.0, 2: -0.0}
        confidences = {0: 0.9, 1: 0.5, 2: 0.1}

        def fake_predict(model, tokens, rules=None, text=""):
            idx = next(
                i for i, c in enumerate(candidates) if c.sentence.text == text
            )
            # mirror confidence/margin coupling: c=0.5 has the smallest margin
            margin = {0: 4.0, 1: 0.0, 2: 4.0}[idx]
            return [
                SpanPrediction(
                    span=LabeledSpan(0, 1),
                    confidence=confidences[idx],
                    margin=margin,
                )
            ]

        monkeypatch.setattr(loop_mod, "predict", fake_predict)
        picked = uncertainty_sample(model, candidates, k=1, rules=rules)
        assert picked[0].candidate.sentence.text == candidates[1].sentence.text

    def test_k_larger_than_list(self, small_world):
        corpus, rules, _, model = small_world
        candidates = list(
            extract_candidates(rules, [x.sentence() for x in corpus[:10]], CandidateLevel.LOW)
        )
        tasks = uncertainty_sample(model, candidates, k=999, rules=rules)
        assert len(tasks) <= len(candidates)
        assert all(t.proposed_spans for t in tasks)

    def test_empty_candidates(self, small_world):
        _, rules, _, model = small_world
        assert uncertainty_sample(model, [], k=3, rules=rules) == []

    def test_k_must_be_positive(self, small_world):
        _, rules, _, model = small_world
        with pytest.raises(LoopError):
            uncertainty_sample(model, [], k=0, rules=rules)

    def test_model_required(self):
        with pytest.raises(LoopError):
            uncertainty_sample(None, [], k=1)


class TestDerivePatterns:
    def test_anes_shape_rule_generalizes(self):
        store = [
            _accept("We use the American National Election Survey (ANES) data.",
                    "American National Election Survey (ANES)")
        ]
        rules = derive_patterns(store=store)
        shapes = [r for r in rules if r.rule_id.startswith("learned_shape")]
        assert len(shapes) == 1
        pattern = re.compile(shapes[0].regex_source)
        assert pattern.fullmatch("General Social Survey (GSS)")
        assert not pattern.fullmatch("Panel Study of Income Dynamics (PSID)")
        assert not pattern.search("Panel Study of Income Dynamics (PSID)")

    def test_min_count_threshold(self):
        store = [
            _accept("We use the Alpha Beta Gamma data.", "Alpha Beta Gamma"),
            _accept("We use the Delta Epsilon Zeta (DEZ) data.", "Delta Epsilon Zeta (DEZ)"),
        ]
        assert derive_patterns(store=store, min_count=2) == []

    def test_duplicates_collapse(self):
        store = [
            _accept("First uses ANES here.", "ANES"),
            _accept("Second uses ANES too.", "ANES"),
        ]
        rules = derive_patterns(store=store, min_count=2)
        literals = [r for r in rules if r.rule_id.startswith("learned_lit")]
        assert len(literals) == 1
        assert literals[0].origin is RuleOrigin.LEARNED
        assert literals[0].level is CandidateLevel.MID

    def test_single_token_span_gets_no_shape_rule(self):
        store = [_accept("We use ANES data.", "ANES")]
        rules = derive_patterns(store=store)
        assert [r for r in rules if r.rule_id.startswith("learned_shape")] == []
        assert [r for r in rules if r.rule_id.startswith("learned_lit")]

    def test_requires_store_or_model(self):
        with pytest.raises(LoopError):
            derive_patterns()

    def test_nothing_to_derive_is_empty(self):
        assert derive_patterns(store=[]) == []

    def test_shape_string_display(self):
        assert shape_string("American National Election Survey (ANES)") == (
            "Xxxx Xxxx Xxxx Xxxx ( XXXX )"
        )

    def test_literal_regex_bounded(self):
        pattern = re.compile(literal_regex("ANES"))
        assert pattern.search("uses ANES here")
        assert not pattern.search("JANESVILLE")


def _accept(text: str, span_text: str):
    from mentionkit.annotation import new_example

    start = text.index(span_text)
    return new_example(
        doc_id="d",
        sent_index=hash(text) % 1000,
        text=text,
        spans=(LabeledSpan(start, start + len(span_text)),),
        decision=Decision.ACCEPT,
        method=AnnotationMethod.MANUAL,
        iteration=0,
        annotator="t",
        timestamp="2024-01-01T00:00:00Z",
    )


@pytest.fixture(scope="module")
def models_and_holdout():
    corpus = generate_corpus(300, seed=60)
    rules = compile_rules()
    weak = train(to_training_set(manual_store(corpus[:12])), rules, epochs=2, seed=0)
    strong = train(to_training_set(manual_store(corpus[:200])), rules, epochs=5, seed=0)
    holdout = [c.gold() for c in corpus[200:260]]
    return weak, strong, holdout, rules


class TestPromoteModel:

    def test_better_promotes(self, models_and_holdout):
        weak, strong, holdout, rules = models_and_holdout
        decision = promote_model(strong, weak, holdout, rules)
        assert decision.promoted
        assert decision.candidate_eval.f1 >= decision.baseline_eval.f1

    def test_equal_promotes(self, models_and_holdout):
        weak, _, holdout, rules = models_and_holdout
        decision = promote_model(weak, weak, holdout, rules)
        assert decision.promoted

    def test_worse_keeps_baseline(self, models_and_holdout):
        weak, strong, holdout, rules = models_and_holdout
        decision = promote_model(weak, strong, holdout, rules)
        assert not decision.promoted
        assert decision.baseline_eval is not None

    def test_empty_holdout_rejected(self, models_and_holdout):
        weak, strong, _, rules = models_and_holdout
        with pytest.raises(LoopError):
            promote_model(strong, weak, [], rules)

    def test_no_baseline_promotes(self, models_and_holdout):
        weak, _, holdout, rules = models_and_holdout
        decision = promote_model(weak, None, holdout, rules)
        assert decision.promoted and decision.baseline_eval is None


class TestPlanIteration:
    def test_first_iteration_manual_builtin(self, small_world):
        corpus, _, _, _ = small_world
        resources = LoopResources(
            sentences=[c.sentence() for c in corpus], store=AnnotationStore()
        )
        planned = plan_iteration([], LoopConfig(), resources)
        assert planned.state.iteration == 0
        assert planned.state.method is AnnotationMethod.MANUAL
        assert planned.state.model_version is None
        assert planned.learned_rules == ()
        assert len(planned.rules) == 14
        assert planned.tasks
        assert all(t.proposed_spans == () for t in planned.tasks)

    def test_second_manual_uses_learned_patterns(self, small_world):
        corpus, _, store, model = small_world
        resources = LoopResources(
            sentences=[c.sentence() for c in corpus],
            store=store,
            promoted_model=model,
        )
        planned = plan_iteration([None], LoopConfig(), resources)
        assert planned.state.iteration == 1
        assert planned.state.method is AnnotationMethod.MANUAL
        assert planned.learned_rules
        assert len(planned.rules) == 14 + len(planned.learned_rules)
        assert planned.state.model_version == model.version

    def test_model_required_for_teach(self, small_world):
        corpus, _, _, _ = small_world
        config = LoopConfig(method_sequence=(AnnotationMethod.TEACH,))
        resources = LoopResources(
            sentences=[c.sentence() for c in corpus], store=AnnotationStore()
        )
        with pytest.raises(LoopError):
            plan_iteration([], config, resources)

    def test_annotated_sentences_leave_queue(self, small_world):
        corpus, _, store, model = small_world
        resources = LoopResources(
            sentences=[c.sentence() for c in corpus],
            store=store,
            promoted_model=model,
        )
        planned = plan_iteration([None], LoopConfig(), resources)
        annotated = {ex.example_id for ex in store}
        assert all(t.example_id not in annotated for t in planned.tasks)


class TestLoopRunner:
    def _run(self, iterations=4):
        corpus = generate_corpus(260, seed=70)
        holdout = [c.gold() for c in corpus[200:]]
        pool = corpus[:200]
        runner = LoopRunner(
            [c.sentence() for c in pool],
            LoopConfig(max_tasks=40, epochs=3, seed=0),
            holdout=holdout,
        )
        annotate = oracle_annotator(gold_index(pool))
        for _ in range(iterations):
            runner.run_iteration(annotate)
        return runner

    def test_reproducible_end_to_end(self):
        a, b = self._run(), self._run()
        buf_a, buf_b = io.StringIO(), io.StringIO()
        export_jsonl(a.store, buf_a)
        export_jsonl(b.store, buf_b)
        assert buf_a.getvalue() == buf_b.getvalue()
        assert a.promoted_model == b.promoted_model
        assert a.log_records == b.log_records

    def test_cumulative_store_grows(self):
        runner = self._run()
        from mentionkit.annotation import merge_datasets

        sizes = []
        seen = AnnotationStore()
        for state in runner.history:
            for ex in runner.store:
                if ex.iteration <= state.iteration:
                    seen._add(ex)
            sizes.append(len(merge_datasets([seen]).store))
        assert sizes == sorted(sizes)

    def test_methods_follow_config(self):
        runner = self._run()
        assert [s.method for s in runner.history] == [
            AnnotationMethod.MANUAL,
            AnnotationMethod.MANUAL,
            AnnotationMethod.CORRECT,
            AnnotationMethod.TEACH,
        ]

    def test_log_records_schema(self):
        runner = self._run(iterations=2)
        out = io.StringIO()
        write_iteration_log(runner.log_records, out)
        import json

        lines = [json.loads(line) for line in out.getvalue().splitlines()]
        for line in lines:
            assert set(line) == {
                "iteration", "method", "model_version", "rules_version",
                "n_tasks", "n_completed", "eval",
            }
        assert lines[0]["iteration"] == 0
        assert lines[0]["eval"] is not None


def test_iteration_log_record_without_eval():
    from mentionkit.loop import IterationState

    state = IterationState(
        iteration=0,
        method=AnnotationMethod.MANUAL,
        model_version=None,
        rules_version="abc",
        queue=("0:x",),
        completed=1,
    )
    record = iteration_log_record(state, None)
    assert record["eval"] is None
    assert record["n_tasks"] == 1
