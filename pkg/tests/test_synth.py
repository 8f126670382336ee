from __future__ import annotations

from mentionkit.annotation import AnnotationMethod, Decision, LabeledSpan
from mentionkit.loop import Task
from mentionkit.matcher import CandidateLevel, compile_rules, scan_sentence
from mentionkit.ner import SpanPrediction
from mentionkit.synth import (
    AMBIGUOUS_TEMPLATES,
    DATASET_ACRONYMS,
    ORG_ACRONYMS,
    generate_corpus,
    gold_index,
    make_name,
    oracle_annotator,
    stratified_seed,
)


def test_deterministic():
    assert generate_corpus(100, seed=3) == generate_corpus(100, seed=3)
    assert generate_corpus(50, seed=3) != generate_corpus(50, seed=4)


def test_gold_spans_slice_exactly():
    for item in generate_corpus(300, seed=8):
        for span in item.spans:
            mention = item.text[span.start:span.end]
            assert mention == mention.strip()
            assert mention[0].isupper()


def test_lexicons_disjoint():
    assert not set(DATASET_ACRONYMS) & set(ORG_ACRONYMS)


def test_planted_names_are_low_candidates():
    rules = compile_rules()
    for item in generate_corpus(200, seed=12):
        if item.template.startswith("p_") and "{dacro}" not in item.template:
            candidate = scan_sentence(rules, item.sentence())
            if item.spans and len(item.text[item.spans[0].start:item.spans[0].end].split()) >= 3:
                assert candidate is not None
                assert candidate.level >= CandidateLevel.LOW


def test_make_name_shapes():
    import random

    rng = random.Random(1)
    for _ in range(50):
        name = make_name(rng)
        words = name.split(" (")[0].split()
        assert 3 <= len(words) <= 5
        assert all(w[0].isupper() for w in words)


def test_stratified_seed_covers_templates():
    corpus = generate_corpus(400, seed=5)
    seed_items = stratified_seed(corpus)
    templates = {item.template for item in seed_items}
    assert templates == {item.template for item in corpus}
    assert len(seed_items) == len(templates)


def test_ambiguous_templates_balanced():
    corpus = generate_corpus(4000, seed=6)
    ambiguous = [c for c in corpus if c.template.startswith("x_")]
    assert {c.template for c in ambiguous} == {tid for tid, _ in AMBIGUOUS_TEMPLATES}
    positives = sum(1 for c in ambiguous if c.spans)
    assert 0.4 < positives / len(ambiguous) < 0.6


def _task(item, method, proposed):
    candidate = scan_sentence(compile_rules(), item.sentence())
    return Task(
        task_id="t",
        candidate=candidate,
        proposed_spans=tuple(proposed),
        method=method,
        iteration=0,
    )


def test_oracle_teach_accepts_exact_proposals():
    corpus = generate_corpus(100, seed=9)
    annotate = oracle_annotator(gold_index(corpus))
    positive = next(c for c in corpus if c.spans and not c.template.startswith("x_"))
    proposals = [SpanPrediction(span=s, confidence=0.9) for s in positive.spans]
    decision, _ = annotate(_task(positive, AnnotationMethod.TEACH, proposals))
    assert decision is Decision.ACCEPT
    wrong = [SpanPrediction(span=LabeledSpan(0, 2), confidence=0.9)]
    decision, _ = annotate(_task(positive, AnnotationMethod.TEACH, wrong))
    assert decision is Decision.REJECT


def test_oracle_manual_returns_gold():
    corpus = generate_corpus(100, seed=9)
    annotate = oracle_annotator(gold_index(corpus))
    positive = next(c for c in corpus if c.spans and not c.template.startswith("x_"))
    decision, spans = annotate(_task(positive, AnnotationMethod.MANUAL, []))
    assert decision is Decision.ACCEPT
    assert tuple(spans) == positive.spans
