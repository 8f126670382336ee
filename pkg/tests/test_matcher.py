from __future__ import annotations

import io
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mentionkit.errors import RuleError
from mentionkit.matcher import (
    CandidateLevel,
    PatternRule,
    RuleOrigin,
    candidate_from_record,
    candidate_to_record,
    compile_rules,
    extract_candidates,
    load_rules,
    save_rules,
    scan_sentence,
    suggest_spans,
)

from conftest import ANES_SPAN, hand_fixture, make_sentence, random_sentence
from oracles import oracle_scan


def scan(rules, text):
    return scan_sentence(rules, make_sentence(text))


class TestCompileRules:
    def test_builtin_count(self):
        assert len(compile_rules()) == 14

    def test_extra_rule_added(self):
        extra = PatternRule("r1", CandidateLevel.MID, r"\bfoo\b", False, RuleOrigin.LEARNED)
        assert len(compile_rules([extra])) == 15

    def test_bad_regex_names_rule(self):
        bad = PatternRule("r_bad", CandidateLevel.MID, "(", False, RuleOrigin.LEARNED)
        with pytest.raises(RuleError, match="r_bad"):
            compile_rules([bad])

    def test_level_split(self):
        rules = compile_rules()
        by_level = {}
        for r in rules.pattern_rules:
            by_level.setdefault(r.level, []).append(r)
        assert len(by_level[CandidateLevel.HIGH]) == 12
        assert len(by_level[CandidateLevel.MID]) == 1
        assert len(by_level[CandidateLevel.LOW]) == 1


class TestScanSentence:
    def test_worked_example(self, rules, anes_sentence):
        candidate = scan_sentence(rules, anes_sentence)
        assert candidate is not None
        assert candidate.level is CandidateLevel.HIGH
        found = {(m.rule_id, m.text) for m in candidate.matches}
        assert ("high_survey", "Survey") in found
        assert ("mid_acronym", "ANES") in found
        assert ("low_title_seq", "American National Election Survey") in found

    def test_no_match(self, rules):
        assert scan(rules, "the weather was pleasant yesterday.") is None

    def test_mid_only(self, rules):
        candidate = scan(rules, "Gross output tracks GDP closely.")
        assert candidate.level is CandidateLevel.MID
        assert [(m.rule_id, m.text) for m in candidate.matches] == [("mid_acronym", "GDP")]

    def test_high_case_insensitive(self, rules):
        candidate = scan(rules, "We rely on survey data.")
        assert candidate.level is CandidateLevel.HIGH
        texts = {m.text for m in candidate.matches}
        assert {"survey", "data"} <= texts

    def test_word_boundaries_keep_rules_distinct(self, rules):
        candidate = scan(rules, "the datasets differ")
        ids = {m.rule_id for m in candidate.matches}
        assert "high_dataset_database" in ids
        assert "high_data" not in ids  # no boundary between "data" and "sets"

    def test_match_offsets_are_slices(self, rules, anes_sentence):
        candidate = scan_sentence(rules, anes_sentence)
        for m in candidate.matches:
            assert anes_sentence.text[m.start:m.end] == m.text


class TestSuggestSpans:
    def test_merged_worked_example(self, rules, anes_sentence):
        candidate = scan_sentence(rules, anes_sentence)
        assert [s.text for s in candidate.suggested_spans] == [
            "American National Election Survey (ANES)"
        ]
        span = candidate.suggested_spans[0]
        assert (span.start, span.end) == ANES_SPAN

    def test_high_only_sentence_suggests_nothing(self, rules):
        candidate = scan(rules, "we collect more data here")
        assert candidate is not None
        assert candidate.suggested_spans == ()

    def test_standalone_acronyms(self, rules):
        candidate = scan(rules, "Results use PSID and CPS files.")
        assert [s.text for s in candidate.suggested_spans] == ["PSID", "CPS"]

    def test_low_without_acronym(self, rules):
        candidate = scan(rules, "We used the General Social Survey data.")
        assert [s.text for s in candidate.suggested_spans] == ["General Social Survey"]

    def test_adjacent_acronym_without_parens_not_standalone(self, rules):
        candidate = scan(rules, "waves of the American National Election Survey ANES here")
        assert [s.text for s in candidate.suggested_spans] == [
            "American National Election Survey"
        ]

    def test_merge_requires_closing_paren(self, rules):
        # No closing paren: no merge, and the acronym is still adjacent to
        # the title run, so it is absorbed rather than suggested standalone.
        candidate = scan(rules, "the General Social Survey (GSS data")
        assert [s.text for s in candidate.suggested_spans] == ["General Social Survey"]

    def test_suggest_spans_op_matches_field(self, rules, anes_sentence):
        candidate = scan_sentence(rules, anes_sentence)
        assert tuple(suggest_spans(candidate)) == candidate.suggested_spans

    @settings(max_examples=150, deadline=None)
    @given(st.integers(min_value=0, max_value=10**9))
    def test_non_overlapping_within_bounds(self, rules, seed):
        text = random_sentence(random.Random(seed))
        candidate = scan(rules, text)
        if candidate is None:
            return
        prev_end = 0
        for span in candidate.suggested_spans:
            assert 0 <= span.start < span.end <= len(text)
            assert span.start >= prev_end
            prev_end = span.end


class TestExtractCandidates:
    def test_min_level_filters(self, rules, anes_sentence):
        gdp = make_sentence("Gross output tracks GDP closely.", sent_index=1)
        out = list(extract_candidates(rules, [anes_sentence, gdp], CandidateLevel.HIGH))
        assert [c.sentence.sent_index for c in out] == [0]

    def test_low_passes_everything(self, rules, anes_sentence):
        gdp = make_sentence("Gross output tracks GDP closely.", sent_index=1)
        out = list(extract_candidates(rules, [anes_sentence, gdp], CandidateLevel.LOW))
        assert len(out) == 2

    def test_empty_stream(self, rules):
        assert list(extract_candidates(rules, [], CandidateLevel.LOW)) == []

    def test_order_preserved(self, rules):
        sentences = [
            make_sentence(f"Sentence {i} uses data.", sent_index=i) for i in range(20)
        ]
        out = list(extract_candidates(rules, sentences, CandidateLevel.LOW))
        assert [c.sentence.sent_index for c in out] == list(range(20))

    def test_adding_rules_is_monotone(self, rules):
        sentences = [make_sentence(random_sentence(random.Random(i)), sent_index=i) for i in range(60)]
        base = {c.sentence.sent_index for c in extract_candidates(rules, sentences, CandidateLevel.LOW)}
        extra = PatternRule("r_extra", CandidateLevel.MID, r"\bwaves\b", False, RuleOrigin.LEARNED)
        grown = compile_rules([extra])
        bigger = {c.sentence.sent_index for c in extract_candidates(grown, sentences, CandidateLevel.LOW)}
        assert base <= bigger


class TestOracleEquivalence:
    def _triples(self, rules, text):
        candidate = scan(rules, text)
        if candidate is None:
            return set()
        return {(m.rule_id, m.start, m.end) for m in candidate.matches}

    def test_hand_fixture(self, rules):
        for text in hand_fixture():
            assert self._triples(rules, text) == oracle_scan(text), text

    def test_random_sentences(self, rules):
        rng = random.Random(20240817)
        for _ in range(300):
            text = random_sentence(rng)
            assert self._triples(rules, text) == oracle_scan(text), text


class TestRulesFile:
    def test_round_trip(self, tmp_path):
        learned = [
            PatternRule("learned_lit_1", CandidateLevel.MID, r"\bANES\b", False, RuleOrigin.LEARNED),
            PatternRule("learned_shape_2", CandidateLevel.MID, r"[A-Z]{2,}", True, RuleOrigin.LEARNED),
        ]
        out = io.StringIO()
        save_rules(learned, out)
        path = tmp_path / "rules.jsonl"
        path.write_text(out.getvalue(), encoding="utf-8")
        assert load_rules(path) == learned

    def test_load_malformed(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"rule_id": "x"}\n', encoding="utf-8")
        with pytest.raises(RuleError, match="line 1"):
            load_rules(path)


def test_candidate_record_round_trip(rules, anes_sentence):
    candidate = scan_sentence(rules, anes_sentence)
    record = candidate_to_record(candidate)
    assert record["level"] == "HIGH"
    assert record["suggested"] == [{"start": ANES_SPAN[0], "end": ANES_SPAN[1]}]
    back = candidate_from_record(record)
    assert back.level is CandidateLevel.HIGH
    assert [s.text for s in back.suggested_spans] == [
        "American National Election Survey (ANES)"
    ]
