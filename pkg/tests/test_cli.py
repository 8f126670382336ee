from __future__ import annotations

import io
import json

import pytest

from mentionkit.annotation import export_jsonl
from mentionkit.cli import main
from mentionkit.synth import generate_corpus, manual_store

from conftest import ANES_TEXT


@pytest.fixture
def anes_file(tmp_path):
    path = tmp_path / "paper.txt"
    path.write_text(ANES_TEXT, encoding="utf-8")
    return path


@pytest.fixture
def store_file(tmp_path):
    corpus = generate_corpus(60, seed=101)
    store = manual_store(corpus[:40])
    path = tmp_path / "store.jsonl"
    with open(path, "w", encoding="utf-8") as handle:
        export_jsonl(store, handle)
    return path


@pytest.fixture
def gold_file(tmp_path):
    corpus = generate_corpus(80, seed=101)
    store = manual_store(corpus[40:60])
    path = tmp_path / "gold.jsonl"
    with open(path, "w", encoding="utf-8") as handle:
        export_jsonl(store, handle)
    return path


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestIngest:
    def test_manifest_to_stdout(self, capsys, anes_file):
        code, out, err = run(capsys, "ingest", str(anes_file), "--format", "text")
        assert code == 0
        record = json.loads(out.strip())
        assert record["doc_id"] == "paper"
        assert record["source"] == "PLAIN_TEXT"
        assert record["n_sentences"] == 1
        assert "ingested 1" in err

    def test_s2orc_skips_reported_on_stderr(self, capsys, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(
            '{"paper_id":"p1","body_text":[{"text":"We use data."}]}\nnot json\n',
            encoding="utf-8",
        )
        code, out, err = run(capsys, "ingest", str(path), "--format", "s2orc")
        assert code == 0
        assert "skip line 2" in err
        assert json.loads(out.strip())["doc_id"] == "p1"

    def test_missing_file_is_data_error(self, capsys, tmp_path):
        code, _, err = run(capsys, "ingest", str(tmp_path / "nope.txt"))
        assert code == 2
        assert "error" in err


class TestExtract:
    def test_worked_example(self, capsys, anes_file):
        code, out, _ = run(
            capsys, "extract", str(anes_file), "--format", "text", "--min-level", "HIGH"
        )
        assert code == 0
        lines = out.strip().splitlines()
        assert len(lines) == 1
        record = json.loads(lines[0])
        assert record["level"] == "HIGH"
        suggested = record["suggested"]
        assert len(suggested) == 1
        text = record["text"][suggested[0]["start"]:suggested[0]["end"]]
        assert text == "American National Election Survey (ANES)"

    def test_usage_error_exit_1(self, capsys, anes_file):
        code, _, err = run(capsys, "extract", str(anes_file), "--min-level", "BOGUS")
        assert code == 1
        assert "usage error" in err


class TestTrainEval:
    def test_train_deterministic_artifacts(self, capsys, tmp_path, store_file):
        model_a = tmp_path / "a.model"
        model_b = tmp_path / "b.model"
        code_a, out_a, _ = run(
            capsys, "train", "--store", str(store_file), "--epochs", "3",
            "--seed", "7", "--out", str(model_a),
        )
        code_b, out_b, _ = run(
            capsys, "train", "--store", str(store_file), "--epochs", "3",
            "--seed", "7", "--out", str(model_b),
        )
        assert code_a == code_b == 0
        assert model_a.read_bytes() == model_b.read_bytes()
        assert json.loads(out_a)["version"] == json.loads(out_b)["version"]

    def test_eval_perfect_fixture(self, capsys, tmp_path, store_file):
        model = tmp_path / "m.model"
        run(capsys, "train", "--store", str(store_file), "--out", str(model))
        # predictions == gold when evaluating on the training store itself
        code, out, err = run(
            capsys, "eval", "--model", str(model), "--gold", str(store_file)
        )
        assert code == 0
        report = json.loads(out.strip())
        assert report["precision"] == report["recall"] == report["f1"] == 1.0
        assert "P=1.000 R=1.000 F1=1.000" in err

    def test_eval_missing_model_is_data_error(self, capsys, tmp_path, store_file):
        code, _, _ = run(
            capsys, "eval", "--model", str(tmp_path / "none.model"), "--gold", str(store_file)
        )
        assert code == 2


class TestPatternsExport:
    def test_patterns_jsonl(self, capsys, store_file):
        code, out, err = run(capsys, "patterns", "--store", str(store_file), "--min-count", "1")
        assert code == 0
        rules = [json.loads(line) for line in out.strip().splitlines()]
        assert rules
        for rule in rules:
            assert rule["origin"] == "LEARNED"
            assert rule["level"] == "MID"
        assert any(r["rule_id"].startswith("learned_shape") for r in rules)

    def test_export_jsonl_round_trip(self, capsys, store_file, tmp_path):
        code, out, _ = run(capsys, "export", "--store", str(store_file), "--format", "jsonl")
        assert code == 0
        assert out == store_file.read_text(encoding="utf-8")

    def test_export_conll_reparses(self, capsys, store_file):
        from mentionkit.annotation import read_conll

        code, out, _ = run(capsys, "export", "--store", str(store_file), "--format", "conll")
        assert code == 0
        sentences = read_conll(out)
        assert sentences
        for tokens, tags in sentences:
            assert len(tokens) == len(tags)
            assert set(tags) <= {"O", "B-DATASET", "I-DATASET"}


class TestReport:
    def test_iteration_report_files(self, capsys, tmp_path):
        log = tmp_path / "iterations.jsonl"
        records = [
            {
                "iteration": i,
                "method": "MANUAL",
                "model_version": f"asp-{i}",
                "rules_version": "r",
                "n_tasks": 40,
                "n_completed": 40,
                "eval": {"precision": 0.7 + i / 10, "recall": 0.8, "f1": 0.75 + i / 10,
                         "true_positives": 1, "false_positives": 1, "false_negatives": 1},
            }
            for i in range(3)
        ]
        log.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")
        out_dir = tmp_path / "report"
        code, _, err = run(capsys, "report", "--log", str(log), "--out-dir", str(out_dir))
        assert code == 0
        assert (out_dir / "iterations.csv").exists()
        assert (out_dir / "quality_by_iteration.png").stat().st_size > 0
        assert (out_dir / "annotation_progress.png").stat().st_size > 0
        csv_text = (out_dir / "iterations.csv").read_text()
        assert csv_text.splitlines()[0].startswith("iteration,method")

    def test_experiment_report_files(self, capsys, tmp_path):
        rows = []
        for strategy in ("uncertainty", "random"):
            for seed in range(2):
                for i, labels in enumerate((0, 10, 20)):
                    rows.append(
                        {"strategy": strategy, "seed": seed, "labels": labels, "f1": 0.5 + i / 10}
                    )
        path = tmp_path / "exp.jsonl"
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
        out_dir = tmp_path / "report"
        code, _, _ = run(capsys, "report", "--experiment", str(path), "--out-dir", str(out_dir))
        assert code == 0
        assert (out_dir / "label_efficiency.csv").exists()
        assert (out_dir / "label_efficiency.png").stat().st_size > 0

    def test_report_needs_an_input(self, capsys, tmp_path):
        code, _, err = run(capsys, "report", "--out-dir", str(tmp_path))
        assert code == 1
        assert "usage error" in err


def test_unknown_command_is_usage_error(capsys):
    code, _, err = run(capsys, "frobnicate")
    assert code == 1
    assert "usage error" in err
