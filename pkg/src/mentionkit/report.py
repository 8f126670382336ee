"""Render iteration logs and experiment results as CSV plus figures.

Figures are written as PNG files next to the delimited output so a loop run
can be inspected without re-running anything: span-level quality per
iteration, annotation throughput, and label-efficiency curves for sampling
experiments.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from statistics import median
from typing import Iterable

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .errors import MentionKitError


def load_jsonl(path: str | Path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise MentionKitError(f"{path} line {line_no}: invalid JSON: {exc.msg}") from exc
    return records


def render_iteration_report(records: list[dict], out_dir: str | Path) -> list[Path]:
    """Write ``iterations.csv`` plus quality/throughput figures for a loop log."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    csv_path = out / "iterations.csv"
    fields = (
        "iteration", "method", "model_version", "rules_version",
        "n_tasks", "n_completed", "precision", "recall", "f1",
    )
    with open(csv_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=fields)
        writer.writeheader()
        for record in records:
            eval_part = record.get("eval") or {}
            writer.writerow(
                {
                    "iteration": record.get("iteration"),
                    "method": record.get("method"),
                    "model_version": record.get("model_version"),
                    "rules_version": record.get("rules_version"),
                    "n_tasks": record.get("n_tasks"),
                    "n_completed": record.get("n_completed"),
                    "precision": eval_part.get("precision"),
                    "recall": eval_part.get("recall"),
                    "f1": eval_part.get("f1"),
                }
            )
    written.append(csv_path)

    evaluated = [r for r in records if r.get("eval")]
    if evaluated:
        fig, ax = plt.subplots(figsize=(6, 4))
        iterations = [r["iteration"] for r in evaluated]
        for metric in ("precision", "recall", "f1"):
            ax.plot(
                iterations,
                [r["eval"][metric] for r in evaluated],
                marker="o",
                label=metric,
            )
        ax.set_xlabel("iteration")
        ax.set_ylabel("score")
        ax.set_ylim(0.0, 1.05)
        ax.set_title("Span quality per iteration")
        ax.legend()
        fig.tight_layout()
        path = out / "quality_by_iteration.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)

    if records:
        fig, ax = plt.subplots(figsize=(6, 4))
        iterations = [r["iteration"] for r in records]
        completed = [r.get("n_completed", 0) for r in records]
        cumulative = []
        total = 0
        for value in completed:
            total += value or 0
            cumulative.append(total)
        ax.bar(iterations, completed, label="annotations this iteration")
        ax.plot(iterations, cumulative, marker="o", color="C1", label="cumulative")
        ax.set_xlabel("iteration")
        ax.set_ylabel("annotations")
        ax.set_title("Annotation throughput")
        ax.legend()
        fig.tight_layout()
        path = out / "annotation_progress.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)

    return written


def render_experiment_report(rows: list[dict], out_dir: str | Path) -> list[Path]:
    """Write label-efficiency curves for sampling-strategy experiment rows.

    Rows carry {"strategy", "seed", "labels", "f1"}.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    csv_path = out / "label_efficiency.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=("strategy", "seed", "labels", "f1"))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k) for k in ("strategy", "seed", "labels", "f1")})
    written.append(csv_path)

    strategies = sorted({row["strategy"] for row in rows})
    if strategies:
        fig, ax = plt.subplots(figsize=(6, 4))
        for idx, strategy in enumerate(strategies):
            color = f"C{idx}"
            by_seed: dict[int, list[tuple[int, float]]] = {}
            for row in rows:
                if row["strategy"] == strategy:
                    by_seed.setdefault(row["seed"], []).append((row["labels"], row["f1"]))
            for seed, curve in by_seed.items():
                curve.sort()
                ax.plot(
                    [p[0] for p in curve],
                    [p[1] for p in curve],
                    color=color,
                    alpha=0.25,
                    linewidth=1,
                )
            medians = _median_curve(by_seed.values())
            if medians:
                ax.plot(
                    [p[0] for p in medians],
                    [p[1] for p in medians],
                    color=color,
                    linewidth=2,
                    label=strategy,
                )
        ax.set_xlabel("labels used")
        ax.set_ylabel("holdout F1")
        ax.set_title("Label efficiency by sampling strategy")
        ax.legend()
        fig.tight_layout()
        path = out / "label_efficiency.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)

    return written


def _median_curve(curves: Iterable[list[tuple[int, float]]]) -> list[tuple[int, float]]:
    """Median F1 at each label count, carrying each curve's last value forward."""
    curves = [sorted(curve) for curve in curves if curve]
    if not curves:
        return []
    xs = sorted({x for curve in curves for x, _ in curve})
    out: list[tuple[int, float]] = []
    for x in xs:
        values = []
        for curve in curves:
            below = [f1 for labels, f1 in curve if labels <= x]
            if below:
                values.append(below[-1])
        if values:
            out.append((x, median(values)))
    return out
