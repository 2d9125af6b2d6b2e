"""Five-class and binary evaluation metrics plus traffic-value formulas.

All classification metrics are reported as percentages (0..100) with two
decimal places in rendered tables. Classes with zero support contribute
an F1 of 0 to the macro average and zero weight to the weighted average.
Binary metrics flag, rather than invent, values whose denominator is
empty.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from relgrade.corpus import SessionLog
from relgrade.errors import LengthMismatch, ZeroUV
from relgrade.model import Checkpoint, batch_predict, encode_pair
from relgrade.schema import (
    BinaryLabel,
    Dataset,
    DEFAULT_RELEVANT,
    Label,
    ORDERED_LABELS,
    collapse_to_binary,
)

_LABEL_POS = {label: i for i, label in enumerate(ORDERED_LABELS)}


@dataclass(frozen=True)
class ConfusionMatrix:
    """5x5 count grid indexed (true label, predicted label)."""

    counts: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        grid = np.asarray(self.counts)
        if grid.shape != (5, 5):
            raise ValueError("confusion matrix must be 5x5")
        if (grid < 0).any():
            raise ValueError("confusion matrix counts must be non-negative")
        object.__setattr__(
            self, "counts", tuple(tuple(int(x) for x in row) for row in grid)
        )

    @property
    def grid(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=np.int64)

    @property
    def total(self) -> int:
        return int(self.grid.sum())

    def count(self, truth: Label, pred: Label) -> int:
        return self.counts[_LABEL_POS[truth]][_LABEL_POS[pred]]


def confusion(truths: Sequence[Label], preds: Sequence[Label]) -> ConfusionMatrix:
    """Count (truth, prediction) pairs.

    Raises LengthMismatch on unequal lengths and ValueError when empty.
    """
    if len(truths) != len(preds):
        raise LengthMismatch(
            f"{len(truths)} truths vs {len(preds)} predictions"
        )
    if len(truths) == 0:
        raise ValueError("cannot build a confusion matrix from no pairs")
    grid = np.zeros((5, 5), dtype=np.int64)
    for t, p in zip(truths, preds):
        grid[_LABEL_POS[t], _LABEL_POS[p]] += 1
    return ConfusionMatrix(tuple(tuple(int(x) for x in row) for row in grid))


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int


def per_class_scores(m: ConfusionMatrix) -> dict[Label, ClassScores]:
    """Per-class precision/recall/F1 as percentages; 0 where undefined."""
    grid = m.grid.astype(np.float64)
    diag = np.diag(grid)
    row = grid.sum(axis=1)
    col = grid.sum(axis=0)
    out = {}
    for label, i in _LABEL_POS.items():
        precision = diag[i] / col[i] if col[i] > 0 else 0.0
        recall = diag[i] / row[i] if row[i] > 0 else 0.0
        f1 = (
            2 * precision * recall / (precision + recall)
            if precision + recall > 0
            else 0.0
        )
        out[label] = ClassScores(
            precision=100.0 * precision,
            recall=100.0 * recall,
            f1=100.0 * f1,
            support=int(row[i]),
        )
    return out


def five_class_metrics(m: ConfusionMatrix) -> tuple[float, float, float]:
    """(macro F1, weighted F1, accuracy), all as percentages."""
    if m.total == 0:
        raise ValueError("empty confusion matrix")
    scores = per_class_scores(m)
    f1s = np.array([scores[label].f1 for label in ORDERED_LABELS])
    supports = np.array([scores[label].support for label in ORDERED_LABELS])
    macro = float(f1s.mean())
    weighted = float((f1s * supports).sum() / supports.sum())
    accuracy = float(100.0 * np.trace(m.grid) / m.total)
    return macro, weighted, accuracy


@dataclass(frozen=True)
class BinaryMetrics:
    """Relevant-vs-not metrics; None where a denominator was empty."""

    precision: float | None
    recall: float | None
    f1: float | None
    undefined: tuple[str, ...] = ()


def binary_metrics(
    truths: Sequence[Label],
    preds: Sequence[Label],
    relevant: frozenset[Label] = DEFAULT_RELEVANT,
) -> BinaryMetrics:
    """Precision/recall/F1 after collapsing both sides to binary."""
    if len(truths) != len(preds):
        raise LengthMismatch(f"{len(truths)} truths vs {len(preds)} predictions")
    if len(truths) == 0:
        raise ValueError("binary metrics need at least one pair")
    t_bin = [collapse_to_binary(t, relevant) for t in truths]
    p_bin = [collapse_to_binary(p, relevant) for p in preds]
    tp = sum(
        1
        for t, p in zip(t_bin, p_bin)
        if t is BinaryLabel.RELEVANT and p is BinaryLabel.RELEVANT
    )
    fp = sum(
        1
        for t, p in zip(t_bin, p_bin)
        if t is BinaryLabel.NOT_RELEVANT and p is BinaryLabel.RELEVANT
    )
    fn = sum(
        1
        for t, p in zip(t_bin, p_bin)
        if t is BinaryLabel.RELEVANT and p is BinaryLabel.NOT_RELEVANT
    )
    undefined: list[str] = []
    precision: float | None
    recall: float | None
    if tp + fp == 0:
        precision = None
        undefined.append("precision")
    else:
        precision = 100.0 * tp / (tp + fp)
    if tp + fn == 0:
        recall = None
        undefined.append("recall")
    else:
        recall = 100.0 * tp / (tp + fn)
    f1: float | None
    if precision is None or recall is None:
        f1 = None
        undefined.append("f1")
    elif precision + recall == 0:
        f1 = 0.0
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return BinaryMetrics(
        precision=precision, recall=recall, f1=f1, undefined=tuple(undefined)
    )


@dataclass(frozen=True)
class MetricsReport:
    """Everything the comparison table shows for one checkpoint."""

    macro_f1: float
    weighted_f1: float
    accuracy: float
    binary: BinaryMetrics
    per_class: dict[Label, ClassScores]

    def to_json(self) -> dict:
        return {
            "macro_f1": self.macro_f1,
            "weighted_f1": self.weighted_f1,
            "accuracy": self.accuracy,
            "binary": {
                "precision": self.binary.precision,
                "recall": self.binary.recall,
                "f1": self.binary.f1,
                "undefined": list(self.binary.undefined),
            },
            "per_class": {
                label.value: {
                    "precision": s.precision,
                    "recall": s.recall,
                    "f1": s.f1,
                    "support": s.support,
                }
                for label, s in self.per_class.items()
            },
        }


def build_report(truths: Sequence[Label], preds: Sequence[Label]) -> MetricsReport:
    m = confusion(truths, preds)
    macro, weighted, accuracy = five_class_metrics(m)
    return MetricsReport(
        macro_f1=macro,
        weighted_f1=weighted,
        accuracy=accuracy,
        binary=binary_metrics(truths, preds),
        per_class=per_class_scores(m),
    )


@dataclass(frozen=True)
class BusinessMetrics:
    uv_value: float
    ucvr: float
    uctr: float


def business_metrics(log: SessionLog) -> BusinessMetrics:
    """Spend per visitor, orderlines per visitor, clicks per visitor."""
    uv = log.unique_visitors
    if uv == 0:
        raise ZeroUV("session log has no users")
    gmv = log.total_gmv_cents() / 100.0
    return BusinessMetrics(
        uv_value=gmv / uv,
        ucvr=log.total_orderlines() / uv,
        uctr=log.total_clicks() / uv,
    )


# ---------------------------------------------------------------------------
# Stage comparison


@dataclass(frozen=True)
class StageReport:
    rows: tuple[tuple[str, MetricsReport], ...]

    def to_json(self) -> dict:
        return {
            "rows": [
                {"stage_tag": tag, "metrics": rep.to_json()} for tag, rep in self.rows
            ]
        }


def stage_report(checkpoints: Sequence[Checkpoint], test: Dataset) -> StageReport:
    """One metrics row per checkpoint, evaluated on the same test set."""
    if len(checkpoints) == 0:
        raise ValueError("at least one checkpoint is required")
    truths = [ex.label for ex in test.examples]
    rows = []
    for c in checkpoints:
        inputs = [
            encode_pair(c.tokenizer, ex.query, ex.title)
            for ex in test.examples
        ]
        preds = batch_predict(c, inputs)
        rows.append((c.stage_tag, build_report(truths, preds)))
    return StageReport(rows=tuple(rows))


def _fmt(value: float | None) -> str:
    return "  n/a" if value is None else f"{value:6.2f}"


def render_table(report: StageReport) -> str:
    """Aligned, human-readable comparison table (percentages, 2 decimals)."""
    header = (
        f"{'stage':<16} {'macro_f1':>8} {'wtd_f1':>8} {'acc':>8}"
        f" {'bin_p':>8} {'bin_r':>8} {'bin_f1':>8}"
    )
    lines = [header, "-" * len(header)]
    for tag, rep in report.rows:
        lines.append(
            f"{tag:<16} {rep.macro_f1:8.2f} {rep.weighted_f1:8.2f}"
            f" {rep.accuracy:8.2f} {_fmt(rep.binary.precision):>8}"
            f" {_fmt(rep.binary.recall):>8} {_fmt(rep.binary.f1):>8}"
        )
    return "\n".join(lines)


def write_stage_report(report: StageReport, path, seed: int = 0,
                       config_hash: str = "") -> None:
    path = Path(path)
    payload = {"seed": seed, "config_hash": config_hash, **report.to_json()}
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
