"""Exact ROC-AUC / PR-AUC on prediction files and run-level summaries.

ROC-AUC is the tie-corrected Mann-Whitney statistic via average rank
sums (O(n log n)). PR-AUC is average precision (step-wise, not
trapezoidal): sort by score descending with ties broken by example_id,
then mean precision@k over positive ranks. Confidence intervals are
Student-t over per-run metric values.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats as _scipy_stats

from .errors import (
    MalformedPredictionFileError,
    NoPositivesError,
    SingleClassError,
    TooFewRunsError,
)


@dataclass(frozen=True, slots=True)
class PredictionRecord:
    example_id: str
    score: float
    label: int


@dataclass
class PredictionSet:
    records: List[PredictionRecord]
    model: str = ""
    task: str = ""
    run: int = 0

    def __post_init__(self):
        seen = set()
        for rec in self.records:
            if rec.example_id in seen:
                raise MalformedPredictionFileError(f"duplicate example_id {rec.example_id!r}")
            seen.add(rec.example_id)
            if not math.isfinite(rec.score):
                raise MalformedPredictionFileError(
                    f"non-finite score for example {rec.example_id!r}"
                )
            if rec.label not in (0, 1):
                raise MalformedPredictionFileError(
                    f"label must be 0 or 1 for example {rec.example_id!r}"
                )

    @classmethod
    def from_arrays(cls, example_ids, scores, labels, **kw) -> "PredictionSet":
        records = [
            PredictionRecord(str(e), float(s), int(l))
            for e, s, l in zip(example_ids, scores, labels)
        ]
        return cls(records=records, **kw)

    @property
    def n_pos(self) -> int:
        return sum(r.label for r in self.records)

    @property
    def n_neg(self) -> int:
        return len(self.records) - self.n_pos

    @property
    def prevalence(self) -> float:
        return self.n_pos / len(self.records) if self.records else float("nan")


def roc_auc(pred: PredictionSet) -> float:
    """P(random positive outranks random negative), ties counted half."""
    labels = np.array([r.label for r in pred.records], dtype=np.int64)
    scores = np.array([r.score for r in pred.records], dtype=np.float64)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("ROC-AUC needs at least one positive and one negative")

    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    ranks = np.empty(labels.size, dtype=np.float64)
    i = 0
    while i < labels.size:
        j = i
        while j + 1 < labels.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        # 1-based average rank for the tie group [i, j]
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum_pos = float(ranks[labels == 1].sum())
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def pr_auc(pred: PredictionSet) -> float:
    """Average precision over the deterministic (score desc, id asc) order."""
    if pred.n_pos == 0:
        raise NoPositivesError("PR-AUC needs at least one positive")
    ordered = sorted(pred.records, key=lambda r: (-r.score, r.example_id))
    cum_pos = 0
    total = 0.0
    for k, rec in enumerate(ordered, start=1):
        if rec.label == 1:
            cum_pos += 1
            total += cum_pos / k
    return total / cum_pos


@dataclass(frozen=True)
class MetricSummary:
    metric: str
    values: Tuple[float, ...]
    mean: float
    ci_half_width: Optional[float]
    level: float = 0.95


def mean_ci(values: Sequence[float], level: float = 0.95, metric: str = "") -> MetricSummary:
    """Student-t mean +/- t_{(1+level)/2, n-1} * s / sqrt(n)."""
    values = tuple(float(v) for v in values)
    if len(values) < 2:
        raise TooFewRunsError("need at least two runs for a confidence interval")
    arr = np.array(values)
    mean = float(arr.mean())
    s = float(arr.std(ddof=1))
    t = float(_scipy_stats.t.ppf(0.5 + level / 2.0, len(values) - 1))
    return MetricSummary(
        metric=metric, values=values, mean=mean,
        ci_half_width=t * s / math.sqrt(len(values)), level=level,
    )


def single_run_summary(value: float, metric: str = "") -> MetricSummary:
    """Mean-only summary for a single run (half-width omitted)."""
    return MetricSummary(metric=metric, values=(float(value),), mean=float(value),
                         ci_half_width=None)


_FILENAME_RE = re.compile(r"^(?P<model>.+?)__(?P<task>.+?)__run(?P<run>\d+)\.csv$")


def parse_prediction_filename(name: str) -> Tuple[str, str, int]:
    m = _FILENAME_RE.match(name)
    if m is None:
        raise MalformedPredictionFileError(
            f"prediction file name {name!r} does not match '<model>__<task>__run<k>.csv'"
        )
    return m.group("model"), m.group("task"), int(m.group("run"))


def load_prediction_file(path) -> PredictionSet:
    """Read a prediction CSV (header ``example_id,score,label``)."""
    path = Path(path)
    try:
        model, task, run = parse_prediction_filename(path.name)
    except MalformedPredictionFileError:
        model, task, run = path.stem, "", 0
    records: List[PredictionRecord] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:3]] != ["example_id", "score", "label"]:
            raise MalformedPredictionFileError(
                f"{path}:1: expected header 'example_id,score,label'"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 3:
                raise MalformedPredictionFileError(f"{path}:{lineno}: expected three columns")
            try:
                score = float(row[1])
            except ValueError:
                raise MalformedPredictionFileError(
                    f"{path}:{lineno}: unparseable score {row[1]!r}"
                ) from None
            if row[2].strip() not in ("0", "1"):
                raise MalformedPredictionFileError(
                    f"{path}:{lineno}: label must be 0 or 1, got {row[2]!r}"
                )
            records.append(PredictionRecord(row[0].strip(), score, int(row[2])))
    try:
        return PredictionSet(records=records, model=model, task=task, run=run)
    except MalformedPredictionFileError as exc:
        raise MalformedPredictionFileError(f"{path}: {exc}") from None


def write_prediction_file(pred: PredictionSet, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["example_id", "score", "label"])
        for rec in pred.records:
            writer.writerow([rec.example_id, repr(rec.score), rec.label])


@dataclass(frozen=True)
class ReportRow:
    task: str
    model: str
    pr: MetricSummary
    roc: MetricSummary


def _fmt(summary: MetricSummary) -> str:
    # rendered as percentages, three decimals, Table-2 style
    if summary.ci_half_width is None:
        return f"{100 * summary.mean:.3f}"
    return f"{100 * summary.mean:.3f} ± {100 * summary.ci_half_width:.3f}"


def compare_report(rows: List[ReportRow]) -> Tuple[str, str]:
    """Render (plain-text table, csv text); best model per task flagged."""
    if not rows:
        raise TooFewRunsError("no summaries to report")
    by_task: Dict[str, List[ReportRow]] = {}
    for row in rows:
        by_task.setdefault(row.task, []).append(row)

    text_lines: List[str] = []
    csv_lines = ["task,model,pr_auc_mean,pr_auc_hw,roc_auc_mean,roc_auc_hw,n_runs,"
                 "pr_auc_best,roc_auc_best"]
    for task in sorted(by_task):
        group = sorted(by_task[task], key=lambda r: r.model)
        best_pr = max(r.pr.mean for r in group)
        best_roc = max(r.roc.mean for r in group)
        text_lines.append(f"Task: {task}")
        cells = []
        for row in group:
            pr_s = _fmt(row.pr) + (" *" if row.pr.mean == best_pr else "")
            roc_s = _fmt(row.roc) + (" *" if row.roc.mean == best_roc else "")
            cells.append((row.model, pr_s, roc_s))
        w0 = max(len("Model"), max(len(c[0]) for c in cells))
        w1 = max(len("PR-AUC"), max(len(c[1]) for c in cells))
        w2 = max(len("ROC-AUC"), max(len(c[2]) for c in cells))
        text_lines.append(f"  {'Model':<{w0}}  {'PR-AUC':<{w1}}  {'ROC-AUC':<{w2}}")
        for model, pr_s, roc_s in cells:
            text_lines.append(f"  {model:<{w0}}  {pr_s:<{w1}}  {roc_s:<{w2}}")
        text_lines.append("")
        for row in group:
            csv_lines.append(",".join([
                task, row.model,
                repr(row.pr.mean), "" if row.pr.ci_half_width is None else repr(row.pr.ci_half_width),
                repr(row.roc.mean), "" if row.roc.ci_half_width is None else repr(row.roc.ci_half_width),
                str(len(row.pr.values)),
                "1" if row.pr.mean == best_pr else "0",
                "1" if row.roc.mean == best_roc else "0",
            ]))
    return "\n".join(text_lines), "\n".join(csv_lines) + "\n"
