"""
Metrics Skill - Evaluation for single-label, multi-label and annotator agreement
"""
from typing import Dict, FrozenSet, List, Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator
from sklearn.metrics import cohen_kappa_score, f1_score

from ..errors import AlignmentError, EmptyInput, FormatError, RangeError, UndefinedMetric
from ..models import ClassScores, LabeledTimeline


class EvalRecord(BaseModel):
    """Scores for one frame and its ground-truth label set"""

    model_config = ConfigDict(frozen=True)

    scores: ClassScores
    truth: FrozenSet[int]

    @field_validator("truth")
    @classmethod
    def _non_empty(cls, truth: FrozenSet[int]) -> FrozenSet[int]:
        if not truth:
            raise ValueError("truth must contain at least one label")
        return truth


class MetricsSkill:
    """
    Agent Skill: Evaluation Metrics

    Top-k accuracy, mean average precision, multi-label F1 and Cohen's kappa.
    """

    def top_k_accuracy(self, records: Sequence[EvalRecord], k: int) -> float:
        """
        Fraction of records with a truth label among the k best-scored classes

        A record with several truth labels is a hit when any of them is in the top k.
        Ties in scores go to the lower class index.
        """
        if not records:
            raise EmptyInput("no records to evaluate")
        hits = 0
        for record in records:
            _check_truth(record)
            n = record.scores.n_classes
            if not 1 <= k <= n:
                raise RangeError(f"k must lie in [1, {n}], got {k}")
            probs = record.scores.probs
            top = sorted(range(n), key=lambda i: (-probs[i], i))[:k]
            hits += bool(record.truth.intersection(top))
        return hits / len(records)

    def average_precision(self, scores: np.ndarray, positives: np.ndarray) -> float:
        """
        Mean of precision@rank over the ranks holding positives (no interpolation)

        Records are ranked by descending score; equal scores keep record order.
        """
        order = np.argsort(-scores, kind="stable")
        hits = positives[order].astype(np.float64)
        n_pos = hits.sum()
        if n_pos == 0:
            raise UndefinedMetric("class has no positive records")
        precision_at_rank = np.cumsum(hits) / np.arange(1, hits.size + 1)
        return float((precision_at_rank * hits).sum() / n_pos)

    def mean_average_precision(self, records: Sequence[EvalRecord]) -> float:
        """Mean of per-class AP over classes with at least one positive"""
        if not records:
            raise EmptyInput("no records to evaluate")
        scores, truth = _stack(records)
        aps = [self.average_precision(scores[:, c], truth[:, c])
               for c in range(truth.shape[1]) if truth[:, c].any()]
        if not aps:
            raise UndefinedMetric("no class has a positive record")
        return float(np.mean(aps))

    def f1_multilabel(self, records: Sequence[EvalRecord], threshold: float = 0.5,
                      average: Literal["micro", "macro"] = "micro") -> float:
        """
        F1 after binarizing scores at the threshold (score >= threshold is positive)

        Micro averaging pools TP/FP/FN over every (record, class) decision; macro
        averaging takes the mean of the per-class F1 values. F1 is 0 when P + R = 0.
        """
        if not records:
            raise EmptyInput("no records to evaluate")
        scores, truth = _stack(records)
        predicted = scores >= threshold
        return float(f1_score(truth.astype(np.int8), predicted.astype(np.int8),
                              average=average, zero_division=0))

    def cohens_kappa(self, rater1: LabeledTimeline, rater2: LabeledTimeline) -> float:
        """
        Chance-corrected agreement between two single-label timelines

        Both timelines must cover the same frames; frames unlabelled by either rater
        are skipped. Returns 1 when chance agreement and observed agreement are both 1.

        Raises:
            AlignmentError: the timelines cover different frames
            EmptyInput: no frame is labelled by both raters
        """
        if rater1.frame_indices != rater2.frame_indices:
            raise AlignmentError("raters labelled different frame sets")

        pairs = [(a, b) for a, b in zip(rater1.labels, rater2.labels)
                 if a is not None and b is not None]
        if not pairs:
            raise EmptyInput("no frame labelled by both raters")

        first, second = zip(*pairs)
        # p_e = 1 only when both raters used one and the same class throughout
        if len(set(first) | set(second)) == 1:
            return 1.0
        return float(cohen_kappa_score(first, second))

    def evaluate(self, records: Sequence[EvalRecord], threshold: float = 0.5,
                 average: Literal["micro", "macro"] = "micro") -> Dict[str, float]:
        """
        Standard report: Top-1/Top-3 for single-label scores, mAP/F1 for multi-label

        Metrics without a defined value are left out.
        """
        report: Dict[str, float] = {}
        if not records:
            raise EmptyInput("no records to evaluate")
        kind = records[0].scores.kind
        if kind == "single":
            n = records[0].scores.n_classes
            report["top1"] = self.top_k_accuracy(records, 1)
            report["top3"] = self.top_k_accuracy(records, min(3, n))
        try:
            report["mAP"] = self.mean_average_precision(records)
        except UndefinedMetric:
            pass
        if kind == "multi":
            report[f"f1_{average}"] = self.f1_multilabel(records, threshold, average)
        return report


def format_metrics_csv(metrics: Dict[str, float]) -> str:
    lines = ["metric,value"] + [f"{name},{value!r}" for name, value in metrics.items()]
    return "\n".join(lines) + "\n"


def parse_metrics_csv(text: str) -> Dict[str, float]:
    """Inverse of format_metrics_csv"""
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines or lines[0].strip() != "metric,value":
        raise FormatError("expected header metric,value", row=0)
    metrics: Dict[str, float] = {}
    for row, line in enumerate(lines[1:], start=1):
        name, _, value = line.partition(",")
        try:
            metrics[name.strip()] = float(value)
        except ValueError:
            raise FormatError(f"bad metric value {value!r}", row=row) from None
    return metrics


def format_metrics_text(metrics: Dict[str, float]) -> str:
    if not metrics:
        return "no metrics\n"
    width = max(len(name) for name in metrics)
    return "".join(f"{name:<{width}}  {value * 100:6.2f}%\n" for name, value in metrics.items())


def _check_truth(record: EvalRecord) -> None:
    if max(record.truth) >= record.scores.n_classes or min(record.truth) < 0:
        raise RangeError(f"truth label outside [0, {record.scores.n_classes})")


def _stack(records: Sequence[EvalRecord]):
    n_classes = records[0].scores.n_classes
    scores = np.zeros((len(records), n_classes))
    truth = np.zeros((len(records), n_classes), dtype=bool)
    for i, record in enumerate(records):
        if record.scores.n_classes != n_classes:
            raise RangeError("records disagree on the class count")
        _check_truth(record)
        scores[i] = record.scores.probs
        truth[i, list(record.truth)] = True
    return scores, truth


def records_from(scores: List[ClassScores], truths: List[FrozenSet[int]]) -> List[EvalRecord]:
    return [EvalRecord(scores=s, truth=t) for s, t in zip(scores, truths)]
