"""
Analytics Skill - Attention analysis over labelled timelines
Class frequencies, two-proportion z-tests, transition structure and dwell segments
"""
from itertools import groupby
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from statsmodels.stats.multitest import multipletests
from statsmodels.stats.proportion import proportions_ztest

from ..errors import AlignmentError, EmptyInput, InsufficientData, InvalidInput
from ..models import ClassTaxonomy, LabeledTimeline


class TransitionMatrix(BaseModel):
    """K x K transition counts and their row-normalized probabilities"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    counts: np.ndarray
    probs: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())


class ZTestResult(BaseModel):
    """Per-class comparison of predicted and ground-truth proportions"""

    model_config = ConfigDict(frozen=True)

    class_index: int
    p_observed: float
    p_expected: float
    z: float
    p_value: float = Field(ge=0, le=1)
    significant_raw: bool
    significant_bonferroni: bool


class DwellSegment(BaseModel):
    """A maximal run of one label (None for unlabelled runs)"""

    model_config = ConfigDict(frozen=True)

    label: Optional[int]
    start_frame: int
    length: int = Field(ge=1)
    duration_ms: float


class AnalyticsSummary(BaseModel):
    """Everything the report needs for one session"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    frequencies: np.ndarray
    truth_frequencies: Optional[np.ndarray] = None
    ztests: Tuple[ZTestResult, ...] = ()
    transitions: Optional[TransitionMatrix] = None
    dwell: Tuple[DwellSegment, ...] = ()


class AnalyticsSkill:
    """
    Agent Skill: Attention Analytics

    Summarizes where gaze dwells, how it moves between classes, and whether predicted
    attention matches the annotated attention.
    """

    def __init__(self, taxonomy: Optional[ClassTaxonomy] = None):
        self.taxonomy = taxonomy or ClassTaxonomy()

    @property
    def n_classes(self) -> int:
        return self.taxonomy.size

    def class_frequencies(self, t: LabeledTimeline) -> np.ndarray:
        """Proportion of labelled frames per class"""
        labeled = t.check_labels(self.n_classes).labeled
        if not labeled:
            raise EmptyInput(f"timeline {t.session_id!r} has no labelled frames")
        counts = np.bincount(labeled, minlength=self.n_classes).astype(np.float64)
        return counts / counts.sum()

    def two_proportion_ztest(self, x1: int, n1: int, x2: int, n2: int) -> Tuple[float, float]:
        """
        Pooled two-proportion z-test, two-sided

        z = (x1/n1 - x2/n2) / sqrt(p(1 - p)(1/n1 + 1/n2)) with p = (x1 + x2)/(n1 + n2);
        z is 0 and the p-value 1 when p is 0 or 1.

        Returns:
            (z, p_value)
        """
        if n1 < 1 or n2 < 1:
            raise InvalidInput("sample sizes must be at least 1")
        if not (0 <= x1 <= n1 and 0 <= x2 <= n2):
            raise InvalidInput("counts must lie in [0, n]")

        pooled = (x1 + x2) / (n1 + n2)
        if pooled in (0.0, 1.0):
            return 0.0, 1.0
        z, p_value = proportions_ztest(np.array([x1, x2]), np.array([n1, n2]))
        return float(z), min(1.0, float(p_value))

    def bonferroni_threshold(self, alpha: float, m: int) -> float:
        if m < 1:
            raise InvalidInput("number of tests must be at least 1")
        if not 0 < alpha < 1:
            raise InvalidInput(f"alpha must lie in (0, 1), got {alpha}")
        return alpha / m

    def compare_timelines(self, pred: LabeledTimeline, truth: LabeledTimeline,
                          alpha: float = 0.05) -> List[ZTestResult]:
        """
        One z-test per class present in either timeline

        Each class count is tested against the number of labelled frames of its own
        timeline. A class is significant when p <= alpha; the Bonferroni flag rejects
        when m * p <= alpha, m being the number of classes tested.
        """
        if pred.frame_indices != truth.frame_indices:
            raise AlignmentError("predicted and ground-truth timelines cover different frames")
        if not 0 < alpha < 1:
            raise InvalidInput(f"alpha must lie in (0, 1), got {alpha}")

        pred_labels = pred.check_labels(self.n_classes).labeled
        truth_labels = truth.check_labels(self.n_classes).labeled
        if not pred_labels or not truth_labels:
            raise EmptyInput("both timelines need labelled frames")

        pred_counts = np.bincount(pred_labels, minlength=self.n_classes)
        truth_counts = np.bincount(truth_labels, minlength=self.n_classes)
        tested = [c for c in range(self.n_classes) if pred_counts[c] or truth_counts[c]]

        n1, n2 = len(pred_labels), len(truth_labels)
        tests = [self.two_proportion_ztest(int(pred_counts[c]), n1, int(truth_counts[c]), n2) for c in tested]
        p_values = np.array([p for _, p in tests])
        reject, _, _, _ = multipletests(p_values, alpha=alpha, method="bonferroni")

        return [
            ZTestResult(
                class_index=c,
                p_observed=pred_counts[c] / n1,
                p_expected=truth_counts[c] / n2,
                z=z,
                p_value=p,
                significant_raw=p <= alpha,
                significant_bonferroni=bool(flag),
            )
            for c, (z, p), flag in zip(tested, tests, reject)
        ]

    def transition_matrix(self, t: LabeledTimeline, collapse_runs: bool = False) -> TransitionMatrix:
        """
        Counts of consecutive labelled-frame pairs, row-normalized

        Unlabelled frames and skipped frame indices break the sequence: a pair spanning
        either is not counted. With collapse_runs, repeated labels inside each unbroken
        stretch are merged first so only class changes are counted.

        Raises:
            InsufficientData: fewer than two labelled frames
            TaxonomyError: a label index outside the taxonomy
        """
        t.check_labels(self.n_classes)
        if len(t.labeled) < 2:
            raise InsufficientData("transition matrix needs at least two labelled frames")

        counts = np.zeros((self.n_classes, self.n_classes), dtype=np.int64)
        for stretch in _labelled_stretches(t):
            if collapse_runs:
                stretch = [label for i, label in enumerate(stretch) if i == 0 or label != stretch[i - 1]]
            for a, b in zip(stretch, stretch[1:]):
                counts[a, b] += 1

        rows = counts.sum(axis=1, keepdims=True)
        probs = np.divide(counts, rows, out=np.zeros(counts.shape, dtype=np.float64), where=rows > 0)
        return TransitionMatrix(counts=counts, probs=probs)

    def dwell_segments(self, t: LabeledTimeline) -> List[DwellSegment]:
        """
        Run-length encoding of the timeline; durations use the timeline's fps

        A run ends at a label change or where the frame indices skip.
        """
        segments: List[DwellSegment] = []
        start = 0
        for stretch in t.stretches():
            for label, run in groupby(stretch):
                length = len(list(run))
                segments.append(DwellSegment(label=label, start_frame=t.frame_indices[start],
                                             length=length, duration_ms=length * 1000.0 / t.fps))
                start += length
        return segments

    def summarize(self, pred: LabeledTimeline, truth: Optional[LabeledTimeline] = None,
                  alpha: float = 0.05, collapse_runs: bool = False) -> AnalyticsSummary:
        """Frequencies, z-tests (with truth), transitions (when defined) and dwell segments"""
        transitions = None
        if len(pred.labeled) >= 2:
            transitions = self.transition_matrix(pred, collapse_runs)
        return AnalyticsSummary(
            frequencies=self.class_frequencies(pred),
            truth_frequencies=self.class_frequencies(truth) if truth is not None else None,
            ztests=tuple(self.compare_timelines(pred, truth, alpha)) if truth is not None else (),
            transitions=transitions,
            dwell=tuple(self.dwell_segments(pred)),
        )


def expand_segments(segments: Sequence[DwellSegment]) -> List[Optional[int]]:
    """Inverse of dwell_segments on the label sequence"""
    labels: List[Optional[int]] = []
    for segment in segments:
        labels.extend([segment.label] * segment.length)
    return labels


def _labelled_stretches(t: LabeledTimeline) -> List[List[int]]:
    stretches: List[List[int]] = []
    for run in t.stretches():
        for known, group in groupby(run, key=lambda label: label is not None):
            if known:
                stretches.append(list(group))
    return stretches
