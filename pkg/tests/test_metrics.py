import numpy as np
import pytest

from src.errors import AlignmentError, EmptyInput, FormatError, RangeError, UndefinedMetric
from src.skills.metrics_skill import (EvalRecord, MetricsSkill, format_metrics_csv, format_metrics_text,
                                      parse_metrics_csv, records_from)

from .helpers import scores, timeline


@pytest.fixture
def metrics():
    return MetricsSkill()


def _random_instance(rng, kind):
    n = int(rng.integers(1, 21))
    k = int(rng.integers(2, 8))
    records = []
    for _ in range(n):
        if kind == "single":
            s = scores(rng.dirichlet(np.ones(k)))
            truth = frozenset({int(rng.integers(k))})
        else:
            s = scores(rng.random(k), "multi")
            truth = frozenset(int(c) for c in np.flatnonzero(rng.random(k) < 0.4)) or frozenset({0})
        records.append(EvalRecord(scores=s, truth=truth))
    return records


def _topk_oracle(records, k):
    hits = 0
    for r in records:
        ranked = sorted(range(r.scores.n_classes), key=lambda c: (-r.scores.probs[c], c))
        hits += any(c in r.truth for c in ranked[:k])
    return hits / len(records)


def _ap_oracle(values, positives):
    ranked = sorted(range(len(values)), key=lambda i: (-values[i], i))
    precisions = []
    seen = 0
    for rank, i in enumerate(ranked, start=1):
        if positives[i]:
            seen += 1
            precisions.append(seen / rank)
    return sum(precisions) / len(precisions)


def _map_oracle(records):
    k = records[0].scores.n_classes
    aps = []
    for c in range(k):
        positives = [c in r.truth for r in records]
        if any(positives):
            aps.append(_ap_oracle([r.scores.probs[c] for r in records], positives))
    return sum(aps) / len(aps)


def _f1_oracle(records, threshold):
    tp = fp = fn = 0
    for r in records:
        for c in range(r.scores.n_classes):
            predicted = r.scores.probs[c] >= threshold
            actual = c in r.truth
            tp += predicted and actual
            fp += predicted and not actual
            fn += actual and not predicted
    if tp == 0:
        return 0.0
    precision, recall = tp / (tp + fp), tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def _kappa_oracle(a, b):
    n = len(a)
    classes = sorted(set(a) | set(b))
    p_o = sum(x == y for x, y in zip(a, b)) / n
    p_e = sum((a.count(c) / n) * (b.count(c) / n) for c in classes)
    if p_e == 1:
        return 1.0
    return (p_o - p_e) / (1 - p_e)


class TestTopK:
    def test_three_of_four(self, metrics):
        records = records_from(
            [scores([0.9, 0.1]), scores([0.2, 0.8]), scores([0.6, 0.4]), scores([0.7, 0.3])],
            [frozenset({0}), frozenset({1}), frozenset({0}), frozenset({1})],
        )
        assert metrics.top_k_accuracy(records, 1) == 0.75

    def test_full_coverage(self, metrics, rng):
        records = _random_instance(rng, "single")
        k = records[0].scores.n_classes
        assert metrics.top_k_accuracy(records, k) == 1.0

    def test_matches_recount(self, metrics, rng):
        for _ in range(100):
            records = _random_instance(rng, "single")
            k = int(rng.integers(1, records[0].scores.n_classes + 1))
            assert abs(metrics.top_k_accuracy(records, k) - _topk_oracle(records, k)) < 1e-10

    def test_bad_k(self, metrics):
        with pytest.raises(RangeError):
            metrics.top_k_accuracy(records_from([scores([1.0, 0.0])], [frozenset({0})]), 3)

    def test_empty(self, metrics):
        with pytest.raises(EmptyInput):
            metrics.top_k_accuracy([], 1)

    def test_uniform_random_classifier_is_at_chance(self, metrics):
        rng = np.random.default_rng(2024)
        truth = np.repeat(np.arange(7), 10_000 // 7 + 1)[:10_000]
        records = [EvalRecord(scores=scores(rng.dirichlet(np.ones(7))), truth=frozenset({int(t)})) for t in truth]
        assert abs(metrics.top_k_accuracy(records, 1) - 1 / 7) < 0.015
        assert abs(metrics.top_k_accuracy(records, 3) - 3 / 7) < 0.02

    def test_non_decreasing_in_k(self, metrics, rng):
        for _ in range(100):
            records = _random_instance(rng, "single")
            accuracies = [metrics.top_k_accuracy(records, k) for k in range(1, records[0].scores.n_classes + 1)]
            assert all(a <= b for a, b in zip(accuracies, accuracies[1:]))


class TestMeanAveragePrecision:
    def test_perfect_ranking(self, metrics):
        records = records_from(
            [scores([0.9, 0.1], "multi"), scores([0.2, 0.8], "multi"), scores([0.7, 0.6], "multi")],
            [frozenset({0}), frozenset({1}), frozenset({0, 1})],
        )
        assert metrics.mean_average_precision(records) == 1.0

    def test_hand_example(self, metrics):
        ap = metrics.average_precision(np.array([0.9, 0.8, 0.7]), np.array([True, False, True]))
        assert ap == pytest.approx((1 / 1 + 2 / 3) / 2, abs=1e-12)
        assert round(ap, 4) == 0.8333

    def test_matches_brute_force(self, metrics, rng):
        for _ in range(100):
            records = _random_instance(rng, "multi")
            assert abs(metrics.mean_average_precision(records) - _map_oracle(records)) < 1e-10

    def test_class_without_positives(self, metrics):
        with pytest.raises(UndefinedMetric):
            metrics.average_precision(np.array([0.5, 0.1]), np.array([False, False]))

    def test_unchanged_by_monotone_rescoring(self, metrics, rng):
        for _ in range(100):
            records = _random_instance(rng, "multi")
            rescored = [EvalRecord(scores=scores(np.sqrt(r.scores.probs), "multi"), truth=r.truth)
                        for r in records]
            assert metrics.mean_average_precision(rescored) == pytest.approx(
                metrics.mean_average_precision(records), abs=1e-12)


class TestF1:
    def test_identical_predictions(self, metrics):
        records = records_from([scores([1.0, 0.0, 1.0], "multi"), scores([0.0, 1.0, 0.0], "multi")],
                               [frozenset({0, 2}), frozenset({1})])
        assert metrics.f1_multilabel(records) == 1.0
        assert metrics.f1_multilabel(records, average="macro") == 1.0

    def test_nothing_predicted(self, metrics):
        records = records_from([scores([0.1, 0.2], "multi")], [frozenset({0})])
        assert metrics.f1_multilabel(records) == 0.0

    def test_matches_confusion_counts(self, metrics, rng):
        for _ in range(100):
            records = _random_instance(rng, "multi")
            threshold = float(rng.uniform(0.2, 0.8))
            assert abs(metrics.f1_multilabel(records, threshold) - _f1_oracle(records, threshold)) < 1e-10

    def test_macro_averages_every_class(self, metrics):
        records = records_from([scores([0.9, 0.8, 0.1], "multi"), scores([0.2, 0.7, 0.1], "multi")],
                               [frozenset({0}), frozenset({0, 1})])
        # class 0: P=1, R=1/2; class 1: P=1/2, R=1; class 2 never predicted nor present
        assert metrics.f1_multilabel(records, average="macro") == pytest.approx((2 / 3 + 2 / 3 + 0) / 3)
        assert metrics.f1_multilabel(records, average="micro") == pytest.approx(2 / 3)


class TestKappa:
    def test_identical(self, metrics):
        t = timeline([0, 1, 2, 2, 1])
        assert metrics.cohens_kappa(t, t) == 1.0

    def test_chance_level(self, metrics):
        assert metrics.cohens_kappa(timeline([0, 0, 1, 1]), timeline([0, 1, 0, 1])) == pytest.approx(0.0)

    def test_matches_contingency_oracle(self, metrics, rng):
        for _ in range(100):
            n = int(rng.integers(2, 21))
            k = int(rng.integers(2, 8))
            a = rng.integers(0, k, size=n).tolist()
            b = [x if rng.random() < 0.5 else int(rng.integers(k)) for x in a]
            assert abs(metrics.cohens_kappa(timeline(a), timeline(b)) - _kappa_oracle(a, b)) < 1e-10

    def test_hundred_frames(self, metrics, rng):
        a = rng.integers(0, 7, size=100).tolist()
        b = rng.integers(0, 7, size=100).tolist()
        assert abs(metrics.cohens_kappa(timeline(a), timeline(b)) - _kappa_oracle(a, b)) < 1e-10

    def test_unlabelled_frames_are_skipped(self, metrics):
        assert metrics.cohens_kappa(timeline([0, None, 1]), timeline([0, 1, 1])) == 1.0

    def test_misaligned(self, metrics):
        with pytest.raises(AlignmentError):
            metrics.cohens_kappa(timeline([0, 1]), timeline([0, 1], frames=[0, 2]))

    def test_symmetric_in_the_raters(self, metrics, rng):
        for _ in range(100):
            a = rng.integers(0, 5, size=30).tolist()
            b = [x if rng.random() < 0.6 else int(rng.integers(5)) for x in a]
            assert metrics.cohens_kappa(timeline(a), timeline(b)) == pytest.approx(
                metrics.cohens_kappa(timeline(b), timeline(a)), abs=1e-12)

    def test_invariant_under_relabelling(self, metrics, rng):
        for _ in range(100):
            a = rng.integers(0, 7, size=25).tolist()
            b = [x if rng.random() < 0.5 else int(rng.integers(7)) for x in a]
            perm = rng.permutation(7)
            a2, b2 = [int(perm[x]) for x in a], [int(perm[x]) for x in b]
            assert metrics.cohens_kappa(timeline(a2), timeline(b2)) == pytest.approx(
                metrics.cohens_kappa(timeline(a), timeline(b)), abs=1e-12)

    def test_single_shared_class(self, metrics):
        assert metrics.cohens_kappa(timeline([3, 3, 3]), timeline([3, 3, 3])) == 1.0


class TestReport:
    def test_single_label_report(self, metrics):
        records = records_from([scores([0.6, 0.3, 0.1]), scores([0.1, 0.2, 0.7])],
                               [frozenset({0}), frozenset({1})])
        report = metrics.evaluate(records)
        assert report["top1"] == 0.5
        assert report["top3"] == 1.0
        assert "mAP" in report

    def test_multi_label_report(self, metrics):
        records = records_from([scores([0.9, 0.1], "multi")], [frozenset({0})])
        report = metrics.evaluate(records, average="macro")
        assert set(report) == {"mAP", "f1_macro"}

    def test_csv_round_trip(self):
        values = {"top1": 0.75, "top3": 1.0, "mAP": 0.8333333333333333}
        text = format_metrics_csv(values)
        assert text.splitlines()[0] == "metric,value"
        assert parse_metrics_csv(text) == values

    def test_csv_bad_value(self):
        with pytest.raises(FormatError):
            parse_metrics_csv("metric,value\ntop1,abc\n")

    def test_text_rendering(self):
        assert format_metrics_text({"top1": 0.5}) == "top1   50.00%\n"
        assert format_metrics_text({}) == "no metrics\n"
