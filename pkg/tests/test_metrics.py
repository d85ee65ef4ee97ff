import numpy as np
import pytest

from cdcl.errors import DataError
from cdcl.metrics import compute_metrics


def double_loop_oracle(truth, predicted, classes):
    confusion = np.zeros((classes, classes), dtype=np.int64)
    for t, p in zip(truth, predicted):
        confusion[t - 1][p - 1] += 1
    total = confusion.sum()
    oa = confusion.trace() / total
    recalls = []
    for c in range(classes):
        row = confusion[c].sum()
        if row > 0:
            recalls.append(confusion[c, c] / row)
    aa = float(np.mean(recalls))
    p_e = sum(confusion[c].sum() * confusion[:, c].sum() for c in range(classes)) / total**2
    kappa = 1.0 if p_e == 1.0 else (oa - p_e) / (1 - p_e)
    return confusion, oa, aa, kappa


def from_confusion(confusion):
    truth, pred = [], []
    for t in range(confusion.shape[0]):
        for p in range(confusion.shape[1]):
            truth.extend([t + 1] * confusion[t][p])
            pred.extend([p + 1] * confusion[t][p])
    return np.array(truth), np.array(pred)


class TestComputeMetrics:
    def test_perfect_prediction(self):
        truth = np.array([1, 2, 3, 1, 2, 3])
        report = compute_metrics(truth, truth, 3)
        assert report.oa == 1.0 and report.aa == 1.0 and report.kappa == 1.0

    def test_hand_computed_case(self):
        confusion = np.array([[40, 10], [20, 30]])
        truth, pred = from_confusion(confusion)
        report = compute_metrics(truth, pred, 2)
        assert report.oa == pytest.approx(0.7)
        assert report.aa == pytest.approx((0.8 + 0.6) / 2)
        assert report.kappa == pytest.approx(0.4)
        np.testing.assert_array_equal(report.confusion, confusion)

    def test_chance_level_kappa_zero(self):
        truth, pred = from_confusion(np.array([[25, 25], [25, 25]]))
        report = compute_metrics(truth, pred, 2)
        assert report.kappa == pytest.approx(0.0, abs=1e-12)

    def test_matches_double_loop_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            classes = int(rng.integers(2, 7))
            n = int(rng.integers(5, 200))
            truth = rng.integers(1, classes + 1, size=n)
            pred = rng.integers(1, classes + 1, size=n)
            report = compute_metrics(truth, pred, classes)
            confusion, oa, aa, kappa = double_loop_oracle(truth, pred, classes)
            np.testing.assert_array_equal(report.confusion, confusion)
            assert report.oa == oa
            assert report.aa == pytest.approx(aa, abs=1e-15)
            assert report.kappa == pytest.approx(kappa, abs=1e-15)

    def test_truth_empty_classes_excluded_from_aa(self):
        truth = np.array([1, 1, 2, 2])
        pred = np.array([1, 3, 2, 2])
        report = compute_metrics(truth, pred, 3)
        assert report.aa == pytest.approx((0.5 + 1.0) / 2)
        assert np.isnan(report.per_class_accuracy[2])

    def test_errors(self):
        with pytest.raises(DataError):
            compute_metrics(np.array([1, 2]), np.array([1]), 2)
        with pytest.raises(DataError):
            compute_metrics(np.array([]), np.array([]), 2)
        with pytest.raises(DataError):
            compute_metrics(np.array([1, 3]), np.array([1, 1]), 2)

    def test_bounds(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            truth = rng.integers(1, 4, size=50)
            pred = rng.integers(1, 4, size=50)
            report = compute_metrics(truth, pred, 3)
            assert 0.0 <= report.oa <= 1.0
            assert 0.0 <= report.aa <= 1.0
            assert -1.0 <= report.kappa <= 1.0
