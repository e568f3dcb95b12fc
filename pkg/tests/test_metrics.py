"""Accuracy and AUC against brute-force oracles, plus report plumbing."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mkdm.errors import ContractError, MetricUndefinedError
from mkdm.metrics import (
    RESULTS_CSV_HEADER,
    EvalReport,
    accuracy,
    append_results_csv,
    auc,
    auc_pairwise,
    qps_benchmark,
    results_csv_row,
)


class TestAccuracy:
    def test_all_correct(self):
        assert accuracy([0.6, 0.4], [1, 0]) == 100.0

    def test_all_wrong(self):
        assert accuracy([0.4, 0.6], [1, 0]) == 0.0

    def test_threshold_tie_counts_positive(self):
        assert accuracy([0.5], [1]) == 100.0
        assert accuracy([0.5], [0]) == 0.0

    def test_custom_threshold(self):
        assert accuracy([0.3, 0.1], [1, 0], threshold=0.2) == 100.0

    def test_mixed(self):
        assert accuracy([0.9, 0.2, 0.7, 0.6], [1, 0, 0, 1]) == 75.0

    def test_label_flip_symmetry(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = int(rng.integers(2, 40))
            scores = rng.random(n)  # continuous, so no 0.5 ties
            labels = rng.integers(0, 2, size=n)
            assert accuracy(1.0 - scores, 1 - labels) == accuracy(scores, labels)

    def test_length_mismatch(self):
        with pytest.raises(ContractError):
            accuracy([0.5, 0.5], [1])

    def test_empty(self):
        with pytest.raises(ContractError):
            accuracy([], [])

    def test_bad_labels(self):
        with pytest.raises(ContractError):
            accuracy([0.5], [3])


class TestAuc:
    def test_perfect_ranking(self):
        assert auc([0.9, 0.8, 0.1], [1, 1, 0]) == 100.0

    def test_tie_symmetry(self):
        assert auc([0.5, 0.5], [1, 0]) == 50.0

    def test_hand_pairwise_case(self):
        # pairs (0.7,0.2) win, (0.7,0.9) lose, (0.4,0.2) win, (0.4,0.9) lose
        assert auc([0.2, 0.7, 0.4, 0.9], [0, 1, 1, 0]) == 50.0

    def test_inverted_ranking(self):
        assert auc([0.1, 0.9], [1, 0]) == 0.0

    def test_single_class_undefined(self):
        with pytest.raises(MetricUndefinedError):
            auc([0.1, 0.9], [1, 1])
        with pytest.raises(MetricUndefinedError):
            auc([0.1, 0.9], [0, 0])

    def test_rank_sum_equals_pairwise_exactly(self):
        # 200 random instances, heavy with ties thanks to quantized scores.
        rng = np.random.default_rng(1)
        for _ in range(200):
            n = int(rng.integers(2, 50))
            labels = rng.integers(0, 2, size=n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            scores = np.round(rng.random(n), decimals=int(rng.integers(0, 3)))
            assert auc(scores, labels) == auc_pairwise(scores, labels)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(2)
        for transform in (lambda s: 3.0 * s + 1.0,
                          np.exp,
                          lambda s: s ** 3,
                          np.tanh):
            n = 30
            labels = rng.integers(0, 2, size=n)
            labels[:2] = [0, 1]
            scores = rng.standard_normal(n)
            assert auc(transform(scores), labels) == auc(scores, labels)

    @given(
        labels=st.lists(st.integers(0, 1), min_size=2, max_size=30).filter(
            lambda ls: 0 in ls and 1 in ls
        ),
        data=st.data(),
    )
    @settings(max_examples=60, deadline=None)
    def test_bounded_and_flip_complementary(self, labels, data):
        scores = data.draw(
            st.lists(
                st.floats(0, 1, allow_nan=False),
                min_size=len(labels),
                max_size=len(labels),
            )
        )
        value = auc(scores, labels)
        assert 0.0 <= value <= 100.0
        # Negating scores reverses every pairwise comparison.
        assert auc([-s for s in scores], labels) == pytest.approx(100.0 - value)


class TestQps:
    def test_counts_calls_per_second(self):
        result = qps_benchmark(lambda: None, n_examples=1, batch_size=1,
                               warmup_batches=2, min_duration_seconds=0.02,
                               repetitions=3)
        assert result.qps > 0
        assert result.repetitions == 3
        assert result.std >= 0.0

    def test_batch_size_scales_rate(self):
        import time as _t
        slow = lambda: _t.sleep(0.001)
        r1 = qps_benchmark(slow, n_examples=1, batch_size=1, warmup_batches=1,
                           min_duration_seconds=0.05, repetitions=3)
        r8 = qps_benchmark(slow, n_examples=1, batch_size=8, warmup_batches=1,
                           min_duration_seconds=0.05, repetitions=3)
        assert 4.0 < r8.qps / r1.qps < 12.0

    def test_too_few_repetitions_rejected(self):
        with pytest.raises(ContractError):
            qps_benchmark(lambda: None, n_examples=1, repetitions=2)


class TestEvalReport:
    def test_round_trip(self):
        report = EvalReport(acc=91.25, auc=95.5, n_examples=100, qps=88.0,
                            qps_std=1.5, qps_batch_size=1)
        assert EvalReport.from_dict(report.to_dict()) == report

    def test_qps_fields_optional(self):
        report = EvalReport(acc=50.0, auc=50.0, n_examples=10)
        assert "qps" not in report.to_dict()

    @pytest.mark.parametrize("kw", [
        dict(acc=101.0, auc=50.0),
        dict(acc=50.0, auc=-0.1),
        dict(acc=50.0, auc=50.0, qps=0.0),
    ])
    def test_out_of_range_rejected(self, kw):
        with pytest.raises(ContractError):
            EvalReport(n_examples=5, **kw)


class TestResultsCsv:
    def test_row_format(self):
        report = EvalReport(acc=91.0, auc=95.25, n_examples=10, qps=123.456)
        row = results_csv_row("abc123", 3, 0.5, "mkdm", report)
        assert row == "abc123,3,0.5,mkdm,91.000000,95.250000,123.456"

    def test_row_without_qps(self):
        report = EvalReport(acc=91.0, auc=95.25, n_examples=10)
        assert results_csv_row("r", 1, 0.0, "gold_only", report).endswith(",")

    def test_append_creates_header_once(self, tmp_path):
        path = tmp_path / "results.csv"
        report = EvalReport(acc=50.0, auc=50.0, n_examples=1)
        append_results_csv(path, [results_csv_row("a", 1, 0.1, "m", report)])
        append_results_csv(path, [results_csv_row("b", 2, 0.2, "m", report)])
        lines = path.read_text().splitlines()
        assert lines[0] == RESULTS_CSV_HEADER
        assert len(lines) == 3
        assert lines[1].startswith("a,") and lines[2].startswith("b,")
