"""Tests for the FDR comparison report."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.evaluation import (
    FdrPair,
    compare_report,
    confidence_interval,
    filter_outliers,
    histogram,
    rank_correlation,
    read_report_sections,
    render_report_csv,
    sorted_curve,
    write_plot_files,
    write_report,
)
from src.exceptions import EvaluationError
from src.injection import FdrEntry, FdrTable

unit_values = st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1, max_size=40)


def _predicted(values: dict) -> FdrTable:
    return FdrTable(
        source="predicted",
        entries=[
            FdrEntry(flipflop=name, injections=0, failures=0, fdr=v) for name, v in values.items()
        ],
    )


def _simulated(counts: dict, injections: int = 8) -> FdrTable:
    return FdrTable(
        source="simulated",
        entries=[
            FdrEntry(flipflop=name, injections=injections, failures=f, fdr=f / injections)
            for name, f in counts.items()
        ],
    )


class TestConfidenceInterval:
    """Test confidence_interval."""

    def test_constant(self):
        """Constant values have zero width."""
        ci = confidence_interval([0.3, 0.3, 0.3])
        assert ci.mean == pytest.approx(0.3)
        assert ci.half_width == 0.0

    def test_zero_one(self):
        """{0, 1} gives mean 0.5 and half width 1.96 * 0.7071 / sqrt(2)."""
        ci = confidence_interval([0.0, 1.0])
        assert ci.mean == 0.5
        assert ci.half_width == pytest.approx(0.98, abs=1e-12)
        assert (ci.low, ci.high, ci.n) == pytest.approx((-0.48, 1.48, 2))

    def test_single_value(self):
        """n = 1 has width 0."""
        ci = confidence_interval([0.7])
        assert (ci.mean, ci.half_width, ci.n) == (0.7, 0.0, 1)

    def test_empty(self):
        """An empty sample is an error."""
        with pytest.raises(EvaluationError):
            confidence_interval([])

    @settings(max_examples=50)
    @given(unit_values, st.floats(min_value=-5.0, max_value=5.0))
    def test_translation(self, values, shift):
        """Shifting every value shifts the mean and keeps the width."""
        base = confidence_interval(values)
        moved = confidence_interval([v + shift for v in values])
        assert moved.mean == pytest.approx(base.mean + shift, abs=1e-12)
        assert moved.half_width == pytest.approx(base.half_width, abs=1e-12)


class TestHistogram:
    """Test histogram."""

    def test_one_in_last_bin(self):
        """1.0 lands in the last bin."""
        h = histogram([1.0], bins=2)
        assert h.counts == [0, 1]
        assert h.bin_edges == [0.0, 0.5, 1.0]

    def test_uniform_spread(self):
        """0.1*k for k < 10 fills each of 10 bins once."""
        assert histogram([0.1 * k for k in range(10)], bins=10).counts == [1] * 10

    def test_out_of_range(self):
        """Values outside [0, 1] are rejected."""
        with pytest.raises(EvaluationError, match=r"\[0, 1\]"):
            histogram([0.5, 1.2])

    def test_bad_bin_count(self):
        """At least one bin is needed."""
        with pytest.raises(EvaluationError, match="positive"):
            histogram([0.5], bins=0)

    @settings(max_examples=50)
    @given(unit_values, st.integers(min_value=1, max_value=30))
    def test_conservation(self, values, bins):
        """Counts sum to the number of values."""
        h = histogram(values, bins)
        assert sum(h.counts) == len(values)
        assert len(h.bin_edges) == bins + 1
        assert h.bin_edges[0] == 0.0 and h.bin_edges[-1] == 1.0


class TestSortedCurve:
    """Test sorted_curve."""

    def test_ascending(self):
        """{a: 0.5, b: 0.2} gives [(0, 0.2), (1, 0.5)]."""
        assert sorted_curve(_predicted({"a": 0.5, "b": 0.2})) == [(0, 0.2), (1, 0.5)]

    def test_ties_by_name(self):
        """Equal values keep name order; the curve has one point per entry."""
        curve = sorted_curve(_predicted({"c": 0.4, "a": 0.4, "b": 0.4}))
        assert curve == [(0, 0.4), (1, 0.4), (2, 0.4)]

    def test_empty(self):
        """An empty table has no curve."""
        with pytest.raises(EvaluationError):
            sorted_curve(FdrTable(source="predicted", entries=[]))


class TestFilterOutliers:
    """Test filter_outliers."""

    def test_drops_far_value(self):
        """A simulated value far outside the IQR fence is dropped."""
        pairs = [
            FdrPair(flipflop=f"f{i}", predicted=0.5, simulated=v)
            for i, v in enumerate([0.50, 0.52, 0.48, 0.51, 0.49, 0.02])
        ]
        kept, dropped = filter_outliers(pairs)
        assert [p.flipflop for p in dropped] == ["f5"]
        assert len(kept) == 5

    def test_keeps_tight_sample(self):
        """Nothing is dropped from a constant sample."""
        pairs = [FdrPair(flipflop=f"f{i}", predicted=0.1, simulated=0.3) for i in range(4)]
        assert filter_outliers(pairs) == (pairs, [])


class TestRankCorrelation:
    """Test rank_correlation."""

    def test_monotone(self):
        """Monotone related values correlate perfectly."""
        assert rank_correlation([0.1, 0.2, 0.9], [0.3, 0.5, 0.6]) == pytest.approx(1.0)

    def test_constant_sides(self):
        """Equal constant sides score 1.0, a constant against a varying side 0.0."""
        assert rank_correlation([0.5, 0.5], [0.5, 0.5]) == 1.0
        assert rank_correlation([0.5, 0.5], [0.1, 0.9]) == 0.0


class TestCompareReport:
    """Test compare_report and its renderings."""

    def test_identical_tables(self):
        """Predicted equal to simulated: MAE 0, rank correlation 1, equal histograms."""
        sim = _simulated({"a": 1, "b": 4, "c": 7})
        report = compare_report(_predicted(sim.as_dict()), sim)

        assert report.mean_absolute_error == 0.0
        assert report.spearman == pytest.approx(1.0)
        assert report.ci_overlap
        assert report.predicted_histogram == report.simulated_histogram
        assert report.predicted_curve == report.simulated_curve

    def test_disjoint_sets(self):
        """Tables over different flip-flops are rejected."""
        with pytest.raises(EvaluationError, match="differ"):
            compare_report(_predicted({"a": 0.5}), _simulated({"b": 1}))

    def test_ci_rows_match_independent_intervals(self):
        """The report CIs are confidence_interval of each side."""
        sim = _simulated({"a": 1, "b": 4, "c": 7, "d": 8})
        pred = _predicted({"a": 0.2, "b": 0.4, "c": 0.7, "d": 0.95})
        report = compare_report(pred, sim)

        assert report.predicted_ci == confidence_interval(pred.values())
        assert report.simulated_ci == confidence_interval(sim.values())
        assert report.mean_absolute_error == pytest.approx(
            np.mean(np.abs(np.subtract(pred.values(), sim.values())))
        )

    def test_exclude_and_training_fit(self):
        """Excluded flip-flops leave the statistics but appear in the training fit."""
        sim = _simulated({"a": 1, "b": 4, "c": 7})
        pred = _predicted({"a": 0.2, "b": 0.4, "c": 0.7})
        report = compare_report(pred, sim, training={"a": 0.125}, exclude=["a"])

        assert [p.flipflop for p in report.pairs] == ["b", "c"]
        assert [(f.flipflop, f.label, f.predicted) for f in report.training_fit] == [
            ("a", 0.125, 0.2)
        ]

    def test_everything_excluded(self):
        """Excluding every flip-flop leaves nothing to compare."""
        sim = _simulated({"a": 1})
        with pytest.raises(EvaluationError, match="no flip-flops left"):
            compare_report(_predicted({"a": 0.1}), sim, exclude=["a"])

    def test_filtered_report(self):
        """With filtering, the outlier is listed as dropped."""
        counts = {"a": 4, "b": 4, "c": 5, "d": 4, "e": 3, "z": 0}
        sim = _simulated(counts)
        report = compare_report(_predicted(sim.as_dict()), sim, drop_outliers=True)

        assert report.filtered
        assert report.dropped == ["z"]
        assert len(report.pairs) == 5

    def test_rendered_sections(self, tmp_path):
        """The CSV report has every section and reads back."""
        sim = _simulated({"a": 1, "b": 4, "c": 7})
        pred = _predicted({"a": 0.25, "b": 0.5, "c": 0.75})
        report = compare_report(pred, sim, bins=4, training={"b": 0.5})
        text = render_report_csv(report)
        sections = read_report_sections(text)

        assert text.startswith("# section: summary\nkey,value\n")
        assert list(sections) == ["summary", "pairs", "ci", "histogram", "sorted", "training_fit"]
        summary = dict(zip(sections["summary"]["key"], sections["summary"]["value"]))
        assert summary["flipflops"] == "3"
        assert list(sections["ci"]["series"]) == ["predicted", "simulated"]
        assert list(sections["histogram"]["simulated"]) == [1, 0, 1, 1]
        assert list(sections["sorted"]["rank"]) == [0, 1, 2]
        assert list(sections["training_fit"]["flipflop"]) == ["b"]

        path = tmp_path / "report.csv"
        write_report(report, path)
        assert path.read_text(encoding="utf-8") == text

    def test_plot_files(self, tmp_path):
        """Plot data files are whitespace separated with a header comment."""
        sim = _simulated({"a": 1, "b": 4, "c": 7})
        report = compare_report(_predicted({"a": 0.25, "b": 0.5, "c": 0.75}), sim, bins=4)
        written = write_plot_files(report, tmp_path)

        names = ["ci.dat", "hist_pred.dat", "hist_sim.dat", "sorted.dat"]
        assert [p.name for p in written] == names
        hist = (tmp_path / "hist_sim.dat").read_text(encoding="utf-8").splitlines()
        assert hist[0] == "# center low high count"
        assert hist[1] == "0.125 0 0.25 1"
        sorted_lines = (tmp_path / "sorted.dat").read_text(encoding="utf-8").splitlines()
        assert sorted_lines[1:] == ["0 0.25 0.125", "1 0.5 0.5", "2 0.75 0.875"]
