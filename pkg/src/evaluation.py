"""Comparison of predicted and simulated FDR tables."""

import io
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np
import pandas as pd
from fastmcp.utilities.logging import get_logger
from pydantic import BaseModel, ConfigDict, Field
from scipy.stats import spearmanr

from .exceptions import EvaluationError
from .injection import FdrTable

logger = get_logger(__name__)

Z_95 = 1.96
FLOAT_FORMAT = "%.9g"
SECTION_PREFIX = "# section: "

CurvePoint = Tuple[int, float]


class CiSummary(BaseModel):
    """Mean with a normal-approximation 95% half width."""

    model_config = ConfigDict(frozen=True)

    mean: float
    half_width: float = Field(ge=0.0)
    n: int = Field(ge=1)

    @property
    def low(self) -> float:
        return self.mean - self.half_width

    @property
    def high(self) -> float:
        return self.mean + self.half_width

    def overlaps(self, other: "CiSummary") -> bool:
        return self.low <= other.high and other.low <= self.high


class Histogram(BaseModel):
    model_config = ConfigDict(frozen=True)

    bin_edges: List[float]
    counts: List[int]


class FdrPair(BaseModel):
    model_config = ConfigDict(frozen=True)

    flipflop: str
    predicted: float
    simulated: float


class TrainingFit(BaseModel):
    """Label vs. prediction of one trained flip-flop."""

    model_config = ConfigDict(frozen=True)

    flipflop: str
    label: float
    predicted: float


class ComparisonReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    pairs: List[FdrPair]
    predicted_ci: CiSummary
    simulated_ci: CiSummary
    predicted_histogram: Histogram
    simulated_histogram: Histogram
    predicted_curve: List[Tuple[int, float]]
    simulated_curve: List[Tuple[int, float]]
    mean_absolute_error: float
    ci_overlap: bool
    spearman: float
    filtered: bool = False
    dropped: List[str] = Field(default_factory=list)
    training_fit: List[TrainingFit] = Field(default_factory=list)


def confidence_interval(values: Sequence[float]) -> CiSummary:
    """Mean and 1.96 * sample stddev / sqrt(n); a single value has width 0.

    Raises:
        EvaluationError: If ``values`` is empty
    """
    data = np.asarray(values, dtype=np.float64)
    if data.size == 0:
        raise EvaluationError("confidence interval of an empty sample")
    if data.size == 1:
        return CiSummary(mean=float(data[0]), half_width=0.0, n=1)
    half_width = Z_95 * float(np.std(data, ddof=1)) / np.sqrt(data.size)
    return CiSummary(mean=float(np.mean(data)), half_width=half_width, n=int(data.size))


def histogram(values: Sequence[float], bins: int = 20) -> Histogram:
    """Uniform bins over [0, 1]; the last bin also holds 1.0.

    Raises:
        EvaluationError: If a value lies outside [0, 1] or ``bins`` < 1
    """
    if bins < 1:
        raise EvaluationError(f"bin count must be positive, got {bins}")
    data = np.asarray(values, dtype=np.float64)
    if np.any(~np.isfinite(data)) or np.any(data < 0.0) or np.any(data > 1.0):
        raise EvaluationError("histogram values must lie in [0, 1]")
    counts, edges = np.histogram(data, bins=bins, range=(0.0, 1.0))
    return Histogram(bin_edges=[float(e) for e in edges], counts=[int(c) for c in counts])


def _ranked(items: Iterable[Tuple[str, float]]) -> List[Tuple[str, float]]:
    return sorted(items, key=lambda item: (item[1], item[0]))


def _curve(items: Iterable[Tuple[str, float]]) -> List[CurvePoint]:
    return [(rank, fdr) for rank, (_, fdr) in enumerate(_ranked(items))]


def sorted_curve(t: FdrTable) -> List[CurvePoint]:
    """(rank, fdr) in ascending FDR order; ties go by flip-flop name.

    The curve compares distributions, not individual flip-flops.
    """
    if not t.entries:
        raise EvaluationError("sorted curve of an empty table")
    return _curve((e.flipflop, e.fdr) for e in t.entries)


def filter_outliers(pairs: Sequence[FdrPair]) -> Tuple[List[FdrPair], List[FdrPair]]:
    """Split pairs on the 1.5 * IQR fence of the simulated values.

    Returns:
        (kept, dropped)
    """
    if not pairs:
        return [], []
    simulated = np.array([p.simulated for p in pairs], dtype=np.float64)
    q1, q3 = np.percentile(simulated, [25.0, 75.0])
    low, high = q1 - 1.5 * (q3 - q1), q3 + 1.5 * (q3 - q1)
    kept = [p for p in pairs if low <= p.simulated <= high]
    dropped = [p for p in pairs if not low <= p.simulated <= high]
    return kept, dropped


def rank_correlation(a: Sequence[float], b: Sequence[float]) -> float:
    """Spearman correlation; a constant side scores 1.0 when both sides are equal, else 0.0."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.size < 2 or np.all(x == x[0]) or np.all(y == y[0]):
        return 1.0 if np.array_equal(x, y) else 0.0
    return float(spearmanr(x, y).statistic)


def compare_report(
    predicted: FdrTable,
    simulated: FdrTable,
    drop_outliers: bool = False,
    bins: int = 20,
    training: Dict[str, float] | None = None,
    exclude: Sequence[str] = (),
) -> ComparisonReport:
    """Compare predicted against simulated FDR per flip-flop.

    Args:
        training: Labels of the trained flip-flops, reported as the
            training-fit section
        exclude: Flip-flops left out of every statistic (e.g. the trained ones)

    Raises:
        EvaluationError: If the tables cover different flip-flops or nothing
            is left to compare
    """
    pred = predicted.as_dict()
    sim = simulated.as_dict()
    if set(pred) != set(sim):
        missing = sorted(set(pred) ^ set(sim))
        raise EvaluationError(f"predicted and simulated flip-flops differ: {missing}")

    skipped = set(exclude)
    pairs = [
        FdrPair(flipflop=name, predicted=pred[name], simulated=sim[name])
        for name in simulated.flipflops
        if name not in skipped
    ]
    dropped: List[FdrPair] = []
    if drop_outliers:
        pairs, dropped = filter_outliers(pairs)
    if not pairs:
        raise EvaluationError("no flip-flops left to compare")

    p_values = [p.predicted for p in pairs]
    s_values = [p.simulated for p in pairs]
    predicted_ci = confidence_interval(p_values)
    simulated_ci = confidence_interval(s_values)
    report = ComparisonReport(
        pairs=pairs,
        predicted_ci=predicted_ci,
        simulated_ci=simulated_ci,
        predicted_histogram=histogram(p_values, bins),
        simulated_histogram=histogram(s_values, bins),
        predicted_curve=_curve((p.flipflop, p.predicted) for p in pairs),
        simulated_curve=_curve((p.flipflop, p.simulated) for p in pairs),
        mean_absolute_error=float(np.mean(np.abs(np.subtract(p_values, s_values)))),
        ci_overlap=predicted_ci.overlaps(simulated_ci),
        spearman=rank_correlation(p_values, s_values),
        filtered=drop_outliers,
        dropped=[p.flipflop for p in dropped],
        training_fit=[
            TrainingFit(flipflop=name, label=training[name], predicted=pred[name])
            for name in simulated.flipflops
            if training and name in training
        ],
    )
    logger.info(
        f"Compared {len(pairs)} flip-flops: MAE {report.mean_absolute_error:.4g}",
        extra={
            "flipflops": len(pairs),
            "mae": report.mean_absolute_error,
            "spearman": report.spearman,
            "filtered": drop_outliers,
            "dropped": report.dropped,
        },
    )
    return report


# --- Rendering ---


def _csv(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def _sections(report: ComparisonReport) -> Dict[str, pd.DataFrame]:
    summary = pd.DataFrame(
        {
            "key": ["flipflops", "mae", "ci_overlap", "spearman", "filtered", "dropped"],
            "value": [
                str(len(report.pairs)),
                FLOAT_FORMAT % report.mean_absolute_error,
                str(report.ci_overlap).lower(),
                FLOAT_FORMAT % report.spearman,
                str(report.filtered).lower(),
                " ".join(report.dropped),
            ],
        }
    )
    pairs = pd.DataFrame(
        {
            "flipflop": [p.flipflop for p in report.pairs],
            "predicted": [p.predicted for p in report.pairs],
            "simulated": [p.simulated for p in report.pairs],
            "abs_error": [abs(p.predicted - p.simulated) for p in report.pairs],
        }
    )
    ci = pd.DataFrame(
        [
            [series, c.mean, c.half_width, c.n, c.low, c.high]
            for series, c in (
                ("predicted", report.predicted_ci),
                ("simulated", report.simulated_ci),
            )
        ],
        columns=["series", "mean", "half_width", "n", "low", "high"],
    )
    edges = report.predicted_histogram.bin_edges
    hist = pd.DataFrame(
        {
            "bin": np.arange(len(edges) - 1),
            "low": edges[:-1],
            "high": edges[1:],
            "predicted": report.predicted_histogram.counts,
            "simulated": report.simulated_histogram.counts,
        }
    )
    curves = pd.DataFrame(
        {
            "rank": [r for r, _ in report.predicted_curve],
            "predicted": [v for _, v in report.predicted_curve],
            "simulated": [v for _, v in report.simulated_curve],
        }
    )
    fit = pd.DataFrame(
        {
            "flipflop": [f.flipflop for f in report.training_fit],
            "label": [f.label for f in report.training_fit],
            "predicted": [f.predicted for f in report.training_fit],
        }
    )
    return {
        "summary": summary,
        "pairs": pairs,
        "ci": ci,
        "histogram": hist,
        "sorted": curves,
        "training_fit": fit,
    }


def render_report_csv(report: ComparisonReport) -> str:
    """Render the report as CSV sections, each opened by ``# section: <name>``."""
    return "".join(
        f"{SECTION_PREFIX}{name}\n{_csv(frame)}" for name, frame in _sections(report).items()
    )


def read_report_sections(text: str) -> Dict[str, pd.DataFrame]:
    """Split a rendered report back into one frame per section."""
    sections: Dict[str, List[str]] = {}
    current: List[str] | None = None
    for line in text.splitlines():
        if line.startswith(SECTION_PREFIX):
            current = sections.setdefault(line[len(SECTION_PREFIX) :].strip(), [])
        elif current is not None and line:
            current.append(line)
    return {
        name: pd.read_csv(io.StringIO("\n".join(lines) + "\n"), keep_default_na=False)
        for name, lines in sections.items()
    }


def write_report(report: ComparisonReport, path: Path) -> None:
    path.write_text(render_report_csv(report), encoding="utf-8")


def _write_dat(path: Path, header: str, frame: pd.DataFrame) -> None:
    body = frame.to_csv(
        sep=" ", index=False, header=False, float_format=FLOAT_FORMAT, lineterminator="\n"
    )
    path.write_text(f"# {header}\n{body}", encoding="utf-8")


def write_plot_files(report: ComparisonReport, directory: Path) -> List[Path]:
    """Write whitespace-separated plot data: ci.dat, hist_pred.dat, hist_sim.dat, sorted.dat."""
    sections = _sections(report)
    edges = np.asarray(report.predicted_histogram.bin_edges)
    centers = (edges[:-1] + edges[1:]) / 2.0
    written: List[Path] = []

    ci = sections["ci"][["series", "mean", "half_width", "low", "high"]].copy()
    ci.insert(0, "index", np.arange(len(ci)))
    _write_dat(directory / "ci.dat", "index series mean half_width low high", ci)
    written.append(directory / "ci.dat")

    for name, hist in (
        ("hist_pred.dat", report.predicted_histogram),
        ("hist_sim.dat", report.simulated_histogram),
    ):
        frame = pd.DataFrame(
            {"center": centers, "low": edges[:-1], "high": edges[1:], "count": hist.counts}
        )
        _write_dat(directory / name, "center low high count", frame)
        written.append(directory / name)

    _write_dat(directory / "sorted.dat", "rank predicted simulated", sections["sorted"])
    written.append(directory / "sorted.dat")
    return written
