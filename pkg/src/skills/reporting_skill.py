"""
Reporting Skill - Writes analytics, metrics and benchmark results to disk
CSV tables, SVG charts (matplotlib) and an interactive HTML companion (plotly)
"""
import io
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import plotly.graph_objects as go  # noqa: E402
from plotly.subplots import make_subplots  # noqa: E402

from ..errors import IoError  # noqa: E402
from ..log import get_logger  # noqa: E402
from ..models import ClassTaxonomy, LabeledTimeline  # noqa: E402
from .analytics_skill import AnalyticsSummary  # noqa: E402
from .bench_skill import BenchCell, rep_table_csv, summary_table_csv  # noqa: E402
from .metrics_skill import format_metrics_csv, format_metrics_text  # noqa: E402

logger = get_logger("report")

# Fixed salt and no timestamps keep SVG bytes stable across runs
_SVG_STYLE = {
    "svg.hashsalt": "gaze-report",
    "svg.fonttype": "none",
    "font.family": "DejaVu Sans",
}
_SVG_METADATA = {"Date": None, "Creator": None}

FREQUENCY_CSV = "frequencies.csv"
ZTEST_CSV = "ztests.csv"
TRANSITIONS_CSV = "transitions.csv"
DWELL_CSV = "dwell.csv"
METRICS_CSV = "metrics.csv"
BENCH_REPS_CSV = "bench_reps.csv"
BENCH_SUMMARY_CSV = "bench_summary.csv"


class ReportingSkill:
    """
    Agent Skill: Report Emission

    Turns analysis results into deterministic files: CSV tables, three SVG panels
    (frequency bars, transition heatmap, timeline strip), `summary.txt` and `report.html`.
    """

    def __init__(self, taxonomy: Optional[ClassTaxonomy] = None):
        self.taxonomy = taxonomy or ClassTaxonomy()

    def emit_report(self, out_dir: str, timeline: Optional[LabeledTimeline] = None,
                    analytics: Optional[AnalyticsSummary] = None,
                    metrics: Optional[Dict[str, float]] = None,
                    bench: Optional[Sequence[BenchCell]] = None,
                    run_summary: Optional[Dict[str, object]] = None) -> List[Path]:
        """
        Write every report file for the inputs that are present

        CSV tables are always written (header only when their input is missing); SVG and
        HTML panels are drawn only for available analytics.

        Returns:
            Paths written, in a fixed order

        Raises:
            IoError: the output directory cannot be created or written
        """
        out = Path(out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise IoError(f"cannot create report directory {out}: {e}") from e

        files: Dict[str, str] = {
            FREQUENCY_CSV: self.frequency_csv(analytics),
            ZTEST_CSV: self.ztest_csv(analytics),
            TRANSITIONS_CSV: self.transitions_csv(analytics),
            DWELL_CSV: self.dwell_csv(analytics),
            METRICS_CSV: format_metrics_csv(metrics or {}),
            BENCH_REPS_CSV: rep_table_csv(bench or []),
            BENCH_SUMMARY_CSV: summary_table_csv(bench or []),
        }
        written = [self._write(out / name, text) for name, text in files.items()]

        if analytics is not None:
            written.append(self._write(out / "frequencies.svg", self.frequency_svg(analytics)))
            if analytics.transitions is not None:
                written.append(self._write(out / "transitions.svg", self.heatmap_svg(analytics)))
            if timeline is not None:
                written.append(self._write(out / "timeline.svg", self.timeline_svg(timeline)))
            written.append(self._write(out / "report.html", self.html_report(analytics, timeline)))

        written.append(self._write(out / "summary.txt",
                                   self.summary_text(analytics, metrics, bench, run_summary)))
        logger.info("report written to %s (%d files)", out, len(written))
        return written

    def frequency_csv(self, analytics: Optional[AnalyticsSummary]) -> str:
        lines = ["class,predicted,ground_truth"]
        if analytics is not None:
            truth = analytics.truth_frequencies
            for i, name in enumerate(self.taxonomy.labels):
                gt = "" if truth is None else f"{truth[i]:.6f}"
                lines.append(f"{name},{analytics.frequencies[i]:.6f},{gt}")
        return "\n".join(lines) + "\n"

    def ztest_csv(self, analytics: Optional[AnalyticsSummary]) -> str:
        lines = ["class,p_observed,p_expected,z,p_value,significant_raw,significant_bonferroni"]
        for r in (analytics.ztests if analytics is not None else ()):
            lines.append(f"{self.taxonomy.name(r.class_index)},{r.p_observed:.6f},{r.p_expected:.6f},"
                         f"{r.z:.6f},{r.p_value:.6g},{int(r.significant_raw)},{int(r.significant_bonferroni)}")
        return "\n".join(lines) + "\n"

    def transitions_csv(self, analytics: Optional[AnalyticsSummary]) -> str:
        lines = ["from,to,count,probability"]
        if analytics is not None and analytics.transitions is not None:
            tm = analytics.transitions
            for i, a in enumerate(self.taxonomy.labels):
                for j, b in enumerate(self.taxonomy.labels):
                    lines.append(f"{a},{b},{int(tm.counts[i, j])},{tm.probs[i, j]:.6f}")
        return "\n".join(lines) + "\n"

    def dwell_csv(self, analytics: Optional[AnalyticsSummary]) -> str:
        lines = ["class,start_frame,length,duration_ms"]
        for s in (analytics.dwell if analytics is not None else ()):
            name = "" if s.label is None else self.taxonomy.name(s.label)
            lines.append(f"{name},{s.start_frame},{s.length},{s.duration_ms:.1f}")
        return "\n".join(lines) + "\n"

    def frequency_svg(self, analytics: AnalyticsSummary) -> str:
        """Grouped bars; each bar carries the gid `freq-pred-<i>` or `freq-truth-<i>`"""
        names = self.taxonomy.labels
        x = np.arange(len(names))
        has_truth = analytics.truth_frequencies is not None
        width = 0.4 if has_truth else 0.8

        with plt.rc_context(_SVG_STYLE):
            fig, ax = plt.subplots(figsize=(8, 4))
            offset = -width / 2 if has_truth else 0.0
            bars = ax.bar(x + offset, analytics.frequencies, width, label="predicted", color="#4C72B0")
            for i, bar in enumerate(bars):
                bar.set_gid(f"freq-pred-{i}")
            if has_truth:
                bars = ax.bar(x + width / 2, analytics.truth_frequencies, width,
                              label="ground truth", color="#DD8452")
                for i, bar in enumerate(bars):
                    bar.set_gid(f"freq-truth-{i}")
                flagged = {r.class_index for r in analytics.ztests if r.significant_bonferroni}
                top = max(float(np.max(analytics.frequencies)), float(np.max(analytics.truth_frequencies)))
                for r in analytics.ztests:
                    ax.text(r.class_index, top * 1.05, "*" if r.class_index in flagged else "ns",
                            ha="center", fontsize=8)
                ax.legend()
            ax.set_xticks(x)
            ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
            ax.set_ylabel("relative frequency")
            fig.tight_layout()
            return _svg(fig)

    def heatmap_svg(self, analytics: AnalyticsSummary) -> str:
        """Row-normalized transition probabilities; the diagonal is excluded from the colour scale"""
        probs = analytics.transitions.probs
        n = probs.shape[0]
        off_diag = np.ma.masked_array(probs, mask=np.eye(n, dtype=bool))
        vmax = float(off_diag.max()) if off_diag.count() and off_diag.max() > 0 else 1.0

        with plt.rc_context(_SVG_STYLE):
            fig, ax = plt.subplots(figsize=(6, 5))
            image = ax.imshow(off_diag, cmap="viridis", vmin=0.0, vmax=vmax)
            for i in range(n):
                for j in range(n):
                    ax.text(j, i, f"{probs[i, j]:.2f}", ha="center", va="center", fontsize=7,
                            color="gray" if i == j else "white")
            ax.set_xticks(range(n))
            ax.set_yticks(range(n))
            ax.set_xticklabels(self.taxonomy.labels, rotation=45, ha="right", fontsize=7)
            ax.set_yticklabels(self.taxonomy.labels, fontsize=7)
            ax.set_xlabel("to")
            ax.set_ylabel("from")
            fig.colorbar(image, ax=ax)
            fig.tight_layout()
            return _svg(fig)

    def timeline_svg(self, timeline: LabeledTimeline) -> str:
        """One row per class, a block for every frame gazed at that class"""
        labels = np.array([-1 if label is None else label for label in timeline.labels])
        seconds = np.arange(labels.size) / timeline.fps
        n = self.taxonomy.size

        with plt.rc_context(_SVG_STYLE):
            fig, ax = plt.subplots(figsize=(10, 3))
            for c in range(n):
                hits = labels == c
                if hits.any():
                    ax.scatter(seconds[hits], np.full(int(hits.sum()), c), marker="|", s=80,
                               color=plt.cm.tab10(c % 10), rasterized=False)
            ax.set_yticks(range(n))
            ax.set_yticklabels(self.taxonomy.labels, fontsize=7)
            ax.set_ylim(-0.5, n - 0.5)
            ax.set_xlabel("time (s)")
            fig.tight_layout()
            return _svg(fig)

    def html_report(self, analytics: AnalyticsSummary, timeline: Optional[LabeledTimeline]) -> str:
        """Interactive companion of the three panels"""
        names = list(self.taxonomy.labels)
        fig = make_subplots(rows=3, cols=1, subplot_titles=(
            "Class frequencies", "Transition probabilities", "Gaze timeline"))

        fig.add_trace(go.Bar(x=names, y=analytics.frequencies.tolist(), name="predicted"), row=1, col=1)
        if analytics.truth_frequencies is not None:
            fig.add_trace(go.Bar(x=names, y=analytics.truth_frequencies.tolist(), name="ground truth"),
                          row=1, col=1)

        if analytics.transitions is not None:
            z = analytics.transitions.probs.copy()
            np.fill_diagonal(z, np.nan)
            fig.add_trace(go.Heatmap(z=z.tolist(), x=names, y=names, colorscale="Viridis",
                                     showscale=False), row=2, col=1)

        if timeline is not None:
            seconds = [i / timeline.fps for i in range(len(timeline))]
            fig.add_trace(go.Scatter(
                x=seconds, y=[None if label is None else names[label] for label in timeline.labels],
                mode="markers", marker={"symbol": "line-ns-open", "size": 10}, name="gaze"), row=3, col=1)

        fig.update_layout(height=1100, barmode="group", template="plotly_white")
        return fig.to_html(include_plotlyjs="cdn", full_html=True, div_id="gaze-report")

    def summary_text(self, analytics: Optional[AnalyticsSummary], metrics: Optional[Dict[str, float]],
                     bench: Optional[Sequence[BenchCell]], run_summary: Optional[Dict[str, object]]) -> str:
        out = io.StringIO()
        if run_summary:
            out.write("== run ==\n")
            for key, value in run_summary.items():
                out.write(f"{key}: {value}\n")
        if analytics is not None:
            out.write("== attention ==\n")
            for i, name in enumerate(self.taxonomy.labels):
                out.write(f"{name:<28} {analytics.frequencies[i] * 100:6.2f}%\n")
            for r in analytics.ztests:
                verdict = "significant" if r.significant_bonferroni else "ns"
                out.write(f"z-test {self.taxonomy.name(r.class_index)}: z={r.z:.3f} p={r.p_value:.4f} {verdict}\n")
        if metrics:
            out.write("== metrics ==\n")
            out.write(format_metrics_text(metrics))
        if bench:
            out.write("== throughput ==\n")
            for cell in bench:
                if cell.report is None:
                    out.write(f"{cell.pipeline_name} bs={cell.config.batch_size}: aborted ({cell.error})\n")
                else:
                    out.write(f"{cell.pipeline_name} bs={cell.config.batch_size}: "
                              f"{cell.report.mean_fps:.1f} fps\n")
        return out.getvalue()

    def _write(self, path: Path, text: str) -> Path:
        try:
            path.write_text(text, encoding="utf-8", newline="\n")
        except OSError as e:
            raise IoError(f"cannot write {path}: {e}") from e
        return path


def _svg(fig) -> str:
    buffer = io.StringIO()
    fig.savefig(buffer, format="svg", metadata=_SVG_METADATA)
    plt.close(fig)
    return buffer.getvalue()
