"""Report assembly: turn emitted artifacts into tables, figures, and a summary.

The report step is a pure function of a directory of previously produced
artifacts (series CSVs, scalar JSON files, verdict dumps): it copies the
tables, renders one PNG per series plus a training overview when the
simulator bundle is present, and writes a text summary that includes the
two-phase probe verdict. Re-running it never touches its inputs.
"""

from __future__ import annotations

import json
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import MetricSeries, read_series_csv
from .sim import two_phase_probe

# series that together allow the phase probe to run on a report input dir
SIM_BUNDLE = ("exec_entropy", "reward_mean", "semantic_entropy", "semantic_entropy_success")

OVERVIEW_SERIES = ("reward_mean", "exec_entropy", "planning_entropy", "semantic_entropy")


@dataclass
class ReportSummary:
    """What the report contains; rendered verbatim into summary.txt."""

    tables: list[str] = field(default_factory=list)
    figures: list[str] = field(default_factory=list)
    scalars: dict[str, object] = field(default_factory=dict)
    probe: tuple[bool, bool, int | None] | None = None

    def render(self) -> str:
        lines = ["# run report", ""]
        if self.probe is not None:
            phase1, phase2, crossover = self.probe
            lines += [
                "two-phase probe:",
                f"  phase1 (execution entropy halved in first third): {phase1}",
                f"  phase2 (strategy diversity peak while reward rising): {phase2}",
                f"  crossover step: {crossover}",
                "",
            ]
        if self.scalars:
            lines.append("scalars:")
            lines += [f"  {key}: {value}" for key, value in sorted(self.scalars.items())]
            lines.append("")
        lines.append("tables:")
        lines += [f"  {name}" for name in self.tables] or ["  (none)"]
        lines.append("figures:")
        lines += [f"  {name}" for name in self.figures] or ["  (none)"]
        return "\n".join(lines) + "\n"


def _plot_points(ax, series: MetricSeries, label: str | None = None) -> None:
    # gaps split the line; matplotlib skips NaN segments naturally
    xs = list(series.steps)
    ys = [float("nan") if p.value is None else p.value for p in series.points]
    ax.plot(xs, ys, linewidth=1.2, label=label)


def render_series_png(series: MetricSeries, path: str | Path) -> None:
    """One line figure per series; gaps appear as breaks in the line."""
    fig, ax = plt.subplots(figsize=(7, 3.5), constrained_layout=True)
    _plot_points(ax, series)
    ax.set_xlabel("step")
    ax.set_ylabel(series.unit)
    title = series.name
    if series.lower_bound:
        title += " (lower bound)"
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_overview_png(series: dict[str, MetricSeries], path: str | Path) -> None:
    """Stacked training overview for the simulator bundle."""
    names = [n for n in OVERVIEW_SERIES if n in series]
    fig, axes = plt.subplots(
        len(names), 1, figsize=(7, 2.2 * len(names)), sharex=True, constrained_layout=True
    )
    if len(names) == 1:
        axes = [axes]
    for ax, name in zip(axes, names):
        _plot_points(ax, series[name])
        ax.set_ylabel(series[name].unit)
        ax.set_title(name, fontsize=10)
        ax.grid(True, alpha=0.3)
    axes[-1].set_xlabel("step")
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_report(in_dir: str | Path, out_dir: str | Path) -> ReportSummary:
    """Assemble tables, figures, and summary.txt from an artifact directory."""
    in_dir = Path(in_dir)
    out_dir = Path(out_dir)
    if not in_dir.is_dir():
        raise ValueError(f"artifact directory {in_dir} does not exist")
    tables_dir = out_dir / "tables"
    figures_dir = out_dir / "figures"
    tables_dir.mkdir(parents=True, exist_ok=True)
    figures_dir.mkdir(parents=True, exist_ok=True)

    summary = ReportSummary()
    series_by_name: dict[str, MetricSeries] = {}

    for csv_path in sorted(in_dir.rglob("*.csv")):
        series = read_series_csv(csv_path)
        series_by_name[series.name] = series
        shutil.copyfile(csv_path, tables_dir / csv_path.name)
        summary.tables.append(csv_path.name)
        png_name = csv_path.stem + ".png"
        render_series_png(series, figures_dir / png_name)
        summary.figures.append(png_name)

    for json_path in sorted(in_dir.rglob("*.json")):
        try:
            payload = json.loads(json_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValueError(f"malformed scalar file {json_path}: {exc}") from exc
        if isinstance(payload, dict) and payload.get("kind") == "scalars":
            for key, value in payload.items():
                if key != "kind":
                    summary.scalars[key] = value

    if all(name in series_by_name for name in SIM_BUNDLE):
        summary.probe = two_phase_probe(series_by_name)
        render_overview_png(series_by_name, figures_dir / "training_overview.png")
        summary.figures.append("training_overview.png")

    (out_dir / "summary.txt").write_text(summary.render(), encoding="utf-8")
    return summary
