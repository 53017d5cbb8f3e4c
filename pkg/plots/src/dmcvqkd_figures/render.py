"""Render figure analogues from key-rate sweep CSVs.

The only input contract is the CSV written by the `dmcvqkd sweep` command; this
package reads and draws, nothing more.  A figure spec is a TOML file naming the
series (CSV path, label, columns) and the axes; zero rates are dropped from
log-scale plots and counted in a footnote, since log axes cannot show them.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 4.2),
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.markersize": 5,
}


class FigureSpecError(ValueError):
    """Raised for malformed specs, missing files, or missing CSV columns."""


@dataclass(frozen=True)
class SeriesSpec:
    csv_path: Path
    label: str
    x_column: str = "value"
    y_column: str = "rate"
    marker: str = "o"


@dataclass(frozen=True)
class FigureSpec:
    title: str
    x_label: str
    y_label: str
    output: str
    log_y: bool = True
    series: tuple[SeriesSpec, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.series:
            raise FigureSpecError("figure spec needs at least one series")


def load_spec(path: str | Path) -> FigureSpec:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise FigureSpecError(f"cannot read spec {path}: {exc}") from exc
    fig_table = data.get("figure", {})
    series = []
    for entry in data.get("series", []):
        if "csv" not in entry or "label" not in entry:
            raise FigureSpecError(f"series entries need csv and label: {entry}")
        series.append(
            SeriesSpec(
                csv_path=(path.parent / entry["csv"]).resolve(),
                label=entry["label"],
                x_column=entry.get("x", "value"),
                y_column=entry.get("y", "rate"),
                marker=entry.get("marker", "o"),
            )
        )
    try:
        return FigureSpec(
            title=fig_table["title"],
            x_label=fig_table["x_label"],
            y_label=fig_table["y_label"],
            output=fig_table["output"],
            log_y=fig_table.get("log_y", True),
            series=tuple(series),
        )
    except KeyError as exc:
        raise FigureSpecError(f"figure spec missing key {exc.args[0]}") from exc


def read_series(series: SeriesSpec) -> tuple[list[float], list[float]]:
    try:
        with open(series.csv_path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise FigureSpecError(f"cannot read {series.csv_path}: {exc}") from exc
    if not rows:
        raise FigureSpecError(f"{series.csv_path} has no data rows")
    missing = [
        col for col in (series.x_column, series.y_column) if col not in rows[0]
    ]
    if missing:
        raise FigureSpecError(
            f"{series.csv_path} is missing columns {missing}; "
            f"available: {sorted(rows[0])}"
        )
    xs, ys = [], []
    for row in rows:
        if row.get("status", "ok") != "ok":
            continue
        xs.append(float(row[series.x_column]))
        ys.append(float(row[series.y_column]))
    if not xs:
        raise FigureSpecError(f"{series.csv_path} has no successful rows")
    return xs, ys


def build_figure(spec: FigureSpec):
    """Assemble the matplotlib figure; separated from saving for testability."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        dropped = 0
        for series in spec.series:
            xs, ys = read_series(series)
            if spec.log_y:
                kept = [(x, y) for x, y in zip(xs, ys) if y > 0]
                dropped += len(xs) - len(kept)
                if not kept:
                    continue
                xs, ys = zip(*kept)
            ax.plot(xs, ys, marker=series.marker, label=series.label)
        if spec.log_y:
            ax.set_yscale("log")
        ax.set_xlabel(spec.x_label)
        ax.set_ylabel(spec.y_label)
        ax.set_title(spec.title)
        ax.legend()
        if dropped:
            fig.text(
                0.99,
                0.01,
                f"{dropped} zero-rate point(s) omitted from the log scale",
                ha="right",
                fontsize=7,
                style="italic",
            )
    return fig


def render(spec_path: str | Path, out_dir: str | Path | None = None) -> Path:
    spec = load_spec(spec_path)
    fig = build_figure(spec)
    out_base = Path(out_dir) if out_dir else Path(spec_path).parent
    out_path = out_base / spec.output
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return out_path


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="dmcvqkd-figures", description="render figures from sweep CSVs"
    )
    parser.add_argument("specs", nargs="+", help="figure spec TOML files")
    parser.add_argument("--out-dir", default=None)
    args = parser.parse_args(argv)
    status = 0
    for spec_path in args.specs:
        try:
            out = render(spec_path, args.out_dir)
            print(f"rendered {out}")
        except FigureSpecError as exc:
            print(f"error: {exc}", file=sys.stderr)
            status = 1
    return status


if __name__ == "__main__":
    sys.exit(main())
