"""Emit evaluation results as plot-ready CSV tables.

Outputs are data files, not figures: a summary table (one row per
approach plus an "Original Samples" row), a problem-by-approach pass-rate
heatmap, least-squares fits of pass rate against the quality metrics, and
the distribution of iterative successes by attempt.

Floats are written with ``repr`` so every emitted CSV parses back to the
exact in-memory values. Lines starting with ``#`` are header comments.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .pipeline import EvaluationTable, RunRecord
from .prompts import ONE_SHOT, RCI

SUMMARY_COLUMNS = ["Approach", "EM TPP", "LOC", "CC"]
ORIGINAL_ROW_LABEL = "Original Samples"


@dataclass(frozen=True)
class RegressionFit:
    slope: float
    intercept: float
    r_squared: float
    n_points: int


def approach_label(model_name: str, strategy: str) -> str:
    suffix = {RCI: "RCI", ONE_SHOT: "Oneshot"}.get(strategy, strategy)
    return f"{model_name}-{suffix}"


def ols_fit(points: Sequence[tuple[float, float]]) -> RegressionFit:
    """Least-squares line through ``points`` with the usual r-squared."""
    if len(points) < 2:
        raise ValueError("need at least 2 points to fit a line")
    n = len(points)
    mean_x = sum(x for x, _ in points) / n
    mean_y = sum(y for _, y in points) / n
    sxx = sum((x - mean_x) ** 2 for x, _ in points)
    if sxx == 0:
        raise ValueError("zero variance in x; line is undefined")
    sxy = sum((x - mean_x) * (y - mean_y) for x, y in points)
    slope = sxy / sxx
    intercept = mean_y - slope * mean_x
    ss_res = sum((y - (slope * x + intercept)) ** 2 for x, y in points)
    ss_tot = sum((y - mean_y) ** 2 for _, y in points)
    if ss_tot == 0:
        r_squared = 1.0 if ss_res < 1e-30 else 0.0
    else:
        r_squared = 1.0 - ss_res / ss_tot
    return RegressionFit(slope=slope, intercept=intercept, r_squared=r_squared, n_points=n)


def tpp_heatmap(table: EvaluationTable) -> tuple[list[str], list[str], list[list[float | None]]]:
    """Dense problem-by-approach matrix of pass rates; missing cells None.

    Rows are problem ids and columns approach labels, both sorted.
    """
    problems = sorted({key[2] for key in table.per_problem})
    approaches = sorted(approach_label(a.model_name, a.strategy) for a in table.approaches)
    label_to_key = {approach_label(a.model_name, a.strategy): (a.model_name, a.strategy)
                    for a in table.approaches}
    matrix: list[list[float | None]] = []
    for problem in problems:
        row: list[float | None] = []
        for label in approaches:
            model, strategy = label_to_key[label]
            cell = table.per_problem.get((model, strategy, problem))
            row.append(cell.tpp if cell is not None else None)
        matrix.append(row)
    return problems, approaches, matrix


def iteration_distribution(records: Sequence[RunRecord]) -> dict[str, dict[int, float]]:
    """Per-model fractions of iterative successes by attempt index."""
    counts: dict[str, dict[int, int]] = {}
    for record in records:
        if record.strategy != RCI or record.success_attempt is None:
            continue
        per_model = counts.setdefault(record.model_name, {})
        per_model[record.success_attempt] = per_model.get(record.success_attempt, 0) + 1
    out: dict[str, dict[int, float]] = {}
    for model, hist in counts.items():
        total = sum(hist.values())
        out[model] = {attempt: hist[attempt] / total for attempt in sorted(hist)}
    return out


def emit_summary(table: EvaluationTable) -> list[list[str]]:
    """Summary rows: header, the original-code row, then one per approach."""
    rows = [list(SUMMARY_COLUMNS)]
    rows.append([ORIGINAL_ROW_LABEL, "", repr(table.original_avg_loc), repr(table.original_max_cc)])
    for stats in sorted(table.approaches, key=lambda a: approach_label(a.model_name, a.strategy)):
        rows.append([
            approach_label(stats.model_name, stats.strategy),
            repr(stats.tpp),
            repr(stats.mean_avg_loc) if stats.mean_avg_loc is not None else "",
            repr(stats.mean_max_cc) if stats.mean_max_cc is not None else "",
        ])
    return rows


def _write_csv(path: Path, rows: list[list[str]], comments: Sequence[str] = ()) -> None:
    buffer = io.StringIO()
    for comment in comments:
        buffer.write(f"# {comment}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerows(rows)
    path.write_text(buffer.getvalue(), encoding="utf-8")


def read_csv(path: Path) -> list[list[str]]:
    """Rows of an emitted CSV, comment lines skipped."""
    with path.open(encoding="utf-8", newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.reader(lines))


def regression_points(
    table: EvaluationTable, metric: str
) -> dict[tuple[str, str], list[tuple[float, float]]]:
    """One (metric, tpp) point per problem, grouped by approach."""
    points: dict[tuple[str, str], list[tuple[float, float]]] = {}
    for (model, strategy, _problem), cell in sorted(table.per_problem.items()):
        value = cell.mean_max_cc if metric == "cc" else cell.mean_avg_loc
        if value is None:
            continue
        points.setdefault((model, strategy), []).append((value, cell.tpp))
    return points


def write_reports(table: EvaluationTable, records: Sequence[RunRecord], out_dir: str | Path) -> list[Path]:
    """Write summary, heatmap, regression and iteration CSVs; return paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    summary_path = out_dir / "summary.csv"
    _write_csv(summary_path, emit_summary(table))

    problems, approaches, matrix = tpp_heatmap(table)
    heatmap_rows = [["problem"] + approaches]
    for problem, row in zip(problems, matrix):
        heatmap_rows.append([problem] + [repr(v) if v is not None else "" for v in row])
    heatmap_path = out_dir / "heatmap.csv"
    _write_csv(heatmap_path, heatmap_rows)

    regression_rows = [["approach", "metric", "slope", "intercept", "r2", "n"]]
    for metric in ("cc", "loc"):
        for (model, strategy), pts in sorted(regression_points(table, metric).items()):
            xs = {x for x, _ in pts}
            if len(pts) < 2 or len(xs) < 2:
                continue
            fit = ols_fit(pts)
            regression_rows.append([
                approach_label(model, strategy), metric,
                repr(fit.slope), repr(fit.intercept), repr(fit.r_squared), str(fit.n_points),
            ])
    regression_path = out_dir / "regression.csv"
    _write_csv(
        regression_path,
        regression_rows,
        comments=[
            "one point per (approach, problem): x = mean of the metric over passing"
            " final candidates, y = problem-level test pass rate",
            "approaches with fewer than two fittable points are omitted",
        ],
    )

    iteration_rows = [["approach", "attempt", "fraction"]]
    for model, fractions in sorted(iteration_distribution(records).items()):
        for attempt, fraction in fractions.items():
            iteration_rows.append([approach_label(model, RCI), str(attempt), repr(fraction)])
    iterations_path = out_dir / "iterations.csv"
    _write_csv(iterations_path, iteration_rows)

    return [summary_path, heatmap_path, regression_path, iterations_path]


def write_summary_csv(table: EvaluationTable, out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "summary.csv"
    _write_csv(path, emit_summary(table))
    return path
