"""Developer-survey analysis: Likert stats, acceptance, rater agreement.

Ratings use the 5-point scale -2 (totally disagree) .. +2 (totally
agree) over statements a..e; statements d and e apply to refactored
variants only. Agreement between raters is quadratic-weighted Cohen's
kappa over the items both rated, averaged across all rater pairs.

Conventions recorded in the emitted files: acceptance counts a statement-d
rating of +1 or +2; standard deviations use the n-1 denominator.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

ORIGINAL_VARIANT = "original"
STATEMENTS = ("a", "b", "c", "d", "e")
REFACTORED_ONLY_STATEMENTS = ("d", "e")
VALUE_RANGE = (-2, -1, 0, 1, 2)
ACCEPTANCE_THRESHOLD = 1
ACCEPTANCE_STATEMENT = "d"

CSV_HEADER = ["rater_id", "problem_id", "variant", "statement_id", "value"]

_N_CATEGORIES = 5
_QUADRATIC_WEIGHTS = (np.arange(_N_CATEGORIES)[:, None] - np.arange(_N_CATEGORIES)[None, :]) ** 2 / (
    (_N_CATEGORIES - 1) ** 2
)


class SurveyValidationError(ValueError):
    """One or more rows rejected; carries (line, message) pairs."""

    def __init__(self, problems: list[tuple[int, str]]):
        self.problems = problems
        lines = "; ".join(f"line {line}: {msg}" for line, msg in problems)
        super().__init__(f"{len(problems)} invalid rating row(s): {lines}")


@dataclass(frozen=True)
class Rating:
    rater_id: str
    problem_id: str
    variant: str
    statement_id: str
    value: int


@dataclass
class RatingsTable:
    ratings: list[Rating]

    @property
    def raters(self) -> set[str]:
        return {r.rater_id for r in self.ratings}

    @property
    def variants(self) -> set[str]:
        return {r.variant for r in self.ratings}

    def for_variant(self, variant: str) -> list[Rating]:
        return [r for r in self.ratings if r.variant == variant]


def _validate_row(row: dict, line: int, seen: set) -> tuple[Rating | None, list[tuple[int, str]]]:
    problems = []
    statement = (row.get("statement_id") or "").strip()
    variant = (row.get("variant") or "").strip()
    raw_value = (row.get("value") or "").strip()
    if statement not in STATEMENTS:
        problems.append((line, f"unknown statement {statement!r}"))
    if statement in REFACTORED_ONLY_STATEMENTS and variant == ORIGINAL_VARIANT:
        problems.append((line, f"statement {statement!r} is not asked for the original variant"))
    try:
        value = int(raw_value)
    except ValueError:
        value = None
        problems.append((line, f"value {raw_value!r} is not an integer"))
    if value is not None and value not in VALUE_RANGE:
        problems.append((line, f"value {value} outside the 5-point scale"))
    key = (row.get("rater_id"), row.get("problem_id"), variant, statement)
    if key in seen:
        problems.append((line, f"duplicate rating key {key}"))
    seen.add(key)
    if problems:
        return None, problems
    return Rating(row["rater_id"], row["problem_id"], variant, statement, value), []


def load_ratings(path: str | Path) -> RatingsTable:
    """Parse and validate the ratings CSV; rejects any malformed row."""
    ratings: list[Rating] = []
    problems: list[tuple[int, str]] = []
    seen: set = set()
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != CSV_HEADER:
            raise SurveyValidationError([(1, f"header must be {','.join(CSV_HEADER)}")])
        for line, row in enumerate(reader, start=2):
            rating, row_problems = _validate_row(row, line, seen)
            problems.extend(row_problems)
            if rating is not None:
                ratings.append(rating)
    if problems:
        raise SurveyValidationError(problems)
    return RatingsTable(ratings)


@dataclass(frozen=True)
class StatementStats:
    mean: float
    stddev: float
    n: int
    single_sample: bool = False


def statement_stats(table: RatingsTable) -> dict[tuple[str, str], StatementStats]:
    """Mean and sample standard deviation per (variant, statement)."""
    if not table.ratings:
        raise ValueError("ratings table is empty")
    groups: dict[tuple[str, str], list[int]] = {}
    for rating in table.ratings:
        groups.setdefault((rating.variant, rating.statement_id), []).append(rating.value)
    stats = {}
    for key, values in groups.items():
        n = len(values)
        mean = sum(values) / n
        if n == 1:
            stats[key] = StatementStats(mean=mean, stddev=0.0, n=1, single_sample=True)
        else:
            variance = sum((v - mean) ** 2 for v in values) / (n - 1)
            stats[key] = StatementStats(mean=mean, stddev=math.sqrt(variance), n=n)
    return stats


def acceptance_rate(table: RatingsTable, variant: str) -> float:
    """Share of statement-d ratings at Agree or better for the variant."""
    if variant == ORIGINAL_VARIANT:
        raise ValueError("acceptance is only defined for refactored variants")
    values = [r.value for r in table.for_variant(variant) if r.statement_id == ACCEPTANCE_STATEMENT]
    if not values:
        raise ValueError(f"variant {variant!r} has no acceptance-statement ratings")
    return sum(1 for v in values if v >= ACCEPTANCE_THRESHOLD) / len(values)


def weighted_score(table: RatingsTable, variant: str) -> int:
    """Signed sum of every rating value given to the variant."""
    return sum(r.value for r in table.for_variant(variant))


def qwk(rater_a: Sequence[int], rater_b: Sequence[int]) -> float:
    """Quadratic-weighted Cohen's kappa over two aligned rating vectors.

    kappa = 1 - sum(w * O) / sum(w * E) with w[i][j] = (i-j)^2 / (k-1)^2,
    O the observed 5x5 contingency matrix and E the outer product of its
    marginals normalized to the same total. Two identical constant
    vectors are perfect agreement (kappa 1).
    """
    if len(rater_a) != len(rater_b):
        raise ValueError("rating vectors must have equal length")
    if not rater_a:
        raise ValueError("rating vectors are empty")
    a = np.asarray(rater_a, dtype=int) + 2
    b = np.asarray(rater_b, dtype=int) + 2
    if a.min() < 0 or a.max() >= _N_CATEGORIES or b.min() < 0 or b.max() >= _N_CATEGORIES:
        raise ValueError("ratings must lie on the 5-point scale")
    observed = np.zeros((_N_CATEGORIES, _N_CATEGORIES))
    np.add.at(observed, (a, b), 1.0)
    expected = np.outer(observed.sum(axis=1), observed.sum(axis=0)) / observed.sum()
    denominator = float((_QUADRATIC_WEIGHTS * expected).sum())
    numerator = float((_QUADRATIC_WEIGHTS * observed).sum())
    if denominator == 0.0:
        return 1.0
    return 1.0 - numerator / denominator


@dataclass(frozen=True)
class KappaStats:
    mean: float | None
    min: float | None
    max: float | None
    n_pairs: int
    skipped_pairs: int


GROUPINGS = ("overall", "by-statement", "by-variant")


def _item_key(rating: Rating) -> tuple[str, str, str]:
    return (rating.problem_id, rating.variant, rating.statement_id)


def _pairwise_kappas(table: RatingsTable, keep) -> KappaStats:
    by_rater: dict[str, dict[tuple, int]] = {}
    for rating in table.ratings:
        if not keep(rating):
            continue
        by_rater.setdefault(rating.rater_id, {})[_item_key(rating)] = rating.value
    raters = sorted(by_rater)
    kappas: list[float] = []
    skipped = 0
    for first, second in itertools.combinations(raters, 2):
        shared = sorted(set(by_rater[first]) & set(by_rater[second]))
        if not shared:
            skipped += 1
            continue
        kappas.append(qwk(
            [by_rater[first][item] for item in shared],
            [by_rater[second][item] for item in shared],
        ))
    if not kappas:
        return KappaStats(None, None, None, 0, skipped)
    return KappaStats(
        mean=sum(kappas) / len(kappas),
        min=min(kappas),
        max=max(kappas),
        n_pairs=len(kappas),
        skipped_pairs=skipped,
    )


def mean_pairwise_kappa(table: RatingsTable, grouping: str = "overall") -> dict[str, KappaStats]:
    """Mean quadratic-weighted kappa over all rater pairs, per group."""
    if grouping not in GROUPINGS:
        raise ValueError(f"grouping must be one of {GROUPINGS}")
    if len(table.raters) < 2:
        raise ValueError("need at least two raters for agreement")
    if grouping == "overall":
        return {"all": _pairwise_kappas(table, lambda r: True)}
    if grouping == "by-statement":
        statements = sorted({r.statement_id for r in table.ratings})
        return {s: _pairwise_kappas(table, lambda r, s=s: r.statement_id == s) for s in statements}
    variants = sorted(table.variants)
    return {v: _pairwise_kappas(table, lambda r, v=v: r.variant == v) for v in variants}


# --- CSV emission --------------------------------------------------------------

def _write_csv(path: Path, rows: list[list[str]], comments: Sequence[str]) -> None:
    buffer = io.StringIO()
    for comment in comments:
        buffer.write(f"# {comment}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerows(rows)
    path.write_text(buffer.getvalue(), encoding="utf-8")


def _fmt(value: float | None) -> str:
    return "" if value is None else repr(value)


def write_survey_outputs(table: RatingsTable, out_dir: str | Path) -> list[Path]:
    """Write survey_stats.csv, survey_kappa.csv and survey_acceptance.csv."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    stats_rows = [["variant", "statement", "mean", "stddev", "n", "single_sample"]]
    for (variant, statement), stats in sorted(statement_stats(table).items()):
        stats_rows.append([
            variant, statement, repr(stats.mean), repr(stats.stddev),
            str(stats.n), str(int(stats.single_sample)),
        ])
    stats_path = out_dir / "survey_stats.csv"
    _write_csv(stats_path, stats_rows, ["standard deviation uses the n-1 (sample) denominator"])

    kappa_rows = [["grouping", "group", "mean_kappa", "min_kappa", "max_kappa", "n_pairs", "skipped_pairs"]]
    for grouping in GROUPINGS:
        for group, stats in sorted(mean_pairwise_kappa(table, grouping).items()):
            kappa_rows.append([
                grouping, group, _fmt(stats.mean), _fmt(stats.min), _fmt(stats.max),
                str(stats.n_pairs), str(stats.skipped_pairs),
            ])
    kappa_path = out_dir / "survey_kappa.csv"
    _write_csv(kappa_path, kappa_rows, [
        "quadratic-weighted Cohen's kappa, averaged over rater pairs",
        "items are (problem, variant, statement) cells shared by both raters",
    ])

    acceptance_rows = [["variant", "acceptance_rate", "weighted_score", "n_ratings"]]
    for variant in sorted(table.variants):
        if variant == ORIGINAL_VARIANT:
            continue
        acceptance_rows.append([
            variant,
            repr(acceptance_rate(table, variant)),
            str(weighted_score(table, variant)),
            str(len(table.for_variant(variant))),
        ])
    acceptance_path = out_dir / "survey_acceptance.csv"
    _write_csv(acceptance_path, acceptance_rows, [
        "a rating counts as acceptance when the agent-acceptance statement scores +1 or higher",
    ])

    return [stats_path, kappa_path, acceptance_path]
