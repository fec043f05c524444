"""Corpus ingestion, selection, sampling and preprocessing.

Expected on-disk layout::

    <root>/<problem_id>/solutions/<sample_id>.py
    <root>/<problem_id>/tests/<test_id>.in
    <root>/<problem_id>/tests/<test_id>.out

Submissions are binned by LOC and drawn with additive smoothing so rare
solution lengths are over-represented: a bin with frequency f gets
selection probability (f + alpha) / (N + alpha * d) where N is the total
sample count and d the number of bins.
"""

from __future__ import annotations

import ast
import hashlib
import io
import logging
import random
import tokenize
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from . import metrics
from .wrapping import WrapError, wrap_top_level  # re-exported: wrapping is a preprocessing step

__all__ = [
    "Problem", "CodeSample", "TestCase", "BinHistogram", "SamplingConfig",
    "IngestError", "SamplingError",
    "ingest_corpus", "filter_problems", "build_histogram",
    "smoothed_distribution", "sample_submissions", "deduplicate",
    "normalized_tokens", "wrap_top_level", "validate_baseline",
]

log = logging.getLogger(__name__)


class IngestError(RuntimeError):
    """Corpus root missing or not matching the expected layout."""


class SamplingError(RuntimeError):
    """A problem cannot satisfy the requested sample count."""


@dataclass(frozen=True)
class TestCase:
    test_id: str
    input_text: str
    expected_output: str


@dataclass
class CodeSample:
    sample_id: str
    problem_id: str
    source: str
    loc_total: int
    wrapped: bool = False


@dataclass
class Problem:
    problem_id: str
    submissions: list[CodeSample]
    tests: list[TestCase]
    ingest_warnings: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class BinHistogram:
    """LOC distribution over fixed-width bins.

    ``bins`` maps bin index (loc // bin_width) to frequency and covers the
    full index range between the smallest and largest observed LOC, so
    interior empty bins appear with frequency 0.
    """

    bin_width: int
    bins: dict[int, int]
    total: int
    bin_count: int


@dataclass(frozen=True)
class SamplingConfig:
    alpha: float = 5.0
    samples_per_problem: int = 40
    rng_seed: int = 0
    bin_width: int = 5

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.samples_per_problem < 1:
            raise ValueError("samples_per_problem must be >= 1")
        if self.bin_width < 1:
            raise ValueError("bin_width must be >= 1")


def _read_text(path: Path) -> str:
    return path.read_text(encoding="utf-8", errors="replace")


def ingest_corpus(root: str | Path, problem_filter: Sequence[str] | None = None) -> list[Problem]:
    """Load problems from ``root``; see module docstring for the layout.

    Submissions that fail to parse are skipped with a warning; problems
    without any complete test pair are excluded entirely.
    """
    root = Path(root)
    if not root.is_dir():
        raise IngestError(f"corpus root does not exist: {root}")
    wanted = set(problem_filter) if problem_filter is not None else None

    problems: list[Problem] = []
    for problem_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        problem_id = problem_dir.name
        if wanted is not None and problem_id not in wanted:
            continue
        warnings: list[str] = []

        tests: list[TestCase] = []
        tests_dir = problem_dir / "tests"
        if tests_dir.is_dir():
            for in_path in sorted(tests_dir.glob("*.in")):
                out_path = in_path.with_suffix(".out")
                if not out_path.is_file():
                    warnings.append(f"test {in_path.stem}: missing .out file")
                    continue
                tests.append(TestCase(in_path.stem, _read_text(in_path), _read_text(out_path)))
        if not tests:
            log.warning("problem %s has no usable tests; excluded", problem_id)
            continue

        submissions: list[CodeSample] = []
        solutions_dir = problem_dir / "solutions"
        if solutions_dir.is_dir():
            for src_path in sorted(solutions_dir.glob("*.py")):
                source = _read_text(src_path)
                try:
                    ast.parse(source)
                except SyntaxError as exc:
                    log.warning("skipping %s/%s: does not parse (%s)", problem_id, src_path.name, exc.msg)
                    warnings.append(f"submission {src_path.stem}: parse failure")
                    continue
                submissions.append(CodeSample(
                    sample_id=src_path.stem,
                    problem_id=problem_id,
                    source=source,
                    loc_total=max(1, metrics.count_code_lines(source)),
                ))

        problems.append(Problem(problem_id, submissions, tests, warnings))
    return problems


def _median(values: Sequence[int]) -> float:
    ordered = sorted(values)
    mid = len(ordered) // 2
    if len(ordered) % 2:
        return float(ordered[mid])
    return (ordered[mid - 1] + ordered[mid]) / 2


def submission_max_cc(sample: CodeSample) -> int:
    """Max cyclomatic complexity of a submission (wrapped when needed)."""
    return metrics.file_metrics(sample.source).max_cc


def problem_exclusion_reason(problem: Problem, min_cc: int, min_submissions: int) -> str | None:
    """Why the problem fails admission, or None if it qualifies.

    A problem qualifies when at least ``min_submissions`` submissions are
    present and the median over its submissions' max CC is >= ``min_cc``.
    """
    if len(problem.submissions) < min_submissions:
        return f"only {len(problem.submissions)} submissions (need {min_submissions})"
    cc_values = [submission_max_cc(s) for s in problem.submissions]
    median_cc = _median(cc_values)
    if median_cc < min_cc:
        return f"median max-CC {median_cc:g} below threshold {min_cc}"
    return None


def filter_problems(problems: Iterable[Problem], min_cc: int = 3, min_submissions: int = 40) -> list[Problem]:
    """Keep problems that pass the admission predicate above."""
    if min_cc < 1 or min_submissions < 1:
        raise ValueError("min_cc and min_submissions must be >= 1")
    return [p for p in problems if problem_exclusion_reason(p, min_cc, min_submissions) is None]


def build_histogram(samples: Sequence[CodeSample], bin_width: int) -> BinHistogram:
    """Bin samples by total LOC into fixed-width bins."""
    if bin_width < 1:
        raise ValueError("bin_width must be >= 1")
    if not samples:
        raise ValueError("cannot build a histogram from zero samples")
    indices = [s.loc_total // bin_width for s in samples]
    lo, hi = min(indices), max(indices)
    bins = {i: 0 for i in range(lo, hi + 1)}
    for i in indices:
        bins[i] += 1
    return BinHistogram(bin_width=bin_width, bins=bins, total=len(samples), bin_count=len(bins))


def smoothed_distribution(hist: BinHistogram, alpha: float) -> dict[int, float]:
    """Additively smoothed selection probability per bin."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    denom = hist.total + alpha * hist.bin_count
    if denom == 0:
        raise ValueError("empty histogram with alpha=0 has no distribution")
    return {index: (freq + alpha) / denom for index, freq in hist.bins.items()}


def _problem_rng(seed: int, problem_id: str) -> random.Random:
    digest = hashlib.sha256(f"{seed}:{problem_id}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _allocate_quotas(
    probabilities: dict[int, float],
    capacities: dict[int, int],
    k: int,
    rng: random.Random,
) -> dict[int, int]:
    """Integer per-bin quotas summing to ``k``.

    Whole slots follow floor(k * p); the leftover slots are drawn without
    replacement across bins with probability proportional to the
    fractional remainders, which keeps the expected quota at exactly
    k * p (so repeated single-sample draws reproduce the distribution).
    Bins short of members give their surplus to the bins with the largest
    remaining probability mass that still have spare members.
    """
    order = sorted(probabilities)
    quotas = {i: int(k * probabilities[i]) for i in order}
    leftover = k - sum(quotas.values())
    remainders = {i: k * probabilities[i] - quotas[i] for i in order}
    pool = [i for i in order if remainders[i] > 0]
    for _ in range(leftover):
        weights = [remainders[i] for i in pool]
        pick = rng.choices(pool, weights=weights)[0]
        quotas[pick] += 1
        pool.remove(pick)

    # Spill quota that exceeds a bin's membership.
    surplus = 0
    for i in order:
        if quotas[i] > capacities[i]:
            surplus += quotas[i] - capacities[i]
            quotas[i] = capacities[i]
    while surplus > 0:
        open_bins = [i for i in order if quotas[i] < capacities[i]]
        if not open_bins:
            raise SamplingError("total bin capacity below requested sample count")
        pick = max(open_bins, key=lambda i: (k * probabilities[i] - quotas[i], -i))
        quotas[pick] += 1
        surplus -= 1
    return quotas


def sample_submissions(problem: Problem, config: SamplingConfig) -> list[CodeSample]:
    """Draw ``config.samples_per_problem`` distinct submissions.

    Per-bin selection quotas follow the smoothed LOC distribution; members
    are drawn uniformly without replacement inside each bin. Deterministic
    for a fixed ``rng_seed``.
    """
    population = problem.submissions
    k = config.samples_per_problem
    if len(population) < k:
        raise SamplingError(
            f"problem {problem.problem_id}: {len(population)} submissions, need {k}"
        )
    hist = build_histogram(population, config.bin_width)
    probabilities = smoothed_distribution(hist, config.alpha)

    members: dict[int, list[CodeSample]] = {i: [] for i in hist.bins}
    for sample in sorted(population, key=lambda s: s.sample_id):
        members[sample.loc_total // config.bin_width].append(sample)
    capacities = {i: len(group) for i, group in members.items()}

    rng = _problem_rng(config.rng_seed, problem.problem_id)
    quotas = _allocate_quotas(probabilities, capacities, k, rng)

    chosen: list[CodeSample] = []
    for index in sorted(quotas):
        if quotas[index]:
            chosen.extend(rng.sample(members[index], quotas[index]))
    return sorted(chosen, key=lambda s: s.sample_id)


def normalized_tokens(source: str) -> tuple[tuple[int, str], ...]:
    """Token stream with comments, blank lines and layout stripped.

    Two sources that differ only in comments, blank lines, spacing or the
    amount of indentation map to the same tuple.
    """
    out: list[tuple[int, str]] = []
    reader = io.StringIO(source).readline
    for tok in tokenize.generate_tokens(reader):
        if tok.type in (tokenize.COMMENT, tokenize.NL, tokenize.ENCODING, tokenize.ENDMARKER):
            continue
        if tok.type in (tokenize.INDENT, tokenize.DEDENT, tokenize.NEWLINE):
            out.append((tok.type, ""))
        else:
            out.append((tok.type, tok.string))
    return tuple(out)


def deduplicate(samples: Iterable[CodeSample]) -> list[CodeSample]:
    """Drop samples whose normalized token streams collide.

    The first occurrence in sample_id order wins; the result is sorted by
    sample_id.
    """
    seen: set[tuple[tuple[int, str], ...]] = set()
    kept: list[CodeSample] = []
    for sample in sorted(samples, key=lambda s: s.sample_id):
        key = normalized_tokens(sample.source)
        if key in seen:
            continue
        seen.add(key)
        kept.append(sample)
    return kept


def validate_baseline(sample: CodeSample, tests: Sequence[TestCase], runner: Callable) -> bool:
    """True iff the (wrapped) sample passes every one of its tests."""
    outcomes = runner(sample.source, tests)
    return all(outcome.status == "pass" for outcome in outcomes)
