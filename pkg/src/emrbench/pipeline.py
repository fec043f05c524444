"""Drive prompt -> inference -> execution -> metrics for each sample.

One-shot gets a single attempt and logs failures; the iterative strategy
appends test-failure feedback and retries until it passes or the attempt
budget is spent. Quality metrics are computed only for candidates that
pass every test.

Records are serialized without wall-clock fields (latency, durations) so
that two runs with the same seed and a scripted mock produce byte-equal
record files; timings are only logged.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import llm, metrics, prompts, runner
from .corpus import CodeSample, TestCase, normalized_tokens

log = logging.getLogger(__name__)

SUCCESS = "success"
UNSUCCESSFUL = "unsuccessful"
MODEL_ERROR = "model-error"

NO_OP_FLAG = "no-op-refactoring"


@dataclass
class AttemptRecord:
    sample_id: str
    model_name: str
    strategy: str
    attempt_index: int
    candidate_source: str
    outcomes: list[runner.TestOutcome]
    passed_all: bool
    metrics: metrics.MetricReport | None = None
    failure_kind: str | None = None
    flags: list[str] = field(default_factory=list)
    wall_time_ms: float = 0.0


@dataclass
class RunRecord:
    sample_id: str
    problem_id: str
    model_name: str
    strategy: str
    final_status: str
    success_attempt: int | None
    attempts: list[AttemptRecord]
    original_metrics: metrics.MetricReport
    config_digest: str = ""


@dataclass(frozen=True)
class ApproachStats:
    model_name: str
    strategy: str
    n_samples: int
    n_success: int
    tpp: float
    mean_avg_loc: float | None
    mean_max_cc: float | None


@dataclass(frozen=True)
class ProblemCell:
    n_samples: int
    n_success: int
    tpp: float
    mean_avg_loc: float | None
    mean_max_cc: float | None


@dataclass
class EvaluationTable:
    approaches: list[ApproachStats]
    per_problem: dict[tuple[str, str, str], ProblemCell]  # (model, strategy, problem)
    iteration_success: dict[tuple[str, str], dict[int, int]]
    original_avg_loc: float
    original_max_cc: float
    n_original_samples: int


def _first_failure_kind(outcomes: Sequence[runner.TestOutcome]) -> str | None:
    for outcome in outcomes:
        if not outcome.passed:
            return outcome.status
    return None


def _run_attempt(
    sample: CodeSample,
    tests: Sequence[TestCase],
    client,
    conversation: prompts.Conversation,
    limits: runner.ExecLimits,
    attempt_index: int,
    strategy: str,
) -> tuple[AttemptRecord, llm.ModelReply | None]:
    started = time.monotonic()
    try:
        reply = client.complete(conversation, sample_id=sample.sample_id, attempt_index=attempt_index)
    except llm.TransportError as exc:
        log.warning("sample %s attempt %d: %s", sample.sample_id, attempt_index, exc)
        record = AttemptRecord(
            sample_id=sample.sample_id,
            model_name=client.model_name,
            strategy=strategy,
            attempt_index=attempt_index,
            candidate_source="",
            outcomes=[],
            passed_all=False,
            failure_kind=MODEL_ERROR,
            wall_time_ms=(time.monotonic() - started) * 1000.0,
        )
        return record, None

    candidate = llm.extract_code(reply.raw_text)
    outcomes = runner.run_tests(candidate, tests, limits)
    passed = runner.all_passed(outcomes)

    flags = []
    if reply.truncated:
        flags.append("truncated-reply")
    if passed and normalized_tokens(candidate) == normalized_tokens(sample.source):
        flags.append(NO_OP_FLAG)

    record = AttemptRecord(
        sample_id=sample.sample_id,
        model_name=client.model_name,
        strategy=strategy,
        attempt_index=attempt_index,
        candidate_source=candidate,
        outcomes=outcomes,
        passed_all=passed,
        metrics=metrics.file_metrics(candidate) if passed else None,
        failure_kind=None if passed else _first_failure_kind(outcomes),
        flags=flags,
        wall_time_ms=(time.monotonic() - started) * 1000.0,
    )
    return record, reply


def refactor_one_shot(
    sample: CodeSample,
    tests: Sequence[TestCase],
    client,
    template: prompts.PromptTemplate,
    exemplar: tuple[str, str],
    limits: runner.ExecLimits,
    original_metrics: metrics.MetricReport,
) -> RunRecord:
    """Exactly one attempt; a failure is logged, never retried."""
    conversation = prompts.render_one_shot(sample, template, exemplar)
    record, _ = _run_attempt(sample, tests, client, conversation, limits, 1, prompts.ONE_SHOT)
    return RunRecord(
        sample_id=sample.sample_id,
        problem_id=sample.problem_id,
        model_name=client.model_name,
        strategy=prompts.ONE_SHOT,
        final_status=SUCCESS if record.passed_all else UNSUCCESSFUL,
        success_attempt=1 if record.passed_all else None,
        attempts=[record],
        original_metrics=original_metrics,
    )


def refactor_rci(
    sample: CodeSample,
    tests: Sequence[TestCase],
    client,
    template: prompts.PromptTemplate,
    limits: runner.ExecLimits,
    original_metrics: metrics.MetricReport,
    max_attempts: int = 3,
) -> RunRecord:
    """Zero-shot first attempt, then criticise-and-retry up to the budget.

    A transport failure ends the chain: with no candidate there are no
    test failures to criticise.
    """
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    conversation = prompts.render_rci_initial(sample, template)
    attempts: list[AttemptRecord] = []
    success_at: int | None = None
    for attempt_index in range(1, max_attempts + 1):
        record, reply = _run_attempt(sample, tests, client, conversation, limits, attempt_index, prompts.RCI)
        attempts.append(record)
        if record.passed_all:
            success_at = attempt_index
            break
        if reply is None or attempt_index == max_attempts:
            break
        failures = prompts.summarize_failures(tests, record.outcomes)
        conversation = prompts.append_feedback(conversation, reply.raw_text, failures, template)
    return RunRecord(
        sample_id=sample.sample_id,
        problem_id=sample.problem_id,
        model_name=client.model_name,
        strategy=prompts.RCI,
        final_status=SUCCESS if success_at else UNSUCCESSFUL,
        success_attempt=success_at,
        attempts=attempts,
        original_metrics=original_metrics,
    )


def _mean(values: Sequence[float]) -> float | None:
    return sum(values) / len(values) if values else None


def evaluate_run(records: Sequence[RunRecord]) -> EvaluationTable:
    """Aggregate records into the per-approach evaluation table."""
    if not records:
        raise ValueError("no records to evaluate")

    by_approach: dict[tuple[str, str], list[RunRecord]] = {}
    for record in records:
        by_approach.setdefault((record.model_name, record.strategy), []).append(record)

    approaches: list[ApproachStats] = []
    per_problem: dict[tuple[str, str, str], ProblemCell] = {}
    iteration_success: dict[tuple[str, str], dict[int, int]] = {}

    for (model, strategy) in sorted(by_approach):
        group = by_approach[(model, strategy)]
        passing = [r for r in group if r.final_status == SUCCESS]
        final_metrics = [r.attempts[-1].metrics for r in passing]
        approaches.append(ApproachStats(
            model_name=model,
            strategy=strategy,
            n_samples=len(group),
            n_success=len(passing),
            tpp=len(passing) / len(group),
            mean_avg_loc=_mean([m.avg_loc_per_method for m in final_metrics if m]),
            mean_max_cc=_mean([float(m.max_cc) for m in final_metrics if m]),
        ))

        by_problem: dict[str, list[RunRecord]] = {}
        for record in group:
            by_problem.setdefault(record.problem_id, []).append(record)
        for problem_id, problem_group in by_problem.items():
            problem_passing = [r.attempts[-1].metrics for r in problem_group if r.final_status == SUCCESS]
            per_problem[(model, strategy, problem_id)] = ProblemCell(
                n_samples=len(problem_group),
                n_success=sum(1 for r in problem_group if r.final_status == SUCCESS),
                tpp=sum(1 for r in problem_group if r.final_status == SUCCESS) / len(problem_group),
                mean_avg_loc=_mean([m.avg_loc_per_method for m in problem_passing if m]),
                mean_max_cc=_mean([float(m.max_cc) for m in problem_passing if m]),
            )

        if strategy == prompts.RCI:
            hist: dict[int, int] = {}
            for record in group:
                if record.success_attempt is not None:
                    hist[record.success_attempt] = hist.get(record.success_attempt, 0) + 1
            iteration_success[(model, strategy)] = hist

    originals: dict[str, metrics.MetricReport] = {}
    for record in records:
        originals.setdefault(record.sample_id, record.original_metrics)
    original_loc = _mean([m.avg_loc_per_method for m in originals.values()])
    original_cc = _mean([float(m.max_cc) for m in originals.values()])

    return EvaluationTable(
        approaches=approaches,
        per_problem=per_problem,
        iteration_success=iteration_success,
        original_avg_loc=original_loc if original_loc is not None else 0.0,
        original_max_cc=original_cc if original_cc is not None else 0.0,
        n_original_samples=len(originals),
    )


# --- record (de)serialization -------------------------------------------------

def _outcome_to_dict(outcome: runner.TestOutcome) -> dict:
    return {
        "test_id": outcome.test_id,
        "status": outcome.status,
        "actual_output": outcome.actual_output,
        "stderr_tail": outcome.stderr_tail,
    }


def _metrics_to_dict(report: metrics.MetricReport | None) -> dict | None:
    if report is None:
        return None
    return {
        "per_method_loc": report.per_method_loc,
        "avg_loc_per_method": report.avg_loc_per_method,
        "max_cc": report.max_cc,
        "method_count": report.method_count,
    }


def _metrics_from_dict(data: dict | None) -> metrics.MetricReport | None:
    if data is None:
        return None
    return metrics.MetricReport(
        per_method_loc=list(data["per_method_loc"]),
        avg_loc_per_method=data["avg_loc_per_method"],
        max_cc=data["max_cc"],
        method_count=data["method_count"],
    )


def record_to_dict(record: RunRecord) -> dict:
    return {
        "sample_id": record.sample_id,
        "problem_id": record.problem_id,
        "model_name": record.model_name,
        "strategy": record.strategy,
        "final_status": record.final_status,
        "success_attempt": record.success_attempt,
        "original_metrics": _metrics_to_dict(record.original_metrics),
        "config_digest": record.config_digest,
        "attempts": [
            {
                "attempt_index": a.attempt_index,
                "candidate_source": a.candidate_source,
                "passed_all": a.passed_all,
                "failure_kind": a.failure_kind,
                "flags": a.flags,
                "metrics": _metrics_to_dict(a.metrics),
                "outcomes": [_outcome_to_dict(o) for o in a.outcomes],
            }
            for a in record.attempts
        ],
    }


def record_from_dict(data: dict) -> RunRecord:
    attempts = [
        AttemptRecord(
            sample_id=data["sample_id"],
            model_name=data["model_name"],
            strategy=data["strategy"],
            attempt_index=a["attempt_index"],
            candidate_source=a["candidate_source"],
            outcomes=[
                runner.TestOutcome(
                    test_id=o["test_id"],
                    status=o["status"],
                    actual_output=o["actual_output"],
                    stderr_tail=o["stderr_tail"],
                )
                for o in a["outcomes"]
            ],
            passed_all=a["passed_all"],
            metrics=_metrics_from_dict(a.get("metrics")),
            failure_kind=a.get("failure_kind"),
            flags=list(a.get("flags", [])),
        )
        for a in data["attempts"]
    ]
    return RunRecord(
        sample_id=data["sample_id"],
        problem_id=data["problem_id"],
        model_name=data["model_name"],
        strategy=data["strategy"],
        final_status=data["final_status"],
        success_attempt=data.get("success_attempt"),
        attempts=attempts,
        original_metrics=_metrics_from_dict(data["original_metrics"]),
        config_digest=data.get("config_digest", ""),
    )


def dump_record(record: RunRecord) -> str:
    return json.dumps(record_to_dict(record), sort_keys=True, separators=(",", ":"))


def load_records(path: str | Path) -> list[RunRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(record_from_dict(json.loads(line)))
    return records


# --- parallel benchmark driver ------------------------------------------------

@dataclass(frozen=True)
class WorkItem:
    client: object
    strategy: str
    sample: CodeSample
    tests: tuple[TestCase, ...]
    original_metrics: metrics.MetricReport

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.client.model_name, self.strategy, self.sample.sample_id)


def _execute(item: WorkItem, templates: dict, exemplar: tuple[str, str],
             limits: runner.ExecLimits, max_attempts: int, config_digest: str) -> RunRecord:
    if item.strategy == prompts.ONE_SHOT:
        record = refactor_one_shot(
            item.sample, item.tests, item.client, templates[prompts.ONE_SHOT],
            exemplar, limits, item.original_metrics,
        )
    elif item.strategy == prompts.RCI:
        record = refactor_rci(
            item.sample, item.tests, item.client, templates[prompts.RCI],
            limits, item.original_metrics, max_attempts,
        )
    else:
        raise ValueError(f"unknown strategy: {item.strategy}")
    record.config_digest = config_digest
    total_ms = sum(a.wall_time_ms for a in record.attempts)
    log.info(
        "%s/%s sample %s: %s (attempts=%d, %.0f ms)",
        item.client.model_name, item.strategy, item.sample.sample_id,
        record.final_status, len(record.attempts), total_ms,
    )
    return record


def run_benchmark(
    items: Sequence[WorkItem],
    templates: dict,
    exemplar: tuple[str, str],
    limits: runner.ExecLimits,
    max_attempts: int,
    records_path: str | Path,
    jobs: int = 1,
    resume: bool = False,
    config_digest: str = "",
) -> list[RunRecord]:
    """Run work items in a bounded pool, checkpointing one JSONL row each.

    Items are written in submission order so interrupted runs can resume:
    rows already present (matched by model/strategy/sample key) are kept
    and skipped. Per-sample attempts stay strictly sequential.
    """
    records_path = Path(records_path)
    done: dict[tuple[str, str, str], RunRecord] = {}
    if resume and records_path.exists():
        for record in load_records(records_path):
            done[(record.model_name, record.strategy, record.sample_id)] = record
    elif records_path.exists():
        records_path.unlink()

    ordered = sorted(items, key=lambda it: it.key)
    pending = [item for item in ordered if item.key not in done]

    results: dict[tuple[str, str, str], RunRecord] = dict(done)
    mode = "a" if (resume and done) else "w"
    with records_path.open(mode, encoding="utf-8") as sink:
        if jobs <= 1:
            for item in pending:
                record = _execute(item, templates, exemplar, limits, max_attempts, config_digest)
                results[item.key] = record
                sink.write(dump_record(record) + "\n")
                sink.flush()
        else:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                futures = [(item, pool.submit(_execute, item, templates, exemplar,
                                              limits, max_attempts, config_digest))
                           for item in pending]
                for item, future in futures:
                    record = future.result()
                    results[item.key] = record
                    sink.write(dump_record(record) + "\n")
                    sink.flush()
    return [results[item.key] for item in ordered]
