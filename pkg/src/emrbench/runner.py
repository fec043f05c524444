"""Run candidate programs against stdin/stdout test cases.

Each test executes in its own fresh temporary directory with the input
fed on standard input. Output comparison is exact after whitespace
normalization (trailing whitespace per line and trailing blank lines are
ignored, line endings are unified); there is no numeric tolerance.

A candidate that fails to compile short-circuits every test to a
``parse-error`` outcome without spawning a process.
"""

from __future__ import annotations

import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .corpus import TestCase

PASS = "pass"
WRONG_OUTPUT = "wrong-output"
RUNTIME_ERROR = "runtime-error"
TIMEOUT = "timeout"
PARSE_ERROR = "parse-error"

FAILURE_KINDS = (WRONG_OUTPUT, RUNTIME_ERROR, TIMEOUT, PARSE_ERROR)

_STDERR_CAPTURE_BYTES = 4096


class EnvironmentError_(RuntimeError):
    """The configured interpreter is unavailable (not a per-test failure)."""


@dataclass(frozen=True)
class ExecLimits:
    wall_timeout_s: float = 10.0
    max_output_bytes: int = 1 << 20
    interpreter: str = sys.executable
    temp_root: str | None = None

    def __post_init__(self) -> None:
        if self.wall_timeout_s <= 0:
            raise ValueError("wall_timeout_s must be > 0")
        if self.max_output_bytes < 1:
            raise ValueError("max_output_bytes must be >= 1")


@dataclass(frozen=True)
class TestOutcome:
    test_id: str
    status: str
    actual_output: str = ""
    stderr_tail: str = ""
    duration_ms: float = 0.0

    @property
    def passed(self) -> bool:
        return self.status == PASS


def normalize_output(text: str) -> str:
    """Unify line endings, right-trim lines, drop trailing blank lines."""
    lines = [line.rstrip() for line in text.replace("\r\n", "\n").replace("\r", "\n").split("\n")]
    while lines and lines[-1] == "":
        lines.pop()
    return "\n".join(lines)


def outcome_pass(expected: str, actual: str) -> bool:
    """Exact match of normalized expected and actual output."""
    return normalize_output(expected) == normalize_output(actual)


def _read_capped(path: Path, cap: int) -> tuple[str, bool]:
    with path.open("rb") as fh:
        data = fh.read(cap + 1)
    overflowed = len(data) > cap
    return data[:cap].decode("utf-8", errors="replace"), overflowed


def _read_tail(path: Path, cap: int) -> str:
    size = path.stat().st_size
    with path.open("rb") as fh:
        if size > cap:
            fh.seek(size - cap)
        return fh.read().decode("utf-8", errors="replace")


def _run_one(source_path: Path, test: TestCase, limits: ExecLimits, workdir: Path) -> TestOutcome:
    stdout_path = workdir / "stdout.txt"
    stderr_path = workdir / "stderr.txt"
    started = time.monotonic()
    try:
        with stdout_path.open("wb") as out, stderr_path.open("wb") as err:
            proc = subprocess.run(
                [limits.interpreter, str(source_path)],
                input=test.input_text.encode("utf-8"),
                stdout=out,
                stderr=err,
                cwd=workdir,
                timeout=limits.wall_timeout_s,
            )
        timed_out = False
    except subprocess.TimeoutExpired:
        timed_out = True
    except FileNotFoundError as exc:
        raise EnvironmentError_(f"interpreter not found: {limits.interpreter}") from exc
    duration_ms = (time.monotonic() - started) * 1000.0

    actual, overflowed = _read_capped(stdout_path, limits.max_output_bytes)
    stderr_tail = _read_tail(stderr_path, _STDERR_CAPTURE_BYTES)
    # Temp paths differ per execution; keep stored diagnostics stable.
    stderr_tail = stderr_tail.replace(str(source_path), source_path.name)

    if timed_out:
        return TestOutcome(test.test_id, TIMEOUT, actual, stderr_tail, duration_ms)
    if proc.returncode != 0:
        return TestOutcome(test.test_id, RUNTIME_ERROR, actual, stderr_tail, duration_ms)
    if overflowed or not outcome_pass(test.expected_output, actual):
        return TestOutcome(test.test_id, WRONG_OUTPUT, actual, stderr_tail, duration_ms)
    return TestOutcome(test.test_id, PASS, actual, stderr_tail, duration_ms)


def run_tests(source: str, tests: Sequence[TestCase], limits: ExecLimits | None = None) -> list[TestOutcome]:
    """Execute ``source`` once per test; one outcome per test, in order."""
    limits = limits or ExecLimits()
    try:
        compile(source, "candidate.py", "exec")
        parse_message = None
    except (SyntaxError, ValueError) as exc:
        parse_message = f"{type(exc).__name__}: {exc}"
    if not source.strip():
        parse_message = "empty candidate source"
    if parse_message is not None:
        return [TestOutcome(t.test_id, PARSE_ERROR, "", parse_message) for t in tests]

    outcomes: list[TestOutcome] = []
    for test in tests:
        with tempfile.TemporaryDirectory(prefix="emr-run-", dir=limits.temp_root) as tmp:
            workdir = Path(tmp)
            source_path = workdir / "candidate.py"
            source_path.write_text(source, encoding="utf-8")
            outcomes.append(_run_one(source_path, test, limits, workdir))
    return outcomes


def all_passed(outcomes: Sequence[TestOutcome]) -> bool:
    return bool(outcomes) and all(o.status == PASS for o in outcomes)
