"""Conversation building for the two prompting strategies.

One-shot embeds a single before/after refactoring example next to the
target code; the iterative strategy starts from a bare task statement and,
after each failed attempt, appends the candidate plus a digest of its test
failures so the model can revise.

Conversations are immutable; appending feedback returns a new value.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

from .corpus import CodeSample, TestCase
from .runner import TestOutcome

ONE_SHOT = "one-shot"
RCI = "rci"
STRATEGIES = (ONE_SHOT, RCI)

PLACEHOLDERS = ("{code}", "{example}", "{failed_tests}", "{stderr}")

EXPECTED_EXCERPT_BYTES = 512
ACTUAL_EXCERPT_BYTES = 512
STDERR_TAIL_BYTES = 1024

DEFAULT_SYSTEM_TEXT = """\
You are an expert Python developer performing Extract Method refactoring.
Rewrite the program you are given by extracting cohesive blocks of logic into
smaller, well-named functions. The refactored program must keep exactly the
same behavior: it reads the same standard input and must print identical
standard output. Output only executable Python code, avoid explanations, and
limit your changes to the Extract Method refactoring."""

DEFAULT_ONE_SHOT_TASK = """\
Here is an example of an Extract Method refactoring:

{example}

Apply the same kind of refactoring to the following program. Output only the
refactored code.

```python
{code}
```"""

DEFAULT_RCI_TASK = """\
Apply Extract Method refactoring to the following program. Output only the
refactored code.

```python
{code}
```"""

DEFAULT_FEEDBACK_TEXT = """\
The refactored program failed its test cases:

{failed_tests}

Standard error (tail):
{stderr}

Revise the refactoring so that every test case passes. Keep the extracted
methods and output only the corrected code."""

DEFAULT_EXEMPLAR_BEFORE = """\
def wrapped_artificially():
    values = [int(part) for part in input().split()]
    total = 0
    for value in values:
        if value % 2 == 0:
            total += value
    print(total)
wrapped_artificially()"""

DEFAULT_EXEMPLAR_AFTER = """\
def sum_of_evens(values):
    total = 0
    for value in values:
        if value % 2 == 0:
            total += value
    return total

def wrapped_artificially():
    values = [int(part) for part in input().split()]
    print(sum_of_evens(values))
wrapped_artificially()"""


class PromptRenderError(ValueError):
    """A template and its bindings do not line up."""


@dataclass(frozen=True)
class PromptTemplate:
    system_text: str = DEFAULT_SYSTEM_TEXT
    task_text: str = DEFAULT_RCI_TASK
    feedback_text: str = DEFAULT_FEEDBACK_TEXT


DEFAULT_ONE_SHOT_TEMPLATE = PromptTemplate(task_text=DEFAULT_ONE_SHOT_TASK)
DEFAULT_RCI_TEMPLATE = PromptTemplate(task_text=DEFAULT_RCI_TASK)


@dataclass(frozen=True)
class Conversation:
    turns: tuple[tuple[str, str], ...]
    strategy: str
    attempt_index: int = 1

    def messages(self) -> list[dict[str, str]]:
        return [{"role": role, "content": text} for role, text in self.turns]


@dataclass(frozen=True)
class TestFailureSummary:
    """Digest of one failing run: per-test excerpts plus a stderr tail."""

    failed: tuple[tuple[str, str, str, str], ...]  # (test_id, expected, actual, kind)
    stderr_tail: str = ""

    def __post_init__(self) -> None:
        if not self.failed:
            raise ValueError("a failure summary needs at least one failed test")


def _truncate(text: str, budget: int) -> str:
    raw = text.encode("utf-8")
    if len(raw) <= budget:
        return text
    return raw[:budget].decode("utf-8", errors="ignore")


def summarize_failures(tests: Sequence[TestCase], outcomes: Sequence[TestOutcome]) -> TestFailureSummary:
    """Build a summary from the failing outcomes of one run."""
    expected_by_id = {t.test_id: t.expected_output for t in tests}
    failed = []
    stderr_tail = ""
    for outcome in outcomes:
        if outcome.passed:
            continue
        failed.append((
            outcome.test_id,
            _truncate(expected_by_id.get(outcome.test_id, ""), EXPECTED_EXCERPT_BYTES),
            _truncate(outcome.actual_output, ACTUAL_EXCERPT_BYTES),
            outcome.status,
        ))
        if outcome.stderr_tail:
            stderr_tail = outcome.stderr_tail
    return TestFailureSummary(
        failed=tuple(failed),
        stderr_tail=_truncate(stderr_tail[-STDERR_TAIL_BYTES * 4:], STDERR_TAIL_BYTES),
    )


def _render(text: str, bindings: dict[str, str], required: Sequence[str], forbidden: Sequence[str] = ()) -> str:
    for name in required:
        if "{%s}" % name not in text:
            raise PromptRenderError(f"template is missing the {{{name}}} placeholder")
    for name in forbidden:
        if "{%s}" % name in text:
            raise PromptRenderError(f"template must not use the {{{name}}} placeholder here")
    rendered = text
    for name, value in bindings.items():
        rendered = rendered.replace("{%s}" % name, value)
    for marker in PLACEHOLDERS:
        if marker in rendered:
            raise PromptRenderError(f"unbound placeholder {marker} after rendering")
    return rendered


def format_exemplar(before: str, after: str) -> str:
    return (
        "Before:\n```python\n%s\n```\n\nAfter:\n```python\n%s\n```" % (before, after)
    )


def render_one_shot(sample: CodeSample, template: PromptTemplate, exemplar: tuple[str, str]) -> Conversation:
    """System turn plus one user turn carrying the exemplar and the code."""
    if exemplar is None or len(exemplar) != 2:
        raise PromptRenderError("one-shot prompting requires a (before, after) exemplar")
    user = _render(
        template.task_text,
        {"code": sample.source, "example": format_exemplar(*exemplar)},
        required=("code", "example"),
    )
    return Conversation(
        turns=(("system", template.system_text), ("user", user)),
        strategy=ONE_SHOT,
    )


def render_rci_initial(sample: CodeSample, template: PromptTemplate) -> Conversation:
    """Bare task plus target code; no exemplar, no feedback."""
    user = _render(
        template.task_text,
        {"code": sample.source},
        required=("code",),
        forbidden=("example",),
    )
    return Conversation(
        turns=(("system", template.system_text), ("user", user)),
        strategy=RCI,
    )


def _format_failures(summary: TestFailureSummary) -> str:
    lines = []
    for test_id, expected, actual, kind in summary.failed:
        lines.append(f"- test {test_id} [{kind}]: expected {expected!r}, got {actual!r}")
    return "\n".join(lines)


def append_feedback(
    conv: Conversation,
    assistant_reply: str,
    failures: TestFailureSummary,
    template: PromptTemplate,
) -> Conversation:
    """Extend the transcript with the failed reply and a criticism turn."""
    if conv.strategy != RCI:
        raise PromptRenderError("feedback turns are only valid for the iterative strategy")
    feedback = _render(
        template.feedback_text,
        {"failed_tests": _format_failures(failures), "stderr": failures.stderr_tail},
        required=("failed_tests", "stderr"),
    )
    return replace(
        conv,
        turns=conv.turns + (("assistant", assistant_reply), ("user", feedback)),
        attempt_index=conv.attempt_index + 1,
    )
