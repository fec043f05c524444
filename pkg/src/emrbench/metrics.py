"""Static code-quality metrics: per-method LOC and cyclomatic complexity.

LOC counting rule (frozen for internal consistency): a method's LOC is the
number of physical lines in its span that carry at least one real token,
i.e. blank lines and comment-only lines are excluded, the signature line
and docstring lines are included, decorator lines are excluded. Lines of
functions nested inside the method belong to the nested method only.

Cyclomatic complexity rule set (frozen): base 1 per method, plus 1 for
each ``if``/``elif``, ``for``, ``while``, exception handler, boolean
operator occurrence (``and``/``or``), conditional expression,
comprehension ``if`` clause, and ``assert``; ``else``, ``finally``,
``with`` and the ``match`` subject add nothing; each ``case`` arm after
the first adds 1. Nested functions are scored separately and excluded
from the enclosing method.
"""

from __future__ import annotations

import ast
import io
import tokenize
from dataclasses import dataclass, field

from . import wrapping

_FUNCTION_NODES = (ast.FunctionDef, ast.AsyncFunctionDef)

_NONCODE_TOKENS = frozenset({
    tokenize.COMMENT,
    tokenize.NL,
    tokenize.NEWLINE,
    tokenize.INDENT,
    tokenize.DEDENT,
    tokenize.ENCODING,
    tokenize.ENDMARKER,
})


class SourceParseError(ValueError):
    """Source text rejected by the grammar; carries line/column."""

    def __init__(self, message: str, line: int | None, column: int | None):
        super().__init__(message)
        self.line = line
        self.column = column

    @classmethod
    def from_syntax_error(cls, exc: SyntaxError) -> "SourceParseError":
        return cls(str(exc), exc.lineno, exc.offset)


@dataclass
class MethodSpan:
    """One function definition (including nested and class methods)."""

    name: str
    start_line: int
    end_line: int
    body_lines: list[str]
    nesting: tuple[str, ...]
    _node: ast.AST = field(repr=False)
    _countable_lines: frozenset[int] = field(repr=False)

    @property
    def qualname(self) -> str:
        return ".".join(self.nesting + (self.name,))


@dataclass(frozen=True)
class MetricReport:
    """Per-file metric bundle."""

    per_method_loc: list[int]
    avg_loc_per_method: float
    max_cc: int
    method_count: int


def code_line_numbers(source: str) -> frozenset[int]:
    """1-based numbers of lines carrying at least one real token.

    A line inside a multi-line string counts as code even if it is blank
    or starts with ``#``; comment-only and blank lines do not count.
    """
    lines: set[int] = set()
    reader = io.StringIO(source).readline
    for tok in tokenize.generate_tokens(reader):
        if tok.type in _NONCODE_TOKENS:
            continue
        lines.update(range(tok.start[0], tok.end[0] + 1))
    return frozenset(lines)


def count_code_lines(source: str) -> int:
    """Non-blank, non-comment physical line count for a whole file."""
    return len(code_line_numbers(source))


def _decorated_start(node: ast.AST) -> int:
    decorators = getattr(node, "decorator_list", [])
    if decorators:
        return min(dec.lineno for dec in decorators)
    return node.lineno


class _SpanCollector(ast.NodeVisitor):
    """Collects function definitions with their nesting paths.

    Tracks, per function, the line ranges of functions nested anywhere
    inside it (through classes too) so those lines can be excluded from
    the enclosing method.
    """

    def __init__(self) -> None:
        self.found: list[tuple[ast.AST, tuple[str, ...]]] = []
        self.children: dict[int, list[ast.AST]] = {}
        self._path: list[str] = []
        self._func_stack: list[ast.AST] = []

    def _visit_function(self, node: ast.AST) -> None:
        if self._func_stack:
            self.children.setdefault(id(self._func_stack[-1]), []).append(node)
        self.found.append((node, tuple(self._path)))
        self._path.append(node.name)
        self._func_stack.append(node)
        self.generic_visit(node)
        self._func_stack.pop()
        self._path.pop()

    visit_FunctionDef = _visit_function
    visit_AsyncFunctionDef = _visit_function

    def visit_ClassDef(self, node: ast.ClassDef) -> None:
        self._path.append(node.name)
        self.generic_visit(node)
        self._path.pop()


def parse_methods(source: str) -> list[MethodSpan]:
    """Parse ``source`` and return one span per function definition."""
    try:
        tree = ast.parse(source)
    except SyntaxError as exc:
        raise SourceParseError.from_syntax_error(exc) from exc

    code_lines = code_line_numbers(source)
    raw_lines = source.splitlines()

    collector = _SpanCollector()
    collector.visit(tree)

    spans: list[MethodSpan] = []
    for node, path in collector.found:
        own = set(range(node.lineno, node.end_lineno + 1))
        for child in collector.children.get(id(node), []):
            own -= set(range(_decorated_start(child), child.end_lineno + 1))
        spans.append(MethodSpan(
            name=node.name,
            start_line=node.lineno,
            end_line=node.end_lineno,
            body_lines=raw_lines[node.lineno - 1:node.end_lineno],
            nesting=path,
            _node=node,
            _countable_lines=frozenset(own & code_lines),
        ))
    spans.sort(key=lambda s: s.start_line)
    return spans


def method_loc(span: MethodSpan) -> int:
    """Countable physical lines of the span (see module rules)."""
    return len(span._countable_lines)


class _ComplexityVisitor(ast.NodeVisitor):
    """Counts decision points; does not descend into nested functions."""

    def __init__(self) -> None:
        self.decision_points = 0

    def _skip(self, node: ast.AST) -> None:
        del node

    visit_FunctionDef = _skip
    visit_AsyncFunctionDef = _skip

    def visit_If(self, node: ast.If) -> None:
        self.decision_points += 1
        self.generic_visit(node)

    def visit_IfExp(self, node: ast.IfExp) -> None:
        self.decision_points += 1
        self.generic_visit(node)

    def visit_For(self, node: ast.For) -> None:
        self.decision_points += 1
        self.generic_visit(node)

    def visit_AsyncFor(self, node: ast.AsyncFor) -> None:
        self.decision_points += 1
        self.generic_visit(node)

    def visit_While(self, node: ast.While) -> None:
        self.decision_points += 1
        self.generic_visit(node)

    def visit_ExceptHandler(self, node: ast.ExceptHandler) -> None:
        self.decision_points += 1
        self.generic_visit(node)

    def visit_BoolOp(self, node: ast.BoolOp) -> None:
        self.decision_points += len(node.values) - 1
        self.generic_visit(node)

    def visit_Assert(self, node: ast.Assert) -> None:
        self.decision_points += 1
        self.generic_visit(node)

    def visit_comprehension(self, node: ast.comprehension) -> None:
        self.decision_points += len(node.ifs)
        self.generic_visit(node)

    def visit_Match(self, node: ast.Match) -> None:
        self.decision_points += max(0, len(node.cases) - 1)
        self.generic_visit(node)


def cyclomatic_complexity(span: MethodSpan) -> int:
    """1 + decision points in the span, nested functions excluded."""
    visitor = _ComplexityVisitor()
    for child in ast.iter_child_nodes(span._node):
        visitor.visit(child)
    return 1 + visitor.decision_points


def file_metrics(source: str) -> MetricReport:
    """Aggregate per-method metrics for one file.

    A file without any function definition is wrapped first so its
    top-level logic is measurable as a method.
    """
    spans = parse_methods(source)
    if not spans:
        try:
            wrapped = wrapping.wrap_top_level(source)
        except wrapping.WrapError as exc:
            raise SourceParseError(str(exc), None, None) from exc
        spans = parse_methods(wrapped)
    if not spans:
        return MetricReport([], 0.0, 0, 0)
    locs = [method_loc(span) for span in spans]
    ccs = [cyclomatic_complexity(span) for span in spans]
    return MetricReport(
        per_method_loc=locs,
        avg_loc_per_method=sum(locs) / len(locs),
        max_cc=max(ccs),
        method_count=len(spans),
    )
