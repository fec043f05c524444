"""Declarative run configuration.

One JSON file drives the whole pipeline; CLI flags override individual
fields. Every resolved value (including template texts and the exemplar)
is snapshotted into the run manifest so results stay reproducible.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import SamplingConfig
from .llm import ModelConfig
from .prompts import (
    DEFAULT_EXEMPLAR_AFTER,
    DEFAULT_EXEMPLAR_BEFORE,
    DEFAULT_FEEDBACK_TEXT,
    DEFAULT_ONE_SHOT_TASK,
    DEFAULT_RCI_TASK,
    DEFAULT_SYSTEM_TEXT,
    ONE_SHOT,
    RCI,
    STRATEGIES,
    PromptTemplate,
)
from .runner import ExecLimits


class ConfigError(ValueError):
    """Bad or incomplete run configuration (CLI exit code 2)."""


@dataclass
class RunConfig:
    corpus_root: Path
    output_dir: Path
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    min_cc: int = 3
    min_submissions: int = 40
    models: list[ModelConfig] = field(default_factory=list)
    strategies: list[str] = field(default_factory=lambda: [ONE_SHOT, RCI])
    max_attempts: int = 3
    limits: ExecLimits = field(default_factory=ExecLimits)
    system_text: str = DEFAULT_SYSTEM_TEXT
    one_shot_task: str = DEFAULT_ONE_SHOT_TASK
    rci_task: str = DEFAULT_RCI_TASK
    feedback_text: str = DEFAULT_FEEDBACK_TEXT
    exemplar_before: str = DEFAULT_EXEMPLAR_BEFORE
    exemplar_after: str = DEFAULT_EXEMPLAR_AFTER
    problem_filter: list[str] | None = None
    jobs: int | None = None

    def templates(self) -> dict[str, PromptTemplate]:
        return {
            ONE_SHOT: PromptTemplate(self.system_text, self.one_shot_task, self.feedback_text),
            RCI: PromptTemplate(self.system_text, self.rci_task, self.feedback_text),
        }

    def exemplar(self) -> tuple[str, str]:
        return (self.exemplar_before, self.exemplar_after)

    def snapshot(self) -> dict:
        """JSON-serializable picture of every resolved setting."""
        return {
            "corpus_root": str(self.corpus_root),
            "output_dir": str(self.output_dir),
            "sampling": {
                "alpha": self.sampling.alpha,
                "samples_per_problem": self.sampling.samples_per_problem,
                "rng_seed": self.sampling.rng_seed,
                "bin_width": self.sampling.bin_width,
            },
            "min_cc": self.min_cc,
            "min_submissions": self.min_submissions,
            "models": [
                {
                    "model_name": m.model_name,
                    "endpoint_url": m.endpoint_url,
                    "temperature": m.temperature,
                    "max_tokens": m.max_tokens,
                    "request_timeout_s": m.request_timeout_s,
                    "max_retries_on_transport_error": m.max_retries_on_transport_error,
                    "max_concurrency": m.max_concurrency,
                    "auth_env": m.auth_env,
                }
                for m in self.models
            ],
            "strategies": list(self.strategies),
            "max_attempts": self.max_attempts,
            "max_attempts_note": "total attempts including the initial zero-shot one",
            "limits": {
                "wall_timeout_s": self.limits.wall_timeout_s,
                "max_output_bytes": self.limits.max_output_bytes,
                "interpreter": self.limits.interpreter,
            },
            "templates": {
                "system_text": self.system_text,
                "one_shot_task": self.one_shot_task,
                "rci_task": self.rci_task,
                "feedback_text": self.feedback_text,
                "exemplar_before": self.exemplar_before,
                "exemplar_after": self.exemplar_after,
            },
            "problem_filter": self.problem_filter,
        }

    def digest(self) -> str:
        canonical = json.dumps(self.snapshot(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def _read_template_field(data: dict, key: str, base_dir: Path, default: str) -> str:
    """Template fields accept inline text or {"path": "file.txt"}."""
    value = data.get(key)
    if value is None:
        return default
    if isinstance(value, str):
        return value
    if isinstance(value, dict) and "path" in value:
        path = base_dir / value["path"]
        if not path.is_file():
            raise ConfigError(f"template file for {key!r} does not exist: {path}")
        return path.read_text(encoding="utf-8")
    raise ConfigError(f"{key!r} must be a string or {{\"path\": ...}}")


def load_config(path: str | Path) -> RunConfig:
    """Load and validate a run configuration file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file does not exist: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    base_dir = path.parent

    for required in ("corpus_root", "output_dir"):
        if required not in data:
            raise ConfigError(f"config is missing {required!r}")
    corpus_root = (base_dir / data["corpus_root"]).resolve()
    if not corpus_root.is_dir():
        raise ConfigError(f"corpus_root does not exist: {corpus_root}")
    output_dir = (base_dir / data["output_dir"]).resolve()

    sampling_data = data.get("sampling", {})
    try:
        sampling = SamplingConfig(
            alpha=sampling_data.get("alpha", 5.0),
            samples_per_problem=sampling_data.get("samples_per_problem", 40),
            rng_seed=sampling_data.get("rng_seed", 0),
            bin_width=sampling_data.get("bin_width", 5),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    strategies = data.get("strategies", [ONE_SHOT, RCI])
    for strategy in strategies:
        if strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    if not strategies:
        raise ConfigError("at least one strategy is required")

    models_data = data.get("models", [])
    if not models_data:
        raise ConfigError("at least one model is required")
    models = []
    for entry in models_data:
        if "model_name" not in entry:
            raise ConfigError("every model entry needs a model_name")
        try:
            models.append(ModelConfig(
                model_name=entry["model_name"],
                endpoint_url=entry.get("endpoint_url", ""),
                temperature=entry.get("temperature", 0.2),
                max_tokens=entry.get("max_tokens", 2048),
                request_timeout_s=entry.get("request_timeout_s", 120.0),
                max_retries_on_transport_error=entry.get("max_retries_on_transport_error", 2),
                retry_backoff_s=entry.get("retry_backoff_s", 0.5),
                max_concurrency=entry.get("max_concurrency", 4),
                auth_env=entry.get("auth_env"),
            ))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    limits_data = data.get("limits", {})
    try:
        limits_kwargs = {
            "wall_timeout_s": limits_data.get("wall_timeout_s", 10.0),
            "max_output_bytes": limits_data.get("max_output_bytes", 1 << 20),
        }
        if limits_data.get("interpreter"):
            limits_kwargs["interpreter"] = limits_data["interpreter"]
        limits = ExecLimits(**limits_kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    return RunConfig(
        corpus_root=corpus_root,
        output_dir=output_dir,
        sampling=sampling,
        min_cc=data.get("min_cc", 3),
        min_submissions=data.get("min_submissions", 40),
        models=models,
        strategies=list(strategies),
        max_attempts=data.get("max_attempts", 3),
        limits=limits,
        system_text=_read_template_field(data, "system_text", base_dir, DEFAULT_SYSTEM_TEXT),
        one_shot_task=_read_template_field(data, "one_shot_task", base_dir, DEFAULT_ONE_SHOT_TASK),
        rci_task=_read_template_field(data, "rci_task", base_dir, DEFAULT_RCI_TASK),
        feedback_text=_read_template_field(data, "feedback_text", base_dir, DEFAULT_FEEDBACK_TEXT),
        exemplar_before=_read_template_field(data, "exemplar_before", base_dir, DEFAULT_EXEMPLAR_BEFORE),
        exemplar_after=_read_template_field(data, "exemplar_after", base_dir, DEFAULT_EXEMPLAR_AFTER),
        problem_filter=data.get("problem_filter"),
        jobs=data.get("jobs"),
    )
