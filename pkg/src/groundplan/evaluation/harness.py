"""Evaluation runs, resumable grid search and ablation configurations."""
from __future__ import annotations

import itertools
import json
import logging
import os
from collections.abc import Iterable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from statistics import fmean

from groundplan.dsl import Program, render_step
from groundplan.embedding import EmbeddingProvider
from groundplan.environment import Conditions, SceneGraph, execute_program
from groundplan.evaluation.dataset import DatasetEntry
from groundplan.evaluation.metrics import grounded_success, lcs_score
from groundplan.lm import CompletionBackend
from groundplan.planner import Demonstration, Planner, PlannerConfig, QueryTask
from groundplan.translator import ActionBank

log = logging.getLogger(__name__)

SAMPLING_KEYS = (
    "temperature", "top_p", "n_samples", "frequency_penalty", "presence_penalty",
    "repetition_penalty",
)
TRANSLATOR_KEYS = ("beta", "epsilon", "zero_length_fraction")
GRID_ALIASES = {"k": "n_samples", "eps": "epsilon"}

# Search values from the hyperparameter table; penalties stay at their defaults.
DEFAULT_GRID = {
    "epsilon": (0.0, 0.4, 0.8),
    "temperature": (0.1, 0.3, 0.6),
    "n_samples": (1, 10),
}


@dataclass
class EvalSetup:
    """Everything a run needs besides the planner configuration."""

    backend: CompletionBackend
    provider: EmbeddingProvider | None
    bank: ActionBank | None
    demos: Sequence[Demonstration]
    scenes: Sequence[SceneGraph]
    fixed_examples: Sequence[Demonstration] | None = None
    table: dict[str, Conditions] | None = None
    workers: int = 4
    proxy_threshold: float = 0.5

    def planner(self, config: PlannerConfig) -> Planner:
        return Planner(
            self.backend,
            config,
            demos=self.demos,
            provider=self.provider,
            bank=self.bank,
            fixed_examples=self.fixed_examples,
        )


@dataclass
class TaskRow:
    task: str
    program: list[str]
    executability: float
    lcs: float
    length: int
    scene_success: list[bool] = field(default_factory=list)
    termination_reason: str = ""
    example: str = ""
    correct: bool | None = None
    error: str | None = None

    def to_json(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_json(cls, data: dict) -> TaskRow:
        return cls(**data)


@dataclass
class RunRecord:
    fingerprint: str
    config: dict
    rows: list[TaskRow]
    label: str = ""
    proxy_threshold: float = 0.5

    @property
    def executability(self) -> float:
        return fmean(r.executability for r in self.rows) if self.rows else 0.0

    @property
    def lcs(self) -> float:
        return fmean(r.lcs for r in self.rows) if self.rows else 0.0

    @property
    def mean_length(self) -> float:
        return fmean(r.length for r in self.rows) if self.rows else 0.0

    @property
    def grounded_success(self) -> float:
        labels = [r.correct for r in self.rows]
        if any(c is None for c in labels):
            labels = [r.lcs >= self.proxy_threshold for r in self.rows]
        return grounded_success([r.executability for r in self.rows], labels)

    @property
    def uses_proxy_labels(self) -> bool:
        return any(r.correct is None for r in self.rows)

    @property
    def error_count(self) -> int:
        return sum(r.error is not None for r in self.rows)

    def aggregates(self) -> dict:
        return {
            "executability": self.executability,
            "lcs": self.lcs,
            "mean_length": self.mean_length,
            "grounded_success": self.grounded_success,
            "proxy_labels": self.uses_proxy_labels,
            "errors": self.error_count,
        }

    def to_json(self) -> dict:
        return {
            "fingerprint": self.fingerprint,
            "label": self.label,
            "config": self.config,
            "proxy_threshold": self.proxy_threshold,
            "aggregates": self.aggregates(),
            "rows": [r.to_json() for r in self.rows],
        }

    @classmethod
    def from_json(cls, data: dict) -> RunRecord:
        return cls(
            fingerprint=data["fingerprint"],
            config=data["config"],
            rows=[TaskRow.from_json(r) for r in data["rows"]],
            label=data.get("label", ""),
            proxy_threshold=data.get("proxy_threshold", 0.5),
        )


def score_program(
    task: DatasetEntry,
    program: Program,
    scenes: Sequence[SceneGraph],
    table: dict[str, Conditions] | None = None,
) -> tuple[float, float, list[bool]]:
    """Binary per-scene executability averaged over scenes, and best-reference LCS."""
    reports = [execute_program(scene, program, table) for scene in scenes]
    success = [r.success for r in reports]
    return sum(success) / len(success), lcs_score(program, task.programs), success


def _evaluate_task(planner: Planner, task: DatasetEntry, setup: EvalSetup) -> TaskRow:
    try:
        result = planner.plan(QueryTask(task.task_name, task.instructions))
    except Exception as exc:  # task failures are data, not crashes
        log.warning("task %r failed: %s", task.task_name, exc)
        return TaskRow(task.task_name, [], 0.0, 0.0, 0, error=f"{type(exc).__name__}: {exc}")
    exe, lcs, success = score_program(task, result.program, setup.scenes, setup.table)
    return TaskRow(
        task.task_name,
        [render_step(s) for s in result.program.steps],
        exe,
        lcs,
        len(result.program.steps),
        success,
        result.termination_reason,
        result.example,
    )


def _run_once(config: PlannerConfig, tasks: Sequence[DatasetEntry], setup: EvalSetup):
    planner = setup.planner(config)
    if setup.workers <= 1:
        return [_evaluate_task(planner, t, setup) for t in tasks]
    with ThreadPoolExecutor(max_workers=setup.workers) as pool:
        return list(pool.map(lambda t: _evaluate_task(planner, t, setup), tasks))


def evaluate(
    config: PlannerConfig,
    tasks: Sequence[DatasetEntry],
    setup: EvalSetup,
    label: str = "",
) -> RunRecord:
    """Plan every task and score it.

    Under the fixed-example policy the run is repeated once per fixed example
    and the rows are pooled, so the aggregates are the mean over the repeats.
    """
    if config.example_policy == "fixed":
        count = len(setup.fixed_examples) if setup.fixed_examples else 3
        rows = []
        for i in range(1, min(count, 3) + 1):
            rows.extend(_run_once(replace(config, fixed_example=i), tasks, setup))
    else:
        rows = _run_once(config, tasks, setup)
    return RunRecord(config.fingerprint(), config.to_dict(), rows, label, setup.proxy_threshold)


def apply_overrides(base: PlannerConfig, overrides: Mapping[str, object]) -> PlannerConfig:
    """Return ``base`` with flat parameter overrides routed to the nested configs."""
    sampling, translator, top = {}, {}, {}
    for key, value in overrides.items():
        key = GRID_ALIASES.get(key, key)
        if key in SAMPLING_KEYS:
            sampling[key] = value
        elif key in TRANSLATOR_KEYS:
            translator[key] = value
        elif key in PlannerConfig.__dataclass_fields__:
            top[key] = value
        else:
            raise KeyError(f"unknown grid parameter {key!r}")
    return replace(
        base,
        sampling=replace(base.sampling, **sampling),
        translator=replace(base.translator, **translator),
        **top,
    )


def expand_grid(grid: Mapping[str, Iterable], base: PlannerConfig) -> list[PlannerConfig]:
    names = list(grid)
    values = [list(grid[n]) for n in names]
    return [apply_overrides(base, dict(zip(names, combo))) for combo in itertools.product(*values)]


def load_records(path) -> list[RunRecord]:
    if not path or not os.path.exists(path):
        return []
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                try:
                    records.append(RunRecord.from_json(json.loads(line)))
                except (ValueError, KeyError):
                    log.warning("skipping truncated record in %s", path)
    return records


def grid_search(
    grid: Mapping[str, Iterable] | Sequence[PlannerConfig],
    base: PlannerConfig,
    tasks: Sequence[DatasetEntry],
    setup: EvalSetup,
    out_path=None,
    resume: bool = True,
    parallel: int = 1,
) -> list[RunRecord]:
    """Evaluate every configuration; with ``resume`` finished fingerprints are skipped.

    Records are appended to ``out_path`` (JSON lines) as each configuration
    completes, so an interrupted sweep loses at most the run in flight.
    """
    configs = list(grid) if not isinstance(grid, Mapping) else expand_grid(grid, base)
    done = {r.fingerprint: r for r in load_records(out_path)} if resume else {}
    if out_path and not resume and os.path.exists(out_path):
        os.remove(out_path)
    seen, todo = set(done), []
    for cfg in configs:
        fp = cfg.fingerprint()
        if fp not in seen:
            seen.add(fp)
            todo.append(cfg)

    def run(cfg):
        record = evaluate(cfg, tasks, setup)
        if out_path:
            with open(out_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record.to_json()) + "\n")
        return record

    if parallel > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            fresh = list(pool.map(run, todo))
    else:
        fresh = [run(cfg) for cfg in todo]
    by_fp = {**done, **{r.fingerprint: r for r in fresh}}
    ordered = []
    for cfg in configs:
        fp = cfg.fingerprint()
        if fp in by_fp:
            ordered.append(by_fp.pop(fp))
    return ordered


def ablation_configs(full: PlannerConfig) -> dict[str, PlannerConfig]:
    """The full method plus one row per removed component."""
    return {
        "Translated (full)": full,
        "- w/o Action Translation": replace(full, mode="vanilla"),
        "- w/o Dynamic Example": replace(full, example_policy="fixed"),
        "- w/o Trajectory Correction": replace(full, trajectory_correction=False),
    }


def run_ablations(full: PlannerConfig, tasks, setup: EvalSetup) -> list[RunRecord]:
    return [evaluate(cfg, tasks, setup, label) for label, cfg in ablation_configs(full).items()]
