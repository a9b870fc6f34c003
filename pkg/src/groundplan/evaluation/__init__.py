"""Metrics, dataset handling and the evaluation harness."""
from groundplan.evaluation.dataset import DatasetEntry, Split, ingest_dataset, parse_dataset, split
from groundplan.evaluation.harness import (
    EvalSetup,
    RunRecord,
    TaskRow,
    ablation_configs,
    apply_overrides,
    evaluate,
    expand_grid,
    grid_search,
)
from groundplan.evaluation.metrics import grounded_success, lcs_score, rank_runs

__all__ = [
    "DatasetEntry", "EvalSetup", "RunRecord", "Split", "TaskRow", "ablation_configs",
    "apply_overrides", "evaluate", "expand_grid", "grid_search", "grounded_success",
    "ingest_dataset", "lcs_score", "parse_dataset", "rank_runs", "split",
]
