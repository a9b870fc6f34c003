"""Plan quality metrics: LCS similarity, grounded success and run ranking."""
from __future__ import annotations

from collections.abc import Sequence

from groundplan import kernels
from groundplan.dsl import Program

# Inter-annotator LCS ceiling; human programs are fully executable.
HUMAN_LCS_CEILING = 0.489
HUMAN_EXECUTABILITY = 1.0


def _encode(steps, table: dict) -> list[int]:
    return [table.setdefault(s.key, len(table)) for s in steps]


def lcs_ratio(a: Program, b: Program) -> float:
    """LCS length over the longer length; steps compared without instance ids."""
    if not a.steps and not b.steps:
        return 1.0
    if not a.steps or not b.steps:
        return 0.0
    table: dict = {}
    n = kernels.lcs_length(_encode(a.steps, table), _encode(b.steps, table))
    return n / max(len(a.steps), len(b.steps))


def lcs_score(predicted: Program, references: Sequence[Program]) -> float:
    if not references:
        raise ValueError("lcs_score needs at least one reference program")
    return max(lcs_ratio(predicted, ref) for ref in references)


def grounded_success(
    executability: Sequence[float],
    correct: Sequence[bool] | None = None,
    lcs: Sequence[float] | None = None,
    proxy_threshold: float = 0.5,
) -> float:
    """Share of tasks that are fully executable and judged correct.

    Without ``correct`` labels the proxy ``lcs >= proxy_threshold`` is used.
    """
    if not executability:
        return 0.0
    if correct is None:
        if lcs is None:
            raise ValueError("need correctness labels or LCS values")
        correct = [v >= proxy_threshold for v in lcs]
    if len(correct) != len(executability):
        raise ValueError("labels and executability have different lengths")
    hits = sum(1 for e, c in zip(executability, correct) if e >= 1.0 and c)
    return hits / len(executability)


def rank_score(executability: float, lcs: float, normalizers=(HUMAN_EXECUTABILITY, HUMAN_LCS_CEILING)):
    norm_exec, norm_lcs = normalizers
    if norm_exec <= 0 or norm_lcs <= 0:
        raise ValueError("normalizers must be positive")
    return executability / norm_exec + lcs / norm_lcs


def rank_runs(records, normalizers=(HUMAN_EXECUTABILITY, HUMAN_LCS_CEILING)) -> list:
    """Best run first by normalized executability + normalized LCS; ties by fingerprint."""
    return sorted(
        records,
        key=lambda r: (-rank_score(r.executability, r.lcs, normalizers), r.fingerprint),
    )
