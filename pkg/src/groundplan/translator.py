"""Admissible action bank and semantic translation of free-form step phrases.

A candidate phrase ``a`` with mean log probability ``P(a)`` scores against a
bank action ``e`` as ``cos(f(a), f(e)) + beta * P(a)``; the bank action with
the best score over all candidates wins. Translation terminates when more
than ``zero_length_fraction`` of the candidates are empty, or when the best
score falls below ``epsilon``.
"""
from __future__ import annotations

import itertools
import re
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

from groundplan.dsl import (
    ACTION_TABLE,
    ActionStep,
    AtomicAction,
    Program,
    normalize_object_name,
    render_step,
    step_to_natural,
)
from groundplan.embedding import EmbeddingIndex, EmbeddingProvider, build_index
from groundplan.errors import EmptyCandidateList
from groundplan.lm import ScoredSample, is_zero_length, strip_non_english

BELOW_EPSILON = "below-epsilon"
ZERO_LENGTH = "zero-length-majority"
NO_TERMINATION = "none"
SCORE_DECIMALS = 12


@dataclass(frozen=True)
class AdmissibleAction:
    step: ActionStep
    phrase: str


def enumerate_action_bank(
    actions: Iterable[AtomicAction] = ACTION_TABLE,
    vocabulary: Iterable[str] = (),
    allow: Callable[[ActionStep], bool] | None = None,
) -> list[AdmissibleAction]:
    """Every action instantiated with every argument tuple over ``vocabulary``.

    Order is table order, then lexicographic arguments. ``allow`` is an
    optional compatibility filter (off by default).
    """
    vocab = sorted({normalize_object_name(v) for v in vocabulary})
    bank = []
    seen: dict[str, ActionStep] = {}
    for action in actions:
        for args in itertools.product(vocab, repeat=action.arity):
            step = ActionStep(action, args)
            if allow is not None and not allow(step):
                continue
            phrase = step_to_natural(step)
            if phrase in seen:
                raise ValueError(
                    f"phrase {phrase!r} is produced by both {render_step(seen[phrase])} "
                    f"and {render_step(step)}"
                )
            seen[phrase] = step
            bank.append(AdmissibleAction(step, phrase))
    return bank


def bank_size(actions: Iterable[AtomicAction], vocab_size: int) -> int:
    return sum(vocab_size**a.arity for a in actions)


@dataclass(frozen=True, eq=False)
class ActionBank:
    """The enumerated actions together with their embedding index (same order)."""

    actions: tuple[AdmissibleAction, ...]
    index: EmbeddingIndex

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def vocabulary(self) -> frozenset[str]:
        return frozenset(arg for a in self.actions for arg in a.step.args)

    def __contains__(self, step: ActionStep) -> bool:
        return step_to_natural(step) in self.index._positions

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for a in self.actions:
                fh.write(f"{a.phrase}\t{render_step(a.step)}\n")


def build_bank(
    provider: EmbeddingProvider,
    vocabulary: Iterable[str],
    actions: Iterable[AtomicAction] = ACTION_TABLE,
    allow: Callable[[ActionStep], bool] | None = None,
) -> ActionBank:
    bank = enumerate_action_bank(actions, vocabulary, allow)
    return ActionBank(tuple(bank), build_index(provider, [a.phrase for a in bank]))


@dataclass(frozen=True)
class CandidatePhrase:
    text: str
    mean_log_prob: float = 0.0

    @classmethod
    def from_sample(cls, sample: ScoredSample) -> CandidatePhrase:
        lp = sample.mean_log_prob
        return cls(sample.text, 0.0 if lp is None else lp)


@dataclass(frozen=True)
class TranslatorConfig:
    beta: float = 0.3
    epsilon: float = 0.4
    zero_length_fraction: float = 0.5
    trace_top: int = 5

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if not 0 < self.zero_length_fraction <= 1:
            raise ValueError("zero_length_fraction must be in (0, 1]")


@dataclass(frozen=True)
class CandidateTrace:
    text: str
    mean_log_prob: float
    top_matches: tuple[tuple[str, float], ...]


@dataclass(frozen=True)
class TranslationOutcome:
    chosen: AdmissibleAction | None
    score: float
    similarity: float = float("nan")
    candidate: int = -1
    reason: str = NO_TERMINATION
    traces: tuple[CandidateTrace, ...] = field(default=(), compare=False)

    @property
    def terminate(self) -> bool:
        return self.chosen is None


def translate(
    candidates: Sequence[CandidatePhrase],
    bank: ActionBank,
    provider: EmbeddingProvider,
    config: TranslatorConfig = TranslatorConfig(),
) -> TranslationOutcome:
    """Pick the bank action maximizing ``max_a cos + beta * P(a)``.

    Ties go to the higher similarity, then the earlier bank entry, then the
    earlier candidate.
    """
    if not candidates:
        raise EmptyCandidateList("translate needs at least one candidate")
    n_empty = sum(is_zero_length(c.text) for c in candidates)
    if n_empty > config.zero_length_fraction * len(candidates):
        return TranslationOutcome(None, float("-inf"), reason=ZERO_LENGTH)
    live = [(i, c) for i, c in enumerate(candidates) if not is_zero_length(c.text)]
    if not live:  # only reachable with zero_length_fraction == 1
        return TranslationOutcome(None, float("-inf"), reason=ZERO_LENGTH)

    texts = [strip_non_english(c.text) for _, c in live]
    # Rounding makes mathematically equal scores compare equal, so the
    # documented tie-break decides instead of floating-point noise.
    sims = np.round(bank.index.similarities(provider.embed(texts)), SCORE_DECIMALS)
    logps = np.array([c.mean_log_prob for _, c in live])
    scores = np.round(sims + config.beta * logps[:, None], SCORE_DECIMALS)

    best = scores.max()
    tied = scores == best
    best_sim = np.where(tied, sims, -np.inf).max()
    rows, cols = np.nonzero(tied & (sims == best_sim))
    pick = int(np.lexsort((rows, cols))[0])
    row, col = int(rows[pick]), int(cols[pick])

    traces = ()
    if config.trace_top:
        traces = tuple(_trace(live[r][1], sims[r], bank, config.trace_top) for r in range(len(live)))
    if best < config.epsilon:
        return TranslationOutcome(
            None, float(best), float(best_sim), live[row][0], BELOW_EPSILON, traces
        )
    return TranslationOutcome(
        bank.actions[col], float(best), float(best_sim), live[row][0], NO_TERMINATION, traces
    )


def _trace(cand: CandidatePhrase, sims: np.ndarray, bank: ActionBank, top: int) -> CandidateTrace:
    top = min(top, len(sims))
    part = np.argpartition(-sims, top - 1)[:top]
    order = sorted(part, key=lambda j: (-sims[j], j))
    return CandidateTrace(
        cand.text, cand.mean_log_prob, tuple((bank.actions[j].phrase, float(sims[j])) for j in order)
    )


_STEP_LINE = re.compile(r"^\s*Step\s+\d+\s*:(.*)$", re.I)


def plan_lines(sample: ScoredSample | str, cued: bool = True) -> list[CandidatePhrase]:
    """Split a whole-plan completion into per-step phrases with their own mean log prob.

    With ``cued`` the first line continues a ``Step 1:`` cue already in the
    prompt. Later lines must read ``Step <i>: <phrase>``; the first line that
    does not (including a blank one) ends the plan. A blank step phrase is
    kept so callers can apply the zero-length rule to it.
    """
    if isinstance(sample, str):
        sample = ScoredSample(sample, ())
    text = sample.text
    owners: dict[int, list[float]] = {}
    offset = 0
    line_starts = [0] + [m.end() for m in re.finditer("\n", text)]
    for tok, lp in sample.tokens:
        stripped = len(tok) - len(tok.lstrip())
        pos = offset + stripped
        offset += len(tok)
        if tok.strip():
            line = np.searchsorted(line_starts, pos, side="right") - 1
            owners.setdefault(int(line), []).append(lp)

    out = []
    for i, line in enumerate(text.split("\n")):
        if i == 0 and cued:
            phrase = line
        else:
            m = _STEP_LINE.match(line)
            if m is None:
                break
            phrase = m.group(1)
        lps = owners.get(i, [])
        out.append(CandidatePhrase(phrase.strip(), sum(lps) / len(lps) if lps else 0.0))
        if is_zero_length(phrase):
            break
    return out


@dataclass
class WholePlanTranslation:
    program: Program
    scores: list[float]
    reason: str
    outcomes: list[TranslationOutcome]


def translate_whole_plan(
    plan: ScoredSample | str,
    bank: ActionBank,
    provider: EmbeddingProvider,
    config: TranslatorConfig = TranslatorConfig(),
    task_name: str = "",
    cued: bool = True,
    max_steps: int | None = None,
) -> WholePlanTranslation:
    """Translate each plan line on its own; a terminating line truncates the program."""
    steps, scores, outcomes = [], [], []
    reason = "end-of-plan"
    lines = plan_lines(plan, cued=cued)
    if lines and not any(c.text for c in lines):
        lines = []
    for cand in lines:
        if max_steps is not None and len(steps) >= max_steps:
            reason = "max-steps"
            break
        outcome = translate([cand], bank, provider, config)
        outcomes.append(outcome)
        if outcome.terminate:
            reason = outcome.reason
            break
        steps.append(outcome.chosen.step)
        scores.append(outcome.score)
    return WholePlanTranslation(Program(task_name, tuple(steps)), scores, reason, outcomes)
