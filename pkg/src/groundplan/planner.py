"""Plan generation: example selection, prompting, vanilla and translated loops."""
from __future__ import annotations

import hashlib
import json
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass, field, replace
from importlib import resources

import numpy as np

from groundplan.dsl import (
    ActionStep,
    PhraseMatcher,
    Program,
    UnparsedStep,
    parse_records,
    render_step,
    step_to_natural,
)
from groundplan.embedding import EmbeddingProvider, normalize_rows
from groundplan.errors import AllEmpty, DSLError
from groundplan.lm import (
    PLAN_MAX_TOKENS,
    STEP_MAX_TOKENS,
    CompletionBackend,
    SamplingParams,
    ScoredSample,
    complete,
    select_best,
)
from groundplan.translator import (
    SCORE_DECIMALS,
    ActionBank,
    CandidatePhrase,
    TranslatorConfig,
    plan_lines,
    translate,
    translate_whole_plan,
)

VANILLA = "vanilla"
TRANSLATED = "translated"


@dataclass(frozen=True)
class Demonstration:
    task_name: str
    program: Program
    instructions: str | None = None

    def __post_init__(self):
        if not self.program.steps:
            raise ValueError(f"demonstration {self.task_name!r} has an empty program")


@dataclass(frozen=True)
class QueryTask:
    name: str
    instructions: str | None = None

    def __post_init__(self):
        if not self.name.strip():
            raise ValueError("query task name must be non-empty")


def load_fixed_examples() -> list[Demonstration]:
    text = resources.files("groundplan").joinpath("data/fixed_examples.txt").read_text("utf-8")
    return [Demonstration(r.task_name, r.program, r.description) for r in parse_records(text)]


@dataclass(frozen=True)
class PlannerConfig:
    mode: str = TRANSLATED
    example_policy: str = "dynamic"  # or "fixed"
    fixed_example: int = 1  # 1-3, used by the fixed policy
    trajectory_correction: bool = True
    max_steps: int = 20
    sampling: SamplingParams = SamplingParams()
    translator: TranslatorConfig = TranslatorConfig()
    condition_on_instructions: bool = False

    def __post_init__(self):
        if self.mode not in (VANILLA, TRANSLATED):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.example_policy not in ("dynamic", "fixed"):
            raise ValueError(f"unknown example policy {self.example_policy!r}")
        if not 1 <= self.fixed_example <= 3:
            raise ValueError("fixed_example must be 1, 2 or 3")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    def fingerprint(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:12]


@dataclass
class PlanResult:
    query: QueryTask
    program: Program
    step_scores: list[float]
    termination_reason: str
    mode: str = TRANSLATED
    example: str = ""
    config_fingerprint: str = ""
    trace: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "query": self.query.name,
            "mode": self.mode,
            "config": self.config_fingerprint,
            "example": self.example,
            "program": [render_step(s) for s in self.program.steps],
            "step_scores": self.step_scores,
            "termination_reason": self.termination_reason,
        }


class ExampleSelector:
    """Picks the demonstration whose task name embeds closest to the query's."""

    def __init__(self, demos: Sequence[Demonstration], provider: EmbeddingProvider):
        if not demos:
            raise ValueError("need at least one demonstration")
        self.demos = list(demos)
        self.provider = provider
        self._names = normalize_rows(provider.embed([d.task_name for d in self.demos]))

    def scores(self, query: QueryTask) -> np.ndarray:
        probe = normalize_rows(self.provider.embed([query.name]))
        return np.round(self._names @ probe[0], SCORE_DECIMALS)

    def select(self, query: QueryTask) -> tuple[int, Demonstration]:
        i = int(np.argmax(self.scores(query)))  # first maximum wins
        return i, self.demos[i]


def select_example(
    query: QueryTask, demos: Sequence[Demonstration], provider: EmbeddingProvider
) -> Demonstration:
    return ExampleSelector(demos, provider).select(query)[1]


def _cap(phrase: str) -> str:
    return phrase[:1].upper() + phrase[1:]


def build_prompt(
    example: Demonstration,
    query: QueryTask,
    history: Sequence[str] = (),
    condition_on_instructions: bool = False,
) -> str:
    lines = [f"Task: {example.task_name}"]
    if condition_on_instructions and example.instructions:
        lines.append(f"Description: {example.instructions}")
    lines += [f"Step {i}: {_cap(step_to_natural(s))}" for i, s in enumerate(example.program.steps, 1)]
    lines += ["", f"Task: {query.name}"]
    if condition_on_instructions and query.instructions:
        lines.append(f"Description: {query.instructions}")
    lines += [f"Step {i}: {_cap(p)}" for i, p in enumerate(history, 1)]
    lines.append(f"Step {len(history) + 1}:")
    return "\n".join(lines)


def _plan_params(config: PlannerConfig) -> SamplingParams:
    max_tokens = config.sampling.max_tokens
    if max_tokens == STEP_MAX_TOKENS:
        max_tokens = PLAN_MAX_TOKENS
    return replace(config.sampling, max_tokens=max_tokens, stop_sequences=("\n\n", "\nTask:"))


def _step_params(config: PlannerConfig) -> SamplingParams:
    return replace(config.sampling, stop_sequences=("\n",))


def _sample_trace(samples: Iterable[ScoredSample]) -> list[dict]:
    return [{"text": s.text, "mean_log_prob": s.mean_log_prob} for s in samples]


def generate_plan_vanilla(
    query: QueryTask,
    example: Demonstration,
    backend: CompletionBackend,
    vocabulary: Iterable[str],
    config: PlannerConfig,
) -> PlanResult:
    """Whole-plan sampling, best sample by mean log prob, exact-template parsing only."""
    prompt = build_prompt(example, query, (), config.condition_on_instructions)
    samples = complete(backend, prompt, _plan_params(config))
    trace = [{"prompt": prompt, "samples": _sample_trace(samples)}]
    result = PlanResult(
        query, Program(query.name), [], "end-of-plan", VANILLA, example.task_name,
        config.fingerprint(), trace,
    )
    try:
        _, best = select_best(samples)
    except AllEmpty:
        result.termination_reason = "all-empty"
        return result
    matcher = PhraseMatcher(vocabulary)
    steps: list[ActionStep | UnparsedStep] = []
    for cand in plan_lines(best):
        if not cand.text:
            break
        if len(steps) >= config.max_steps:
            result.termination_reason = "max-steps"
            break
        try:
            steps.append(matcher.match(cand.text))
        except DSLError:
            steps.append(UnparsedStep(cand.text))
    result.program = Program(query.name, tuple(steps))
    return result


def generate_plan_translated(
    query: QueryTask,
    example: Demonstration,
    backend: CompletionBackend,
    bank: ActionBank,
    provider: EmbeddingProvider,
    config: PlannerConfig,
) -> PlanResult:
    """Interleave single-step sampling and translation; every output step is a bank member."""
    result = PlanResult(
        query, Program(query.name), [], "max-steps", TRANSLATED, example.task_name,
        config.fingerprint(),
    )
    if not config.trajectory_correction:
        prompt = build_prompt(example, query, (), config.condition_on_instructions)
        samples = complete(backend, prompt, _plan_params(config))
        result.trace.append({"prompt": prompt, "samples": _sample_trace(samples)})
        try:
            _, best = select_best(samples)
        except AllEmpty:
            result.termination_reason = "all-empty"
            return result
        whole = translate_whole_plan(
            best, bank, provider, config.translator, query.name, max_steps=config.max_steps
        )
        result.program = whole.program
        result.step_scores = whole.scores
        result.termination_reason = whole.reason
        return result

    history: list[str] = []
    steps: list[ActionStep] = []
    params = _step_params(config)
    while len(steps) < config.max_steps:
        prompt = build_prompt(example, query, history, config.condition_on_instructions)
        samples = complete(backend, prompt, params)
        outcome = translate(
            [CandidatePhrase.from_sample(s) for s in samples], bank, provider, config.translator
        )
        result.trace.append(
            {
                "step": len(steps) + 1,
                "samples": _sample_trace(samples),
                "top_matches": [list(t.top_matches) for t in outcome.traces],
                "score": outcome.score,
                "reason": outcome.reason,
            }
        )
        if outcome.terminate:
            result.termination_reason = outcome.reason
            break
        history.append(outcome.chosen.phrase)
        steps.append(outcome.chosen.step)
        result.step_scores.append(outcome.score)
    result.program = Program(query.name, tuple(steps))
    return result


class Planner:
    """Binds backends, demonstrations and (for translated mode) the action bank."""

    def __init__(
        self,
        backend: CompletionBackend,
        config: PlannerConfig,
        demos: Sequence[Demonstration] = (),
        provider: EmbeddingProvider | None = None,
        bank: ActionBank | None = None,
        vocabulary: Iterable[str] | None = None,
        fixed_examples: Sequence[Demonstration] | None = None,
    ):
        if config.mode == TRANSLATED and (bank is None or provider is None):
            raise ValueError("translated mode needs an action bank and an embedding provider")
        if config.example_policy == "dynamic" and provider is None:
            raise ValueError("dynamic example selection needs an embedding provider")
        self.backend = backend
        self.config = config
        self.provider = provider
        self.bank = bank
        if vocabulary is None:
            vocabulary = bank.vocabulary if bank is not None else ()
        self.vocabulary = frozenset(vocabulary)
        self.fixed_examples = list(fixed_examples or load_fixed_examples())
        self.selector = None
        if config.example_policy == "dynamic":
            self.selector = ExampleSelector(demos, provider)

    def example_for(self, query: QueryTask) -> Demonstration:
        if self.selector is not None:
            return self.selector.select(query)[1]
        return self.fixed_examples[self.config.fixed_example - 1]

    def plan(self, query: QueryTask | str) -> PlanResult:
        if isinstance(query, str):
            query = QueryTask(query)
        example = self.example_for(query)
        if self.config.mode == VANILLA:
            return generate_plan_vanilla(query, example, self.backend, self.vocabulary, self.config)
        return generate_plan_translated(
            query, example, self.backend, self.bank, self.provider, self.config
        )
