"""Planning language model: sampling parameters, backends and sample scoring."""
from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import threading
import time
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import Protocol

from groundplan.errors import (
    AllEmpty,
    BackendError,
    BackendUnavailable,
    EmptySample,
    MissingLogProbs,
)

log = logging.getLogger(__name__)

# Hyperparameter search values for the sampling side of the harness.
GRID_VALUES = {
    "temperature": (0.1, 0.3, 0.6),
    "n_samples": (1, 10),
    "frequency_penalty": (0.1, 0.3, 0.6, 0.9),
    "presence_penalty": (0.3, 0.5, 0.8),
    "repetition_penalty": (1.0, 1.2, 1.5, 1.8),
}

STEP_MAX_TOKENS = 30
PLAN_MAX_TOKENS = 300


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = 0.6
    top_p: float = 0.9
    n_samples: int = 1
    max_tokens: int = STEP_MAX_TOKENS
    frequency_penalty: float = 0.0
    presence_penalty: float = 0.0
    repetition_penalty: float = 1.0
    stop_sequences: tuple[str, ...] = ("\n",)

    def __post_init__(self):
        object.__setattr__(self, "stop_sequences", tuple(self.stop_sequences))
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")
        if self.n_samples < 1 or self.max_tokens < 1:
            raise ValueError("n_samples and max_tokens must be positive")

    def in_grid(self) -> bool:
        return all(getattr(self, name) in values for name, values in GRID_VALUES.items())


Token = tuple[str, float]


def mean_log_prob(tokens: Iterable[Token] | Iterable[float]) -> float:
    values = [t[1] if isinstance(t, tuple) else float(t) for t in tokens]
    if not values:
        raise EmptySample("mean log probability of an empty sample is undefined")
    return sum(values) / len(values)


_ALNUM = re.compile(r"[A-Za-z0-9]")


def strip_non_english(text: str) -> str:
    """Drop leading/trailing whitespace-separated tokens with no Latin letter or digit."""
    words = text.split()
    lo, hi = 0, len(words)
    while lo < hi and not _ALNUM.search(words[lo]):
        lo += 1
    while hi > lo and not _ALNUM.search(words[hi - 1]):
        hi -= 1
    return " ".join(words[lo:hi])


def is_zero_length(text: str) -> bool:
    return not strip_non_english(text)


@dataclass(frozen=True)
class ScoredSample:
    text: str
    tokens: tuple[Token, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple((str(t), float(lp)) for t, lp in self.tokens))

    @property
    def mean_log_prob(self) -> float | None:
        """Mean token log probability; ``None`` flags an empty sample."""
        if not self.tokens:
            return None
        return mean_log_prob(self.tokens)

    def to_json(self) -> dict:
        return {"text": self.text, "tokens": [list(t) for t in self.tokens]}

    @classmethod
    def from_json(cls, record: dict) -> ScoredSample:
        return cls(record["text"], tuple((t, lp) for t, lp in record["tokens"]))


def select_best(samples: Sequence[ScoredSample]) -> tuple[int, ScoredSample]:
    """Highest mean log probability among non-empty samples; earliest index wins ties."""
    best = None
    for i, sample in enumerate(samples):
        if is_zero_length(sample.text) or sample.mean_log_prob is None:
            continue
        if best is None or sample.mean_log_prob > best[1].mean_log_prob:
            best = (i, sample)
    if best is None:
        raise AllEmpty(f"all {len(samples)} samples are empty")
    return best


def truncate_at_stop(sample: ScoredSample, stops: Sequence[str]) -> ScoredSample:
    """Cut ``sample`` before the first stop sequence, keeping tokens consistent."""
    cut = min((i for i in (sample.text.find(s) for s in stops if s) if i >= 0), default=-1)
    if cut < 0:
        return sample
    tokens = []
    offset = 0
    for tok, lp in sample.tokens:
        if offset >= cut:
            break
        tokens.append((tok[: cut - offset], lp))
        offset += len(tok)
    return ScoredSample(sample.text[:cut], tuple(tokens))


class CompletionBackend(Protocol):
    kind: str
    supported_params: frozenset[str]

    def sample(self, prompt: str, params: SamplingParams) -> list[ScoredSample]:
        """Return ``params.n_samples`` raw completions with token log probabilities."""


_OPTIONAL_PARAMS = {
    "frequency_penalty": 0.0,
    "presence_penalty": 0.0,
    "repetition_penalty": 1.0,
}


def ignored_params(backend: CompletionBackend, params: SamplingParams) -> list[str]:
    """Non-default parameters the backend cannot honour."""
    return [
        name
        for name, default in _OPTIONAL_PARAMS.items()
        if getattr(params, name) != default and name not in backend.supported_params
    ]


def complete(
    backend: CompletionBackend,
    prompt: str,
    params: SamplingParams,
    retries: int = 3,
    backoff: float = 1.0,
    max_backoff: float = 30.0,
) -> list[ScoredSample]:
    if not prompt:
        raise ValueError("prompt must be non-empty")
    skipped = ignored_params(backend, params)
    if skipped:
        log.debug("%s backend ignores %s", backend.kind, ", ".join(skipped))
    delay = backoff
    for attempt in range(retries + 1):
        try:
            raw = backend.sample(prompt, params)
            break
        except BackendUnavailable:
            if attempt == retries:
                raise
            log.warning("backend unavailable, retry %d/%d in %.1fs", attempt + 1, retries, delay)
            time.sleep(delay)
            delay = min(delay * 2, max_backoff)
    if len(raw) != params.n_samples:
        raise BackendError(f"backend returned {len(raw)} samples, expected {params.n_samples}")
    out = []
    for sample in raw:
        if sample.text and not sample.tokens:
            raise MissingLogProbs("backend did not report token log probabilities")
        out.append(truncate_at_stop(sample, params.stop_sequences))
    return out


def prompt_fingerprint(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:20]


_TOKEN = re.compile(r"[^\S\n]*\S+|\n|[^\S\n]+")


def mock_tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text)


class ScriptedBackend:
    """Replays recorded samples keyed by prompt fingerprint (``"*"`` matches any prompt)."""

    kind = "scripted-mock"
    supported_params = frozenset(_OPTIONAL_PARAMS)

    def __init__(self, table: dict[str, Sequence[ScoredSample]]):
        self.table = {k: tuple(v) for k, v in table.items()}

    @classmethod
    def fixed(cls, samples: Sequence[ScoredSample]) -> ScriptedBackend:
        return cls({"*": samples})

    @classmethod
    def from_file(cls, path) -> ScriptedBackend:
        table = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    table[rec["fingerprint"]] = [ScoredSample.from_json(s) for s in rec["samples"]]
                except (ValueError, KeyError) as exc:
                    raise BackendError(f"{path}:{lineno}: bad script record: {exc}") from exc
        return cls(table)

    def sample(self, prompt: str, params: SamplingParams) -> list[ScoredSample]:
        fp = prompt_fingerprint(prompt)
        recorded = self.table.get(fp) or self.table.get("*")
        if not recorded:
            raise BackendError(f"no scripted completion for prompt fingerprint {fp}")
        return [recorded[i % len(recorded)] for i in range(params.n_samples)]


class RecordingBackend:
    """Wraps a backend and records every exchange for later replay."""

    def __init__(self, inner: CompletionBackend):
        self.inner = inner
        self.kind = inner.kind
        self.supported_params = inner.supported_params
        self.records: dict[str, list[ScoredSample]] = {}
        self._lock = threading.Lock()

    def sample(self, prompt, params):
        samples = self.inner.sample(prompt, params)
        with self._lock:
            self.records[prompt_fingerprint(prompt)] = list(samples)
        return samples

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for fp, samples in self.records.items():
                rec = {"fingerprint": fp, "samples": [s.to_json() for s in samples]}
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


@dataclass
class CorpusTask:
    task: str
    steps: list[list[str]]  # per step: alternative phrasings, sample i uses i % len
    intended: list[str] = field(default_factory=list)


_LAST_TASK = re.compile(r"^Task:[^\S\n]*(.*)$", re.M)
_STEP_CUE = re.compile(r"Step\s+(\d+):\s*$")


class CorpusBackend:
    """Deterministic stand-in for a planning LM driven by a paraphrase corpus.

    It reads the query task (last ``Task:`` line) and the step cue
    (``Step n:`` at the end of the prompt) and continues the corpus plan from
    step ``n``. Stop sequences then decide whether one step or a whole plan
    comes back. Token log probabilities are pseudo-random but fixed per
    (task, step, sample).
    """

    kind = "scripted-mock"
    supported_params = frozenset(_OPTIONAL_PARAMS)

    def __init__(self, tasks: Iterable[CorpusTask]):
        self.tasks = {t.task.lower(): t for t in tasks}

    @classmethod
    def from_file(cls, path) -> CorpusBackend:
        tasks = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rec = json.loads(line)
                    tasks.append(CorpusTask(rec["task"], rec["steps"], rec.get("intended", [])))
        return cls(tasks)

    def _logprob(self, task: str, step: int, index: int, pos: int) -> float:
        seed = hashlib.sha256(f"{task}|{step}|{index}|{pos}".encode()).digest()
        return -random.Random(seed).uniform(0.05, 1.2)

    def sample(self, prompt: str, params: SamplingParams) -> list[ScoredSample]:
        tasks = _LAST_TASK.findall(prompt)
        cue = _STEP_CUE.search(prompt)
        entry = self.tasks.get(tasks[-1].strip().lower()) if tasks else None
        start = int(cue.group(1)) if cue else 1
        out = []
        for i in range(params.n_samples):
            text = ""
            if entry is not None:
                parts = []
                for n in range(start, len(entry.steps) + 1):
                    alts = entry.steps[n - 1]
                    phrase = alts[i % len(alts)]
                    parts.append(f" {phrase}" if n == start else f"Step {n}: {phrase}")
                text = "\n".join(parts) + "\n"
            tokens = mock_tokenize(text)
            lps = [
                -0.01 if tok == "\n" else self._logprob(entry.task if entry else "", start, i, j)
                for j, tok in enumerate(tokens)
            ]
            out.append(ScoredSample(text, tuple(zip(tokens, lps))))
        return out


class RemoteCompletionBackend:
    """Completion endpoint speaking the classic ``/v1/completions`` protocol."""

    kind = "remote-completion"
    supported_params = frozenset({"frequency_penalty", "presence_penalty"})

    def __init__(
        self,
        url: str | None = None,
        model: str | None = None,
        api_key: str | None = None,
        max_in_flight: int = 4,
        requests_per_minute: float | None = None,
        timeout: float = 60.0,
        client=None,
    ):
        import httpx

        self.url = url or os.environ.get("GROUNDPLAN_COMPLETION_URL")
        if not self.url:
            raise BackendError("no completion endpoint configured (GROUNDPLAN_COMPLETION_URL)")
        self.model = model or os.environ.get("GROUNDPLAN_COMPLETION_MODEL", "")
        key = api_key or os.environ.get("GROUNDPLAN_COMPLETION_KEY") or os.environ.get("OPENAI_API_KEY")
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        self.client = client or httpx.Client(timeout=timeout, headers=headers)
        self._gate = threading.BoundedSemaphore(max_in_flight)
        self._interval = 60.0 / requests_per_minute if requests_per_minute else 0.0
        self._next_slot = 0.0
        self._clock = threading.Lock()

    def _wait_for_slot(self):
        if not self._interval:
            return
        with self._clock:
            now = time.monotonic()
            wait = self._next_slot - now
            self._next_slot = max(now, self._next_slot) + self._interval
        if wait > 0:
            time.sleep(wait)

    def request_body(self, prompt: str, params: SamplingParams) -> dict:
        body = {
            "prompt": prompt,
            "temperature": params.temperature,
            "top_p": params.top_p,
            "n": params.n_samples,
            "max_tokens": params.max_tokens,
            "logprobs": 1,
            "stop": list(params.stop_sequences) or None,
            "frequency_penalty": params.frequency_penalty,
            "presence_penalty": params.presence_penalty,
        }
        if self.model:
            body["model"] = self.model
        return body

    def sample(self, prompt: str, params: SamplingParams) -> list[ScoredSample]:
        import httpx

        self._wait_for_slot()
        try:
            with self._gate:
                resp = self.client.post(self.url, json=self.request_body(prompt, params))
        except httpx.TransportError as exc:
            raise BackendUnavailable(str(exc)) from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise BackendUnavailable(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        choices = sorted(resp.json()["choices"], key=lambda c: c.get("index", 0))
        out = []
        for choice in choices:
            lp = choice.get("logprobs") or {}
            toks, values = lp.get("tokens"), lp.get("token_logprobs")
            if toks is None or values is None:
                raise MissingLogProbs("response carries no token log probabilities")
            pairs = [(t, v) for t, v in zip(toks, values) if v is not None]
            out.append(ScoredSample(choice.get("text", ""), tuple(pairs)))
        return out
