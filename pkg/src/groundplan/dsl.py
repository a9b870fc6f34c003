"""Program syntax: parsing, rendering and the natural-language mapping.

A program line looks like ``[PUTBACK] <milk>(1) <fridge>(1)``. Each of the 42
atomic actions has a natural-language template (``put <arg1> on <arg2>``)
which is the only form language models ever see.
"""
from __future__ import annotations

import re
from collections.abc import Iterable
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

from groundplan.errors import (
    AmbiguousPhrase,
    ArityMismatch,
    DSLError,
    MalformedSyntax,
    NoTemplateMatch,
    UnknownAction,
)

_SLOT = re.compile(r"<arg(\d)>")
_LINE = re.compile(r"^\s*\[([A-Za-z_]+)\](.*?)\s*$")
_ARG = re.compile(r"\s*[<⟨〈]([^<>⟨⟩〈〉]*)[>⟩〉](?:\((\d+)\))?")
_NAME = re.compile(r"^[a-z0-9][a-z0-9_'\-]*$")


@dataclass(frozen=True)
class AtomicAction:
    name: str
    arity: int
    template: str

    @property
    def words(self) -> tuple[str, ...]:
        return tuple(self.template.split())


def _load_table() -> tuple[AtomicAction, ...]:
    text = resources.files("groundplan").joinpath("data/action_templates.tsv").read_text("utf-8")
    actions = []
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        syntax, arity, template = line.split("\t")
        name = _LINE.match(syntax).group(1)
        actions.append(AtomicAction(name, int(arity), template))
    return tuple(actions)


ACTION_TABLE: tuple[AtomicAction, ...] = _load_table()
ACTIONS: dict[str, AtomicAction] = {a.name: a for a in ACTION_TABLE}


def get_action(name: str) -> AtomicAction:
    try:
        return ACTIONS[name.upper()]
    except KeyError:
        raise UnknownAction(f"unknown atomic action {name!r}") from None


def normalize_object_name(name: str) -> str:
    """Canonical object name: lowercase, whitespace runs become one underscore."""
    return "_".join(name.strip().lower().split())


@dataclass(frozen=True)
class ActionStep:
    action: AtomicAction
    args: tuple[str, ...] = ()
    ids: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))
        if self.ids is not None:
            object.__setattr__(self, "ids", tuple(self.ids) or None)
        if len(self.args) != self.action.arity:
            raise ArityMismatch(
                f"{self.action.name} takes {self.action.arity} argument(s), got {len(self.args)}"
            )
        for arg in self.args:
            if not _NAME.match(arg):
                raise MalformedSyntax(f"invalid object name {arg!r}")
        if self.ids is not None:
            if len(self.ids) != len(self.args):
                raise ArityMismatch(f"{len(self.ids)} ids for {len(self.args)} arguments")
            if any(i < 1 for i in self.ids):
                raise MalformedSyntax(f"ids must be positive: {self.ids}")

    @classmethod
    def make(cls, name: str, *args: str, ids: Iterable[int] | None = None) -> ActionStep:
        return cls(get_action(name), tuple(args), None if ids is None else tuple(ids))

    @property
    def key(self) -> tuple[str, ...]:
        """Identity used for comparisons that ignore instance ids."""
        return (self.action.name, *self.args)

    def with_default_ids(self) -> ActionStep:
        return ActionStep(self.action, self.args, self.ids or (1,) * len(self.args) or None)


@dataclass(frozen=True)
class UnparsedStep:
    """A plan line that could not be mapped to any action (kept for honest scoring)."""

    text: str

    @property
    def key(self) -> tuple[str, ...]:
        return ("?", self.text)


@dataclass(frozen=True)
class Program:
    task_name: str = ""
    steps: tuple[ActionStep | UnparsedStep, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def is_parsed(self) -> bool:
        return all(isinstance(s, ActionStep) for s in self.steps)


def parse_step(line: str) -> ActionStep:
    m = _LINE.match(line)
    if m is None:
        raise MalformedSyntax(f"not a program line: {line!r}")
    action = get_action(m.group(1))
    rest = m.group(2)
    args: list[str] = []
    ids: list[int | None] = []
    pos = 0
    while pos < len(rest):
        am = _ARG.match(rest, pos)
        if am is None:
            if rest[pos:].strip():
                raise MalformedSyntax(f"unexpected text {rest[pos:].strip()!r} in {line!r}")
            break
        name = normalize_object_name(am.group(1))
        if not name:
            raise MalformedSyntax(f"empty object name in {line!r}")
        args.append(name)
        ids.append(int(am.group(2)) if am.group(2) else None)
        pos = am.end()
    if len(args) != action.arity:
        raise ArityMismatch(
            f"{action.name} takes {action.arity} argument(s), got {len(args)} in {line!r}"
        )
    parsed_ids = None
    if any(i is not None for i in ids):
        parsed_ids = tuple(1 if i is None else i for i in ids)
    return ActionStep(action, tuple(args), parsed_ids)


def render_step(step: ActionStep | UnparsedStep) -> str:
    if isinstance(step, UnparsedStep):
        return step.text
    ids = step.ids or (1,) * len(step.args)
    parts = [f"[{step.action.name}]"]
    parts += [f"<{arg}>({i})" for arg, i in zip(step.args, ids)]
    return " ".join(parts)


def step_to_natural(step: ActionStep | UnparsedStep) -> str:
    if isinstance(step, UnparsedStep):
        return step.text
    args = [a.replace("_", " ") for a in step.args]
    return _SLOT.sub(lambda m: args[int(m.group(1)) - 1], step.action.template)


class PhraseMatcher:
    """Exact inverse of :func:`step_to_natural` over a fixed object vocabulary."""

    def __init__(self, vocabulary: Iterable[str], actions: Iterable[AtomicAction] = ACTION_TABLE):
        self.vocabulary = frozenset(normalize_object_name(v) for v in vocabulary)
        self._spaced = {v.replace("_", " "): v for v in self.vocabulary}
        self._by_first: dict[str, list[AtomicAction]] = {}
        for action in actions:
            self._by_first.setdefault(action.words[0], []).append(action)

    def _assign(self, twords, pwords, ti, pi, acc, out):
        if ti == len(twords):
            if pi == len(pwords):
                out.append(list(acc))
            return
        tw = twords[ti]
        if not tw.startswith("<arg"):
            if pi < len(pwords) and pwords[pi] == tw:
                self._assign(twords, pwords, ti + 1, pi + 1, acc, out)
            return
        for end in range(pi + 1, len(pwords) + 1):
            name = self._spaced.get(" ".join(pwords[pi:end]))
            if name is not None:
                acc.append(name)
                self._assign(twords, pwords, ti + 1, end, acc, out)
                acc.pop()

    def match_all(self, phrase: str) -> list[ActionStep]:
        pwords = phrase.lower().split()
        if not pwords:
            return []
        found = []
        for action in self._by_first.get(pwords[0], ()):
            hits: list[list[str]] = []
            self._assign(action.words, pwords, 0, 0, [], hits)
            found += [ActionStep(action, tuple(args)) for args in hits]
        return found

    def match(self, phrase: str) -> ActionStep:
        found = self.match_all(phrase)
        if not found:
            raise NoTemplateMatch(f"no action template matches {phrase!r}")
        if len(found) > 1:
            rendered = ", ".join(render_step(s) for s in found)
            raise AmbiguousPhrase(f"{phrase!r} matches several steps: {rendered}")
        return found[0]


@lru_cache(maxsize=32)
def _cached_matcher(vocabulary: frozenset[str]) -> PhraseMatcher:
    return PhraseMatcher(vocabulary)


def natural_to_step(phrase: str, vocabulary: Iterable[str]) -> ActionStep:
    """Map a templated phrase back to its step; raises ``NoTemplateMatch`` for free-form text."""
    return _cached_matcher(frozenset(vocabulary)).match(phrase)


def parse_program(text: str) -> Program:
    task_name = ""
    steps: list[ActionStep] = []
    seen_content = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if not seen_content and line.lstrip().lower().startswith("task:"):
            task_name = line.split(":", 1)[1].strip()
            seen_content = True
            continue
        seen_content = True
        try:
            steps.append(parse_step(line))
        except DSLError as err:
            err.line = lineno
            raise
    return Program(task_name, tuple(steps))


def render_program(program: Program) -> str:
    lines = [f"Task: {program.task_name}"] if program.task_name else []
    lines += [render_step(s) for s in program.steps]
    return "\n".join(lines) + ("\n" if lines else "")


def read_vocabulary(path) -> list[str]:
    """One object class per line; blank lines and ``#`` comments skipped."""
    with open(path, encoding="utf-8") as fh:
        names = [normalize_object_name(line.split("#", 1)[0]) for line in fh]
    return list(dict.fromkeys(n for n in names if n))


@dataclass(frozen=True)
class Record:
    task_name: str
    description: str | None
    program: Program


def parse_records(text: str) -> list[Record]:
    """Parse blank-line separated ``Task:`` / ``Description:`` / step-line records."""
    records = []
    block: list[tuple[int, str]] = []
    for lineno, line in enumerate(text.splitlines() + [""], start=1):
        if line.strip():
            block.append((lineno, line))
            continue
        if not block:
            continue
        first_no, first = block[0]
        if not first.lower().startswith("task:"):
            raise MalformedSyntax("record must start with 'Task:'", line=first_no)
        task = first.split(":", 1)[1].strip()
        if not task:
            raise MalformedSyntax("empty task name", line=first_no)
        description = None
        steps = []
        for no, body in block[1:]:
            if body.lower().startswith("description:") and not steps:
                description = body.split(":", 1)[1].strip()
                continue
            try:
                steps.append(parse_step(body))
            except DSLError as err:
                err.line = no
                raise
        records.append(Record(task, description, Program(task, tuple(steps))))
        block = []
    return records
