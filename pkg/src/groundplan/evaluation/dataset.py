"""Task/program dataset files and demonstration/held-out splits."""
from __future__ import annotations

import random
from dataclasses import dataclass, field

from groundplan.dsl import DSLError, Program, parse_records
from groundplan.errors import DatasetError
from groundplan.planner import Demonstration


@dataclass
class DatasetEntry:
    task_name: str
    instructions: str | None = None
    programs: list[Program] = field(default_factory=list)

    def demonstration(self) -> Demonstration:
        return Demonstration(self.task_name, self.programs[0], self.instructions)


@dataclass
class Split:
    demonstrations: list[DatasetEntry]
    held_out: list[DatasetEntry]
    seed: int

    def sizes(self) -> tuple[int, int]:
        return len(self.demonstrations), len(self.held_out)


def parse_dataset(text: str, source: str = "<dataset>") -> list[DatasetEntry]:
    try:
        records = parse_records(text)
    except DSLError as err:
        raise DatasetError(f"{source}: {err}") from err
    entries: dict[str, DatasetEntry] = {}
    for rec in records:
        if not rec.program.steps:
            raise DatasetError(f"{source}: task {rec.task_name!r} has an empty program")
        entry = entries.setdefault(rec.task_name, DatasetEntry(rec.task_name))
        if entry.instructions is None:
            entry.instructions = rec.description
        entry.programs.append(rec.program)
    return list(entries.values())


def ingest_dataset(path) -> list[DatasetEntry]:
    with open(path, encoding="utf-8") as fh:
        return parse_dataset(fh.read(), str(path))


def split(entries: list[DatasetEntry], seed: int, holdout_count: int) -> Split:
    """Hold out ``holdout_count`` distinct tasks at random; the rest are demonstrations."""
    names = sorted(e.task_name for e in entries)
    if len(set(names)) != len(names):
        raise DatasetError("entries must have distinct task names")
    if not 0 < holdout_count < len(names):
        raise DatasetError(f"holdout_count must be in [1, {len(names) - 1}], got {holdout_count}")
    held = set(random.Random(seed).sample(names, holdout_count))
    return Split(
        [e for e in entries if e.task_name not in held],
        [e for e in entries if e.task_name in held],
        seed,
    )
