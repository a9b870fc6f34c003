import pytest

from groundplan.cli import data_path
from groundplan.errors import DatasetError
from groundplan.evaluation.dataset import ingest_dataset, parse_dataset, split

NAMES = ["Brush teeth", "Watch TV", "Read book", "Wash hands", "Go to sleep", "Make coffee",
         "Take shower", "Answer phone", "Pet cat"]


def fixture_text():
    chunks = []
    for i, name in enumerate(NAMES + NAMES[:3]):  # 12 records, 9 tasks
        chunks.append(f"Task: {name}\n[WALK] <room{i}>(1)\n[FIND] <thing{i}>(1)")
    return "\n\n".join(chunks) + "\n"


def test_parse_groups_by_task():
    entries = parse_dataset(fixture_text())
    assert len(entries) == 9
    assert sum(len(e.programs) for e in entries) == 12
    assert [len(e.programs) for e in entries[:3]] == [2, 2, 2]


def test_split_sizes_and_disjointness():
    entries = parse_dataset(fixture_text())
    s = split(entries, seed=0, holdout_count=3)
    assert s.sizes() == (6, 3)
    demo = {e.task_name for e in s.demonstrations}
    held = {e.task_name for e in s.held_out}
    assert not demo & held and demo | held == set(NAMES)


def test_split_deterministic():
    entries = parse_dataset(fixture_text())
    names = lambda s: sorted(e.task_name for e in s.held_out)
    assert names(split(entries, 5, 3)) == names(split(list(reversed(entries)), 5, 3))
    assert len({tuple(names(split(entries, seed, 3))) for seed in range(20)}) > 1


@pytest.mark.parametrize("count", [0, 9, 12])
def test_split_bad_holdout(count):
    with pytest.raises(DatasetError):
        split(parse_dataset(fixture_text()), 0, count)


def test_malformed_record_has_context():
    text = "Task: A\n[WALK] <kitchen>(1)\n\nTask: B\n[FLY] <moon>(1)\n"
    with pytest.raises(DatasetError, match="bad.txt"):
        parse_dataset(text, "bad.txt")


def test_empty_program_rejected():
    with pytest.raises(DatasetError, match="empty program"):
        parse_dataset("Task: A\n\nTask: B\n[WALK] <kitchen>(1)\n")


def test_bundled_dataset():
    entries = ingest_dataset(data_path("corpus_dataset.txt"))
    assert len(entries) == 28
    assert sum(len(e.programs) for e in entries) == 31
    demo = entries[0].demonstration()
    assert demo.task_name == entries[0].task_name and demo.program == entries[0].programs[0]
