import sys

import pytest

from groundplan.cli import data_path
from groundplan.dsl import read_vocabulary
from groundplan.embedding import HashingProvider
from groundplan.environment import fixture_scene_names, load_fixture_scene
from groundplan.evaluation.dataset import ingest_dataset
from groundplan.lm import CorpusBackend
from groundplan.translator import build_bank

RELAX_ON_SOFA = """\
[WALK] <living_room>(1)
[WALK] <television>(1)
[FIND] <television>(1)
[SWITCHON] <television>(1)
[FIND] <sofa>(1)
[SIT] <sofa>(1)
[TURNTO] <television>(1)
[WATCH] <television>(1)
"""


@pytest.fixture(scope="session")
def provider():
    return HashingProvider()


@pytest.fixture(scope="session")
def vocabulary():
    return read_vocabulary(data_path("vocabulary.txt"))


@pytest.fixture(scope="session")
def bank(provider, vocabulary):
    return build_bank(provider, vocabulary)


@pytest.fixture(scope="session")
def scenes():
    return [load_fixture_scene(n) for n in fixture_scene_names()]


@pytest.fixture(scope="session")
def kitchen():
    return load_fixture_scene("kitchen_basic")


@pytest.fixture(scope="session")
def corpus_backend():
    return CorpusBackend.from_file(data_path("mock_corpus.jsonl"))


@pytest.fixture(scope="session")
def corpus_split(corpus_backend):
    """(held-out tasks, demonstrations) for the shipped paraphrase corpus."""
    entries = ingest_dataset(data_path("corpus_dataset.txt"))
    held = [e for e in entries if e.task_name.lower() in corpus_backend.tasks]
    demos = [e.demonstration() for e in entries if e.task_name.lower() not in corpus_backend.tasks]
    return held, demos


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        terminalreporter.write_line(f"[{status}] criterion {n}: {detail}")
