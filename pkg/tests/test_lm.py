import json

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from groundplan.errors import AllEmpty, BackendError, BackendUnavailable, EmptySample, MissingLogProbs
from groundplan.lm import (
    CorpusBackend,
    CorpusTask,
    RecordingBackend,
    RemoteCompletionBackend,
    SamplingParams,
    ScoredSample,
    ScriptedBackend,
    complete,
    ignored_params,
    is_zero_length,
    mean_log_prob,
    prompt_fingerprint,
    select_best,
    strip_non_english,
    truncate_at_stop,
)


def sample(text, *lps):
    words = text.split(" ") if text else []
    lps = lps or (-1.0,) * len(words)
    return ScoredSample(text, tuple(zip(words or [""] * len(lps), lps)))


def test_mean_log_prob():
    assert mean_log_prob([-0.7]) == pytest.approx(-0.7)
    assert mean_log_prob([-1.0, -2.0]) == pytest.approx(-1.5)
    assert mean_log_prob([0.0, 0.0]) == 0.0
    with pytest.raises(EmptySample):
        mean_log_prob([])
    assert ScoredSample("", ()).mean_log_prob is None


@given(st.lists(st.floats(-20, 0), min_size=1, max_size=30))
def test_mean_recomputed_from_tokens(values):
    s = ScoredSample("x", tuple((f"t{i}", v) for i, v in enumerate(values)))
    assert s.mean_log_prob == pytest.approx(sum(values) / len(values), abs=1e-9)


def test_select_best():
    samples = [sample("a", -2.0), sample("b", -0.5), sample("c", -1.1)]
    assert select_best(samples)[0] == 1
    assert select_best([sample("only", -3.0)])[0] == 0
    assert select_best([sample("x", -1.0), sample("y", -1.0)])[0] == 0


def test_select_best_skips_empty():
    samples = [ScoredSample("", ()), sample(" ... ", 0.0), sample("go", -4.0)]
    assert select_best(samples)[0] == 2
    with pytest.raises(AllEmpty):
        select_best([ScoredSample("", ()), sample("--", -0.1)])


@given(st.lists(st.floats(-5, 0), min_size=1, max_size=8), st.randoms())
def test_select_best_permutation_invariance(values, rnd):
    samples = [sample(f"s{i}", v) for i, v in enumerate(values)]
    best = select_best(samples)[1]
    shuffled = samples[:]
    rnd.shuffle(shuffled)
    top = max(values)
    first_max = next(s for s in shuffled if s.mean_log_prob == top)
    assert select_best(shuffled)[1] is first_max
    assert best.mean_log_prob == top


def test_zero_length_predicate():
    assert is_zero_length("")
    assert is_zero_length("  ... !! ")
    assert not is_zero_length(" -- walk to kitchen ..")
    assert strip_non_english("** walk to kitchen ##") == "walk to kitchen"


def test_truncate_at_stop():
    s = ScoredSample(" Walk to kitchen\nStep 2:", ((" Walk", -0.1), (" to", -0.2), (" kitchen", -0.3), ("\n", -0.01), ("Step", -0.5), (" 2:", -0.5)))
    cut = truncate_at_stop(s, ("\n",))
    assert cut.text == " Walk to kitchen"
    assert cut.tokens == ((" Walk", -0.1), (" to", -0.2), (" kitchen", -0.3))
    # a stop sequence inside a token trims that token
    s2 = ScoredSample("ab\ncd", (("ab\nc", -1.0), ("d", -2.0)))
    assert truncate_at_stop(s2, ("\n",)).tokens == (("ab", -1.0),)
    assert truncate_at_stop(s2, ("zz",)) is s2


def test_complete_scripted_verbatim():
    samples = [sample("walk to kitchen", -0.1, -0.2, -0.3), sample("grab milk", -0.5, -0.5)]
    backend = ScriptedBackend.fixed(samples)
    out = complete(backend, "any prompt", SamplingParams(n_samples=2))
    assert out == samples
    assert len(complete(backend, "p", SamplingParams(n_samples=10))) == 10


def test_complete_errors(monkeypatch):
    monkeypatch.setattr("time.sleep", lambda s: None)
    with pytest.raises(ValueError):
        complete(ScriptedBackend.fixed([sample("x", -1.0)]), "", SamplingParams())
    with pytest.raises(MissingLogProbs):
        complete(ScriptedBackend.fixed([ScoredSample("text", ())]), "p", SamplingParams())

    class Down:
        kind, supported_params, calls = "remote-completion", frozenset(), 0

        def sample(self, prompt, params):
            Down.calls += 1
            raise BackendUnavailable("503")

    with pytest.raises(BackendUnavailable):
        complete(Down(), "p", SamplingParams(), retries=2)
    assert Down.calls == 3

    class Short:
        kind, supported_params = "remote-completion", frozenset()

        def sample(self, prompt, params):
            return [sample("x", -1.0)]

    with pytest.raises(BackendError):
        complete(Short(), "p", SamplingParams(n_samples=3))


def test_complete_retries_then_succeeds(monkeypatch):
    delays = []
    monkeypatch.setattr("time.sleep", delays.append)

    class Flaky:
        kind, supported_params, calls = "remote-completion", frozenset(), 0

        def sample(self, prompt, params):
            Flaky.calls += 1
            if Flaky.calls < 4:
                raise BackendUnavailable("busy")
            return [sample("ok", -1.0)]

    assert complete(Flaky(), "p", SamplingParams(), backoff=1.0, max_backoff=3.0)[0].text == "ok"
    assert delays == [1.0, 2.0, 3.0]


def test_sampling_params_validation_and_grid():
    with pytest.raises(ValueError):
        SamplingParams(temperature=0)
    with pytest.raises(ValueError):
        SamplingParams(top_p=1.5)
    assert SamplingParams(temperature=0.3, n_samples=10, frequency_penalty=0.3,
                          presence_penalty=0.5, repetition_penalty=1.2).in_grid()
    assert not SamplingParams(temperature=0.7).in_grid()


def test_ignored_params():
    params = SamplingParams(repetition_penalty=1.2, presence_penalty=0.5)
    remote = RemoteCompletionBackend(url="http://lm.test", client=httpx.Client())
    assert ignored_params(remote, params) == ["repetition_penalty"]


def test_scripted_file_and_recording(tmp_path):
    inner = ScriptedBackend({prompt_fingerprint("hello"): [sample("walk to kitchen")]})
    rec = RecordingBackend(inner)
    rec.sample("hello", SamplingParams())
    path = tmp_path / "script.jsonl"
    rec.dump(path)
    replay = ScriptedBackend.from_file(path)
    assert replay.sample("hello", SamplingParams()) == [sample("walk to kitchen")]
    with pytest.raises(BackendError):
        replay.sample("other prompt", SamplingParams())
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"fingerprint": "x"}\n')
    with pytest.raises(BackendError):
        ScriptedBackend.from_file(bad)


def test_corpus_backend_continues_plan():
    backend = CorpusBackend([CorpusTask("Make tea", [["Boil the water"], ["Pour it", "Pour tea"]])])
    prompt = "Task: Other\nStep 1: Sleep\n\nTask: Make tea\nStep 1: Boil water\nStep 2:"
    out = backend.sample(prompt, SamplingParams(n_samples=2))
    assert out[0].text.startswith(" Pour it")
    assert out[1].text.startswith(" Pour tea")
    assert all(lp <= 0 for s in out for _, lp in s.tokens)
    assert out == backend.sample(prompt, SamplingParams(n_samples=2))
    done = backend.sample(prompt.replace("Step 2:", "Step 2: Pour tea\nStep 3:"), SamplingParams())
    assert is_zero_length(truncate_at_stop(done[0], ("\n",)).text)


def _completion_service(calls, status=200, logprobs=True):
    def handler(request):
        body = json.loads(request.content)
        calls.append(body)
        if status != 200:
            return httpx.Response(status, text="nope")
        choices = []
        for i in range(body["n"]):
            lp = {"tokens": [" Walk", " to", " kitchen"], "token_logprobs": [-0.1, -0.2, -0.3 * (i + 1)]}
            choices.append({"index": i, "text": " Walk to kitchen", "logprobs": lp if logprobs else None})
        return httpx.Response(200, json={"choices": choices[::-1]})

    return handler


def test_remote_completion_protocol():
    calls = []
    client = httpx.Client(transport=httpx.MockTransport(_completion_service(calls)))
    backend = RemoteCompletionBackend(url="http://lm.test/v1/completions", model="m", client=client)
    params = SamplingParams(n_samples=2, temperature=0.3, frequency_penalty=0.3, presence_penalty=0.5)
    out = complete(backend, "Task: x\nStep 1:", params)
    body = calls[0]
    assert body["prompt"] == "Task: x\nStep 1:"
    assert (body["n"], body["temperature"], body["top_p"], body["max_tokens"]) == (2, 0.3, 0.9, 30)
    assert body["logprobs"] == 1 and body["stop"] == ["\n"] and body["model"] == "m"
    assert (body["frequency_penalty"], body["presence_penalty"]) == (0.3, 0.5)
    assert [s.mean_log_prob for s in out] == pytest.approx([-0.2, -0.3])


@pytest.mark.parametrize("status, error", [(429, BackendUnavailable), (502, BackendUnavailable), (400, BackendError)])
def test_remote_completion_status(status, error):
    client = httpx.Client(transport=httpx.MockTransport(_completion_service([], status)))
    backend = RemoteCompletionBackend(url="http://lm.test", client=client)
    with pytest.raises(error):
        backend.sample("p", SamplingParams())


def test_remote_completion_requires_logprobs():
    client = httpx.Client(transport=httpx.MockTransport(_completion_service([], logprobs=False)))
    backend = RemoteCompletionBackend(url="http://lm.test", client=client)
    with pytest.raises(MissingLogProbs):
        backend.sample("p", SamplingParams())


def test_remote_completion_env(monkeypatch):
    monkeypatch.delenv("GROUNDPLAN_COMPLETION_URL", raising=False)
    with pytest.raises(BackendError):
        RemoteCompletionBackend()
    monkeypatch.setenv("GROUNDPLAN_COMPLETION_URL", "http://lm.test")
    monkeypatch.delenv("GROUNDPLAN_COMPLETION_KEY", raising=False)
    monkeypatch.setenv("OPENAI_API_KEY", "sk-test")
    backend = RemoteCompletionBackend()
    assert backend.client.headers["Authorization"] == "Bearer sk-test"
