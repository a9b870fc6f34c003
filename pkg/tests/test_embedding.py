import json
import math

import httpx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from groundplan.embedding import (
    CachedProvider,
    HashingProvider,
    RemoteEmbeddingProvider,
    build_index,
    cosine_similarity,
    query_top_k,
    read_cache,
    write_cache,
)
from groundplan.errors import (
    DimensionMismatch,
    DuplicateKey,
    EmptyIndex,
    ProviderError,
    ZeroVector,
)
from groundplan.translator import enumerate_action_bank


def test_cosine_examples():
    assert cosine_similarity((0.6, 0.8), (0.6, 0.8)) == pytest.approx(1.0)
    assert cosine_similarity((1, 0), (0, 1)) == 0.0
    assert cosine_similarity((1, 2, 2), (2, 1, 2)) == pytest.approx(8 / 9)


def test_cosine_errors():
    with pytest.raises(DimensionMismatch):
        cosine_similarity((1, 0), (1, 0, 0))
    with pytest.raises(ZeroVector):
        cosine_similarity((0, 0), (1, 0))


vectors = arrays(np.float64, 6, elements=st.floats(-10, 10, allow_nan=False, allow_subnormal=False))


@given(vectors, vectors, st.floats(0.01, 100))
def test_cosine_symmetric_and_scale_invariant(u, v, alpha):
    if np.linalg.norm(u) < 1e-3 or np.linalg.norm(v) < 1e-3:
        return
    c = cosine_similarity(u, v)
    assert -1.0 <= c <= 1.0
    assert c == pytest.approx(cosine_similarity(v, u), abs=1e-12)
    assert c == pytest.approx(cosine_similarity(alpha * u, v), abs=1e-9)


def test_build_index_normalizes(provider):
    index = build_index(provider, ["walk to kitchen", "grab milk", "open fridge"])
    assert len(index) == 3
    assert np.allclose(np.linalg.norm(index.vectors, axis=1), 1.0, atol=1e-6)
    with pytest.raises(ValueError):
        index.vectors[0, 0] = 2.0


def test_build_index_errors(provider):
    with pytest.raises(DuplicateKey):
        build_index(provider, ["a b", "a b"])
    with pytest.raises(EmptyIndex):
        build_index(provider, [])
    with pytest.raises(ZeroVector):
        build_index(provider, [""])


def test_stopword_only_text_is_not_zero(provider):
    assert np.linalg.norm(provider.embed(["the"])[0]) > 0
    assert not np.any(provider.embed([" "])[0])


def test_build_index_names_failing_key():
    class Flaky:
        kind, dim = "deterministic-mock", 4

        def embed(self, texts):
            if "bad" in texts:
                raise RuntimeError("boom")
            return np.ones((len(texts), 4))

    with pytest.raises(ProviderError) as info:
        build_index(Flaky(), ["ok", "bad", "fine"])
    assert info.value.key == "bad"


def test_desk_scale_index_matches_bank(bank, vocabulary):
    assert len(bank.index) == len(enumerate_action_bank(vocabulary=vocabulary))


def test_query_top_k_exact_probe(provider):
    keys = ["walk to kitchen", "grab milk", "open fridge", "sit on sofa"]
    index = build_index(provider, keys)
    top = query_top_k(index, provider.embed(["grab milk"])[0], 1)
    assert top[0][0] == "grab milk"
    assert top[0][1] == pytest.approx(1.0)
    assert sorted(k for k, _ in query_top_k(index, index.raw[0], 4)) == sorted(keys)


def test_query_top_k_matches_brute_force():
    from groundplan.embedding import index_from_vectors

    rng = np.random.default_rng(7)
    raw = rng.normal(size=(10, 5))
    keys = [f"item{i}" for i in range(10)]
    index = index_from_vectors(keys, raw)
    probe = rng.normal(size=5)
    brute = sorted(keys, key=lambda k: (-cosine_similarity(raw[keys.index(k)], probe), k))[:3]
    assert [k for k, _ in query_top_k(index, probe, 3)] == brute


def test_query_top_k_ties_by_key():
    from groundplan.embedding import index_from_vectors

    index = index_from_vectors(["b", "a", "c"], np.array([[1.0, 0], [2.0, 0], [0, 1.0]]))
    assert [k for k, _ in query_top_k(index, np.array([1.0, 0]), 3)] == ["a", "b", "c"]


def test_hashing_provider_deterministic_and_lexical():
    p = HashingProvider()
    a, b = p.embed(["walk to the kitchen"]), HashingProvider().embed(["walk to the kitchen"])
    assert np.array_equal(a, b)
    sims = [cosine_similarity(a[0], p.embed([t])[0]) for t in ("walk to kitchen", "grab milk")]
    assert sims[0] > sims[1]
    # Word order matters through bigram features.
    pin, rev = p.embed(["put apple in fridge", "put fridge in apple"])
    assert cosine_similarity(pin, rev) < 0.95


def test_cache_round_trip(tmp_path):
    keys = ["walk to kitchen", "ünïcode key"]
    vecs = np.array([[1.0, 2.0, 3.0], [-0.5, 0.25, 0.0]])
    path = tmp_path / "v.emb"
    write_cache(path, keys, vecs)
    data = path.read_bytes()
    assert data[:4] == b"EMB1"
    assert int.from_bytes(data[4:8], "little") == 3
    assert int.from_bytes(data[8:12], "little") == 2
    got_keys, got = read_cache(path)
    assert got_keys == keys
    assert np.allclose(got, vecs)
    cached = CachedProvider.from_file(path)
    assert np.allclose(cached.embed(["ünïcode key"]), vecs[1:])
    with pytest.raises(ProviderError):
        cached.embed(["missing"])


def test_cache_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.emb"
    path.write_bytes(b"NOPE" + bytes(8))
    with pytest.raises(ValueError):
        read_cache(path)


def _embedding_service(calls, shape="data"):
    def handler(request):
        body = json.loads(request.content)
        calls.append(body)
        vecs = [[float(len(t)), 1.0, float(i)] for i, t in enumerate(body["input"])]
        if shape == "data":
            rows = [{"embedding": v, "index": i} for i, v in enumerate(vecs)]
            return httpx.Response(200, json={"data": rows[::-1]})
        return httpx.Response(200, json={"embeddings": vecs})

    return handler


@pytest.mark.parametrize("shape", ["data", "embeddings"])
def test_remote_provider_protocol(shape):
    calls = []
    client = httpx.Client(transport=httpx.MockTransport(_embedding_service(calls, shape)))
    p = RemoteEmbeddingProvider(url="http://emb.test/v1/embeddings", model="m", client=client,
                                batch_size=2)
    out = p.embed(["ab", "abc", "ab", "abcd"])
    assert out.shape == (4, 3)
    assert out[0, 0] == 2.0 and out[3, 0] == 4.0
    assert np.array_equal(out[0], out[2])
    assert [c["input"] for c in calls] == [["ab", "abc"], ["abcd"]]
    assert calls[0]["model"] == "m"
    p.embed(["abc"])  # memoized
    assert len(calls) == 2


def test_remote_provider_retries_then_fails(monkeypatch):
    monkeypatch.setattr("time.sleep", lambda s: None)
    attempts = []

    def handler(request):
        attempts.append(1)
        return httpx.Response(503)

    client = httpx.Client(transport=httpx.MockTransport(handler))
    p = RemoteEmbeddingProvider(url="http://emb.test", client=client, retries=2)
    with pytest.raises(ProviderError) as info:
        p.embed(["x"])
    assert info.value.key == "x"
    assert len(attempts) == 3


def test_remote_provider_needs_endpoint(monkeypatch):
    monkeypatch.delenv("GROUNDPLAN_EMBEDDING_URL", raising=False)
    with pytest.raises(ProviderError):
        RemoteEmbeddingProvider()


def test_similarities_are_cosines(provider):
    index = build_index(provider, ["open fridge", "close fridge"])
    probe = provider.embed(["open the fridge door"])[0]
    sims = index.similarities(probe)[0]
    for key, s in zip(index.keys, sims):
        assert s == pytest.approx(cosine_similarity(probe, provider.embed([key])[0]))
    assert not math.isnan(sims.sum())
