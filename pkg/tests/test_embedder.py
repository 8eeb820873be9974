import json
import threading
import time

import httpx
import numpy as np
import pytest
from hypothesis import given, strategies as st

from mshtm.embedder import (
    EmbedderConfig,
    HashedEmbedder,
    RemoteEmbedder,
    embed,
    make_embedder,
)
from mshtm.errors import ConfigurationError, ProviderContractError, ProviderError

URL = "http://embed.test/v1/embeddings"


def remote(handler, **cfg):
    cfg.setdefault("backoff", 0.01)
    sleeps = []
    client = httpx.Client(transport=httpx.MockTransport(handler))
    emb = RemoteEmbedder(EmbedderConfig(provider="remote", endpoint=URL, **cfg), client=client, sleep=sleeps.append)
    return emb, sleeps


def vectors_for(inputs):
    return [[float(len(s)), float(sum(map(ord, s)) % 97), 1.0] for s in inputs]


def ok(request):
    body = json.loads(request.content)
    return httpx.Response(200, json={"embeddings": vectors_for(body["inputs"]), "model": "stub-v2"})


def test_fallback_identical_sentences_identical_rows():
    E = embed(["we left home", "we left home"])
    assert np.array_equal(E.values[0], E.values[1])
    assert E.provider_tag.startswith("hashed-fallback/v1/dim=256")


def test_fallback_distinct_tokens_distinct_rows():
    E = embed(["aaa", "zzz"], EmbedderConfig(dim=64))
    cos = float(E.values[0] @ E.values[1])
    assert cos < 1.0
    assert np.count_nonzero(E.values[0]) == 1 and np.count_nonzero(E.values[1]) == 1


def test_fallback_frozen_slots():
    # slot and sign of a feature are pinned by the keyed hash; freeze two of them
    h = HashedEmbedder(EmbedderConfig(dim=64))
    assert h._slot("aaa") == h._slot("aaa")
    E = h.embed(["aaa"]).values[0]
    idx = int(np.flatnonzero(E)[0])
    assert (idx, E[idx]) == h._slot("aaa")


def test_fallback_seed_changes_vectors():
    a = embed(["one two three"], EmbedderConfig(seed=1)).values
    b = embed(["one two three"], EmbedderConfig(seed=2)).values
    assert not np.array_equal(a, b)


def test_empty_sentence_zero_row_flagged():
    E = embed(["hello world", "", "..."])
    assert E.zero_rows == (1, 2)
    assert np.linalg.norm(E.values[0]) == pytest.approx(1.0, abs=1e-12)
    assert E.take([2, 0]).zero_rows == (0,)


@given(st.lists(st.text(alphabet="abc xyz", max_size=20), min_size=1, max_size=10), st.randoms())
def test_fallback_permutation_equivariant_and_normalized(sentences, rnd):
    E = embed(sentences, EmbedderConfig(dim=32)).values
    perm = list(range(len(sentences)))
    rnd.shuffle(perm)
    P = embed([sentences[i] for i in perm], EmbedderConfig(dim=32)).values
    assert np.array_equal(P, E[perm])
    norms = np.linalg.norm(E, axis=1)
    assert np.all((np.abs(norms - 1) <= 1e-9) | (norms == 0))


def test_embed_rejects_empty_input_and_bad_config():
    with pytest.raises(ConfigurationError):
        embed([])
    with pytest.raises(ConfigurationError):
        EmbedderConfig(provider="remote")
    with pytest.raises(ConfigurationError):
        EmbedderConfig(batch_size=0)
    with pytest.raises(ConfigurationError):
        EmbedderConfig(provider="sbert")


def test_remote_stub_output_in_order(monkeypatch):
    seen = []

    def handler(request):
        seen.append(request)
        return ok(request)

    monkeypatch.setenv("MSHTM_EMBEDDER_TOKEN", "s3cret")
    emb, _ = remote(handler, batch_size=8, model="stub")
    sents = ["a", "bb", "ccc"]
    E = emb.embed(sents)
    assert E.values.tolist() == vectors_for(sents)
    assert E.provider_tag == "remote/stub-v2"
    body = json.loads(seen[0].content)
    assert body == {"model": "stub", "inputs": sents}
    assert seen[0].headers["authorization"] == "Bearer s3cret"


def test_remote_batches_and_retries_transient():
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        if calls["n"] in (1, 2):
            return httpx.Response(503)
        return ok(request)

    emb, sleeps = remote(handler, batch_size=2, backoff=0.5)
    sents = ["s%d" % i for i in range(5)]
    E = emb.embed(sents)
    assert E.values.tolist() == vectors_for(sents)
    assert sleeps == [0.5, 1.0]
    assert calls["n"] == 5


def test_remote_gives_up_with_last_status():
    emb, sleeps = remote(lambda r: httpx.Response(429), max_retries=2)
    with pytest.raises(ProviderError) as err:
        emb.embed(["x"])
    assert err.value.last_status == 429
    assert len(sleeps) == 2


def test_remote_transport_error_retried_then_fails():
    def handler(request):
        raise httpx.ConnectError("refused", request=request)

    emb, sleeps = remote(handler, max_retries=1)
    with pytest.raises(ProviderError) as err:
        emb.embed(["x"])
    assert err.value.last_status is None and len(sleeps) == 1


def test_remote_non_transient_status_fails_fast():
    emb, sleeps = remote(lambda r: httpx.Response(401))
    with pytest.raises(ProviderError) as err:
        emb.embed(["x"])
    assert err.value.last_status == 401 and sleeps == []


def test_remote_dimension_mismatch_across_batches():
    def handler(request):
        inputs = json.loads(request.content)["inputs"]
        dim = 3 if inputs[0] == "a" else 4
        return httpx.Response(200, json={"embeddings": [[1.0] * dim for _ in inputs]})

    emb, _ = remote(handler, batch_size=1)
    with pytest.raises(ProviderContractError):
        emb.embed(["a", "b"])


@pytest.mark.parametrize(
    "payload",
    [{"embeddings": [[1.0, 2.0]]}, {"vectors": []}, {"embeddings": [[1.0, float("nan")], [1.0, 2.0]]}],
)
def test_remote_contract_violations(payload):
    def handler(request):
        return httpx.Response(200, content=json.dumps(payload).encode())

    emb, _ = remote(handler)
    with pytest.raises(ProviderContractError):
        emb.embed(["a", "b"])


def test_remote_concurrent_batches_keep_order():
    lock = threading.Lock()
    in_flight = {"now": 0, "max": 0}

    def handler(request):
        inputs = json.loads(request.content)["inputs"]
        with lock:
            in_flight["now"] += 1
            in_flight["max"] = max(in_flight["max"], in_flight["now"])
        # early batches answer last
        time.sleep(0.05 if inputs[0] in ("s0", "s1") else 0.0)
        with lock:
            in_flight["now"] -= 1
        return ok(request)

    emb, _ = remote(handler, batch_size=2, max_concurrency=4)
    sents = ["s%d" % i for i in range(8)]
    assert emb.embed(sents).values.tolist() == vectors_for(sents)
    assert in_flight["max"] > 1


def test_disk_cache_skips_second_call(tmp_path):
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        return ok(request)

    emb, _ = remote(handler, cache_dir=str(tmp_path))
    first = emb.embed(["x", "y"]).values
    second = emb.embed(["x", "y"]).values
    assert calls["n"] == 1 and np.array_equal(first, second)
    assert len(list(tmp_path.glob("*.npy"))) == 1


def test_make_embedder_dispatch():
    assert isinstance(make_embedder(EmbedderConfig()), HashedEmbedder)
    assert isinstance(make_embedder(EmbedderConfig(provider="remote", endpoint=URL)), RemoteEmbedder)
