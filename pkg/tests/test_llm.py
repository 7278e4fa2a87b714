import json

import httpx
import pytest

from llana.llm import (
    ChatRequest,
    HttpBackend,
    LlmConfigurationError,
    LlmProtocolError,
    LlmTransportError,
    MockBackend,
    ResponseCache,
    TokenBucket,
    cache_key,
    complete,
    complete_many,
)


def echo(messages, sample_index, mock_seed):
    return f"{messages[-1][1]}|{sample_index}|{mock_seed}"


def test_request_validation():
    with pytest.raises(ValueError):
        ChatRequest(())
    with pytest.raises(ValueError):
        ChatRequest((("user", "hi"), ("assistant", "yo")))
    with pytest.raises(ValueError):
        ChatRequest.from_prompt("hi", temperature=-1)


def test_cache_key_sensitivity():
    base = ChatRequest((("system", "s"), ("user", "u")))
    assert cache_key(base) == cache_key(ChatRequest((("system", "s"), ("user", "u"))))
    assert cache_key(base) != cache_key(ChatRequest((("system", "s"), ("user", "u")), temperature=0.5))
    swapped = ChatRequest((("user", "s"), ("system", "u"), ("user", "x")))
    reordered = ChatRequest((("system", "u"), ("user", "s"), ("user", "x")))
    assert cache_key(swapped) != cache_key(reordered)
    assert len(cache_key(base)) == 64


def test_mock_determinism_and_shape():
    req = ChatRequest.from_prompt("p", n_samples=5)
    a = complete(MockBackend(echo, mock_seed=3), req)
    b = complete(MockBackend(echo, mock_seed=3), req)
    assert a.completions == b.completions
    assert len(a.completions) == 5
    assert a.completions[4] == "p|4|3"


def test_mock_cache_hit(tmp_path):
    backend = MockBackend(echo, cache_dir=tmp_path)
    req = ChatRequest.from_prompt("q")
    first, second = backend.complete(req), backend.complete(req)
    assert not first.cached and second.cached
    assert first.completions == second.completions
    assert backend.calls == 1


def test_cache_entry_layout(tmp_path):
    cache = ResponseCache(tmp_path)
    req = ChatRequest.from_prompt("z")
    cache.put(req, ["a"])
    doc = json.loads(cache.path(cache_key(req)).read_text())
    assert set(doc) == {"request", "completions", "timestamp"}
    assert [p.name for p in tmp_path.iterdir()] == [f"{cache_key(req)}.json"]


def test_half_written_cache_entry_is_ignored(tmp_path):
    cache = ResponseCache(tmp_path)
    req = ChatRequest.from_prompt("z")
    cache.path(cache_key(req)).write_text('{"completions": ["a"')
    assert cache.get(req) is None


def test_complete_many_preserves_order():
    backend = MockBackend(echo, jobs=4)
    reqs = [ChatRequest.from_prompt(str(i)) for i in range(20)]
    out = complete_many(backend, reqs)
    assert [r.completions[0].split("|")[0] for r in out] == [str(i) for i in range(20)]


def _ok(contents, usage=(3, 4)):
    return httpx.Response(
        200,
        json={
            "choices": [{"message": {"role": "assistant", "content": c}} for c in contents],
            "usage": {"prompt_tokens": usage[0], "completion_tokens": usage[1]},
        },
    )


def _backend(handler, monkeypatch, **kw):
    monkeypatch.setenv("TEST_KEY", "secret")
    sleeps = []
    b = HttpBackend(
        "http://llm.invalid/v1",
        api_key_env="TEST_KEY",
        cache_dir=kw.pop("cache_dir", None),
        rate_limit=1e9,
        transport=httpx.MockTransport(handler),
        sleep=sleeps.append,
        jitter_seed=0,
        **kw,
    )
    return b, sleeps


def test_http_request_body_and_parse(monkeypatch):
    seen = []

    def handler(request):
        seen.append((str(request.url), request.headers["authorization"], json.loads(request.content)))
        return _ok(["## 1 ##", "## 2 ##"])

    b, _ = _backend(handler, monkeypatch)
    resp = b.complete(ChatRequest.from_prompt("hello", n_samples=2, temperature=0.7, max_tokens=9))
    assert resp.completions == ("## 1 ##", "## 2 ##")
    assert resp.usage == (3, 4)
    url, auth, body = seen[0]
    assert url == "http://llm.invalid/v1/chat/completions"
    assert auth == "Bearer secret"
    assert body == {
        "model": "gpt-3.5-turbo",
        "messages": [{"role": "user", "content": "hello"}],
        "temperature": 0.7,
        "n": 2,
        "max_tokens": 9,
    }


def test_http_retries_with_backoff(monkeypatch):
    codes = iter([429, 503, 200])

    def handler(request):
        code = next(codes)
        return _ok(["done"]) if code == 200 else httpx.Response(code)

    b, sleeps = _backend(handler, monkeypatch)
    assert b.complete(ChatRequest.from_prompt("x")).completions == ("done",)
    assert len(sleeps) == 2
    assert 0.8 <= sleeps[0] <= 1.2 and 1.6 <= sleeps[1] <= 2.4


def test_http_transport_errors_exhaust_retries(monkeypatch):
    calls = []

    def handler(request):
        calls.append(1)
        raise httpx.ConnectError("refused", request=request)

    b, sleeps = _backend(handler, monkeypatch, max_retries=3)
    with pytest.raises(LlmTransportError):
        b.complete(ChatRequest.from_prompt("x"))
    assert len(calls) == 4 and len(sleeps) == 3


def test_http_client_error_is_not_retried(monkeypatch):
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(400, text="bad")

    b, _ = _backend(handler, monkeypatch)
    with pytest.raises(LlmTransportError):
        b.complete(ChatRequest.from_prompt("x"))
    assert len(calls) == 1


def test_http_malformed_json(monkeypatch):
    b, _ = _backend(lambda r: httpx.Response(200, json={"nope": []}), monkeypatch)
    with pytest.raises(LlmProtocolError):
        b.complete(ChatRequest.from_prompt("x"))
    b, _ = _backend(lambda r: httpx.Response(200, text="not json"), monkeypatch)
    with pytest.raises(LlmProtocolError):
        b.complete(ChatRequest.from_prompt("x"))


def test_http_pads_short_replies(monkeypatch):
    asked = []

    def handler(request):
        n = json.loads(request.content)["n"]
        asked.append(n)
        return _ok([f"r{len(asked)}"] * min(n, 2))

    b, _ = _backend(handler, monkeypatch)
    resp = b.complete(ChatRequest.from_prompt("x", n_samples=5))
    assert asked == [5, 3, 1]
    assert len(resp.completions) == 5


def test_http_cache_short_circuits_network(monkeypatch, tmp_path):
    calls = []

    def handler(request):
        calls.append(1)
        return _ok(["c"])

    b, _ = _backend(handler, monkeypatch, cache_dir=tmp_path)
    req = ChatRequest.from_prompt("x")
    for _ in range(4):
        b.complete(req)
    assert len(calls) == 1


def test_http_configuration_errors(monkeypatch):
    monkeypatch.delenv("LLANA_BASE_URL", raising=False)
    with pytest.raises(LlmConfigurationError):
        HttpBackend(cache_dir=None)
    monkeypatch.delenv("MISSING_KEY", raising=False)
    b = HttpBackend("http://llm.invalid", api_key_env="MISSING_KEY", cache_dir=None,
                    transport=httpx.MockTransport(lambda r: _ok(["x"])))
    with pytest.raises(LlmConfigurationError):
        b.complete(ChatRequest.from_prompt("x"))


def test_token_bucket_waits_when_empty():
    now = [0.0]
    slept = []

    def sleep(dt):
        slept.append(dt)
        now[0] += dt

    bucket = TokenBucket(60.0, clock=lambda: now[0], sleep=sleep)
    bucket.acquire()
    bucket.acquire()
    assert slept == [pytest.approx(1.0)]
