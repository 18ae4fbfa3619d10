import json
import random
import threading
import time

import httpx
import pytest

from valuescape.errors import AuthError, ConfigError, TransportError
from valuescape.gateway import (
    OK,
    REFUSED_EMPTY,
    TRANSPORT_ERROR,
    CompletionRequest,
    MockProvider,
    OpenAIChatProvider,
    ReplayProvider,
    RunLog,
    TokenBucket,
    content_hash,
    run_batch,
    run_logged,
)


def req(rid, user="q"):
    return CompletionRequest("sys", user, request_id=rid)


def test_request_defaults_and_guards():
    r = req("a")
    assert (r.temperature, r.max_tokens) == (0.0, 2048)
    with pytest.raises(ValueError):
        CompletionRequest("s", "u", temperature=-0.1)
    assert r.prompt_hash == req("b").prompt_hash != req("a", "other").prompt_hash


def test_content_hash_is_canonical():
    assert content_hash({"a": 1, "b": [1, 2]}) == content_hash({"b": [1, 2], "a": 1})
    assert len(content_hash("x")) == 16


def test_mock_scripted_echo():
    res = MockProvider({"id1": "Answer: 3"}).complete(req("id1"))
    assert (res.raw_text, res.status, res.attempts) == ("Answer: 3", OK, 1)


def test_mock_empty_reply_is_provider_refusal():
    assert MockProvider({}, default="").complete(req("x")).status == REFUSED_EMPTY


def test_mock_missing_script_entry():
    with pytest.raises(ConfigError):
        MockProvider({}).complete(req("nope"))


def test_retry_cap_reports_attempts():
    slept = []
    p = MockProvider({"id1": "x"}, faults={"id1": None}, max_retries=3, backoff=0.5, sleep=slept.append)
    with pytest.raises(TransportError) as info:
        p.complete(req("id1"))
    assert info.value.attempts == 4
    assert p.calls["id1"] == 4
    assert slept == [0.5, 1.0, 2.0]


def test_transient_faults_then_success():
    p = MockProvider({"id1": "Answer: 2"}, faults={"id1": 2})
    res = p.complete(req("id1"))
    assert res.ok and res.attempts == 3


def test_run_batch_order_and_bound():
    active = []
    peak = []
    lock = threading.Lock()
    rnd = random.Random(0)
    delays = {f"r{i}": rnd.uniform(0.0, 0.02) for i in range(5)}

    def script(r):
        with lock:
            active.append(r.request_id)
            peak.append(len(active))
        time.sleep(delays[r.request_id])
        with lock:
            active.remove(r.request_id)
        return f"Answer: {r.request_id[1:]}"

    results = run_batch(MockProvider(script), [req(f"r{i}") for i in range(5)], max_in_flight=2)
    assert [r.request_id for r in results] == [f"r{i}" for i in range(5)]
    assert [r.raw_text for r in results] == [f"Answer: {i}" for i in range(5)]
    assert max(peak) <= 2


def test_run_batch_partial_failure():
    p = MockProvider({}, default="Answer: 1", faults={"r2": None})
    results = run_batch(p, [req(f"r{i}") for i in range(5)], 3)
    statuses = [r.status for r in results]
    assert statuses.count(OK) == 4 and statuses[2] == TRANSPORT_ERROR
    assert results[2].attempts == 4 and results[2].error


def test_run_batch_edges():
    assert run_batch(MockProvider({}), [], 2) == []
    with pytest.raises(ValueError):
        run_batch(MockProvider({}, default="x"), [req("a"), req("a")])
    with pytest.raises(ConfigError):
        run_batch(MockProvider({}), [req("a")], 0)


def fake_client(handler):
    return httpx.Client(transport=httpx.MockTransport(handler))


def chat_reply(text):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": text}}]})


def test_openai_provider_payload(monkeypatch):
    monkeypatch.setenv("VS_TEST_KEY", "sekret")
    seen = {}

    def handler(request):
        seen["url"] = str(request.url)
        seen["auth"] = request.headers["authorization"]
        seen["body"] = json.loads(request.content)
        return chat_reply("Answer: 4")

    p = OpenAIChatProvider("http://llm.local/v1/", "VS_TEST_KEY", client=fake_client(handler))
    res = p.complete(CompletionRequest("sys", "user", model_name="m1", request_id="a"))
    assert res.raw_text == "Answer: 4"
    assert seen["url"] == "http://llm.local/v1/chat/completions"
    assert seen["auth"] == "Bearer sekret"
    assert seen["body"] == {"model": "m1", "temperature": 0.0, "max_tokens": 2048,
                            "messages": [{"role": "system", "content": "sys"}, {"role": "user", "content": "user"}]}


def test_openai_missing_credential(monkeypatch):
    monkeypatch.delenv("VS_TEST_KEY", raising=False)
    p = OpenAIChatProvider("http://llm.local", "VS_TEST_KEY", client=fake_client(lambda r: chat_reply("x")))
    with pytest.raises(AuthError):
        p.complete(req("a"))


@pytest.mark.parametrize("code,error", [(401, AuthError), (403, AuthError), (400, ConfigError)])
def test_openai_fatal_statuses(monkeypatch, code, error):
    monkeypatch.setenv("VS_TEST_KEY", "k")
    p = OpenAIChatProvider("http://llm.local", "VS_TEST_KEY", client=fake_client(lambda r: httpx.Response(code)),
                           sleep=lambda s: None)
    with pytest.raises(error):
        p.complete(req("a"))


def test_openai_retries_429_and_5xx(monkeypatch):
    monkeypatch.setenv("VS_TEST_KEY", "k")
    codes = iter([429, 500, 503])

    def handler(request):
        code = next(codes, 200)
        return chat_reply("Answer: 1") if code == 200 else httpx.Response(code)

    p = OpenAIChatProvider("http://llm.local", "VS_TEST_KEY", client=fake_client(handler), sleep=lambda s: None)
    res = p.complete(req("a"))
    assert res.ok and res.attempts == 4


def test_openai_unreachable(monkeypatch):
    monkeypatch.setenv("VS_TEST_KEY", "k")

    def handler(request):
        raise httpx.ConnectError("refused", request=request)

    p = OpenAIChatProvider("http://llm.local", "VS_TEST_KEY", client=fake_client(handler), sleep=lambda s: None)
    with pytest.raises(TransportError) as info:
        p.complete(req("a"))
    assert info.value.attempts == 4


def test_token_bucket_waits():
    now = [0.0]
    waits = []

    def sleep(s):
        waits.append(s)
        now[0] += s

    bucket = TokenBucket(60, burst=1, clock=lambda: now[0], sleep=sleep)
    for _ in range(3):
        bucket.acquire()
    assert waits == pytest.approx([1.0, 1.0])


def test_run_log_reuse_and_hash_guard(tmp_path):
    path = tmp_path / "log.jsonl"
    p = MockProvider({}, default="Answer: 2", faults={"b": None})
    first = run_logged(p, [req("a"), req("b")], RunLog(path, "h1"))
    assert [r.status for r in first] == [OK, TRANSPORT_ERROR]
    calls_a = p.calls["a"]
    p.faults.clear()
    second = run_logged(p, [req("a"), req("b")], RunLog(path, "h1"))
    assert [r.status for r in second] == [OK, OK]
    assert p.calls["a"] == calls_a
    with pytest.raises(ConfigError):
        RunLog(path, "h2").load()


def test_replay_provider(tmp_path):
    path = tmp_path / "log.jsonl"
    run_logged(MockProvider({"a": "Answer: 9"}), [req("a")], RunLog(path, "h"))
    replay = ReplayProvider(RunLog(path, "h").load())
    assert replay.complete(req("a")).raw_text == "Answer: 9"
    (missing,) = run_batch(replay, [req("zz")])
    assert missing.status == TRANSPORT_ERROR and missing.attempts == 0
