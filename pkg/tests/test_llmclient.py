import json

import httpx
import pytest

from personasim import llmclient as lc
from personasim.stubllm import serve

REQ = lc.ChatRequest("m", (("system", "be brief"), ("user", "hello")))


def reply(text):
    return {"choices": [{"message": {"role": "assistant", "content": text}}]}


class TestFingerprint:
    def test_ignores_key_order(self):
        body = REQ.body()
        shuffled = json.loads(json.dumps(dict(reversed(list(body.items())))))
        assert list(shuffled) != list(body)
        assert lc.fingerprint(shuffled) == lc.fingerprint(body)

    def test_changes_with_text(self):
        other = lc.ChatRequest("m", (("system", "be brief"), ("user", "hello!")))
        assert lc.fingerprint(other.body()) != lc.fingerprint(REQ.body())

    def test_changes_with_parameters(self):
        warmer = lc.ChatRequest("m", REQ.messages, temperature=0.5)
        assert lc.fingerprint(warmer.body()) != lc.fingerprint(REQ.body())


@pytest.mark.parametrize("messages", [(), (("user", "x"),), (("system", "x"), ("assistant", "y"))])
def test_request_validation(messages):
    with pytest.raises(ValueError):
        lc.ChatRequest("m", messages)


def test_record_then_replay(tmp_path):
    path = tmp_path / "c.jsonl"
    with serve(reply=lambda body: reply("recorded " + body["messages"][-1]["content"])) as server:
        session = lc.ChatSession(server.base_url, "m", lc.Cassette(path, "record"))
        assert session.chat(REQ) == "recorded hello"
        assert len(server.requests) == 1 and session.network_calls == 1
    replay = lc.ChatSession("http://127.0.0.1:9", "m", lc.Cassette(path, "replay"))
    assert replay.chat(REQ) == "recorded hello"
    assert replay.network_calls == 0 and replay._client is None
    line = json.loads(path.read_text())
    assert line["fingerprint"] == lc.fingerprint(REQ.body())


def test_replay_miss_names_fingerprint(tmp_path):
    session = lc.ChatSession("", "m", lc.Cassette(tmp_path / "none.jsonl", "replay"))
    with pytest.raises(lc.CassetteMiss) as err:
        session.chat(REQ)
    fp = lc.fingerprint(REQ.body())
    assert err.value.fingerprint == fp and fp in str(err.value)
    assert session.network_calls == 0


def test_retries_transient_failures():
    with serve(fail_first=2, reply=lambda body: reply("ok")) as server:
        session = lc.ChatSession(server.base_url, "m", lc.Cassette(mode="live"), retries=2, backoff=0.0)
        assert session.chat(REQ) == "ok"
        assert session.network_calls == 3 and len(server.requests) == 3


def test_gives_up_after_retries():
    with serve(fail_first=10) as server:
        session = lc.ChatSession(server.base_url, "m", lc.Cassette(mode="live"), retries=1, backoff=0.0)
        with pytest.raises(lc.TransportError, match="HTTP 503"):
            session.chat(REQ)
        assert len(server.requests) == 2


def test_unreachable_endpoint():
    session = lc.ChatSession("http://127.0.0.1:9", "m", lc.Cassette(mode="live"), retries=0, timeout=2.0)
    with pytest.raises(lc.TransportError):
        session.chat(REQ)


def test_api_key_header_and_body(monkeypatch):
    seen = []

    def handler(request):
        seen.append(request)
        return httpx.Response(200, json=reply("hi"))

    monkeypatch.setenv(lc.API_KEY_ENV, "sekrit")
    session = lc.ChatSession("http://llm.test/v1/", "m", transport=httpx.MockTransport(handler))
    assert session.chat(REQ) == "hi"
    assert seen[0].headers["authorization"] == "Bearer sekrit"
    assert str(seen[0].url) == "http://llm.test/v1/chat/completions"
    assert json.loads(seen[0].content) == REQ.body()


def test_malformed_response():
    session = lc.ChatSession("http://llm.test", "m",
                             transport=httpx.MockTransport(lambda r: httpx.Response(200, json={"choices": []})))
    with pytest.raises(lc.LLMError, match="malformed"):
        session.chat(REQ)


def test_live_without_endpoint():
    with pytest.raises(lc.LLMError, match="endpoint"):
        lc.ChatSession("", "m", lc.Cassette(mode="live")).chat(REQ)


def test_stub_persona_answer_is_valid_json():
    from personasim.stubllm import completion

    prompt = "stats\n- category_entropy: 1.2 (percentile 80.0, high)\n- review_length_cv: 0.3 (percentile 20.0, low)"
    text = lc.response_text(completion({"messages": [{"role": "user", "content": prompt}]}))
    scores = json.loads(text)
    assert set(scores) == set("OCEAN") and all(0 <= v <= 1 for v in scores.values())
