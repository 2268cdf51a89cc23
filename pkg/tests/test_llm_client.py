"""Unit tests for ChatClient."""
import json
import logging
from unittest.mock import MagicMock

import pytest
import requests

from bcr.config import SecretRedactingFilter
from bcr.errors import TransportError
from bcr.llm_client import ChatClient, ChatRequest, HttpReply, MockTransport, RequestsTransport

API_KEY = "sk-test-0123456789abcdef"
REQUEST = ChatRequest.from_messages("gpt-test", [
    {"role": "system", "content": "pick one"},
    {"role": "user", "content": "['$$ grasp milk $$']"},
])


def make_client(script, **kwargs):
    transport = MockTransport(list(script))
    sleeps = []
    client = ChatClient("http://llm.local/v1/chat/completions", API_KEY, transport,
                        sleep=sleeps.append, **kwargs)
    return client, transport, sleeps


class TestChatRequest:
    def test_body_field_order_and_bytes(self):
        body = REQUEST.to_body()
        assert body == (b'{"model":"gpt-test","messages":[{"role":"system","content":"pick one"},'
                        b'{"role":"user","content":"[\'$$ grasp milk $$\']"}],"temperature":0.0}')
        assert list(json.loads(body)) == ["model", "messages", "temperature"]

    def test_equal_requests_are_byte_identical(self):
        twin = ChatRequest.from_messages("gpt-test", [{"role": r, "content": c} for r, c in REQUEST.messages])
        assert twin.to_body() == REQUEST.to_body()

    def test_max_tokens_only_when_set(self):
        body = json.loads(ChatRequest(REQUEST.model, REQUEST.messages, 0.2, 64).to_body())
        assert list(body) == ["model", "messages", "temperature", "max_tokens"]

    @pytest.mark.parametrize("messages, temperature", [
        ((), 0.0),
        ((("robot", "hi"),), 0.0),
        ((("user", "hi"),), -0.1),
    ])
    def test_validation(self, messages, temperature):
        with pytest.raises(ValueError):
            ChatRequest("m", messages, temperature)


class TestChatClient:
    def test_retries_rate_limit_then_succeeds(self):
        client, transport, sleeps = make_client([
            (429, "slow down"), (429, "slow down"), MockTransport.completion("$$ grasp milk $$"),
        ])
        response = client.chat(REQUEST)
        assert response.text == "$$ grasp milk $$"
        assert response.retries == 2
        assert len(transport.calls) == 3
        assert sleeps == [client.backoff_delay(0), client.backoff_delay(1)]
        # every retry resends the same bytes
        assert len({c["body"] for c in transport.calls}) == 1

    def test_auth_failure_is_not_retried(self):
        client, transport, _ = make_client([(401, "bad key")])
        with pytest.raises(TransportError) as err:
            client.chat(REQUEST)
        assert err.value.kind == "auth" and err.value.status == 401
        assert len(transport.calls) == 1

    def test_missing_key_fails_before_sending(self):
        transport = MockTransport([])
        client = ChatClient("http://llm.local", "", transport)
        with pytest.raises(TransportError) as err:
            client.chat(REQUEST)
        assert err.value.kind == "auth"
        assert transport.calls == []

    def test_non_retryable_status(self):
        client, transport, _ = make_client([(400, "bad request")])
        with pytest.raises(TransportError) as err:
            client.chat(REQUEST)
        assert err.value.kind == "http" and err.value.status == 400
        assert len(transport.calls) == 1

    def test_retries_exhausted_raises_last_error(self):
        client, transport, sleeps = make_client([(503, "down")] * 3, max_retries=2)
        with pytest.raises(TransportError) as err:
            client.chat(REQUEST)
        assert err.value.status == 503
        assert len(transport.calls) == 3 and len(sleeps) == 2

    @pytest.mark.parametrize("exc, kind", [
        (requests.Timeout("read timed out"), "timeout"),
        (requests.ConnectionError("reset by peer"), "network"),
    ])
    def test_transport_exceptions_are_retried(self, exc, kind):
        client, transport, _ = make_client([exc, MockTransport.completion("ok")])
        assert client.chat(REQUEST).retries == 1
        client, _, _ = make_client([exc], max_retries=0)
        with pytest.raises(TransportError) as err:
            client.chat(REQUEST)
        assert err.value.kind == kind

    @pytest.mark.parametrize("payload", ["not json", {"choices": []}, {"choices": [{"message": {"content": 3}}]}])
    def test_malformed_response(self, payload):
        client, _, _ = make_client([(200, payload)])
        with pytest.raises(TransportError) as err:
            client.chat(REQUEST)
        assert err.value.kind == "malformed_response"

    def test_backoff_is_seeded_and_capped(self):
        a = ChatClient("u", API_KEY, MockTransport([]), seed=7)
        b = ChatClient("u", API_KEY, MockTransport([]), seed=7)
        assert [a.backoff_delay(i) for i in range(6)] == [b.backoff_delay(i) for i in range(6)]
        assert 0.5 <= a.backoff_delay(0) <= 0.625
        assert a.backoff_delay(10) <= 8.0 * 1.25

    def test_headers_carry_bearer_token(self):
        client, transport, _ = make_client([MockTransport.completion("ok")])
        client.chat(REQUEST)
        assert transport.calls[0]["headers"]["Authorization"] == f"Bearer {API_KEY}"


def test_requests_transport_posts_raw_body():
    session = MagicMock()
    session.post.return_value = MagicMock(status_code=200, text="{}")
    reply = RequestsTransport(session).post("http://llm.local", {"A": "b"}, b"{}", 5.0)
    assert reply == HttpReply(200, "{}")
    session.post.assert_called_once_with("http://llm.local", data=b"{}", headers={"A": "b"}, timeout=5.0)


def test_api_key_never_reaches_log_output(caplog):
    client, _, _ = make_client([(500, f"echo {API_KEY}"), (401, "no")])
    redactor = SecretRedactingFilter(API_KEY)
    caplog.handler.addFilter(redactor)
    try:
        with caplog.at_level(logging.DEBUG):
            with pytest.raises(TransportError):
                client.chat(REQUEST)
    finally:
        caplog.handler.removeFilter(redactor)
    assert caplog.records
    assert API_KEY not in caplog.text
