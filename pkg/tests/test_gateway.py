import json

import httpx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from feedmask.errors import (
    EmptyTextError,
    GatewayError,
    NoScriptError,
    SchemaViolationError,
    TransportError,
)
from feedmask.gateway import (
    CORRECTION_PROMPT,
    Gateway,
    HashEmbedder,
    HttpBackend,
    HttpEmbedder,
    Message,
    RateLimiter,
    ScriptedStub,
    SchemaRegistry,
    StaticEmbedder,
    chat,
    cosine,
    extract_json,
    render,
)
from feedmask.gateway.messages import ChatRequest


def make_gateway(stub=None, embedder=None):
    return Gateway(stub or ScriptedStub(), embedder or HashEmbedder())


class TestMessages:
    def test_roles_validated(self):
        with pytest.raises(ValueError):
            Message("tool", "hi")

    def test_request_must_not_be_empty(self):
        with pytest.raises(ValueError):
            ChatRequest(messages=[])

    def test_first_message_role(self):
        with pytest.raises(ValueError):
            ChatRequest(messages=[Message("assistant", "hi")])

    def test_structured_requires_zero_temperature(self):
        with pytest.raises(ValueError):
            ChatRequest(
                messages=[Message("user", "hi")], schema_ref="topic_list", temperature=0.7
            )

    def test_digest_is_stable_and_content_sensitive(self):
        a = chat("k", ("user", "hello"))
        b = chat("k", ("user", "hello"))
        c = chat("k", ("user", "hello!"))
        assert a.digest() == b.digest()
        assert a.digest() != c.digest()

    def test_attempt_number_counts_correction_turns(self):
        req = chat("k", ("user", "give me json"))
        assert req.attempt_number() == 1
        again = req.extended(Message("assistant", "nope"), Message("user", CORRECTION_PROMPT))
        assert again.attempt_number() == 2


class TestScriptedStub:
    def test_default_entry(self):
        stub = ScriptedStub()
        stub.register("greet", text="hello there")
        assert stub.complete(chat("greet", ("user", "hi"))) == "hello there"

    def test_contains_routing_in_registration_order(self):
        stub = ScriptedStub()
        stub.register("verdict", json_body={"filter": True}, contains="violence")
        stub.register("verdict", json_body={"filter": False})
        blocked = stub.complete(chat("verdict", ("user", "article about violence")))
        passed = stub.complete(chat("verdict", ("user", "article about cooking")))
        assert json.loads(blocked) == {"filter": True}
        assert json.loads(passed) == {"filter": False}

    def test_contains_list_requires_every_marker(self):
        stub = ScriptedStub()
        stub.register("k", text="both", contains=["alpha", "beta"])
        stub.register("k", text="fallback")
        assert stub.complete(chat("k", ("user", "alpha then beta"))) == "both"
        assert stub.complete(chat("k", ("user", "alpha alone"))) == "fallback"

    def test_digest_routing(self):
        req = chat("k", ("user", "exact transcript"))
        stub = ScriptedStub()
        stub.register("k", text="pinned", digest=req.digest())
        stub.register("k", text="fallback")
        assert stub.complete(req) == "pinned"
        assert stub.complete(chat("k", ("user", "other"))) == "fallback"

    def test_attempt_routing(self):
        stub = ScriptedStub()
        stub.register("k", text="first", attempt=1)
        stub.register("k", text="second", attempt=2)
        req = chat("k", ("user", "go"))
        assert stub.complete(req) == "first"
        retry = req.extended(Message("assistant", "first"), Message("user", CORRECTION_PROMPT))
        assert stub.complete(retry) == "second"

    def test_missing_key_raises(self):
        stub = ScriptedStub()
        with pytest.raises(NoScriptError):
            stub.complete(chat("nope", ("user", "hi")))

    def test_no_matching_entry_raises(self):
        stub = ScriptedStub()
        stub.register("k", text="x", contains="needle")
        with pytest.raises(NoScriptError):
            stub.complete(chat("k", ("user", "haystack only")))

    def test_request_without_key_raises(self):
        stub = ScriptedStub()
        stub.register("k", text="x")
        with pytest.raises(NoScriptError):
            stub.complete(ChatRequest(messages=[Message("user", "hi")]))

    def test_register_requires_exactly_one_payload(self):
        stub = ScriptedStub()
        with pytest.raises(ValueError):
            stub.register("k")
        with pytest.raises(ValueError):
            stub.register("k", text="a", json_body={})

    def test_from_dir(self, tmp_path):
        doc = {
            "key": "greet",
            "entries": [
                {"contains": "formal", "text": "good day"},
                {"json": {"topics": ["a"]}},
            ],
        }
        (tmp_path / "greet.json").write_text(json.dumps(doc))
        stub = ScriptedStub.from_dir(tmp_path)
        assert stub.complete(chat("greet", ("user", "formal please"))) == "good day"
        assert json.loads(stub.complete(chat("greet", ("user", "hi")))) == {"topics": ["a"]}

    def test_from_dir_missing(self, tmp_path):
        with pytest.raises(NoScriptError):
            ScriptedStub.from_dir(tmp_path / "absent")


class TestComplete:
    def test_plain_completion(self):
        stub = ScriptedStub()
        stub.register("echo", text="the reply")
        resp = make_gateway(stub).complete(chat("echo", ("user", "hi")))
        assert resp.text == "the reply"
        assert resp.attempts == 1
        assert resp.parsed is None
        assert resp.backend_id == "stub"

    def test_determinism_byte_identical(self):
        stub = ScriptedStub()
        stub.register("echo", text="same bytes é")
        gw = make_gateway(stub)
        req = chat("echo", ("system", "s"), ("user", "u"))
        first = gw.complete(req).text
        for _ in range(5):
            assert gw.complete(req).text == first


class TestCompleteStructured:
    def test_valid_first_try(self):
        stub = ScriptedStub()
        stub.register("t", json_body={"topics": ["cats", "dogs"]})
        resp = make_gateway(stub).complete_structured(
            chat("t", ("user", "topics?"), schema_ref="topic_list")
        )
        assert resp.parsed == {"topics": ["cats", "dogs"]}
        assert resp.attempts == 1

    def test_json_embedded_in_prose(self):
        stub = ScriptedStub()
        stub.register("t", text='Sure! Here you go:\n```json\n{"topics": ["x"]}\n```')
        resp = make_gateway(stub).complete_structured(
            chat("t", ("user", "topics?"), schema_ref="topic_list")
        )
        assert resp.parsed == {"topics": ["x"]}

    def test_retry_after_malformed(self):
        stub = ScriptedStub()
        stub.register("t", text="not json at all", attempt=1)
        stub.register("t", json_body={"topics": []}, attempt=2)
        resp = make_gateway(stub).complete_structured(
            chat("t", ("user", "topics?"), schema_ref="topic_list")
        )
        assert resp.attempts == 2
        assert resp.parsed == {"topics": []}

    def test_correction_turn_carries_bad_output(self):
        seen = []

        class SpyBackend:
            backend_id = "spy"

            def complete(self, request):
                seen.append(request)
                if len(seen) == 1:
                    return "garbage"
                return '{"topics": []}'

        gw = Gateway(SpyBackend(), HashEmbedder())
        gw.complete_structured(chat("t", ("user", "topics?"), schema_ref="topic_list"))
        retry = seen[1]
        assert retry.messages[-2].role == "assistant"
        assert retry.messages[-2].text == "garbage"
        assert retry.messages[-1].text == CORRECTION_PROMPT

    def test_three_failures_raise_with_raw_outputs(self):
        stub = ScriptedStub()
        stub.register("t", text="bad one", attempt=1)
        stub.register("t", json_body={"wrong": 1}, attempt=2)
        stub.register("t", text="{broken", attempt=3)
        with pytest.raises(SchemaViolationError) as exc_info:
            make_gateway(stub).complete_structured(
                chat("t", ("user", "topics?"), schema_ref="topic_list")
            )
        err = exc_info.value
        assert err.schema_ref == "topic_list"
        assert len(err.raw_outputs) == 3
        assert err.raw_outputs[0] == "bad one"

    def test_schema_type_enforced(self):
        stub = ScriptedStub()
        stub.register("t", json_body={"topics": "not a list"})
        with pytest.raises(SchemaViolationError):
            make_gateway(stub).complete_structured(
                chat("t", ("user", "topics?"), schema_ref="topic_list")
            )

    def test_unknown_schema_rejected_without_backend_call(self):
        class Exploding:
            backend_id = "boom"

            def complete(self, request):
                raise AssertionError("must not be called")

        gw = Gateway(Exploding(), HashEmbedder())
        with pytest.raises(GatewayError):
            gw.complete_structured(chat("t", ("user", "x"), schema_ref="no_such_schema"))

    def test_missing_schema_ref_rejected(self):
        with pytest.raises(ValueError):
            make_gateway().complete_structured(chat("t", ("user", "x")))


class TestExtractJson:
    def test_plain(self):
        assert extract_json('{"a": 1}') == {"a": 1}

    def test_wrapped(self):
        assert extract_json('noise {"a": 1} trailing') == {"a": 1}

    def test_no_object(self):
        with pytest.raises(ValueError):
            extract_json("no braces here")


def respond_with(handler):
    return httpx.MockTransport(handler)


class TestHttpBackend:
    def make(self, handler, **kwargs):
        kwargs.setdefault("sleep", lambda s: None)
        return HttpBackend(
            "http://model.test/v1", "test-model", transport=respond_with(handler), **kwargs
        )

    def test_success(self):
        def handler(request):
            body = json.loads(request.content)
            assert body["model"] == "test-model"
            assert body["messages"][0] == {"role": "user", "content": "hi"}
            return httpx.Response(
                200, json={"choices": [{"message": {"content": "pong"}}]}
            )

        backend = self.make(handler)
        assert backend.complete(chat("k", ("user", "hi"))) == "pong"
        assert backend.backend_id == "http:test-model"

    def test_retries_then_succeeds(self):
        calls = []

        def handler(request):
            calls.append(1)
            if len(calls) < 3:
                return httpx.Response(500, text="boom")
            return httpx.Response(200, json={"choices": [{"message": {"content": "ok"}}]})

        assert self.make(handler).complete(chat("k", ("user", "hi"))) == "ok"
        assert len(calls) == 3

    def test_gives_up_after_three_attempts(self):
        calls = []

        def handler(request):
            calls.append(1)
            return httpx.Response(503, text="down")

        with pytest.raises(TransportError):
            self.make(handler).complete(chat("k", ("user", "hi")))
        assert len(calls) == 3

    def test_client_error_not_retried(self):
        calls = []

        def handler(request):
            calls.append(1)
            return httpx.Response(401, text="bad token")

        with pytest.raises(TransportError):
            self.make(handler).complete(chat("k", ("user", "hi")))
        assert len(calls) == 1

    def test_garbled_body_retried(self):
        calls = []

        def handler(request):
            calls.append(1)
            if len(calls) < 2:
                return httpx.Response(200, json={"unexpected": True})
            return httpx.Response(200, json={"choices": [{"message": {"content": "ok"}}]})

        assert self.make(handler).complete(chat("k", ("user", "hi"))) == "ok"

    def test_token_header(self):
        def handler(request):
            assert request.headers["authorization"] == "Bearer sesame"
            return httpx.Response(200, json={"choices": [{"message": {"content": "ok"}}]})

        self.make(handler, token="sesame").complete(chat("k", ("user", "hi")))


class TestHttpEmbedder:
    def test_normalizes(self):
        def handler(request):
            return httpx.Response(200, json={"data": [{"embedding": [3.0, 4.0]}]})

        emb = HttpEmbedder(
            "http://model.test/v1", "emb", transport=respond_with(handler), sleep=lambda s: None
        )
        vec = emb.embed("hello")
        assert np.allclose(np.linalg.norm(vec), 1.0)
        assert np.allclose(vec, [0.6, 0.8])

    def test_transport_error(self):
        def handler(request):
            return httpx.Response(500)

        emb = HttpEmbedder(
            "http://model.test/v1", "emb", transport=respond_with(handler), sleep=lambda s: None
        )
        with pytest.raises(TransportError):
            emb.embed("hello")


class TestRateLimiter:
    def test_spaces_requests(self):
        sleeps = []
        clock = {"now": 0.0}

        def monotonic():
            return clock["now"]

        def sleep(s):
            sleeps.append(s)
            clock["now"] += s

        limiter = RateLimiter(interval=1.0, sleep=sleep, monotonic=monotonic)
        limiter.wait()
        limiter.wait()
        limiter.wait()
        assert sleeps == [1.0, 1.0]

    def test_zero_interval_never_sleeps(self):
        limiter = RateLimiter(interval=0.0, sleep=lambda s: pytest.fail("slept"))
        limiter.wait()
        limiter.wait()


class TestEmbedding:
    def test_unit_norm_and_deterministic(self):
        emb = HashEmbedder()
        a = emb.embed("Science Fiction")
        b = emb.embed("  science   FICTION ")
        assert np.allclose(a, b)
        assert np.allclose(np.linalg.norm(a), 1.0)

    def test_distinct_texts_differ(self):
        emb = HashEmbedder()
        assert not np.allclose(emb.embed("cats"), emb.embed("dogs"))

    def test_seed_changes_vectors(self):
        assert not np.allclose(HashEmbedder(seed=0).embed("x"), HashEmbedder(seed=1).embed("x"))

    def test_blank_rejected(self):
        with pytest.raises(EmptyTextError):
            HashEmbedder().embed("   ")

    def test_static_pinning(self):
        emb = StaticEmbedder(dim=4)
        emb.pin("alpha", [1, 0, 0, 0])
        emb.pin("beta", [1, 1, 0, 0])
        sim = cosine(emb.embed("Alpha"), emb.embed("beta"))
        assert sim == pytest.approx(np.sqrt(0.5))
        assert emb.embed("unpinned").shape == (4,)

    @settings(max_examples=50, deadline=None)
    @given(st.text(min_size=1).filter(lambda t: t.strip()))
    def test_embedding_always_unit_norm(self, text):
        vec = HashEmbedder().embed(text)
        assert vec.shape == (DEFAULT_DIM := 64,) or vec.shape == (64,)
        assert np.linalg.norm(vec) == pytest.approx(1.0)

    def test_gateway_embed_passthrough(self):
        gw = make_gateway()
        assert gw.embed("hello").shape == (64,)


class TestTemplates:
    def test_render_substitutes(self):
        text = render("perceive", bands="Very liked: cats", title="Cat news", interaction="clicked")
        assert "Cat news" in text
        assert "clicked" in text
        assert "${" not in text

    def test_unknown_template(self):
        with pytest.raises(FileNotFoundError):
            render("no_such_template")

    def test_all_templates_load(self):
        names = [
            "perceive",
            "summarize",
            "merge",
            "filter_item_topics",
            "filter_rule_topics",
            "filter_verdict",
            "reply",
            "detect_need",
            "propose_action",
            "predict_choice",
            "opening_profile",
            "opening_records",
            "opening_records_empty",
        ]
        from feedmask.gateway.templates import _load

        for name in names:
            assert _load(name).template.strip()
