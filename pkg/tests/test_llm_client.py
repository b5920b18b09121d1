"""@package context_gathering_unittest
Unittest for the LLM client, token ledger and scripted backend
"""

#==========================================================================
# Copyright (c) 2026 Randal Eike
#
# Permission is hereby granted, free of charge, to any person obtaining a
# copy of self software and associated documentation files (the "Software"),
# to deal in the Software without restriction, including without limitation
# the rights to use, copy, modify, merge, publish, distribute, sublicense,
# and/or sell copies of the Software, and to permit persons to whom the
# Software is furnished to do so, subject to the following conditions:
#
# The above copyright notice and self permission notice shall be included
# in all copies or substantial portions of the Software.
#
# THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND,
# EXPRESS OR IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF
# MERCHANTABILITY, FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT.
# IN NO EVENT SHALL THE AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY
# CLAIM, DAMAGES OR OTHER LIABILITY, WHETHER IN AN ACTION OF CONTRACT,
# TORT OR OTHERWISE, ARISING FROM, OUT OF OR IN CONNECTION WITH THE
# SOFTWARE OR THE USE OR OTHER DEALINGS IN THE SOFTWARE.
#==========================================================================

import json
import threading
from types import SimpleNamespace
from unittest.mock import MagicMock

import httpx
import openai
import pytest

from context_gathering_grocsoftware.llm_client import BackendSettings, ChatMessage, ChatRequest
from context_gathering_grocsoftware.llm_client import ChatResponse, ChatRole, CostBucket
from context_gathering_grocsoftware.llm_client import FIXTURE_DEFAULT_KEY, LlmClient
from context_gathering_grocsoftware.llm_client import OpenAiChatBackend, OpenAiEmbedder
from context_gathering_grocsoftware.llm_client import ScriptedBackend, TokenLedger
from context_gathering_grocsoftware.llm_client import approx_count_tokens, diff_buckets
from context_gathering_grocsoftware.llm_client import load_fixture_file, make_embedder
from context_gathering_grocsoftware.llm_client import retry_transient, select_fixtures
from context_gathering_grocsoftware.retriever import HashingEmbedder
from context_gathering_grocsoftware.harness_errors import ConfigurationError
from context_gathering_grocsoftware.harness_errors import CorpusFormatError
from context_gathering_grocsoftware.harness_errors import FixtureExhaustedError
from context_gathering_grocsoftware.harness_errors import InvalidArgumentError
from context_gathering_grocsoftware.harness_errors import InvalidStateError
from context_gathering_grocsoftware.harness_errors import LlmTransportError

_REQUEST = httpx.Request("POST", "https://llm.example.invalid/v1/chat/completions")

def _rate_limit()->openai.RateLimitError:
    return openai.RateLimitError("rate limited", response=httpx.Response(429, request=_REQUEST),
                                 body=None)

def _bad_request()->openai.BadRequestError:
    return openai.BadRequestError("bad request", response=httpx.Response(400, request=_REQUEST),
                                  body=None)

def _completion(content:str, usage:tuple = (12, 3)):
    return SimpleNamespace(choices=[SimpleNamespace(message=SimpleNamespace(content=content))],
                           usage=SimpleNamespace(prompt_tokens=usage[0],
                                                 completion_tokens=usage[1]))

def _request(bucket:CostBucket = CostBucket.AGENT, text:str = "hello")->ChatRequest:
    return ChatRequest(messages=(ChatMessage(ChatRole.USER, text),), cost_bucket=bucket)

class TestClass01Requests:
    """!
    @brief Request and response value types
    """
    def test001_request_validation(self):
        """!
        @brief Empty messages and bad limits are rejected
        """
        with pytest.raises(InvalidArgumentError):
            ChatRequest(messages=(), cost_bucket=CostBucket.AGENT).validate()
        with pytest.raises(InvalidArgumentError):
            ChatRequest(messages=(ChatMessage(ChatRole.USER, "x"),), cost_bucket=CostBucket.AGENT,
                        max_output_tokens=0).validate()
        with pytest.raises(InvalidArgumentError):
            ChatRequest(messages=(ChatMessage(ChatRole.USER, "x"),), cost_bucket=CostBucket.AGENT,
                        temperature=-0.5).validate()

    def test002_wire_body(self):
        """!
        @brief Wire body carries model, roles, temperature and token cap
        """
        request = ChatRequest(messages=(ChatMessage(ChatRole.SYSTEM, "be brief"),
                                        ChatMessage(ChatRole.USER, "hi")),
                              cost_bucket=CostBucket.JUDGE, model_id="m1", max_output_tokens=7)
        assert request.to_wire() == {"model": "m1",
                                     "messages": [{"role": "system", "content": "be brief"},
                                                  {"role": "user", "content": "hi"}],
                                     "temperature": 0.0, "max_tokens": 7}
        assert request.prompt_text() == "be brief\nhi"

    def test003_approx_tokens(self):
        """!
        @brief ceil(utf-8 bytes / 4)
        """
        assert approx_count_tokens("") == 0
        assert approx_count_tokens("abcd") == 1
        assert approx_count_tokens("abcde") == 2
        assert approx_count_tokens("é") == 1

class TestClass02Ledger:
    """!
    @brief Token accounting
    """
    def test001_record_by_bucket(self):
        """!
        @brief Each response lands in exactly one bucket
        """
        ledger = TokenLedger()
        ledger.record(CostBucket.AGENT, ChatResponse("a", 10, 2))
        ledger.record(CostBucket.EXTRACTOR, ChatResponse("b", 5, 1, retries=2))
        ledger.record(CostBucket.AGENT, ChatResponse("c", 1, 1))
        assert ledger.tokens_by_bucket() == {"agent": 14, "extractor": 6, "gate": 0, "judge": 0,
                                             "final_answer": 0}
        assert ledger.total_tokens() == 20
        assert ledger.total_retries() == 2
        assert ledger.calls(CostBucket.AGENT) == 2
        assert ledger.bucket(CostBucket.EXTRACTOR).prompt_tokens == 5

    def test002_negative_counts(self):
        """!
        @brief Negative usage is invalid
        """
        with pytest.raises(InvalidArgumentError):
            TokenLedger().record(CostBucket.AGENT, ChatResponse("a", -1, 0))

    def test003_threaded_updates(self):
        """!
        @brief Concurrent records lose nothing
        """
        ledger = TokenLedger()

        def _worker():
            for _ in range(500):
                ledger.record(CostBucket.GATE, ChatResponse("x", 1, 1))

        threads = [threading.Thread(target=_worker) for _ in range(8)]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()
        assert ledger.calls(CostBucket.GATE) == 4000
        assert ledger.total_tokens() == 8000

    def test004_diff_buckets(self):
        """!
        @brief Only changed buckets appear in a diff
        """
        before = {"agent": 10, "gate": 0}
        after = {"agent": 25, "gate": 0}
        assert diff_buckets(after, before) == {"agent": 15}

class TestClass03Retry:
    """!
    @brief Transient failure handling
    """
    def test001_retry_then_success(self):
        """!
        @brief A 429 followed by success returns after one backoff
        """
        sleep = MagicMock()
        operation = MagicMock(side_effect=[_rate_limit(), "done"])
        assert retry_transient(operation, 3, 0.5, sleep) == ("done", 1)
        sleep.assert_called_once_with(0.5)

    def test002_exponential_backoff(self):
        """!
        @brief Waits double after each failure and the last failure raises
        """
        sleep = MagicMock()
        operation = MagicMock(side_effect=openai.APIConnectionError(request=_REQUEST))
        with pytest.raises(LlmTransportError) as error_info:
            retry_transient(operation, 3, 0.25, sleep)
        assert error_info.value.attempts == 3
        assert [c.args[0] for c in sleep.call_args_list] == [0.25, 0.5]
        assert operation.call_count == 3

    def test003_non_transient_fails_at_once(self):
        """!
        @brief A 400 is not retried
        """
        sleep = MagicMock()
        operation = MagicMock(side_effect=_bad_request())
        with pytest.raises(LlmTransportError):
            retry_transient(operation, 3, 0.5, sleep)
        sleep.assert_not_called()
        assert operation.call_count == 1

    def test004_attempts_validated(self):
        """!
        @brief At least one attempt is required
        """
        with pytest.raises(ConfigurationError):
            retry_transient(lambda: None, 0, 0.5)

    def test005_transport_error_round(self):
        """!
        @brief Attaching a round changes the message
        """
        error = LlmTransportError("boom", attempts=2)
        assert str(error) == "boom"
        assert str(error.with_round(4)) == "round 4: boom"
        assert error.round_index == 4

class TestClass04OpenAiBackend:
    """!
    @brief OpenAI compatible backend against a fake client
    """
    def test001_complete_with_retry(self):
        """!
        @brief Usage comes from the response and the retry count is reported
        """
        client = MagicMock()
        client.chat.completions.create.side_effect = [_rate_limit(), _completion("Paris")]
        sleep = MagicMock()
        backend = OpenAiChatBackend(client=client, sleep=sleep)
        llm = LlmClient(backend, model_id="test-model")
        response = llm.ask("Where?", CostBucket.FINAL_ANSWER)
        assert response.content == "Paris"
        assert response.total_tokens() == 15
        assert response.retries == 1
        assert llm.ledger.tokens_by_bucket()["final_answer"] == 15
        assert llm.ledger.total_retries() == 1
        kwargs = client.chat.completions.create.call_args.kwargs
        assert kwargs["model"] == "test-model"
        assert kwargs["messages"] == [{"role": "user", "content": "Where?"}]

    def test002_missing_usage(self):
        """!
        @brief Without usage the counts are approximated
        """
        client = MagicMock()
        client.chat.completions.create.return_value = SimpleNamespace(
            choices=[SimpleNamespace(message=SimpleNamespace(content="abcdefgh"))], usage=None)
        response = OpenAiChatBackend(client=client).complete(_request(text="abcd"))
        assert response.prompt_tokens == 1
        assert response.completion_tokens == 2

    def test003_missing_api_key(self, monkeypatch):
        """!
        @brief An empty key variable is a configuration error
        """
        monkeypatch.delenv("CONTEXT_GATHERING_TEST_KEY", raising=False)
        with pytest.raises(ConfigurationError):
            OpenAiChatBackend(api_key_env="CONTEXT_GATHERING_TEST_KEY")

    def test004_client_from_environment(self, monkeypatch):
        """!
        @brief Key and base URL come from the environment and the SDK retries are off
        """
        monkeypatch.setenv("CONTEXT_GATHERING_TEST_KEY", "sk-unit")
        monkeypatch.setenv("OPENAI_BASE_URL", "http://localhost:8000/v1")
        backend = OpenAiChatBackend(api_key_env="CONTEXT_GATHERING_TEST_KEY")
        assert isinstance(backend.client, openai.OpenAI)
        assert backend.client.max_retries == 0
        assert str(backend.client.base_url).startswith("http://localhost:8000/v1")
        embedder = OpenAiEmbedder("emb-small", api_key_env="CONTEXT_GATHERING_TEST_KEY",
                                  base_url="http://embed.local/v1")
        assert str(embedder.client.base_url).startswith("http://embed.local/v1")

    def test005_embedder_batches(self):
        """!
        @brief Embeddings are requested in batches and reassembled by index
        """
        client = MagicMock()

        def _create(model, input):  # pylint: disable=redefined-builtin
            del model
            data = [SimpleNamespace(index=i, embedding=[float(len(t)), 1.0])
                    for i, t in enumerate(input)]
            return SimpleNamespace(data=list(reversed(data)))

        client.embeddings.create.side_effect = _create
        embedder = OpenAiEmbedder("emb-small", client=client, batch_size=2)
        matrix = embedder.embed(["a", "bb", "ccc"])
        assert matrix.shape == (3, 2)
        assert list(matrix[:, 0]) == [1.0, 2.0, 3.0]
        assert client.embeddings.create.call_count == 2
        assert embedder.name == "openai:emb-small"

class TestClass05ScriptedBackend:
    """!
    @brief Fixture replay
    """
    def test001_replies_in_order(self):
        """!
        @brief Each bucket is an independent stream
        """
        backend = ScriptedBackend({"agent": ["first", "second"], "gate": ["PRODUCTIVE"]})
        llm = LlmClient(backend)
        assert llm.ask("p", CostBucket.AGENT).content == "first"
        assert llm.ask("p", CostBucket.GATE).content == "PRODUCTIVE"
        assert llm.ask("p", CostBucket.AGENT).content == "second"
        assert backend.remaining() == {"agent": 0, "gate": 0}

    def test002_approximate_usage(self):
        """!
        @brief Scripted usage is approximated from prompt and reply text
        """
        response = ScriptedBackend({"agent": ["abcdefgh"]}).complete(_request(text="abcd"))
        assert response.prompt_tokens == 1
        assert response.completion_tokens == 2
        assert response.from_cache

    def test003_exhausted(self):
        """!
        @brief Running past the script is an error naming the bucket
        """
        backend = ScriptedBackend({"agent": ["only"]})
        backend.complete(_request())
        with pytest.raises(FixtureExhaustedError) as error_info:
            backend.complete(_request())
        assert error_info.value.bucket == "agent"
        assert error_info.value.sequence == 2
        with pytest.raises(FixtureExhaustedError):
            backend.complete(_request(CostBucket.JUDGE))

    def test004_strict_expectations(self):
        """!
        @brief Strict mode checks expect substrings
        """
        fixtures = {"agent": [{"reply": "ok", "expect": "Jane Greer"},
                              {"reply": "ok", "expect": "Tourneur"}]}
        strict = ScriptedBackend(fixtures, strict=True)
        assert strict.complete(_request(text="about Jane Greer")).content == "ok"
        with pytest.raises(InvalidStateError):
            strict.complete(_request(text="about Mitchum"))
        relaxed = ScriptedBackend(fixtures)
        relaxed.complete(_request(text="x"))
        assert relaxed.complete(_request(text="y")).content == "ok"

    def test005_unknown_bucket(self):
        """!
        @brief Fixture keys must be bucket names
        """
        with pytest.raises(ConfigurationError):
            ScriptedBackend({"planner": ["x"]})

class TestClass06Fixtures:
    """!
    @brief Fixture files, selection and embedder descriptors
    """
    def test001_plain_bucket_file(self, tmp_path):
        """!
        @brief A bare bucket map becomes the default entry
        """
        fixture = tmp_path / "replies.json"
        fixture.write_text(json.dumps({"agent": ["a"]}), encoding="utf-8")
        assert load_fixture_file(str(fixture)) == {FIXTURE_DEFAULT_KEY: {"agent": ["a"]}}

    def test002_bad_fixture_file(self, tmp_path):
        """!
        @brief Non JSON and non object files are format errors
        """
        fixture = tmp_path / "replies.json"
        fixture.write_text("[1, 2]", encoding="utf-8")
        with pytest.raises(CorpusFormatError):
            load_fixture_file(str(fixture))
        fixture.write_text("{", encoding="utf-8")
        with pytest.raises(CorpusFormatError):
            load_fixture_file(str(fixture))

    def test003_selection_precedence(self):
        """!
        @brief variant:task beats variant beats task beats default
        """
        sets = {"v1:t1": {"agent": ["1"]}, "v1": {"agent": ["2"]}, "t2": {"agent": ["3"]},
                "default": {"agent": ["4"]}}
        assert select_fixtures(sets, "v1", "t1") == {"agent": ["1"]}
        assert select_fixtures(sets, "v1", "t2") == {"agent": ["2"]}
        assert select_fixtures(sets, "v2", "t2") == {"agent": ["3"]}
        assert select_fixtures(sets, "v2", "t9") == {"agent": ["4"]}
        with pytest.raises(ConfigurationError):
            select_fixtures({"v1": {}}, "v2", "t1")

    def test004_backend_settings(self):
        """!
        @brief Settings are scripted only when fixtures are present
        """
        assert not BackendSettings().scripted()
        assert BackendSettings(fixture_sets={"default": {}}).scripted()

    def test005_make_embedder(self):
        """!
        @brief Descriptor parsing
        """
        assert make_embedder(None) is None
        assert make_embedder("none") is None
        embedder = make_embedder("hashing:64:3")
        assert isinstance(embedder, HashingEmbedder)
        assert embedder.dimension == 64
        assert embedder.name == "hashing:64:3"
        assert make_embedder("hashing").name == "hashing:256"
        with pytest.raises(ConfigurationError):
            make_embedder("hashing:wide")
        with pytest.raises(ConfigurationError):
            make_embedder("word2vec:big")
