"""@package context_gathering
@brief The single boundary to language models and embedding services

Chat completions go through an OpenAI compatible endpoint or through a
scripted replay backend.  Every response is recorded in a per episode
TokenLedger under a cost bucket.
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
import logging
import math
import os
import threading
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import openai

from context_gathering_grocsoftware.harness_errors import ConfigurationError
from context_gathering_grocsoftware.harness_errors import CorpusFormatError
from context_gathering_grocsoftware.harness_errors import FixtureExhaustedError
from context_gathering_grocsoftware.harness_errors import InvalidArgumentError
from context_gathering_grocsoftware.harness_errors import InvalidStateError
from context_gathering_grocsoftware.harness_errors import LlmTransportError
from context_gathering_grocsoftware.harness_logging import TRACE
from context_gathering_grocsoftware.retriever import Embedder
from context_gathering_grocsoftware.retriever import HashingEmbedder

logger = logging.getLogger(__name__)

DEFAULT_API_KEY_ENV = "OPENAI_API_KEY"
DEFAULT_MODEL_ID = "gpt-4o-mini"
DEFAULT_MAX_OUTPUT_TOKENS = 512

## Exceptions worth another attempt; everything else fails at once
TRANSIENT_ERRORS = (openai.RateLimitError, openai.APIConnectionError,
                    openai.InternalServerError)

class CostBucket(Enum):
    """!
    Accounting bucket of an LLM call
    """
    AGENT = "agent"
    EXTRACTOR = "extractor"
    GATE = "gate"
    JUDGE = "judge"
    FINAL_ANSWER = "final_answer"

class ChatRole(Enum):
    """!
    Chat message role
    """
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"

@dataclass(frozen=True)
class ChatMessage:
    """!
    One chat message
    """
    role: ChatRole
    content: str

@dataclass(frozen=True)
class ChatRequest:
    """!
    A chat completion request tagged with its cost bucket
    """
    messages: tuple
    cost_bucket: CostBucket
    model_id: str = DEFAULT_MODEL_ID
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS
    temperature: float = 0.0

    def validate(self):
        """!
        @brief Check the request invariants

        @return ChatRequest - self when valid
        """
        if not self.messages:
            raise InvalidArgumentError("chat request needs at least one message")
        if self.max_output_tokens < 1:
            raise InvalidArgumentError("max_output_tokens must be at least 1")
        if self.temperature < 0.0:
            raise InvalidArgumentError("temperature must not be negative")
        return self

    def prompt_text(self)->str:
        """!
        @brief All message contents joined, used for token estimates and fixture checks

        @return string
        """
        return "\n".join(message.content for message in self.messages)

    def to_wire(self)->dict:
        """!
        @brief OpenAI chat-completions body

        @return dict
        """
        return {"model": self.model_id,
                "messages": [{"role": m.role.value, "content": m.content} for m in self.messages],
                "temperature": self.temperature,
                "max_tokens": self.max_output_tokens}

@dataclass(frozen=True)
class ChatResponse:
    """!
    Completion text plus usage
    """
    content: str
    prompt_tokens: int
    completion_tokens: int
    from_cache: bool = False
    retries: int = 0

    def total_tokens(self)->int:
        """!
        @return int - prompt plus completion tokens
        """
        return self.prompt_tokens + self.completion_tokens

def approx_count_tokens(text:str)->int:
    """!
    @brief Approximate token count, ceil(utf-8 byte length / 4)

    @param text (string): Text to measure

    @return int
    """
    return math.ceil(len(text.encode("utf-8")) / 4)

@dataclass
class BucketTotals:
    """!
    Running totals for one bucket
    """
    prompt_tokens: int = 0
    completion_tokens: int = 0
    calls: int = 0
    retries: int = 0

    def total(self)->int:
        """!
        @return int - prompt plus completion tokens
        """
        return self.prompt_tokens + self.completion_tokens

class TokenLedger():
    """!
    Per bucket token accounting, safe to update from several threads
    """
    def __init__(self):
        ## Lock guarding the totals
        self._lock = threading.Lock()
        ## Totals per bucket
        self._totals = {bucket: BucketTotals() for bucket in CostBucket}

    def record(self, bucket:CostBucket, response:ChatResponse):
        """!
        @brief Add one response to a bucket

        @param bucket (CostBucket): Bucket to charge
        @param response (ChatResponse): Response with usage counts
        """
        if response.prompt_tokens < 0 or response.completion_tokens < 0:
            raise InvalidArgumentError("token counts must not be negative")
        with self._lock:
            totals = self._totals[bucket]
            totals.prompt_tokens += response.prompt_tokens
            totals.completion_tokens += response.completion_tokens
            totals.calls += 1
            totals.retries += response.retries

    def bucket(self, bucket:CostBucket)->BucketTotals:
        """!
        @brief Copy of one bucket's totals

        @param bucket (CostBucket): Bucket to read

        @return BucketTotals
        """
        with self._lock:
            totals = self._totals[bucket]
            return BucketTotals(totals.prompt_tokens, totals.completion_tokens,
                                totals.calls, totals.retries)

    def tokens_by_bucket(self)->dict:
        """!
        @brief Total tokens per bucket name

        @return dict bucket value to int
        """
        with self._lock:
            return {bucket.value: totals.total() for bucket, totals in self._totals.items()}

    def total_tokens(self)->int:
        """!
        @return int - tokens over every bucket
        """
        return sum(self.tokens_by_bucket().values())

    def total_retries(self)->int:
        """!
        @return int - transport retries over every bucket
        """
        with self._lock:
            return sum(totals.retries for totals in self._totals.values())

    def calls(self, bucket:CostBucket)->int:
        """!
        @return int - number of recorded calls in a bucket
        """
        return self.bucket(bucket).calls

def diff_buckets(after:dict, before:dict)->dict:
    """!
    @brief Per bucket difference of two tokens_by_bucket snapshots

    @param after (dict): Later snapshot
    @param before (dict): Earlier snapshot

    @return dict - only buckets that changed
    """
    return {name: after[name] - before.get(name, 0)
            for name in after if after[name] != before.get(name, 0)}

class ChatBackend(ABC):
    """!
    Transport for chat completions
    """
    @abstractmethod
    def complete(self, request:ChatRequest)->ChatResponse:
        """!
        @brief Run one completion

        @param request (ChatRequest): Validated request

        @return ChatResponse
        """

def retry_transient(operation, attempts:int, backoff_base:float, sleep = time.sleep,
                    description:str = "request"):
    """!
    @brief Call operation until it succeeds or attempts run out

    Waits backoff_base * 2**(n-1) seconds after the n-th failure.

    @param operation (callable): Zero argument callable
    @param attempts (int): Maximum attempts, at least 1
    @param backoff_base (float): First wait in seconds
    @param sleep (callable): Sleep function
    @param description (string): Name used in log messages

    @return (result, retries) tuple
    """
    if attempts < 1:
        raise ConfigurationError(f"retry attempts must be at least 1, got {attempts}")
    for attempt in range(1, attempts + 1):
        try:
            return operation(), attempt - 1
        except TRANSIENT_ERRORS as error:
            if attempt == attempts:
                raise LlmTransportError(f"{description} failed after {attempts} attempts: "
                                        f"{error}", attempts=attempts) from error
            delay = backoff_base * (2 ** (attempt - 1))
            logger.warning("%s attempt %d failed (%s), retrying in %.2fs",
                           description, attempt, type(error).__name__, delay)
            sleep(delay)
        except openai.OpenAIError as error:
            raise LlmTransportError(f"{description} failed: {error}", attempts=attempt) from error
    raise LlmTransportError(f"{description} failed", attempts=attempts)

def _build_openai_client(api_key_env:str, base_url:str, timeout:float)->openai.OpenAI:
    api_key = os.environ.get(api_key_env)
    if not api_key:
        raise ConfigurationError(f"environment variable {api_key_env} holds no API key")
    if base_url is None:
        base_url = os.environ.get("OPENAI_BASE_URL")
    return openai.OpenAI(api_key=api_key, base_url=base_url, max_retries=0, timeout=timeout)

class OpenAiChatBackend(ChatBackend):
    """!
    OpenAI compatible chat-completions backend with its own retry loop
    """
    def __init__(self, api_key_env:str = DEFAULT_API_KEY_ENV, base_url:str = None,
                 attempts:int = 3, backoff_base:float = 0.5, timeout:float = 60.0,
                 client = None, sleep = time.sleep):
        """!
        @brief Constructor

        @param api_key_env (string): Environment variable holding the API key
        @param base_url (string): Endpoint base URL, None for OPENAI_BASE_URL or the default
        @param attempts (int): Maximum attempts per request
        @param backoff_base (float): First retry wait in seconds
        @param timeout (float): Per request timeout in seconds
        @param client (openai.OpenAI): Preconfigured client, mainly for tests
        @param sleep (callable): Sleep function used between retries
        """
        if attempts < 1:
            raise ConfigurationError(f"retry attempts must be at least 1, got {attempts}")
        ## Wire client
        self.client = client if client is not None else \
            _build_openai_client(api_key_env, base_url, timeout)
        ## Maximum attempts per request
        self.attempts = attempts
        ## First retry wait in seconds
        self.backoff_base = backoff_base
        ## Sleep function
        self._sleep = sleep

    def complete(self, request:ChatRequest)->ChatResponse:
        body = request.to_wire()
        completion, retries = retry_transient(lambda: self.client.chat.completions.create(**body),
                                              self.attempts, self.backoff_base, self._sleep,
                                              f"chat completion ({request.cost_bucket.value})")
        content = ""
        if completion.choices:
            content = completion.choices[0].message.content or ""
        usage = getattr(completion, "usage", None)
        if usage is not None:
            prompt_tokens = usage.prompt_tokens or 0
            completion_tokens = usage.completion_tokens or 0
        else:
            prompt_tokens = approx_count_tokens(request.prompt_text())
            completion_tokens = approx_count_tokens(content)
        return ChatResponse(content=content, prompt_tokens=prompt_tokens,
                            completion_tokens=completion_tokens, retries=retries)

class ScriptedBackend(ChatBackend):
    """!
    Deterministic replay of fixture replies, one stream per cost bucket

    A fixture entry is either the reply string or {"reply": ..., "expect": ...}
    where expect is a substring the prompt must contain in strict mode.
    """
    def __init__(self, fixtures:dict, strict:bool = False):
        """!
        @brief Constructor

        @param fixtures (dict): bucket name to ordered list of entries
        @param strict (bool): Check "expect" substrings against the prompt
        """
        unknown = set(fixtures) - {bucket.value for bucket in CostBucket}
        if unknown:
            raise ConfigurationError(f"unknown fixture buckets {sorted(unknown)}")
        ## Ordered replies per bucket name
        self.fixtures = {name: list(entries) for name, entries in fixtures.items()}
        ## Check prompt expectations
        self.strict = strict
        ## Replies consumed per bucket name
        self.consumed = {bucket.value: 0 for bucket in CostBucket}
        self._lock = threading.Lock()

    def complete(self, request:ChatRequest)->ChatResponse:
        bucket_name = request.cost_bucket.value
        with self._lock:
            sequence = self.consumed[bucket_name] + 1
            entries = self.fixtures.get(bucket_name, [])
            if sequence > len(entries):
                raise FixtureExhaustedError(bucket_name, sequence)
            self.consumed[bucket_name] = sequence
            entry = entries[sequence - 1]

        prompt = request.prompt_text()
        if isinstance(entry, dict):
            reply = str(entry.get("reply", ""))
            expected = entry.get("expect")
            if self.strict and expected is not None and expected not in prompt:
                raise InvalidStateError(f"scripted reply #{sequence} for bucket '{bucket_name}' "
                                        f"expected the prompt to contain '{expected}'")
        else:
            reply = str(entry)
        return ChatResponse(content=reply, prompt_tokens=approx_count_tokens(prompt),
                            completion_tokens=approx_count_tokens(reply), from_cache=True)

    def remaining(self)->dict:
        """!
        @brief Unconsumed replies per bucket name

        @return dict
        """
        with self._lock:
            return {name: len(entries) - self.consumed[name]
                    for name, entries in self.fixtures.items()}

class LlmClient():
    """!
    Request builder bound to a backend, a model and a ledger
    """
    def __init__(self, backend:ChatBackend, model_id:str = DEFAULT_MODEL_ID,
                 ledger:TokenLedger = None, max_output_tokens:int = DEFAULT_MAX_OUTPUT_TOKENS):
        """!
        @brief Constructor

        @param backend (ChatBackend): Transport
        @param model_id (string): Model identifier sent with each request
        @param ledger (TokenLedger): Ledger to record into, a fresh one when None
        @param max_output_tokens (int): Completion cap per request
        """
        ## Transport
        self.backend = backend
        ## Model identifier
        self.model_id = model_id
        ## Token accounting
        self.ledger = ledger if ledger is not None else TokenLedger()
        ## Completion cap per request
        self.max_output_tokens = max_output_tokens

    def complete(self, request:ChatRequest)->ChatResponse:
        """!
        @brief Send a request and record its usage

        @param request (ChatRequest): Request to send

        @return ChatResponse
        """
        request.validate()
        logger.log(TRACE, "%s prompt:\n%s", request.cost_bucket.value, request.prompt_text())
        response = self.backend.complete(request)
        self.ledger.record(request.cost_bucket, response)
        logger.log(TRACE, "%s reply:\n%s", request.cost_bucket.value, response.content)
        return response

    def ask(self, prompt:str, bucket:CostBucket, system:str = None)->ChatResponse:
        """!
        @brief Single user message convenience wrapper

        @param prompt (string): User message
        @param bucket (CostBucket): Cost bucket
        @param system (string): Optional system message

        @return ChatResponse
        """
        messages = []
        if system:
            messages.append(ChatMessage(ChatRole.SYSTEM, system))
        messages.append(ChatMessage(ChatRole.USER, prompt))
        return self.complete(ChatRequest(messages=tuple(messages), cost_bucket=bucket,
                                         model_id=self.model_id,
                                         max_output_tokens=self.max_output_tokens))

class OpenAiEmbedder(Embedder):
    """!
    Dense embeddings from an OpenAI compatible embeddings endpoint
    """
    def __init__(self, model_id:str, api_key_env:str = DEFAULT_API_KEY_ENV,
                 base_url:str = None, attempts:int = 3, backoff_base:float = 0.5,
                 batch_size:int = 64, client = None, sleep = time.sleep):
        """!
        @brief Constructor

        @param model_id (string): Embedding model identifier
        @param api_key_env (string): Environment variable holding the API key
        @param base_url (string): Endpoint base URL or None
        @param attempts (int): Maximum attempts per batch
        @param backoff_base (float): First retry wait in seconds
        @param batch_size (int): Texts per request
        @param client (openai.OpenAI): Preconfigured client, mainly for tests
        @param sleep (callable): Sleep function used between retries
        """
        ## Wire client
        self.client = client if client is not None else \
            _build_openai_client(api_key_env, base_url, 60.0)
        ## Embedding model identifier
        self.model_id = model_id
        self.name = f"openai:{model_id}"
        ## Maximum attempts per batch
        self.attempts = attempts
        ## First retry wait in seconds
        self.backoff_base = backoff_base
        ## Texts per request
        self.batch_size = batch_size
        self._sleep = sleep

    def embed(self, texts:list)->np.ndarray:
        rows = []
        for start in range(0, len(texts), self.batch_size):
            batch = [text if text else " " for text in texts[start:start + self.batch_size]]
            response, _ = retry_transient(
                lambda batch=batch: self.client.embeddings.create(model=self.model_id,
                                                                  input=batch),
                self.attempts, self.backoff_base, self._sleep, "embedding")
            rows.extend(item.embedding for item in sorted(response.data, key=lambda d: d.index))
        if not rows:
            return np.zeros((0, self.dimension), dtype=np.float64)
        matrix = np.asarray(rows, dtype=np.float64)
        self.dimension = matrix.shape[1]
        return matrix

def make_embedder(descriptor:str, api_key_env:str = DEFAULT_API_KEY_ENV,
                  base_url:str = None)->Embedder:
    """!
    @brief Build an embedder from "hashing:<dim>[:<seed>]" or "openai:<model>"

    @param descriptor (string): Embedder descriptor, None or "none" for no embedder
    @param api_key_env (string): API key variable for the openai embedder
    @param base_url (string): Endpoint base URL for the openai embedder

    @return Embedder or None
    """
    if descriptor is None or descriptor == "none":
        return None
    kind, _, rest = descriptor.partition(":")
    if kind == "hashing":
        parts = rest.split(":") if rest else []
        try:
            dimension = int(parts[0]) if parts else 256
            seed = int(parts[1]) if len(parts) > 1 else 0
        except ValueError as error:
            raise ConfigurationError(f"bad hashing embedder descriptor '{descriptor}'") from error
        return HashingEmbedder(dimension, seed)
    if kind == "openai" and rest:
        return OpenAiEmbedder(rest, api_key_env=api_key_env, base_url=base_url)
    raise ConfigurationError(f"unknown embedder descriptor '{descriptor}'")

FIXTURE_DEFAULT_KEY = "default"

def load_fixture_file(file_name:str)->dict:
    """!
    @brief Read a scripted reply file

    The file is JSON.  Either its keys are bucket names (one stream for every
    episode) or they are episode selectors ("variant:task_id", "variant",
    "task_id" or "default") each holding a bucket map.

    @param file_name (string): Fixture path

    @return dict selector to bucket map
    """
    try:
        with open(file_name, "rt", encoding="utf-8") as fixture_file:
            document = json.load(fixture_file)
    except ValueError as error:
        raise CorpusFormatError(file_name, 0, f"fixture file is not JSON: {error}") from error
    if not isinstance(document, dict):
        raise CorpusFormatError(file_name, 0, "fixture file must hold a JSON object")
    bucket_names = {bucket.value for bucket in CostBucket}
    if document and set(document) <= bucket_names:
        return {FIXTURE_DEFAULT_KEY: document}
    return document

def select_fixtures(fixture_sets:dict, variant_name:str, task_id:str)->dict:
    """!
    @brief Pick the bucket map for one episode

    @param fixture_sets (dict): Output of load_fixture_file
    @param variant_name (string): Variant name
    @param task_id (string): Task id

    @return dict bucket name to replies
    """
    for key in (f"{variant_name}:{task_id}", variant_name, task_id, FIXTURE_DEFAULT_KEY):
        if key in fixture_sets:
            return fixture_sets[key]
    raise ConfigurationError(f"no fixtures for episode {variant_name}:{task_id} and no "
                             f"'{FIXTURE_DEFAULT_KEY}' entry")

@dataclass
class BackendSettings:
    """!
    How episodes reach a language model
    """
    api_key_env: str = DEFAULT_API_KEY_ENV
    base_url: str = None
    attempts: int = 3
    backoff_base: float = 0.5
    fixture_sets: dict = field(default_factory=dict)
    strict_fixtures: bool = False

    def scripted(self)->bool:
        """!
        @return bool - True when replies come from fixtures
        """
        return bool(self.fixture_sets)
