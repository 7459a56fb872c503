"""Chat-completion backends: a live HTTP client and a scripted offline mock.

Every model role in the tooling (extractor, verifier, locator, student,
judge) talks through the same small interface, so a rule-file mock can stand
in for any of them and whole runs stay deterministic offline.
"""

from __future__ import annotations

import json
import logging
import os
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import requests

from .corpus import ParseError

log = logging.getLogger(__name__)

ROLE_SYSTEM = "system"
ROLE_USER = "user"
ROLE_ASSISTANT = "assistant"
_ROLES = (ROLE_SYSTEM, ROLE_USER, ROLE_ASSISTANT)

DEFAULT_MAX_NEW = 512


class BackendError(Exception):
    """Base class for backend failures."""


class BackendExhausted(BackendError):
    """All retry attempts failed."""

    def __init__(self, message: str, attempts: int):
        super().__init__(message)
        self.attempts = attempts


class ProtocolError(BackendError):
    """The endpoint answered with something the client cannot interpret."""


@dataclass(frozen=True)
class Message:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in _ROLES:
            raise ValueError(f"unknown message role {self.role!r}")


@dataclass
class ChatExchange:
    """One request to a chat model: message list plus sampling settings."""

    messages: list[Message]
    temperature: float = 0.0
    max_new: int = DEFAULT_MAX_NEW
    model_name: str = ""

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("an exchange needs at least one message")
        if self.messages[-1].role != ROLE_USER:
            raise ValueError("the last message of an exchange must be a user turn")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must lie in [0, 2]")
        if self.max_new < 1:
            raise ValueError("max_new must be positive")

    def last_user_content(self) -> str:
        return self.messages[-1].content


def user_exchange(prompt: str, max_new: int = DEFAULT_MAX_NEW, model_name: str = "") -> ChatExchange:
    """Build a single-turn exchange with one user message."""
    return ChatExchange(messages=[Message(ROLE_USER, prompt)], max_new=max_new, model_name=model_name)


@dataclass
class Completion:
    """A model reply plus how it was obtained."""

    text: str
    latency_ms: float
    attempts: int = 1


class ChatBackend:
    """Interface shared by all backends; also hosts the batch helper."""

    def complete(self, exchange: ChatExchange) -> Completion:
        raise NotImplementedError

    def complete_batch(
        self, exchanges: list[ChatExchange], parallelism: int = 1
    ) -> list[Completion | BackendError]:
        """Complete many exchanges, results in input order.

        A failing item yields its BackendError at that position instead of
        aborting the whole batch.
        """
        if parallelism < 1:
            raise ValueError("parallelism must be positive")
        if not exchanges:
            return []

        def one(exchange: ChatExchange) -> Completion | BackendError:
            try:
                return self.complete(exchange)
            except BackendError as err:
                return err

        if parallelism == 1:
            return [one(ex) for ex in exchanges]
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            futures = [pool.submit(one, ex) for ex in exchanges]
            return [f.result() for f in futures]


@dataclass(frozen=True)
class MockRule:
    """First-match scripted reply: fires when ``match_contains`` occurs in
    the last user message. An empty match string matches everything."""

    match_contains: str
    response: str


class MockBackend(ChatBackend):
    """Deterministic offline backend driven by an ordered rule list.

    The last rule must be the default (empty ``match_contains``) so every
    request gets a reply. Mock completions report zero latency and one
    attempt.
    """

    def __init__(self, rules: list[MockRule]):
        if not rules:
            raise ValueError("mock backend needs at least one rule")
        if rules[-1].match_contains != "":
            raise ValueError("the last mock rule must be the default rule (empty match)")
        self.rules = tuple(rules)

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "MockBackend":
        """Load rules from JSONL lines of {"match_contains", "response"}."""
        rules = []
        with Path(path).open("r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line:
                    continue
                try:
                    data = json.loads(line)
                except json.JSONDecodeError as err:
                    raise ParseError(f"invalid JSON: {err.msg}", lineno) from err
                if not isinstance(data, dict) or "match_contains" not in data or "response" not in data:
                    raise ParseError("rule needs 'match_contains' and 'response'", lineno)
                rules.append(MockRule(str(data["match_contains"]), str(data["response"])))
        return cls(rules)

    def complete(self, exchange: ChatExchange) -> Completion:
        content = exchange.last_user_content()
        for rule in self.rules:
            if rule.match_contains in content:
                return Completion(text=rule.response, latency_ms=0.0, attempts=1)
        raise AssertionError("unreachable: default rule guarantees a match")


def backoff_delay(attempt: int, base: float = 0.5, factor: float = 2.0) -> float:
    """Pre-jitter delay before retry number ``attempt`` (1-based)."""
    return base * factor ** (attempt - 1)


class HttpBackend(ChatBackend):
    """Client for a chat-completions HTTP endpoint.

    Sends POST {model, messages, temperature, max_tokens} and reads the first
    choice's message content. Timeouts, connection drops, 429 and 5xx are
    retried with exponential backoff plus jitter; anything else raises
    ProtocolError immediately.
    """

    def __init__(
        self,
        url: str,
        model: str = "",
        api_key_env: str | None = None,
        timeout: float = 30.0,
        max_attempts: int = 5,
        backoff_base: float = 0.5,
        backoff_factor: float = 2.0,
        jitter: float = 0.25,
    ):
        if max_attempts < 1:
            raise ValueError("max_attempts must be positive")
        self.url = url
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.backoff_factor = backoff_factor
        self.jitter = jitter

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, exchange: ChatExchange) -> Completion:
        payload = {
            "model": exchange.model_name or self.model,
            "messages": [{"role": m.role, "content": m.content} for m in exchange.messages],
            "temperature": exchange.temperature,
            "max_tokens": exchange.max_new,
        }
        headers = self._headers()
        last_reason = "no attempt made"
        for attempt in range(1, self.max_attempts + 1):
            started = time.perf_counter()
            try:
                resp = requests.post(self.url, json=payload, headers=headers, timeout=self.timeout)
            except (requests.Timeout, requests.ConnectionError) as err:
                last_reason = f"{type(err).__name__}: {err}"
            else:
                if resp.status_code == 200:
                    text = self._parse_body(resp)
                    elapsed_ms = (time.perf_counter() - started) * 1000.0
                    return Completion(text=text, latency_ms=elapsed_ms, attempts=attempt)
                if resp.status_code == 429 or resp.status_code >= 500:
                    last_reason = f"HTTP {resp.status_code}"
                else:
                    raise ProtocolError(f"unexpected HTTP status {resp.status_code}")
            if attempt < self.max_attempts:
                delay = backoff_delay(attempt, self.backoff_base, self.backoff_factor)
                delay *= random.uniform(1.0 - self.jitter, 1.0 + self.jitter)
                log.debug("retrying after %s (attempt %d): %.3fs", last_reason, attempt, delay)
                time.sleep(delay)
        raise BackendExhausted(
            f"gave up after {self.max_attempts} attempts; last failure: {last_reason}",
            attempts=self.max_attempts,
        )

    @staticmethod
    def _parse_body(resp: requests.Response) -> str:
        try:
            data = resp.json()
            content = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as err:
            raise ProtocolError(f"malformed completion body: {err}") from err
        if not isinstance(content, str):
            raise ProtocolError("completion content is not a string")
        return content
