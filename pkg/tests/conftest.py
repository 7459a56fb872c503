"""Shared test fixtures: scripted backends, fixture corpora, and a stub
chat-completions HTTP server."""

from __future__ import annotations

import json
import re
import threading
import time
from contextlib import contextmanager
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from recallkit.backends import (
    BackendExhausted,
    ChatBackend,
    ChatExchange,
    Completion,
)
from recallkit.corpus import DEFAULT_REFUSAL, Example, TrainingRecord, write_jsonl

EXTRACT_SUFFIX = "Please extract a note relevant to the query:"
_QUERY_RE = re.compile(r"What is the code for (\S+)\?")


class HonestRecallBackend(ChatBackend):
    """Scripted stand-in for a model that summarizes honestly.

    For note-extraction prompts it returns the needle sentence for the
    queried key when the chunk contains it, else the refusal. For answering
    prompts it returns the bare value when the needle is visible, else the
    refusal.
    """

    def complete(self, exchange: ChatExchange) -> Completion:
        message = exchange.last_user_content()
        matched = _QUERY_RE.search(message)
        if not matched:
            return Completion(DEFAULT_REFUSAL, 0.0, 1)
        key = matched.group(1)
        needle = re.search(rf"The code for {re.escape(key)} is (\S+)\.", message)
        if message.rstrip().endswith(EXTRACT_SUFFIX):
            if needle:
                return Completion(needle.group(0), 0.0, 1)
            return Completion(DEFAULT_REFUSAL, 0.0, 1)
        if needle:
            return Completion(needle.group(1), 0.0, 1)
        return Completion(DEFAULT_REFUSAL, 0.0, 1)


class CapturingBackend(ChatBackend):
    """Records every prompt and replies from a fixed response list (the last
    response repeats)."""

    def __init__(self, responses=("ok",)):
        self.responses = list(responses)
        self.prompts: list[str] = []
        self._lock = threading.Lock()

    def complete(self, exchange: ChatExchange) -> Completion:
        with self._lock:
            self.prompts.append(exchange.last_user_content())
            index = min(len(self.prompts) - 1, len(self.responses) - 1)
        return Completion(self.responses[index], 0.0, 1)


class CountingBackend(ChatBackend):
    """Wraps another backend and counts complete() calls thread-safely."""

    def __init__(self, inner: ChatBackend):
        self.inner = inner
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, exchange: ChatExchange) -> Completion:
        with self._lock:
            self.calls += 1
        return self.inner.complete(exchange)


class FailingBackend(ChatBackend):
    """Raises BackendExhausted whenever the trigger occurs in the prompt."""

    def __init__(self, trigger: str = "BOOM"):
        self.trigger = trigger

    def complete(self, exchange: ChatExchange) -> Completion:
        if self.trigger in exchange.last_user_content():
            raise BackendExhausted("scripted failure", attempts=1)
        return Completion("ok", 0.0, 1)


def make_pipeline_fixture(n: int, reject_every: int = 7, locator_reply: str = "1"):
    """Build n labeled examples whose answer sits in paragraph 1, plus mock
    rules driving the extractor, verifier, and locator roles.

    Every reject_every-th example (0, reject_every, ...) is refused by the
    verifier. Returns (examples, rules) where rules are plain dicts ready
    for JSONL serialization.
    """
    examples = []
    for i in range(n):
        context = (
            f"Opening filler paragraph for case {i} with plain prose.\n\n"
            f"The secret token for case {i} is tok{i}X.\n\n"
            f"Closing remarks for case {i}."
        )
        examples.append(
            Example(
                id=f"ex{i:03d}",
                context=context,
                query=f"What is the secret token for case {i}?",
                answer=f"tok{i}X",
                meta={"task": "token_recall"},
            )
        )
    rules = [{"match_contains": "Reply with the indices of paragraphs", "response": locator_reply}]
    for i in range(n):
        if reject_every and i % reject_every == 0:
            rules.append({"match_contains": f"Correct answer: tok{i}X", "response": "No"})
    rules.append(
        {"match_contains": "Does the summary contain information consistent", "response": "Yes"}
    )
    for i in range(n):
        rules.append(
            {
                "match_contains": f"What is the secret token for case {i}?",
                "response": f"The secret token for case {i} is tok{i}X.",
            }
        )
    rules.append({"match_contains": "", "response": DEFAULT_REFUSAL})
    return examples, rules


def make_base_records(n: int) -> list[TrainingRecord]:
    return [
        TrainingRecord(
            id=f"base-{i:04d}",
            source="base",
            input_text=f"Instruction number {i}.",
            target_text=f"Reply number {i}.",
        )
        for i in range(n)
    ]


def write_rules(rules: list[dict], path: Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rule in rules:
            fh.write(json.dumps(rule) + "\n")


def write_fixture(tmp_path: Path, n: int, **kwargs):
    """Write the pipeline fixture corpus and rules under tmp_path; returns
    (corpus_path, rules_path, examples)."""
    examples, rules = make_pipeline_fixture(n, **kwargs)
    corpus_path = tmp_path / "corpus.jsonl"
    rules_path = tmp_path / "rules.jsonl"
    write_jsonl(examples, corpus_path)
    write_rules(rules, rules_path)
    return corpus_path, rules_path, examples


class _StubHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = self.rfile.read(length)
        self.server.requests.append(
            {"path": self.path, "headers": dict(self.headers), "body": body}
        )
        step = self.server.next_step()
        delay = step.get("delay", 0.0)
        if delay:
            time.sleep(delay)
        status = step.get("status", 200)
        if status != 200:
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.end_headers()
            self.wfile.write(b"{}")
            return
        raw = step.get("raw")
        if raw is None:
            payload = {"choices": [{"message": {"content": step.get("content", "ok")}}]}
            raw = json.dumps(payload).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(raw)

    def log_message(self, *args):
        pass


class StubServer(ThreadingHTTPServer):
    """Scripted chat-completions endpoint: consumes its script step by step,
    then keeps serving the default step."""

    def __init__(self, script, default):
        super().__init__(("127.0.0.1", 0), _StubHandler)
        self.script = list(script)
        self.default = dict(default)
        self.requests = []
        self._lock = threading.Lock()

    def next_step(self):
        with self._lock:
            if self.script:
                return self.script.pop(0)
            return self.default

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.server_address[1]}/v1/chat/completions"


@contextmanager
def stub_chat_server(script=(), default=None):
    server = StubServer(script, default or {"status": 200, "content": "ok"})
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield server
    finally:
        server.shutdown()
        server.server_close()
