"""Segmented summarize-then-answer inference over long contexts.

The context is chunked at paragraph boundaries, each chunk is summarized
against the query with the same note-extraction prompt used at training
time, refusal summaries are dropped, and the surviving notes are fed to one
final answering call. Cost stays linear: one model call per chunk plus one.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

from .backends import BackendError, ChatBackend, user_exchange
from .corpus import (
    DEFAULT_REFUSAL,
    Example,
    LengthPolicy,
    hard_cut,
    measure_length,
    segment_with_delimiters,
    truncate_text,
)
from .prompts import render_answer_prompt, render_extract_prompt

log = logging.getLogger(__name__)


@dataclass
class SsaConfig:
    """Chunking and answering settings for segmented summarization."""

    student: ChatBackend
    chunk_units: int = 2000
    policy: LengthPolicy = field(default_factory=LengthPolicy)
    drop_refusals: bool = True
    refusal_string: str = DEFAULT_REFUSAL
    max_new: int = 512

    def __post_init__(self) -> None:
        if self.chunk_units < 1:
            raise ValueError("chunk_units must be positive")


@dataclass
class SsaTrace:
    """Everything one segmented run produced, stage by stage."""

    chunks: list[tuple[str, str]]
    aggregate: str
    answer: str
    latency_ms: dict[str, float]


def _split_oversized(text: str, limit: int, policy: LengthPolicy) -> list[str]:
    """Cut a paragraph larger than ``limit`` into literal slices that
    concatenate back to the original."""
    pieces = []
    rest = text
    while measure_length(rest, policy) > limit:
        head = hard_cut(rest, limit, policy)
        pieces.append(head)
        rest = rest[len(head):]
    pieces.append(rest)
    return pieces


def chunk_with_delimiters(context: str, cfg: SsaConfig) -> tuple[list[str], list[str]]:
    """Greedily pack whole paragraphs into chunks of at most chunk_units.

    Returns (chunks, delimiters) where delimiters[i] is the newline run that
    separated chunk i from chunk i+1 in the original text (empty between
    hard-split slices and after the final chunk), so joining reconstructs
    the context byte-for-byte.
    """
    if context == "":
        return [], []
    paragraphs, delims = segment_with_delimiters(context)
    chunks: list[str] = []
    out_delims: list[str] = []
    current: str | None = None
    trailing = ""
    for paragraph, delim in zip(paragraphs, delims):
        if current is not None:
            candidate = current + trailing + paragraph.text
            if measure_length(candidate, cfg.policy) <= cfg.chunk_units:
                current = candidate
                trailing = delim
                continue
            chunks.append(current)
            out_delims.append(trailing)
        if measure_length(paragraph.text, cfg.policy) > cfg.chunk_units:
            pieces = _split_oversized(paragraph.text, cfg.chunk_units, cfg.policy)
            for piece in pieces[:-1]:
                chunks.append(piece)
                out_delims.append("")
            current = pieces[-1]
        else:
            current = paragraph.text
        trailing = delim
    if current is not None:
        chunks.append(current)
        out_delims.append(trailing)
    return chunks, out_delims


def chunk_context(context: str, cfg: SsaConfig) -> list[str]:
    """Chunk the context, discarding the recorded delimiters."""
    return chunk_with_delimiters(context, cfg)[0]


def summarize_chunk(chunk: str, query: str, student: ChatBackend, max_new: int = 512) -> str:
    """One note-extraction call for a single chunk."""
    if not chunk:
        raise ValueError("cannot summarize an empty chunk")
    prompt = render_extract_prompt(chunk, query)
    return student.complete(user_exchange(prompt, max_new=max_new)).text.strip()


def aggregate_summaries(summaries: list[str], cfg: SsaConfig) -> str:
    """Join chunk summaries in order, dropping refusals when configured.

    If every summary is a refusal, a single refusal survives so the
    answering stage still sees an honest signal.
    """
    if not summaries:
        raise ValueError("aggregation needs at least one summary")
    if cfg.drop_refusals:
        kept = [s for s in summaries if s != cfg.refusal_string]
        if not kept:
            return cfg.refusal_string
    else:
        kept = list(summaries)
    return "\n\n".join(kept)


def ssa_answer(example: Example, cfg: SsaConfig, parallelism: int = 1) -> SsaTrace:
    """Run the full segmented pipeline for one example.

    Chunk summarization fans out through the backend batch contract; any
    per-chunk backend failure is re-raised. The student is called exactly
    len(chunks) + 1 times.
    """
    chunks = chunk_context(example.context, cfg)
    latency: dict[str, float] = {}
    summaries: list[str] = []
    started = time.perf_counter()
    if chunks:
        exchanges = [
            user_exchange(render_extract_prompt(chunk, example.query), max_new=cfg.max_new)
            for chunk in chunks
        ]
        results = cfg.student.complete_batch(exchanges, parallelism=parallelism)
        for result in results:
            if isinstance(result, BackendError):
                raise result
        summaries = [r.text.strip() for r in results]
        aggregate = aggregate_summaries(summaries, cfg)
    else:
        aggregate = ""
    latency["summarize"] = (time.perf_counter() - started) * 1000.0

    started = time.perf_counter()
    prompt = render_answer_prompt(aggregate, example.query)
    completion = cfg.student.complete(user_exchange(prompt, max_new=cfg.max_new))
    latency["answer"] = (time.perf_counter() - started) * 1000.0
    return SsaTrace(
        chunks=list(zip(chunks, summaries)),
        aggregate=aggregate,
        answer=completion.text.strip(),
        latency_ms=latency,
    )


def direct_answer(
    example: Example,
    window_units: int,
    student: ChatBackend,
    policy: LengthPolicy | None = None,
    max_new: int = 512,
) -> str:
    """Single-call baseline: truncate the context to the window, then ask.

    An empty context degenerates to a question-only prompt.
    """
    policy = policy or LengthPolicy()
    context = truncate_text(example.context, window_units, policy)
    prompt = render_answer_prompt(context, example.query)
    return student.complete(user_exchange(prompt, max_new=max_new)).text.strip()
