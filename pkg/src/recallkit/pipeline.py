"""Summary-CoT training data construction.

Two passes over a labeled corpus: the valid pass extracts a query-focused
summary per example and keeps it only when a verifier judges it consistent
with the gold answer; the empty pass excises the answer-bearing paragraphs
from each context and pairs the modified context with the canonical refusal.
Both sets render to TrainingRecord rows and can be mixed into a base SFT
corpus under a fixed seed.
"""

from __future__ import annotations

import logging
import random
import re
from dataclasses import dataclass, replace

from .backends import BackendError, ChatBackend, Completion, user_exchange
from .corpus import (
    DEFAULT_REFUSAL,
    Example,
    SummaryLabel,
    TrainingRecord,
    SOURCE_EMPTY_COT,
    SOURCE_VALID_COT,
    segment_paragraphs,
)
from .metrics import normalize_answer
from .prompts import (
    VERIFY_TEMPLATE,
    parse_yes_no,
    render_extract_prompt,
    render_locate_prompt,
)

log = logging.getLogger(__name__)

SUMMARY_ONLY = "summary_only"
SUMMARY_THEN_ANSWER = "summary_then_answer"
TARGET_STYLES = (SUMMARY_ONLY, SUMMARY_THEN_ANSWER)

_INT_RE = re.compile(r"\d+")


class EmptyLocatorReply(Exception):
    """Neither the locator model nor the exact-match scan found the answer."""


class AllParagraphsRemoved(Exception):
    """Excision would leave no context at all."""


@dataclass
class Verdict:
    """Verifier decision on one summary."""

    consistent: bool
    raw_judgment: str


@dataclass
class PipelineConfig:
    """Backend bindings and dataset-shape knobs for data construction."""

    extractor: ChatBackend
    verifier: ChatBackend
    locator: ChatBackend
    refusal_string: str = DEFAULT_REFUSAL
    target_style: str = SUMMARY_THEN_ANSWER
    cot_count: int = 10000
    base_count: int = 100000
    empty_fraction: float = 0.5
    seed: int = 0
    max_new: int = 512

    def __post_init__(self) -> None:
        if self.target_style not in TARGET_STYLES:
            raise ValueError(f"unknown target style {self.target_style!r}")
        if self.cot_count < 0 or self.base_count < 0:
            raise ValueError("cot_count and base_count must be non-negative")
        if not 0.0 <= self.empty_fraction <= 1.0:
            raise ValueError("empty_fraction must lie in [0, 1]")


def extract_summary(example: Example, extractor: ChatBackend, max_new: int = 512) -> str:
    """Ask the extractor for a query-focused note over the full context."""
    if not example.context or not example.query:
        raise ValueError(f"example {example.id!r}: extraction needs a non-empty context and query")
    prompt = render_extract_prompt(example.context, example.query)
    return extractor.complete(user_exchange(prompt, max_new=max_new)).text.strip()


def verify_summary(
    example: Example,
    summary: str,
    verifier: ChatBackend,
    max_new: int = 64,
    positive_token: str = "yes",
) -> Verdict:
    """Check the summary against the gold answer with a yes/no verifier."""
    if not summary:
        raise ValueError("cannot verify an empty summary")
    prompt = VERIFY_TEMPLATE.format(summary=summary, answer=example.answer)
    reply = verifier.complete(user_exchange(prompt, max_new=max_new)).text
    decision = parse_yes_no(reply, positive=positive_token)
    return Verdict(consistent=decision is True, raw_judgment=reply)


def _indices_from_reply(reply: str, paragraph_count: int) -> set[int]:
    found = set()
    for token in _INT_RE.findall(reply):
        index = int(token)
        if 0 <= index < paragraph_count:
            found.add(index)
    return found


def _exact_match_indices(example: Example) -> set[int]:
    needle = normalize_answer(example.answer)
    if not needle:
        return set()
    return {
        p.index
        for p in segment_paragraphs(example.context)
        if needle in normalize_answer(p.text)
    }


def locate_answer_paragraphs(example: Example, locator: ChatBackend, max_new: int = 64) -> set[int]:
    """Find answer-bearing paragraph indices.

    Combines the locator model's comma-separated reply (out-of-range indices
    discarded) with an exact-match safety net that always includes any
    paragraph containing the normalized answer.
    """
    if not example.answer:
        raise ValueError(f"example {example.id!r}: locating needs a non-empty answer")
    paragraphs = segment_paragraphs(example.context)
    prompt = render_locate_prompt(paragraphs, example.query, example.answer)
    reply = locator.complete(user_exchange(prompt, max_new=max_new)).text
    found = _indices_from_reply(reply, len(paragraphs)) | _exact_match_indices(example)
    if not found:
        raise EmptyLocatorReply(f"example {example.id!r}: no answer paragraph found")
    return found


def build_empty_context(example: Example, removed: set[int]) -> str:
    """Drop the given paragraphs and re-join the survivors with blank lines."""
    paragraphs = segment_paragraphs(example.context)
    if any(i < 0 or i >= len(paragraphs) for i in removed):
        raise ValueError(f"example {example.id!r}: removal index out of range")
    survivors = [p.text for p in paragraphs if p.index not in removed]
    if not survivors:
        raise AllParagraphsRemoved(f"example {example.id!r}: every paragraph was removed")
    return "\n\n".join(survivors)


def _batch(
    backend: ChatBackend, prompts: list[str], max_new: int, parallelism: int
) -> list[Completion | BackendError]:
    exchanges = [user_exchange(p, max_new=max_new) for p in prompts]
    return backend.complete_batch(exchanges, parallelism=parallelism)


def build_valid_set(
    corpus: list[Example], cfg: PipelineConfig, parallelism: int = 1
) -> tuple[list[tuple[Example, SummaryLabel]], list[dict]]:
    """Extract and verify summaries for the whole corpus.

    Returns admitted (example, summary) pairs in input order plus a
    rejection log of {"id", "reason"} entries.
    """
    if not corpus:
        raise ValueError("corpus must be non-empty")
    rejections: list[dict] = []
    candidates: list[Example] = []
    for example in corpus:
        if not example.context:
            rejections.append({"id": example.id, "reason": "empty_context"})
        else:
            candidates.append(example)

    extract_prompts = [render_extract_prompt(e.context, e.query) for e in candidates]
    extracted: list[tuple[Example, str]] = []
    for example, result in zip(candidates, _batch(cfg.extractor, extract_prompts, cfg.max_new, parallelism)):
        if isinstance(result, BackendError):
            rejections.append({"id": example.id, "reason": f"extractor_error: {result}"})
        elif not result.text.strip():
            rejections.append({"id": example.id, "reason": "empty_summary"})
        else:
            extracted.append((example, result.text.strip()))

    verify_prompts = [
        VERIFY_TEMPLATE.format(summary=summary, answer=example.answer)
        for example, summary in extracted
    ]
    pairs: list[tuple[Example, SummaryLabel]] = []
    for (example, summary), result in zip(extracted, _batch(cfg.verifier, verify_prompts, 64, parallelism)):
        if isinstance(result, BackendError):
            rejections.append({"id": example.id, "reason": f"verifier_error: {result}"})
        elif parse_yes_no(result.text) is True:
            pairs.append((example, SummaryLabel.valid(summary)))
        else:
            rejections.append({"id": example.id, "reason": "verifier_rejected"})
    log.info("valid-summary pass: %d admitted, %d rejected", len(pairs), len(rejections))
    return pairs, rejections


def build_empty_set(
    corpus: list[Example], cfg: PipelineConfig, parallelism: int = 1
) -> tuple[list[tuple[Example, SummaryLabel]], list[dict]]:
    """Excise answer paragraphs and pair each modified context with the
    refusal summary.

    Examples that cannot be excised are skipped, never fatal; the skip log
    mirrors the rejection log format.
    """
    if not corpus:
        raise ValueError("corpus must be non-empty")
    skips: list[dict] = []
    candidates: list[Example] = []
    for example in corpus:
        if not example.answer:
            skips.append({"id": example.id, "reason": "empty_answer"})
        elif not example.context:
            skips.append({"id": example.id, "reason": "empty_context"})
        else:
            candidates.append(example)

    locate_prompts = [
        render_locate_prompt(segment_paragraphs(e.context), e.query, e.answer) for e in candidates
    ]
    pairs: list[tuple[Example, SummaryLabel]] = []
    for example, result in zip(candidates, _batch(cfg.locator, locate_prompts, 64, parallelism)):
        if isinstance(result, BackendError):
            skips.append({"id": example.id, "reason": f"locator_error: {result}"})
            continue
        paragraphs = segment_paragraphs(example.context)
        removed = _indices_from_reply(result.text, len(paragraphs)) | _exact_match_indices(example)
        if not removed:
            skips.append({"id": example.id, "reason": "no_answer_paragraph_found"})
            continue
        try:
            reduced = build_empty_context(example, removed)
        except AllParagraphsRemoved:
            skips.append({"id": example.id, "reason": "all_paragraphs_removed"})
            continue
        pairs.append((replace(example, context=reduced), SummaryLabel.empty(cfg.refusal_string)))
    log.info("empty-summary pass: %d built, %d skipped", len(pairs), len(skips))
    return pairs, skips


def render_record(example: Example, label: SummaryLabel, cfg: PipelineConfig) -> TrainingRecord:
    """Render one (example, summary) pair to a training record."""
    input_text = f"{example.context}\n\n{example.query}"
    if label.is_empty():
        return TrainingRecord(
            id=f"{example.id}-empty",
            source=SOURCE_EMPTY_COT,
            input_text=input_text,
            target_text=label.text,
        )
    if cfg.target_style == SUMMARY_THEN_ANSWER:
        target = f"{label.text}\n\nAnswer: {example.answer}"
    else:
        target = label.text
    return TrainingRecord(
        id=f"{example.id}-valid",
        source=SOURCE_VALID_COT,
        input_text=input_text,
        target_text=target,
    )


def assemble_dataset(
    valid_pairs: list[tuple[Example, SummaryLabel]],
    empty_pairs: list[tuple[Example, SummaryLabel]],
    cfg: PipelineConfig,
) -> list[TrainingRecord]:
    """Select per-kind quotas, render records, and shuffle under cfg.seed.

    The empty-summary share of cot_count is empty_fraction; each side is
    capped by availability without backfilling from the other.
    """
    target_empty = round(cfg.cot_count * cfg.empty_fraction)
    take_empty = min(target_empty, len(empty_pairs))
    take_valid = min(cfg.cot_count - target_empty, len(valid_pairs))
    records = [render_record(e, label, cfg) for e, label in valid_pairs[:take_valid]]
    records += [render_record(e, label, cfg) for e, label in empty_pairs[:take_empty]]
    random.Random(cfg.seed).shuffle(records)
    return records


def mix_with_base(
    base: list[TrainingRecord], cot: list[TrainingRecord], seed: int
) -> list[TrainingRecord]:
    """Shuffle base and CoT records together deterministically."""
    mixed = list(base) + list(cot)
    random.Random(seed).shuffle(mixed)
    return mixed
