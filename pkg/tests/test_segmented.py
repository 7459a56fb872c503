"""Chunked summarize-then-answer inference: packing, aggregation, answering."""

import random

import pytest

from conftest import CapturingBackend, CountingBackend, FailingBackend, HonestRecallBackend
from recallkit.backends import BackendExhausted, MockBackend, MockRule
from recallkit.corpus import CHARS_DIV4, DEFAULT_REFUSAL, Example, LengthPolicy, measure_length
from recallkit.segmented import (
    SsaConfig,
    aggregate_summaries,
    chunk_context,
    chunk_with_delimiters,
    direct_answer,
    ssa_answer,
    summarize_chunk,
)
from recallkit.synthetic import gen_synthetic_recall

WORDS = LengthPolicy()


def _cfg(units, backend=None, **kwargs):
    return SsaConfig(student=backend or CapturingBackend(), chunk_units=units, **kwargs)


def test_chunk_greedy_packing_arithmetic():
    context = "\n\n".join(f"p{i}a p{i}b" for i in range(5))  # five 2-word paragraphs
    chunks = chunk_context(context, _cfg(4))
    assert [measure_length(c, WORDS) for c in chunks] == [4, 4, 2]


def test_chunk_single_when_it_fits():
    context = "one two\n\nthree four"
    assert chunk_context(context, _cfg(100)) == [context]


def test_chunk_empty_context():
    assert chunk_context("", _cfg(10)) == []


def test_chunks_reconstruct_original():
    rng = random.Random(17)
    for _ in range(100):
        paragraphs = []
        for _ in range(rng.randint(1, 10)):
            words = rng.randint(1, 30)
            paragraphs.append(" ".join(f"w{rng.randint(0, 999)}" for _ in range(words)))
        context = ""
        for k, para in enumerate(paragraphs):
            context += para
            if k < len(paragraphs) - 1:
                context += rng.choice(["\n\n", "\n\n\n"])
        units = rng.randint(5, 25)
        chunks, delims = chunk_with_delimiters(context, _cfg(units))
        assert "".join(c + d for c, d in zip(chunks, delims)) == context
        assert all(measure_length(c, WORDS) <= units for c in chunks)


def test_oversized_paragraph_hard_split():
    giant = " ".join(f"w{i}" for i in range(23))
    cfg = _cfg(5)
    chunks, delims = chunk_with_delimiters(giant, cfg)
    assert "".join(c + d for c, d in zip(chunks, delims)) == giant
    assert all(measure_length(c, WORDS) <= 5 for c in chunks)
    assert len(chunks) == 5  # 5+5+5+5+3


def test_hard_split_chars_policy():
    giant = "x" * 203
    cfg = SsaConfig(student=CapturingBackend(), chunk_units=10, policy=LengthPolicy(unit=CHARS_DIV4))
    chunks, delims = chunk_with_delimiters(giant, cfg)
    assert "".join(c + d for c, d in zip(chunks, delims)) == giant
    assert all(measure_length(c, cfg.policy) <= 10 for c in chunks)


def test_needle_is_in_exactly_one_chunk():
    examples = gen_synthetic_recall(seed=3, n_pairs=4, haystack_units=600)
    cfg = _cfg(150)
    for example in examples:
        needle = f"The code for {example.meta['key']} is {example.answer}."
        chunks = chunk_context(example.context, cfg)
        assert sum(chunk.count(needle) for chunk in chunks) == 1


def test_summarize_chunk_prompt_and_strip():
    backend = CapturingBackend(["  a note  "])
    assert summarize_chunk("CHUNK", "Q?", backend) == "a note"
    assert backend.prompts == ["CHUNK Q? Please extract a note relevant to the query:"]
    with pytest.raises(ValueError):
        summarize_chunk("", "Q?", backend)


def test_aggregate_drops_refusals():
    cfg = _cfg(10)
    assert aggregate_summaries(["a", DEFAULT_REFUSAL, "b"], cfg) == "a\n\nb"
    assert aggregate_summaries([DEFAULT_REFUSAL, DEFAULT_REFUSAL], cfg) == DEFAULT_REFUSAL
    assert aggregate_summaries(["only"], cfg) == "only"
    with pytest.raises(ValueError):
        aggregate_summaries([], cfg)


def test_aggregate_can_keep_refusals():
    cfg = _cfg(10, drop_refusals=False)
    joined = aggregate_summaries(["a", DEFAULT_REFUSAL], cfg)
    assert joined == f"a\n\n{DEFAULT_REFUSAL}"


def test_ssa_answer_end_to_end_with_honest_student():
    examples = gen_synthetic_recall(seed=5, n_pairs=3, haystack_units=900)
    cfg = _cfg(200, HonestRecallBackend())
    for example in examples:
        trace = ssa_answer(example, cfg)
        assert trace.answer == example.answer
        needle = f"The code for {example.meta['key']} is {example.answer}."
        assert trace.aggregate == needle
        assert len(trace.chunks) >= 2
        assert [c for c, _ in trace.chunks] == chunk_context(example.context, cfg)
        assert set(trace.latency_ms) == {"summarize", "answer"}


def test_ssa_answer_call_count_is_chunks_plus_one():
    examples = gen_synthetic_recall(seed=6, n_pairs=2, haystack_units=500)
    for parallelism in (1, 4):
        backend = CountingBackend(HonestRecallBackend())
        cfg = _cfg(120, backend)
        trace = ssa_answer(examples[0], cfg, parallelism=parallelism)
        assert backend.calls == len(trace.chunks) + 1


def test_ssa_answer_propagates_backend_errors():
    example = Example(id="e", context="BOOM paragraph", query="q?")
    with pytest.raises(BackendExhausted):
        ssa_answer(example, _cfg(10, FailingBackend()))


def test_ssa_answer_empty_context_is_single_call():
    backend = CountingBackend(MockBackend([MockRule("", "no idea")]))
    trace = ssa_answer(Example(id="e", context="", query="q?"), _cfg(10, backend))
    assert trace.chunks == []
    assert trace.aggregate == ""
    assert trace.answer == "no idea"
    assert backend.calls == 1


def test_direct_answer_window_controls_visibility():
    examples = gen_synthetic_recall(seed=9, n_pairs=6, haystack_units=1200)
    backend = HonestRecallBackend()
    for example in examples:
        from recallkit.corpus import truncate_text

        window = 300
        visible = f"The code for {example.meta['key']} is {example.answer}." in truncate_text(
            example.context, window, WORDS
        )
        answer = direct_answer(example, window, backend)
        if visible:
            assert answer == example.answer
        else:
            assert answer == DEFAULT_REFUSAL
    full = [direct_answer(e, 10_000, backend) for e in examples]
    assert full == [e.answer for e in examples]


def test_direct_answer_empty_context():
    backend = HonestRecallBackend()
    example = Example(id="e", context="", query="What is the code for KZZZ9?")
    assert direct_answer(example, 100, backend) == DEFAULT_REFUSAL


def test_ssa_config_validation():
    with pytest.raises(ValueError):
        SsaConfig(student=CapturingBackend(), chunk_units=0)
