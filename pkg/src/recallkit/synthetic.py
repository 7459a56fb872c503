"""Deterministic needle-in-a-haystack corpus generator for offline tests."""

from __future__ import annotations

import random

from .corpus import Example, LengthPolicy, measure_length

NEEDLE_TEMPLATE = "The code for {key} is {value}."
QUERY_TEMPLATE = "What is the code for {key}?"

_FILLER_WORDS = (
    "records", "beside", "window", "gentle", "harbor", "system", "quietly",
    "meadow", "copper", "signal", "branch", "evening", "method", "garden",
    "lantern", "observe", "station", "ribbon", "current", "handle", "valley",
    "mirror", "pattern", "shelter", "timber", "basket",
    "journey", "whisper", "margin", "stable", "corner", "feature",
)
_CODE_CHARS = "ABCDEFGHJKMNPQRSTUVWXYZ"
_CODE_DIGITS = "23456789"
_FILLER_PARA_WORDS = 50


def _fresh_code(rng: random.Random, length: int, used: set[str]) -> str:
    """A distinct alphanumeric code containing at least one digit, so it can
    never collide with alphabetic filler after normalization."""
    while True:
        body = [rng.choice(_CODE_CHARS + _CODE_DIGITS) for _ in range(length - 1)]
        code = "".join(body) + rng.choice(_CODE_DIGITS)
        if code not in used:
            used.add(code)
            return code


def gen_synthetic_recall(
    seed: int,
    n_pairs: int,
    haystack_units: int,
    policy: LengthPolicy | None = None,
) -> list[Example]:
    """Generate one haystack document with ``n_pairs`` needle sentences and
    an Example per needle.

    All examples share the same context; each one's meta records its task
    tag, key, and the paragraph index of its needle. Needle positions are
    drawn uniformly over the paragraph slots, values are distinct
    same-length codes, and every answer occurs exactly once in the context.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be positive")
    policy = policy or LengthPolicy()
    rng = random.Random(seed)

    used: set[str] = set()
    keys = ["K" + _fresh_code(rng, 4, used) for _ in range(n_pairs)]
    values = [_fresh_code(rng, 6, used) for _ in range(n_pairs)]
    needles = [NEEDLE_TEMPLATE.format(key=k, value=v) for k, v in zip(keys, values)]

    needles_only = "\n\n".join(needles)
    if measure_length(needles_only, policy) > haystack_units:
        raise ValueError("haystack_units too small for the requested needle count")

    def doc_measure(filler: list[str]) -> int:
        return measure_length("\n\n".join(filler + needles), policy)

    fillers: list[str] = []
    while doc_measure(fillers) < haystack_units:
        words = [rng.choice(_FILLER_WORDS) for _ in range(_FILLER_PARA_WORDS)]
        fillers.append(" ".join(words))
    while fillers and doc_measure(fillers) > haystack_units:
        words = fillers[-1].split()
        words.pop()
        if words:
            fillers[-1] = " ".join(words)
        else:
            fillers.pop()

    total_slots = len(fillers) + n_pairs
    needle_slots = sorted(rng.sample(range(total_slots), n_pairs))
    slot_to_needle = {slot: i for i, slot in enumerate(needle_slots)}
    parts: list[str] = []
    filler_iter = iter(fillers)
    for slot in range(total_slots):
        if slot in slot_to_needle:
            parts.append(needles[slot_to_needle[slot]])
        else:
            parts.append(next(filler_iter))
    context = "\n\n".join(parts)

    examples = []
    for i in range(n_pairs):
        examples.append(
            Example(
                id=f"sr-{seed}-{i:04d}",
                context=context,
                query=QUERY_TEMPLATE.format(key=keys[i]),
                answer=values[i],
                meta={
                    "task": "synthetic_recall",
                    "key": keys[i],
                    "needle_paragraph": str(needle_slots[i]),
                },
            )
        )
    return examples
