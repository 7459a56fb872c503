"""Core data model: examples, training records, paragraph segmentation,
length accounting, truncation, and JSONL persistence.

Contexts are segmented on blank lines (two or more consecutive newlines).
Segmentation records the exact delimiter runs between paragraphs so the
original text can be reconstructed byte-for-byte; chunked inference and
paragraph excision both rely on that guarantee.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import ClassVar

# Canonical refusal for unanswerable contexts. Kept verbatim, including the
# grammar slip, because trained models are expected to emit it exactly.
DEFAULT_REFUSAL = "There is no enough information here."

WHITESPACE_WORDS = "whitespace_words"
CHARS_DIV4 = "chars_div4"
LENGTH_UNITS = (WHITESPACE_WORDS, CHARS_DIV4)

SOURCE_BASE = "base"
SOURCE_VALID_COT = "valid_cot"
SOURCE_EMPTY_COT = "empty_cot"
RECORD_SOURCES = (SOURCE_BASE, SOURCE_VALID_COT, SOURCE_EMPTY_COT)

_DELIM_RE = re.compile(r"(\n{2,})")
_WORD_RE = re.compile(r"\S+")


class ParseError(Exception):
    """A JSONL line that cannot be parsed or validated."""

    def __init__(self, message: str, line: int = 0):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


class QueryTooLong(Exception):
    """The query alone exceeds the length budget, so truncation cannot help."""


def _require_str(data: dict, key: str) -> str:
    if key not in data:
        raise ValueError(f"missing field {key!r}")
    value = data[key]
    if not isinstance(value, str):
        raise ValueError(f"field {key!r} must be a string")
    return value


@dataclass
class Example:
    """One (context, query, answer) triple; the unit of raw corpus data.

    The answer may be empty for unlabeled inference inputs. ``meta`` is a
    free-form string-to-string map; evaluation uses the ``task`` key to bind
    each example to a metric.
    """

    id: str
    context: str
    query: str
    answer: str = ""
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("example id must be non-empty")
        if not self.query:
            raise ValueError(f"example {self.id!r}: query must be non-empty")

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "context": self.context,
            "query": self.query,
            "answer": self.answer,
            "meta": dict(self.meta),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "Example":
        meta = data.get("meta", {})
        if not isinstance(meta, dict):
            raise ValueError("field 'meta' must be an object")
        return cls(
            id=_require_str(data, "id"),
            context=_require_str(data, "context"),
            query=_require_str(data, "query"),
            answer=str(data.get("answer", "")),
            meta={str(k): str(v) for k, v in meta.items()},
        )


@dataclass(frozen=True)
class Paragraph:
    """A context paragraph with its position in segmentation order."""

    index: int
    text: str


@dataclass(frozen=True)
class SummaryLabel:
    """A teacher summary plus its kind: a verified valid summary, or the
    canonical refusal used for unanswerable contexts."""

    kind: str
    text: str
    verified: bool = False

    VALID: ClassVar[str] = "valid"
    EMPTY: ClassVar[str] = "empty"

    def __post_init__(self) -> None:
        if self.kind not in (self.VALID, self.EMPTY):
            raise ValueError(f"unknown summary kind {self.kind!r}")
        if self.kind == self.VALID and not self.text:
            raise ValueError("a valid summary must have non-empty text")

    @classmethod
    def valid(cls, text: str, verified: bool = True) -> "SummaryLabel":
        return cls(cls.VALID, text, verified)

    @classmethod
    def empty(cls, refusal: str = DEFAULT_REFUSAL) -> "SummaryLabel":
        return cls(cls.EMPTY, refusal, False)

    def is_empty(self) -> bool:
        return self.kind == self.EMPTY


@dataclass
class TrainingRecord:
    """A rendered fine-tuning pair ready for JSONL serialization."""

    id: str
    source: str
    input_text: str
    target_text: str

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("training record id must be non-empty")
        if self.source not in RECORD_SOURCES:
            raise ValueError(f"unknown record source {self.source!r}")

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "source": self.source,
            "input_text": self.input_text,
            "target_text": self.target_text,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "TrainingRecord":
        return cls(
            id=_require_str(data, "id"),
            source=_require_str(data, "source"),
            input_text=_require_str(data, "input_text"),
            target_text=_require_str(data, "target_text"),
        )


@dataclass(frozen=True)
class LengthPolicy:
    """How text length is measured and the per-example budget.

    ``whitespace_words`` counts maximal non-whitespace runs; ``chars_div4``
    approximates tokens as ceil(utf-8 bytes / 4).
    """

    unit: str = WHITESPACE_WORDS
    max_units: int = 6000

    def __post_init__(self) -> None:
        if self.unit not in LENGTH_UNITS:
            raise ValueError(f"unknown length unit {self.unit!r}")
        if self.max_units < 1:
            raise ValueError("max_units must be positive")


def measure_length(text: str, policy: LengthPolicy) -> int:
    """Measure ``text`` in the policy's units."""
    if policy.unit == WHITESPACE_WORDS:
        return len(_WORD_RE.findall(text))
    return (len(text.encode("utf-8")) + 3) // 4


def segment_with_delimiters(context: str) -> tuple[list[Paragraph], list[str]]:
    """Split ``context`` on blank-line runs, keeping the delimiters.

    Returns (paragraphs, delimiters) where delimiters[i] is the exact
    newline run that followed paragraph i (empty for the last one), so
    ``join_segments`` reconstructs the input byte-for-byte.
    """
    if context == "":
        return [], []
    pieces = _DELIM_RE.split(context)
    texts = pieces[0::2]
    delimiters = pieces[1::2] + [""]
    paragraphs = [Paragraph(i, t) for i, t in enumerate(texts)]
    return paragraphs, delimiters


def segment_paragraphs(context: str) -> list[Paragraph]:
    """Split ``context`` into paragraphs at blank-line boundaries."""
    return segment_with_delimiters(context)[0]


def join_segments(paragraphs: list[Paragraph], delimiters: list[str]) -> str:
    if len(paragraphs) != len(delimiters):
        raise ValueError("paragraph and delimiter counts must match")
    return "".join(p.text + d for p, d in zip(paragraphs, delimiters))


def hard_cut(text: str, budget: int, policy: LengthPolicy) -> str:
    """Maximal prefix of ``text`` measuring at most ``budget`` units.

    The result is a literal prefix: original whitespace inside it is kept so
    that cut pieces concatenate back to the input.
    """
    if budget <= 0:
        return ""
    if policy.unit == WHITESPACE_WORDS:
        spans = list(_WORD_RE.finditer(text))
        if len(spans) <= budget:
            return text
        return text[: spans[budget - 1].end()]
    raw = text.encode("utf-8")
    if len(raw) <= budget * 4:
        return text
    return raw[: budget * 4].decode("utf-8", errors="ignore")


def truncate_text(text: str, budget: int, policy: LengthPolicy) -> str:
    """Cut ``text`` from the tail to at most ``budget`` units.

    Prefers the longest prefix of whole paragraphs; if even the first
    paragraph does not fit, falls back to a hard mid-paragraph cut.
    """
    if measure_length(text, policy) <= budget:
        return text
    paragraphs, delimiters = segment_with_delimiters(text)
    best = 0
    for k in range(1, len(paragraphs) + 1):
        candidate = join_segments(paragraphs[:k], delimiters[: k - 1] + [""])
        if measure_length(candidate, policy) <= budget:
            best = k
        else:
            break
    if best == 0:
        return hard_cut(text, budget, policy)
    return join_segments(paragraphs[:best], delimiters[: best - 1] + [""])


def truncate_example(example: Example, policy: LengthPolicy) -> Example:
    """Fit ``example`` into ``policy.max_units``, cutting only the context.

    Raises QueryTooLong when the query alone leaves no room for context.
    """
    query_units = measure_length(example.query, policy)
    if query_units >= policy.max_units:
        raise QueryTooLong(
            f"example {example.id!r}: query measures {query_units} units "
            f"against a budget of {policy.max_units}"
        )
    context_units = measure_length(example.context, policy)
    if context_units + query_units <= policy.max_units:
        return example
    budget = policy.max_units - query_units
    return replace(example, context=truncate_text(example.context, budget, policy))


def read_jsonl(path: str | Path, record_type: type = Example) -> list:
    """Read Example or TrainingRecord rows from a JSONL file.

    Blank lines are skipped. Malformed lines raise ParseError carrying the
    1-based line number; I/O failures surface as the usual OSError.
    """
    path = Path(path)
    records = []
    seen_ids: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as err:
                raise ParseError(f"invalid JSON: {err.msg}", lineno) from err
            if not isinstance(data, dict):
                raise ParseError("expected a JSON object", lineno)
            try:
                record = record_type.from_json_dict(data)
            except (ValueError, TypeError) as err:
                raise ParseError(str(err), lineno) from err
            if record_type is Example:
                if record.id in seen_ids:
                    raise ParseError(f"duplicate id {record.id!r}", lineno)
                seen_ids.add(record.id)
            records.append(record)
    return records


def write_jsonl(records: list, path: str | Path) -> None:
    """Write records as one JSON object per line, UTF-8, fixed key order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json_dict(), ensure_ascii=False) + "\n")
