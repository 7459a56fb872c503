"""Prompt templates shared across pipeline stages, plus reply parsing."""

from __future__ import annotations

from .corpus import Paragraph

# Note-extraction prompt used both for whole-context summarization and for
# per-chunk summarization. Context and query are substituted verbatim,
# separated by single spaces.
EXTRACT_NOTE_TEMPLATE = "{context} {query} Please extract a note relevant to the query:"

VERIFY_TEMPLATE = (
    "Summary: {summary}\n"
    "Correct answer: {answer}\n"
    "Does the summary contain information consistent with the correct answer? "
    "Reply Yes or No on the first line."
)

LOCATE_INSTRUCTION = (
    "Reply with the indices of paragraphs that contain the answer, comma-separated."
)

ANSWER_TEMPLATE = "Context:\n{context}\n\nQuestion: {query}\nAnswer:"

JUDGE_TEMPLATE = (
    "Question: {question}\n"
    "Reference answer: {gold}\n"
    "Candidate answer: {pred}\n"
    "Is the candidate answer correct with respect to the reference? "
    "Reply Yes or No on the first line."
)


def render_extract_prompt(context: str, query: str) -> str:
    return EXTRACT_NOTE_TEMPLATE.format(context=context, query=query)


def render_answer_prompt(context: str, query: str) -> str:
    return ANSWER_TEMPLATE.format(context=context, query=query)


def render_locate_prompt(paragraphs: list[Paragraph], query: str, answer: str) -> str:
    """Numbered paragraph listing followed by the query, answer, and the
    comma-separated index instruction."""
    listing = "\n".join(f"{p.index}: {p.text}" for p in paragraphs)
    return f"{listing}\n\nQuery: {query}\nAnswer: {answer}\n{LOCATE_INSTRUCTION}"


def parse_yes_no(reply: str, positive: str = "yes", negative: str = "no") -> bool | None:
    """Parse a yes/no decision from the first line of a reply.

    Returns True or False only when the trimmed, lowercased first line equals
    the positive or negative token exactly; anything else returns None.
    """
    stripped = reply.strip()
    if not stripped:
        return None
    first = stripped.splitlines()[0].strip().lower()
    if first == positive:
        return True
    if first == negative:
        return False
    return None
