"""Answer-scoring metrics for recall evaluation.

Exact match and substring exact match use the usual open-domain QA
normalization: lowercase, strip punctuation, drop standalone articles,
collapse whitespace. ROUGE keeps articles: its scores are computed over
lowercased punctuation-stripped whitespace tokens so function words count
toward overlap, as standard ROUGE does.
"""

from __future__ import annotations

import logging
import string
from collections import Counter

from .backends import ChatBackend, user_exchange
from .prompts import JUDGE_TEMPLATE, parse_yes_no

log = logging.getLogger(__name__)

_ARTICLES = frozenset({"a", "an", "the"})
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)

TWO_WAY_LABELS = ("entailment", "not_entailment")


def normalize_answer(text: str) -> str:
    """Lowercase, strip punctuation, drop articles, collapse whitespace."""
    stripped = text.lower().translate(_PUNCT_TABLE)
    tokens = [t for t in stripped.split() if t not in _ARTICLES]
    return " ".join(tokens)


def exact_match(pred: str, gold: str) -> int:
    return int(normalize_answer(pred) == normalize_answer(gold))


def sub_em(pred: str, gold: str) -> int:
    """1 when the normalized gold answer occurs inside the normalized
    prediction (character-level substring; empty gold trivially matches)."""
    return int(normalize_answer(gold) in normalize_answer(pred))


def accuracy_two_way(
    pred: str,
    gold: str,
    labels: tuple[str, str] = TWO_WAY_LABELS,
    aliases: dict[str, tuple[str, ...]] | None = None,
) -> int:
    """Score a binary classification answer.

    The prediction is canonicalized to the label whose alias occurs earliest
    in the normalized text; on a shared start position the longer alias wins.
    Predictions mentioning no alias score 0 and are logged.
    """
    if gold not in labels:
        raise ValueError(f"gold label {gold!r} not in label set {labels}")
    if aliases is None:
        aliases = {label: (normalize_answer(label.replace("_", " ")),) for label in labels}
    normalized = normalize_answer(pred)
    hits = []
    for label in labels:
        for alias in aliases.get(label, ()):
            position = normalized.find(alias)
            if position >= 0:
                hits.append((position, -len(alias), label))
    if not hits:
        log.warning("unparseable two-way prediction: %r", pred)
        return 0
    hits.sort()
    return int(hits[0][2] == gold)


def _rouge_tokens(text: str) -> list[str]:
    return text.lower().translate(_PUNCT_TABLE).split()


def _ngrams(tokens: list[str], n: int) -> list[tuple[str, ...]]:
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def _overlap_f1(pred_items: list, gold_items: list) -> float:
    if not pred_items and not gold_items:
        return 1.0
    if not pred_items or not gold_items:
        return 0.0
    overlap = sum((Counter(pred_items) & Counter(gold_items)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_items)
    recall = overlap / len(gold_items)
    return 2.0 * precision * recall / (precision + recall)


def rouge_n(pred: str, gold: str, n: int) -> float:
    """Clipped n-gram overlap F1 for n in {1, 2}."""
    if n not in (1, 2):
        raise ValueError("rouge_n supports n in {1, 2}")
    return _overlap_f1(_ngrams(_rouge_tokens(pred), n), _ngrams(_rouge_tokens(gold), n))


def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[len(b)]


def rouge_l(pred: str, gold: str) -> float:
    """Longest-common-subsequence F1 over tokens."""
    pred_tokens = _rouge_tokens(pred)
    gold_tokens = _rouge_tokens(gold)
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    lcs = _lcs_length(pred_tokens, gold_tokens)
    if lcs == 0:
        return 0.0
    precision = lcs / len(pred_tokens)
    recall = lcs / len(gold_tokens)
    return 2.0 * precision * recall / (precision + recall)


def rouge_avg(pred: str, gold: str) -> float:
    """Mean of ROUGE-1, ROUGE-2 and ROUGE-L."""
    return (rouge_n(pred, gold, 1) + rouge_n(pred, gold, 2) + rouge_l(pred, gold)) / 3.0


def llm_judge(question: str, gold: str, pred: str, judge: ChatBackend, max_new: int = 64) -> int:
    """Ask a judge model whether the candidate answer matches the reference.

    Scores 1 on a first-line Yes, 0 on No; an unparseable verdict scores 0
    and is logged.
    """
    prompt = JUDGE_TEMPLATE.format(question=question, gold=gold, pred=pred)
    reply = judge.complete(user_exchange(prompt, max_new=max_new)).text
    verdict = parse_yes_no(reply)
    if verdict is None:
        log.warning("unparseable judge verdict: %r", reply)
        return 0
    return int(verdict)
