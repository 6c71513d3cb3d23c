"""Minimal lexicon scoring used to build forum fixtures.

Real deployments ingest pre-scored forum signals; this scorer only exists
so offline fixtures can carry plausible stance/sentiment values. Each
comment is classed positive, negative or neutral by counting fixed
sentiment words, and the aggregate score is (positive - negative) / total.
"""
from __future__ import annotations

import re
from typing import Iterable, Sequence

from .core import ForumSignal

POSITIVE_WORDS = frozenset(
    "support approve good great benefit growth agree favor strong useful yes".split()
)
NEGATIVE_WORDS = frozenset(
    "oppose reject bad risky harm decline disagree against weak costly no".split()
)

_WORD = re.compile(r"[a-z']+")


def classify_comment(text: str) -> int:
    """+1 positive, -1 negative, 0 neutral."""
    words = _WORD.findall(text.lower())
    pos = sum(1 for w in words if w in POSITIVE_WORDS)
    neg = sum(1 for w in words if w in NEGATIVE_WORDS)
    if pos > neg:
        return 1
    if neg > pos:
        return -1
    return 0


def lexicon_score(texts: Iterable[str]) -> tuple[float, tuple[int, int, int]]:
    """Aggregate score in [-1, 1] plus (positive, negative, neutral) counts."""
    pos = neg = neu = 0
    for text in texts:
        label = classify_comment(text)
        if label > 0:
            pos += 1
        elif label < 0:
            neg += 1
        else:
            neu += 1
    total = pos + neg + neu
    score = (pos - neg) / total if total else 0.0
    return score, (pos, neg, neu)


def signal_from_comments(
    proposal_id: str,
    url: str,
    comments: Sequence[tuple[int, str]],
) -> ForumSignal:
    """Score (timestamp, text) comments into a ForumSignal fixture."""
    ordered = sorted(comments, key=lambda c: c[0])
    score, counts = lexicon_score(text for _, text in ordered)
    return ForumSignal(
        proposal_id=proposal_id,
        url=url,
        stance_score=score,
        sentiment=score,
        comment_counts=counts,
        comment_timestamps=tuple(ts for ts, _ in ordered),
    )
