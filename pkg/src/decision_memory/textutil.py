"""Tokenization and overlap scores used by search ranking and fallbacks."""

from __future__ import annotations

import re
from collections.abc import Iterable

_TOKEN_RE = re.compile(r"[a-z0-9]+(?:\.[0-9]+)?")

STOPWORDS = frozenset(
    "a an the and or of in on to for with is are it its i me my need want find am looking "
    "some that this be by at from you your can please price lower than dollars".split()
)


def tokens(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def content_tokens(text: str) -> set[str]:
    return {t for t in tokens(text) if t not in STOPWORDS}


def overlap(a: Iterable[str] | str, b: Iterable[str] | str) -> int:
    sa = content_tokens(a) if isinstance(a, str) else set(a)
    sb = content_tokens(b) if isinstance(b, str) else set(b)
    return len(sa & sb)


def jaccard(a: str, b: str) -> float:
    sa, sb = content_tokens(a), content_tokens(b)
    if not sa and not sb:
        return 1.0
    return len(sa & sb) / len(sa | sb)


def best_by_overlap(query: str, names: Iterable[tuple[int, str]]) -> int:
    """Id whose name shares the most tokens with ``query``; lowest id on ties."""
    q = content_tokens(query)
    best_id, best_score = None, -1
    for type_id, name in sorted(names):
        score = len(q & content_tokens(name))
        if score > best_score:
            best_id, best_score = type_id, score
    if best_id is None:
        raise ValueError("no candidates")
    return best_id
