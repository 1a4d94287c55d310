"""RAKE keyphrase extraction and the positional keyphrase score vector."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import DELIM_TOKEN, is_punct

STOPWORDS_VERSION = "en-1"

# Pinned English stopword list; changing it changes every score vector, so bump STOPWORDS_VERSION.
STOPWORDS = frozenset("""
a about above after again against all am an and any are aren't as at be because been before
being below between both but by can can't cannot could couldn't did didn't do does doesn't doing
don't down during each few for from further had hadn't has hasn't have haven't having he he'd
he'll he's her here here's hers herself him himself his how how's i i'd i'll i'm i've if in into
is isn't it it's its itself just let's me more most mustn't my myself no nor not now of off on
once only or other ought our ours ourselves out over own same shan't she she'd she'll she's
should shouldn't so some such than that that's the their theirs them themselves then there
there's these they they'd they'll they're they've this those through to too under until up very
was wasn't we we'd we'll we're we've were weren't what what's when when's where where's which
while who who's whom why why's will with won't would wouldn't you you'd you'll you're you've
your yours yourself yourselves also went got get go going one would
""".split())


@dataclass
class KeyphraseCandidate:
    tokens: tuple[str, ...]
    positions: list[tuple[int, int]] = field(default_factory=list)  # half-open spans
    score: float = 0.0
    raw_score: float = 0.0  # RAKE score before normalization

    @property
    def text(self) -> str:
        return " ".join(self.tokens)

    @property
    def first_position(self) -> int:
        return self.positions[0][0]


def _is_boundary(token: str, stopwords) -> bool:
    return token == DELIM_TOKEN or token in stopwords or is_punct(token)


def rake_extract(context_tokens: Sequence[str], stopwords=STOPWORDS) -> list[KeyphraseCandidate]:
    """Score maximal stopword- and punctuation-free runs with RAKE.

    word score = degree / frequency, where degree sums the lengths of the
    candidate occurrences containing the word; phrase score = sum of its
    word scores.  Candidates are returned in order of first occurrence.
    """
    runs: list[tuple[int, int]] = []
    start = None
    for i, tok in enumerate(context_tokens):
        if _is_boundary(tok, stopwords):
            if start is not None:
                runs.append((start, i))
                start = None
        elif start is None:
            start = i
    if start is not None:
        runs.append((start, len(context_tokens)))

    freq: dict[str, int] = defaultdict(int)
    degree: dict[str, int] = defaultdict(int)
    phrases: dict[tuple[str, ...], KeyphraseCandidate] = {}
    for s, e in runs:
        words = tuple(context_tokens[s:e])
        for w in words:
            freq[w] += 1
            degree[w] += len(words)
        phrases.setdefault(words, KeyphraseCandidate(words)).positions.append((s, e))

    word_score = {w: degree[w] / freq[w] for w in freq}
    for cand in phrases.values():
        cand.score = cand.raw_score = float(sum(word_score[w] for w in cand.tokens))
    return list(phrases.values())


def top_k_normalize(candidates: Sequence[KeyphraseCandidate], k: int | None) -> list[KeyphraseCandidate]:
    """Keep the ``k`` best-scoring candidates and rescale their scores to sum to 1.

    Ties go to the earlier first occurrence.  ``k=None`` keeps everything.
    """
    if k is not None and k < 1:
        raise ValueError("k must be >= 1")
    ranked = sorted(candidates, key=lambda c: (-c.score, c.first_position))
    kept = ranked if k is None else ranked[:k]
    total = sum(c.score for c in kept)
    if total <= 0:
        return []
    return [KeyphraseCandidate(c.tokens, list(c.positions), c.score / total, c.raw_score) for c in kept]


def _occurrences(context_tokens: Sequence[str], phrase: tuple[str, ...]) -> list[tuple[int, int]]:
    m = len(phrase)
    return [(i, i + m) for i in range(len(context_tokens) - m + 1)
            if tuple(context_tokens[i:i + m]) == phrase]


def build_score_vector(context_tokens: Sequence[str], retained: Sequence[KeyphraseCandidate]) -> np.ndarray:
    """Per-position score: the normalized score of the retained phrase covering it, else 0.

    Every occurrence of a retained phrase's token sequence counts, including
    occurrences nested inside a longer candidate.  Overlaps take the maximum.
    """
    n = len(context_tokens)
    p = np.zeros(n)
    for cand in retained:
        for s, e in cand.positions:
            if s < 0 or e > n or s >= e:
                raise IndexError(f"phrase {cand.text!r} span ({s}, {e}) outside context of length {n}")
        for s, e in set(cand.positions) | set(_occurrences(context_tokens, cand.tokens)):
            p[s:e] = np.maximum(p[s:e], cand.score)
    return p


def extract_keyphrases(context_tokens: Sequence[str], k: int | None = 5,
                       stopwords=None) -> tuple[list[KeyphraseCandidate], np.ndarray]:
    """Top-k normalized keyphrases and their score vector for one context."""
    cands = rake_extract(context_tokens, STOPWORDS if stopwords is None else stopwords)
    kept = top_k_normalize(cands, k)
    return kept, build_score_vector(context_tokens, kept)
