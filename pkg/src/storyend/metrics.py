"""Diversity metrics and pairwise ending comparison."""

from __future__ import annotations

import importlib
import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .data import StoryExample, Vocabulary, encode_examples, tokenize
from .decode import DecodeConfig, greedy_decode
from .keyphrase import STOPWORDS
from .model import ModelConfig, Params


@dataclass
class Generation:
    story_id: str
    context: list[str]  # context tokens
    ending: list[str]  # generated tokens
    reference: list[str] | None = None
    keyphrases: list[str] = field(default_factory=list)


class GenerationSet(list):
    """A list of :class:`Generation` records with unique story ids."""

    def __init__(self, records: Iterable[Generation] = ()):
        super().__init__(records)
        ids = [g.story_id for g in self]
        if len(set(ids)) != len(ids):
            raise ValueError("story ids in a generation set must be unique")

    def endings(self) -> list[list[str]]:
        return [g.ending for g in self]


class GenerationFileError(ValueError):
    pass


def write_generations(gens: Sequence[Generation], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as f:
        for g in gens:
            rec = {"story_id": g.story_id, "context": " ".join(g.context),
                   "ending": " ".join(g.ending), "keyphrases": g.keyphrases}
            if g.reference is not None:
                rec["reference"] = " ".join(g.reference)
            f.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")


def read_generations(path: str | Path) -> GenerationSet:
    records = []
    with Path(path).open(encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                ref = obj.get("reference")
                records.append(Generation(
                    story_id=str(obj["story_id"]),
                    context=obj["context"].split(),
                    ending=obj["ending"].split(),
                    reference=ref.split() if ref is not None else None,
                    keyphrases=list(obj.get("keyphrases", [])),
                ))
            except (json.JSONDecodeError, KeyError, AttributeError, TypeError) as exc:
                raise GenerationFileError(f"{path}:{line_no}: malformed record ({exc})") from None
    try:
        return GenerationSet(records)
    except ValueError as exc:
        raise GenerationFileError(f"{path}: {exc}") from None


@dataclass
class DistinctResult:
    n: int
    ratio: float
    distinct: int
    total: int
    empty: bool  # no n-grams at all; ratio reported as 0


def ngrams(tokens: Sequence[str], n: int) -> list[tuple[str, ...]]:
    return [tuple(tokens[i: i + n]) for i in range(len(tokens) - n + 1)]


def distinct_n(generations, n: int) -> DistinctResult:
    """Corpus-level distinct-n: unique n-grams pooled over all endings / total n-grams."""
    if n not in (1, 2, 3):
        raise ValueError("n must be 1, 2 or 3")
    endings = generations.endings() if isinstance(generations, GenerationSet) else generations
    counts: Counter = Counter()
    for ending in endings:
        counts.update(ngrams(ending, n))
    total = sum(counts.values())
    if total == 0:
        return DistinctResult(n, 0.0, 0, 0, True)
    return DistinctResult(n, len(counts) / total, len(counts), total, False)


@dataclass
class EvalReport:
    dist1: float
    dist2: float
    dist3: float
    counts: dict[int, dict[str, int]]
    win_rate: float | None = None
    comparisons: int | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["counts"] = {str(k): v for k, v in self.counts.items()}
        return d


def diversity_report(generations) -> EvalReport:
    results = {n: distinct_n(generations, n) for n in (1, 2, 3)}
    counts = {n: {"distinct": r.distinct, "total": r.total} for n, r in results.items()}
    return EvalReport(results[1].ratio, results[2].ratio, results[3].ratio, counts)


def generate_endings(params: Params, config: ModelConfig, corpus: Sequence[StoryExample], vocab: Vocabulary,
                     decode_config: DecodeConfig | None = None, k: int | None = 5,
                     max_context_len: int = 120) -> GenerationSet:
    decode_config = decode_config or DecodeConfig()
    gens = []
    for story, enc in zip(corpus, encode_examples(corpus, vocab, k, max_context_len)):
        ids = greedy_decode(params, config, enc.context_ids, enc.scores, decode_config)
        gens.append(Generation(
            story_id=story.story_id,
            context=enc.context_words,
            ending=vocab.decode(ids),
            reference=story.target_words(),
            keyphrases=[c.text for c in enc.keyphrases],
        ))
    return GenerationSet(gens)


def evaluate_model(params: Params, config: ModelConfig, corpus: Sequence[StoryExample], vocab: Vocabulary,
                   decode_config: DecodeConfig | None = None, k: int | None = 5) -> EvalReport:
    """Generate one ending per story and report DIST-1/2/3."""
    if not corpus:
        raise ValueError("corpus must be non-empty")
    return diversity_report(generate_endings(params, config, corpus, vocab, decode_config, k))


def keyphrase_sweep(params: Params, config: ModelConfig, corpus: Sequence[StoryExample], vocab: Vocabulary,
                    ks: Sequence[int | None] = (1, 3, 5, 7, None),
                    decode_config: DecodeConfig | None = None) -> list[dict]:
    """DIST-1/2/3 for each keyphrase count; ``None`` means all phrases."""
    rows = []
    for k in ks:
        report = evaluate_model(params, config, corpus, vocab, decode_config, k)
        rows.append({"k": "all" if k is None else k, "dist1": report.dist1,
                     "dist2": report.dist2, "dist3": report.dist3})
    return rows


def format_sweep(rows: Sequence[dict]) -> str:
    lines = [f"{'keyphrases':>10}  {'DIST-1':>7}  {'DIST-2':>7}  {'DIST-3':>7}"]
    for r in rows:
        lines.append(f"{str(r['k']):>10}  {r['dist1']:7.3f}  {r['dist2']:7.3f}  {r['dist3']:7.3f}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Pairwise comparison
# ---------------------------------------------------------------------------

Comparator = Callable[[Sequence[str], Sequence[str], Sequence[str]], str]


class ComparatorError(RuntimeError):
    pass


def _content_words(tokens: Iterable[str]) -> set[str]:
    return {t for t in tokens if t not in STOPWORDS and any(ch.isalnum() for ch in t)}


def overlap_comparator(context: Sequence[str], ending_a: Sequence[str], ending_b: Sequence[str]) -> str:
    """Prefer the ending sharing more distinct content words with the context; ties go to A."""
    ctx = _content_words(context)
    a = len(_content_words(ending_a) & ctx)
    b = len(_content_words(ending_b) & ctx)
    return "B" if b > a else "A"


def load_comparator(spec: str | None) -> Comparator:
    """Resolve ``"module:function"``; ``None`` or ``"overlap"`` gives the built-in comparator."""
    if spec in (None, "", "overlap"):
        return overlap_comparator
    module, _, attr = spec.partition(":")
    if not attr:
        raise ValueError(f"comparator must look like module:function, got {spec!r}")
    return getattr(importlib.import_module(module), attr)


def compare_endings(comparator: Comparator, context, ending_a, ending_b, story_id: str | None = None) -> str:
    if isinstance(context, str):
        context = tokenize(context)
    if not ending_a or not ending_b:
        raise ValueError(f"story {story_id}: both endings must be non-empty")
    try:
        winner = comparator(context, ending_a, ending_b)
    except Exception as exc:
        raise ComparatorError(f"comparator failed on story {story_id}: {exc}") from exc
    if winner not in ("A", "B"):
        raise ComparatorError(f"comparator returned {winner!r} for story {story_id}; expected 'A' or 'B'")
    return winner


def win_rate(first: GenerationSet, second: GenerationSet, comparator: Comparator = overlap_comparator) -> tuple[float, int]:
    """Fraction of shared stories where ``first`` wins.

    Presentation order alternates by story so a position-biased comparator
    cannot favour either set.  Stories where either ending is empty count as
    a win for the non-empty one (or are skipped when both are empty).
    """
    others = {g.story_id: g for g in second}
    wins = 0
    total = 0
    for g in first:
        h = others.get(g.story_id)
        if h is None:
            continue
        if not g.ending or not h.ending:
            if g.ending or h.ending:
                wins += bool(g.ending)
                total += 1
            continue
        if total % 2 == 0:
            wins += compare_endings(comparator, g.context, g.ending, h.ending, g.story_id) == "A"
        else:
            wins += compare_endings(comparator, g.context, h.ending, g.ending, g.story_id) == "B"
        total += 1
    return (wins / total if total else 0.0), total
