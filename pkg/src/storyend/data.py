"""Corpus ingestion, tokenization, vocabulary and batching."""

from __future__ import annotations

import csv
import json
import logging
import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

PAD, SOS, EOS, UNK, SENT_DELIM = 0, 1, 2, 3, 4
SPECIAL_TOKENS = ("<pad>", "<s>", "</s>", "<unk>", "<sep>")
DELIM_TOKEN = SPECIAL_TOKENS[SENT_DELIM]
MAX_CONTEXT_LEN = 120

ROC_COLUMNS = ("storyid", "storytitle", "sentence1", "sentence2", "sentence3", "sentence4", "sentence5")

_PUNCT = set(string.punctuation)


class CorpusError(ValueError):
    """A corpus file could not be parsed."""


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, and peel punctuation off word edges.

    Interior punctuation (``didn't``, ``u.s``) stays attached.
    """
    tokens: list[str] = []
    for chunk in text.lower().split():
        start, end = 0, len(chunk)
        while start < end and chunk[start] in _PUNCT:
            start += 1
        lead = list(chunk[:start])
        while end > start and chunk[end - 1] in _PUNCT:
            end -= 1
        tokens.extend(lead)
        if start < end:
            tokens.append(chunk[start:end])
        tokens.extend(chunk[end:])
    return tokens


def is_punct(token: str) -> bool:
    return bool(token) and all(ch in _PUNCT for ch in token)


@dataclass(frozen=True)
class StoryExample:
    story_id: str
    context_sentences: tuple[str, ...]
    target_sentence: str

    def __post_init__(self):
        if len(self.context_sentences) != 4:
            raise ValueError(f"story {self.story_id}: expected 4 context sentences, "
                             f"got {len(self.context_sentences)}")
        if not tokenize(self.target_sentence):
            raise ValueError(f"story {self.story_id}: empty ending")

    def context_words(self, max_len: int = MAX_CONTEXT_LEN) -> list[str]:
        """Context tokens with a delimiter between sentences, left-truncated to ``max_len``."""
        words: list[str] = []
        for i, sent in enumerate(self.context_sentences):
            if i:
                words.append(DELIM_TOKEN)
            words.extend(tokenize(sent))
        if len(words) > max_len:
            log.warning("story %s: context of %d tokens truncated to %d", self.story_id, len(words), max_len)
            words = words[-max_len:]
        return words

    def target_words(self) -> list[str]:
        return tokenize(self.target_sentence)


def load_corpus(path: str | Path, format: str = "rocstories-csv") -> list[StoryExample]:
    """Read ROCStories-style CSV or JSONL into StoryExamples.

    Sentences 1-4 become the context and sentence 5 the target.
    """
    path = Path(path)
    if format == "rocstories-csv":
        return _load_csv(path)
    if format == "jsonl":
        return _load_jsonl(path)
    raise CorpusError(f"unknown corpus format {format!r}")


def _load_csv(path: Path) -> list[StoryExample]:
    examples = []
    with path.open(newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            return []
        header = [h.strip().lower() for h in header]
        if tuple(header) != ROC_COLUMNS:
            raise CorpusError(f"{path}:1: expected columns {', '.join(ROC_COLUMNS)}, got {', '.join(header)}")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(ROC_COLUMNS):
                raise CorpusError(f"{path}:{line}: expected {len(ROC_COLUMNS)} columns, got {len(row)}")
            try:
                examples.append(StoryExample(row[0], tuple(row[2:6]), row[6]))
            except ValueError as exc:
                raise CorpusError(f"{path}:{line}: {exc}") from None
    return examples


def _load_jsonl(path: Path) -> list[StoryExample]:
    examples = []
    with path.open(encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                examples.append(StoryExample(str(obj["story_id"]), tuple(obj["context"]), obj["ending"]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise CorpusError(f"{path}:{line_no}: malformed record ({exc})") from None
    return examples


def write_jsonl(examples: Iterable[StoryExample], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        for ex in examples:
            f.write(json.dumps({"story_id": ex.story_id, "context": list(ex.context_sentences),
                                "ending": ex.target_sentence}) + "\n")


class Vocabulary:
    """Token/id map with corpus frequency counts.

    Specials occupy ids 0-4.  ``frequency[UNK]`` is the total count of
    tokens dropped by ``min_freq``.
    """

    def __init__(self, tokens: Sequence[str], frequency: Sequence[int]):
        if tuple(tokens[: len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise ValueError("vocabulary must start with the special tokens")
        if len(tokens) != len(frequency):
            raise ValueError("tokens and frequency differ in length")
        self.itos = list(tokens)
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate tokens in vocabulary")
        self.frequency = np.asarray(frequency, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.stoi.get(t, UNK) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in ids]

    def to_dict(self) -> dict:
        return {"tokens": self.itos, "frequency": self.frequency.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabulary":
        return cls(d["tokens"], d["frequency"])

    def __eq__(self, other) -> bool:
        return (isinstance(other, Vocabulary) and self.itos == other.itos
                and np.array_equal(self.frequency, other.frequency))


def build_vocab(examples: Sequence[StoryExample], min_freq: int = 1,
                max_context_len: int = MAX_CONTEXT_LEN) -> Vocabulary:
    """Build a vocabulary from the (training) examples.

    Retained words are ordered by descending count, then alphabetically, so
    ids do not depend on corpus order.
    """
    if not examples:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    if min_freq < 1:
        raise ValueError("min_freq must be positive")
    counts: Counter[str] = Counter()
    for ex in examples:
        counts.update(t for t in ex.context_words(max_context_len) if t != DELIM_TOKEN)
        counts.update(ex.target_words())
    for special in SPECIAL_TOKENS:
        counts.pop(special, None)
    kept = sorted((t for t, c in counts.items() if c >= min_freq), key=lambda t: (-counts[t], t))
    dropped = sum(c for t, c in counts.items() if c < min_freq)
    freq = [0] * len(SPECIAL_TOKENS)
    freq[EOS] = len(examples)
    freq[SENT_DELIM] = 3 * len(examples)
    freq[UNK] = dropped
    return Vocabulary(list(SPECIAL_TOKENS) + kept, freq + [counts[t] for t in kept])


@dataclass
class EncodedExample:
    """A story ready for the model: ids plus its keyphrase score vector."""

    story_id: str
    context_words: list[str]
    context_ids: np.ndarray
    target_ids: np.ndarray  # ends with EOS
    scores: np.ndarray  # one entry per context position
    keyphrases: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.scores) != len(self.context_ids):
            raise ValueError(f"story {self.story_id}: score vector length {len(self.scores)} "
                             f"!= context length {len(self.context_ids)}")


def encode_examples(examples: Sequence[StoryExample], vocab: Vocabulary, k: int | None = 5,
                    max_context_len: int = MAX_CONTEXT_LEN, stopwords=None) -> list[EncodedExample]:
    """Map stories to ids and attach their top-``k`` keyphrase vectors (``k=None`` keeps all)."""
    from .keyphrase import extract_keyphrases

    out = []
    for ex in examples:
        words = ex.context_words(max_context_len)
        phrases, scores = extract_keyphrases(words, k, stopwords)
        out.append(EncodedExample(
            story_id=ex.story_id,
            context_words=words,
            context_ids=np.asarray(vocab.encode(words), dtype=np.int64),
            target_ids=np.asarray(vocab.encode(ex.target_words()) + [EOS], dtype=np.int64),
            scores=scores,
            keyphrases=phrases,
        ))
    return out


@dataclass
class Batch:
    context_ids: np.ndarray  # (B, T_src), PAD-padded
    context_lengths: np.ndarray
    target_ids: np.ndarray  # (B, T_dec), PAD-padded
    target_lengths: np.ndarray
    scores: np.ndarray  # (B, T_src), zero-padded
    examples: list[EncodedExample]

    def __len__(self) -> int:
        return len(self.examples)


def collate(examples: Sequence[EncodedExample]) -> Batch:
    src_len = np.array([len(e.context_ids) for e in examples])
    tgt_len = np.array([len(e.target_ids) for e in examples])
    n = len(examples)
    src = np.full((n, src_len.max()), PAD, dtype=np.int64)
    tgt = np.full((n, tgt_len.max()), PAD, dtype=np.int64)
    scores = np.zeros((n, src_len.max()))
    for i, e in enumerate(examples):
        src[i, : src_len[i]] = e.context_ids
        tgt[i, : tgt_len[i]] = e.target_ids
        scores[i, : src_len[i]] = e.scores
    return Batch(src, src_len, tgt, tgt_len, scores, list(examples))


def make_batches(examples: Sequence[EncodedExample], batch_size: int, seed: int | None = 0) -> list[Batch]:
    """Shuffle under ``seed`` (``None`` keeps order) and pad each batch to its own max lengths."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = np.arange(len(examples))
    if seed is not None:
        order = np.random.default_rng(seed).permutation(len(examples))
    return [collate([examples[i] for i in order[s: s + batch_size]])
            for s in range(0, len(order), batch_size)]


# ---------------------------------------------------------------------------
# Synthetic corpus
# ---------------------------------------------------------------------------

_NAMES = ["tom", "anna", "mike", "sara", "james", "lucy", "peter", "emma", "david", "nora",
          "kevin", "julia", "frank", "olivia", "sam", "rita"]
_PRONOUN = {"tom": "he", "mike": "he", "james": "he", "peter": "he", "david": "he", "kevin": "he",
            "frank": "he", "sam": "he", "anna": "she", "sara": "she", "lucy": "she", "emma": "she",
            "nora": "she", "julia": "she", "olivia": "she", "rita": "she"}
_ADJECTIVES = ["red", "shiny", "old", "tiny", "wooden", "golden", "broken", "strange", "soft", "heavy",
               "blue", "fancy"]
_OBJECTS = ["bicycle", "guitar", "kite", "lamp", "puppy", "camera", "hat", "clock", "boat", "piano",
            "blanket", "telescope", "violin", "scarf", "drum", "kitten"]
_PLACES = ["market", "mall", "garage sale", "pet store", "flea market", "music shop", "antique store",
           "toy store"]
_SELLERS = ["clerk", "owner", "cashier", "vendor"]
_FEELINGS = ["excited", "nervous", "curious", "eager"]
_SPECIFIC_ENDINGS = [
    "{name} loved the {adj} {obj} forever .",
    "{name} showed the {obj} to every friend .",
    "the {adj} {obj} became {name}'s favorite thing .",
]
_GENERIC_ENDINGS = [
    "{pron} was very happy .",
    "{pron} had a great time .",
    "{pron} went home after that .",
]


def synth_corpus(seed: int, n_stories: int, generic_fraction: float = 0.5) -> list[StoryExample]:
    """Templated four-sentence stories with specific or generic endings.

    Specific endings reuse the story's object keyphrase; generic endings are
    drawn from a small shared pool.
    """
    if n_stories < 1:
        raise ValueError("n_stories must be >= 1")
    rng = np.random.default_rng(seed)
    stories = []
    for i in range(n_stories):
        name = _NAMES[rng.integers(len(_NAMES))]
        pron = _PRONOUN[name]
        adj = _ADJECTIVES[rng.integers(len(_ADJECTIVES))]
        obj = _OBJECTS[rng.integers(len(_OBJECTS))]
        place = _PLACES[rng.integers(len(_PLACES))]
        seller = _SELLERS[rng.integers(len(_SELLERS))]
        feeling = _FEELINGS[rng.integers(len(_FEELINGS))]
        context = (
            f"{name.capitalize()} wanted a {adj} {obj}.",
            f"{pron.capitalize()} felt {feeling} and went to the {place}.",
            f"The {seller} showed {name} a {adj} {obj}.",
            f"{pron.capitalize()} paid for the {obj} and took it home.",
        )
        if rng.random() < generic_fraction:
            template = _GENERIC_ENDINGS[rng.integers(len(_GENERIC_ENDINGS))]
        else:
            template = _SPECIFIC_ENDINGS[rng.integers(len(_SPECIFIC_ENDINGS))]
        ending = template.format(name=name, pron=pron, adj=adj, obj=obj)
        ending = ending[0].upper() + ending[1:]
        stories.append(StoryExample(f"synth-{seed}-{i:05d}", context, ending))
    return stories


def is_generic_ending(sentence: str) -> bool:
    words = tokenize(sentence)
    for template in _GENERIC_ENDINGS:
        for pron in ("he", "she"):
            if words == tokenize(template.format(pron=pron)):
                return True
    return False
