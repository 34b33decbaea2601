"""Caption preprocessing: tokenization, truncation, vocabulary and id encoding.

English captions are lowercased and punctuation characters (unicode category
``P*``) become standalone tokens before a whitespace split.  Chinese captions
must arrive already segmented into words separated by whitespace; no
segmenter is bundled.
"""

from __future__ import annotations

import enum
import json
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from captionforge.errors import EmptyCorpus, IdOutOfRange, InputError

MAX_LEN = 30
MIN_COUNT = 5

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED_TOKENS = ("<pad>", "<bos>", "<eos>", "<unk>")


class Language(str, enum.Enum):
    ENGLISH = "en"
    CHINESE = "zh"

    @classmethod
    def parse(cls, value) -> "Language":
        if isinstance(value, Language):
            return value
        key = str(value).strip().lower()
        aliases = {"en": cls.ENGLISH, "english": cls.ENGLISH,
                   "zh": cls.CHINESE, "chinese": cls.CHINESE, "cn": cls.CHINESE}
        try:
            return aliases[key]
        except KeyError:
            raise InputError(f"unknown language {value!r} (expected en or zh)") from None


@dataclass(frozen=True)
class Caption:
    id: str
    tokens: tuple[str, ...]
    language: Language = Language.ENGLISH

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "language", Language.parse(self.language))


def _split_punctuation(text: str) -> str:
    out = []
    for ch in text:
        if unicodedata.category(ch).startswith("P"):
            out.append(f" {ch} ")
        else:
            out.append(ch)
    return "".join(out)


def tokenize(raw: str, language=Language.ENGLISH) -> list[str]:
    """Split a raw caption into tokens.

    >>> tokenize("A Man Jumps.")
    ['a', 'man', 'jumps', '.']
    >>> tokenize("一个 男人 跳", "zh")
    ['一个', '男人', '跳']
    """
    language = Language.parse(language)
    if language is Language.CHINESE:
        return raw.split()
    return _split_punctuation(raw.lower()).split()


def truncate(tokens: Sequence[str], max_len: int = MAX_LEN) -> list[str]:
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    return list(tokens[:max_len])


def make_caption(id: str, raw: str, language=Language.ENGLISH, max_len: int = MAX_LEN) -> Caption:
    return Caption(id, tuple(truncate(tokenize(raw, language), max_len)), Language.parse(language))


class Vocabulary:
    """Immutable token <-> id mapping with the four reserved ids first."""

    def __init__(self, tokens: Sequence[str], min_count: int = MIN_COUNT):
        tokens = list(tokens)
        if tuple(tokens[:4]) != RESERVED_TOKENS:
            raise InputError(f"vocabulary must start with the reserved tokens {RESERVED_TOKENS}")
        if len(set(tokens)) != len(tokens):
            raise InputError("vocabulary contains duplicate tokens")
        self._id_to_token = tuple(tokens)
        self._token_to_id = {t: i for i, t in enumerate(tokens)}
        self.min_count = int(min_count)

    @property
    def id_to_token(self) -> tuple[str, ...]:
        return self._id_to_token

    @property
    def token_to_id(self) -> dict[str, int]:
        return dict(self._token_to_id)

    def __len__(self):
        return len(self._id_to_token)

    def __contains__(self, token):
        return token in self._token_to_id

    def __eq__(self, other):
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return self._id_to_token == other._id_to_token and self.min_count == other.min_count

    def __hash__(self):
        return hash((self._id_to_token, self.min_count))

    def __repr__(self):
        return f"Vocabulary(size={len(self)}, min_count={self.min_count})"

    def id_of(self, token: str) -> int:
        return self._token_to_id.get(token, UNK)

    def token_of(self, idx: int) -> str:
        if not 0 <= idx < len(self._id_to_token):
            raise IdOutOfRange(f"id {idx} outside vocabulary of size {len(self)}")
        return self._id_to_token[idx]

    def to_json(self) -> dict:
        return {"min_count": self.min_count, "tokens": list(self._id_to_token)}

    @classmethod
    def from_json(cls, obj: dict) -> "Vocabulary":
        try:
            return cls(obj["tokens"], obj["min_count"])
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed vocabulary JSON: {exc}") from None

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json(), f, ensure_ascii=False, indent=1)
            f.write("\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        try:
            with open(path, encoding="utf-8") as f:
                return cls.from_json(json.load(f))
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON: {exc}") from None


def token_counts(corpus: Iterable[Caption]) -> Counter:
    counts = Counter()
    for cap in corpus:
        counts.update(cap.tokens)
    return counts


def build_vocabulary(corpus: Iterable[Caption], min_count: int = MIN_COUNT) -> Vocabulary:
    """Keep tokens seen at least ``min_count`` times.

    Ids after the reserved block are assigned by descending frequency, ties
    broken by code-point order of the token, so the result only depends on
    the multiset of captions.
    """
    counts = token_counts(corpus)
    if sum(counts.values()) == 0:
        raise EmptyCorpus("cannot build a vocabulary from a corpus with no tokens")
    kept = [t for t, c in counts.items() if c >= min_count and t not in RESERVED_TOKENS]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocabulary(list(RESERVED_TOKENS) + kept, min_count)


def encode(caption: Caption | Sequence[str], vocab: Vocabulary) -> list[int]:
    tokens = caption.tokens if isinstance(caption, Caption) else caption
    return [BOS] + [vocab.id_of(t) for t in tokens] + [EOS]


def decode_ids(ids: Iterable[int], vocab: Vocabulary) -> list[str]:
    out = []
    for i in ids:
        i = int(i)
        tok = vocab.token_of(i)
        if i in (PAD, BOS, EOS):
            continue
        out.append(tok)
    return out


def detokenize(tokens: Sequence[str]) -> str:
    # whitespace join keeps tokenize(detokenize(t)) == t for both languages
    return " ".join(tokens)
