"""Tokenization, hashed n-gram features, dictionaries, and dataset files.

A Token is a plain ``str`` with no internal whitespace; tokenize() is the only
producer. Feature ids share one integer space per dictionary: word ids occupy
[0, V), hashed n-gram ids occupy [V, V + bucket_count).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import (
    EmptyCorpusError,
    InvalidHyperparamsError,
    IoError,
    ParseError,
)

Token = str

LABEL_PREFIX = "__label__"
DEFAULT_BUCKET_COUNT = 2_000_000


def tokenize(text: str, lowercase: bool = True) -> list[Token]:
    """Split on unicode whitespace, dropping empty tokens."""
    if lowercase:
        text = text.lower()
    return text.split()


def hash_feature(data: bytes | str, bucket_count: int, vocab_size: int) -> int:
    """Map a feature byte string into [vocab_size, vocab_size + bucket_count).

    The hash is FNV-1a 32-bit over the bytes (str input is UTF-8 encoded),
    so ids are stable across runs and platforms.
    """
    if bucket_count <= 0:
        raise InvalidHyperparamsError("bucket_count must be positive")
    if isinstance(data, str):
        data = data.encode("utf-8")
    h = int(_kernels.fnv1a_bytes(np.frombuffer(data, dtype=np.uint8)))
    return vocab_size + h % bucket_count


@dataclass(frozen=True)
class Dictionary:
    """Vocabulary plus the hashed feature-space settings of one classifier."""

    words: dict[str, int]
    label_set: list[str]
    bucket_count: int = DEFAULT_BUCKET_COUNT
    minn: int = 0
    maxnn: int = 0
    word_ngram_order: int = 1
    min_count: int = 1
    lowercase: bool = True

    @property
    def vocab_size(self) -> int:
        return len(self.words)

    @property
    def feature_space_size(self) -> int:
        return len(self.words) + self.bucket_count

    def word_id_array(self, tokens: list[Token]) -> np.ndarray:
        out = np.empty(len(tokens), dtype=np.int32)
        get = self.words.get
        for i, tok in enumerate(tokens):
            out[i] = get(tok, -1)
        return out


@dataclass(frozen=True)
class FeatureVector:
    """Aggregated (feature_id, count) pairs, sorted by feature id."""

    entries: list[tuple[int, int]]

    def ids(self) -> np.ndarray:
        return np.array([fid for fid, _ in self.entries], dtype=np.int64)

    def counts(self) -> np.ndarray:
        return np.array([c for _, c in self.entries], dtype=np.int64)


@dataclass
class LabeledCorpus:
    """Ordered (label, text) examples."""

    examples: list[tuple[str, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.examples)


def sentence_arrays(tokens: list[Token]) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Flattened codepoint / byte views of a token list for the kernels.

    Codepoints cover each token wrapped in '<' '>' (char n-gram windows);
    bytes cover each raw token's UTF-8 form (word n-gram hashing).
    """
    n = len(tokens)
    cp_offs = np.zeros(n + 1, dtype=np.int64)
    byte_offs = np.zeros(n + 1, dtype=np.int64)
    wrapped = []
    raw = []
    for i, tok in enumerate(tokens):
        w = "<" + tok + ">"
        wrapped.append(w)
        b = tok.encode("utf-8")
        raw.append(b)
        cp_offs[i + 1] = cp_offs[i] + len(w)
        byte_offs[i + 1] = byte_offs[i] + len(b)
    tok_cps = np.frombuffer("".join(wrapped).encode("utf-32-le"), dtype=np.uint32)
    tok_bytes = np.frombuffer(b"".join(raw), dtype=np.uint8)
    return tok_cps, cp_offs, tok_bytes, byte_offs


def extract_features(tokens: list[Token], dictionary: Dictionary) -> FeatureVector:
    """Word ids, hashed word n-grams, and hashed char n-grams with counts.

    Unknown words contribute only their char n-grams (nothing when minn=0);
    word n-grams cover every token, known or not.
    """
    tok_cps, cp_offs, tok_bytes, byte_offs = sentence_arrays(tokens)
    word_ids = dictionary.word_id_array(tokens)
    occurrences = _kernels.featurize(
        tok_cps, cp_offs, tok_bytes, byte_offs, word_ids,
        dictionary.minn, dictionary.maxnn, dictionary.word_ngram_order,
        dictionary.vocab_size, dictionary.bucket_count,
    )
    ids, counts = np.unique(occurrences, return_counts=True)
    return FeatureVector(entries=[(int(f), int(c)) for f, c in zip(ids, counts)])


def validate_dictionary_settings(minn: int, maxnn: int, word_ngram_order: int,
                                 min_count: int, bucket_count: int) -> None:
    if not 0 <= minn <= maxnn:
        raise InvalidHyperparamsError(
            f"char n-gram bounds must satisfy 0 <= minn <= maxnn, got ({minn}, {maxnn})")
    if word_ngram_order < 1:
        raise InvalidHyperparamsError(f"word_ngram_order must be >= 1, got {word_ngram_order}")
    if min_count < 1:
        raise InvalidHyperparamsError(f"min_count must be >= 1, got {min_count}")
    if bucket_count <= 0:
        raise InvalidHyperparamsError(f"bucket_count must be positive, got {bucket_count}")


def build_dictionary(corpus: LabeledCorpus, *, minn: int = 0, maxnn: int = 0,
                     word_ngram_order: int = 1, min_count: int = 1,
                     bucket_count: int = DEFAULT_BUCKET_COUNT,
                     lowercase: bool = True) -> Dictionary:
    """Assign dense ids to frequent words and collect labels, first-seen order."""
    validate_dictionary_settings(minn, maxnn, word_ngram_order, min_count, bucket_count)
    if len(corpus) == 0:
        raise EmptyCorpusError("cannot build a dictionary from an empty corpus")
    freq: dict[str, int] = {}
    labels: dict[str, None] = {}
    for label, text in corpus.examples:
        labels.setdefault(label, None)
        for tok in tokenize(text, lowercase):
            freq[tok] = freq.get(tok, 0) + 1
    words = {}
    for tok, count in freq.items():
        if count >= min_count:
            words[tok] = len(words)
    return Dictionary(
        words=words, label_set=list(labels), bucket_count=bucket_count,
        minn=minn, maxnn=maxnn, word_ngram_order=word_ngram_order,
        min_count=min_count, lowercase=lowercase,
    )


def load_dataset(path: str) -> LabeledCorpus:
    """Parse a label-prefixed dataset file: `__label__<label> <text>` per line."""
    try:
        with open(path, "rb") as f:
            content = f.read()
    except OSError as exc:
        raise IoError(f"cannot read dataset {path}: {exc}") from exc
    try:
        text = content.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not valid UTF-8: {exc}", path=path) from exc
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    examples = []
    for lineno, line in enumerate(lines, start=1):
        if not line.startswith(LABEL_PREFIX):
            raise ParseError("line does not start with a label prefix",
                             path=path, line_number=lineno)
        head, _, body = line.partition(" ")
        label = head[len(LABEL_PREFIX):]
        if not label:
            raise ParseError("empty label", path=path, line_number=lineno)
        if body.startswith(LABEL_PREFIX):
            raise ParseError("multiple labels on one line (single-label format)",
                             path=path, line_number=lineno)
        examples.append((label, body))
    return LabeledCorpus(examples=examples)


def save_dataset(corpus: LabeledCorpus, path: str) -> None:
    """Inverse of load_dataset; round trips byte-identically."""
    try:
        with open(path, "wb") as f:
            for label, text in corpus.examples:
                f.write(f"{LABEL_PREFIX}{label} {text}\n".encode("utf-8"))
    except OSError as exc:
        raise IoError(f"cannot write dataset {path}: {exc}") from exc
