"""Ensemble sentence encoder, cosine similarity, and the baseline encoder.

The ensemble encoder averages the sentence embeddings of N classifiers into
one vector; two sentences count as semantics-preserving when the cosine of
their encodings strictly exceeds the threshold epsilon. A mean-pooled static
word-vector encoder with the same interface serves as the comparison baseline.
"""

from __future__ import annotations

import warnings
from typing import Protocol, runtime_checkable

import numpy as np

from . import _kernels
from .errors import (
    DegenerateEmbeddingWarning,
    DimensionMismatchError,
    EmptyEnsembleError,
    FormatError,
    InvalidEpsilonError,
    IoError,
)
from .quantization import QuantizedModel
from .text_pipeline import tokenize

DEFAULT_EPSILON = 0.95

_TOKEN_CACHE_CAP = 200_000


@runtime_checkable
class SentenceEncoderInterface(Protocol):
    """Anything with a deterministic encode(text) -> fixed-dim vector."""

    name: str
    dim: int

    def encode(self, text: str) -> np.ndarray: ...


class _EnsembleRuntime:
    """Fused encode path over an all-quantized ensemble.

    Member matrices, configs, and remap tables are packed into flat arrays so
    one kernel call covers all members. Per-token float64 subtotals are
    memoized in a growable row matrix keyed by a token registry (bounded,
    reset when full) since they depend only on the token. Memoizing the exact
    f64 subtotal keeps cached and uncached encodes bit-identical.
    """

    def __init__(self, members: list[QuantizedModel]):
        n = len(members)
        self.n_members = n
        self.dim = members[0].dim
        self.lowercase = members[0].dictionary.lowercase
        self.minns = np.array([m.dictionary.minn for m in members], dtype=np.int64)
        self.maxns = np.array([m.dictionary.maxnn for m in members], dtype=np.int64)
        self.orders = np.array([m.dictionary.word_ngram_order for m in members], dtype=np.int64)
        self.buckets = np.array([m.dictionary.bucket_count for m in members], dtype=np.int64)
        self.vocabs = np.array([m.dictionary.vocab_size for m in members], dtype=np.int64)
        self.words = [m.dictionary.words for m in members]
        mats = [m.decoded_rows() for m in members]
        self.row_offs = np.zeros(n + 1, dtype=np.int64)
        for i, mat in enumerate(mats):
            self.row_offs[i + 1] = self.row_offs[i] + mat.shape[0]
        self.mats_flat = np.concatenate(mats, axis=0)
        self.use_remap = np.ones(n, dtype=np.uint8)
        rks, rvs = [], []
        self.t_offs = np.zeros(n + 1, dtype=np.int64)
        for i, m in enumerate(members):
            table = 2
            while table <= 2 * m.retained_ids.shape[0]:
                table *= 2
            rk, rv = _kernels.build_remap_table(m.retained_ids, table)
            rks.append(rk)
            rvs.append(rv)
            self.t_offs[i + 1] = self.t_offs[i] + table
        self.rk = np.concatenate(rks)
        self.rv = np.concatenate(rvs)
        self._width = n * self.dim + n
        self._tok_ids: dict[str, int] = {}
        self._cache = np.empty((1024, self._width), dtype=np.float64)
        # Byte-keyed mirror of _tok_ids for ASCII tokens, so whole ASCII
        # sentences encode in one kernel call without touching Python dicts.
        self._table = np.zeros(1 << 19, dtype=np.int64)
        self._blob = np.empty(1 << 22, dtype=np.uint8)
        self._blob_offs = np.zeros(_TOKEN_CACHE_CAP, dtype=np.int64)
        self._blob_lens = np.zeros(_TOKEN_CACHE_CAP, dtype=np.int64)
        self._blob_used = 0
        self._gen = 0

    def _token_id(self, token: str) -> int:
        tid = self._tok_ids.get(token)
        if tid is not None:
            return tid
        n = self.n_members
        wrapped = "<" + token + ">"
        tok_cps = np.frombuffer(wrapped.encode("utf-32-le"), dtype=np.uint32)
        cp_offs = np.array([0, len(wrapped)], dtype=np.int64)
        word_ids = np.empty((1, n), dtype=np.int32)
        for m in range(n):
            word_ids[0, m] = self.words[m].get(token, -1)
        partials = np.empty((1, n, self.dim), dtype=np.float64)
        hits = np.empty((1, n), dtype=np.int64)
        _kernels.token_partials(tok_cps, cp_offs, word_ids, self.minns, self.maxns,
                                self.buckets, self.vocabs, self.mats_flat,
                                self.row_offs, self.use_remap, self.rk, self.rv,
                                self.t_offs, partials, hits)
        if len(self._tok_ids) >= _TOKEN_CACHE_CAP:
            self._tok_ids.clear()
            self._table.fill(0)
            self._blob_used = 0
            self._gen += 1
        tid = len(self._tok_ids)
        if tid >= self._cache.shape[0]:
            grown = np.empty((2 * self._cache.shape[0], self._width), np.float64)
            grown[:self._cache.shape[0]] = self._cache
            self._cache = grown
        self._cache[tid, :n * self.dim] = partials[0].ravel()
        self._cache[tid, n * self.dim:] = hits[0]
        self._tok_ids[token] = tid
        if token.isascii():
            tb = np.frombuffer(token.encode("ascii"), dtype=np.uint8)
            if self._blob_used + tb.shape[0] > self._blob.shape[0]:
                grown = np.empty(2 * self._blob.shape[0], dtype=np.uint8)
                grown[:self._blob_used] = self._blob[:self._blob_used]
                self._blob = grown
            self._blob_used = _kernels.ascii_cache_insert(
                self._table, self._blob, self._blob_offs, self._blob_lens,
                self._blob_used, tid, tb)
        return tid

    def _encode_ascii(self, sbytes: np.ndarray) -> tuple[np.ndarray, bool]:
        return _kernels.encode_ascii(sbytes, self._table, self._blob,
                                     self._blob_offs, self._blob_lens,
                                     self._cache, self.orders, self.buckets,
                                     self.vocabs, self.mats_flat, self.row_offs,
                                     self.use_remap, self.rk, self.rv,
                                     self.t_offs)

    def encode_mean(self, text: str) -> np.ndarray:
        if self.lowercase:
            text = text.lower()
        if text.isascii():
            sbytes = np.frombuffer(text.encode("ascii"), dtype=np.uint8)
            out, ok = self._encode_ascii(sbytes)
            while not ok:
                for token in text.split():
                    self._token_id(token)
                out, ok = self._encode_ascii(sbytes)
            return out
        tokens = tokenize(text, lowercase=False)
        n = len(tokens)
        ids = np.empty(n, dtype=np.int64)
        while True:
            # A registry reset mid-sentence reassigns rows, so earlier ids
            # may point at overwritten cache rows; redo them in that case.
            gen = self._gen
            for i, t in enumerate(tokens):
                ids[i] = self._token_id(t)
            if self._gen == gen:
                break
        raw = [t.encode("utf-8") for t in tokens]
        byte_offs = np.zeros(n + 1, dtype=np.int64)
        for i, b in enumerate(raw):
            byte_offs[i + 1] = byte_offs[i] + len(b)
        tok_bytes = np.frombuffer(b"".join(raw), dtype=np.uint8)
        return _kernels.combine_cached(self._cache, ids, tok_bytes, byte_offs,
                                       self.orders, self.buckets, self.vocabs,
                                       self.mats_flat, self.row_offs,
                                       self.use_remap, self.rk, self.rv,
                                       self.t_offs)


class SpeEncoder:
    """Ordered classifier ensemble encoding sentences as the members' mean."""

    name = "spe"

    def __init__(self, classifiers: list, epsilon: float = DEFAULT_EPSILON,
                 _validated: bool = False):
        if not _validated:
            _validate_members(classifiers, epsilon)
        self.classifiers = list(classifiers)
        self.epsilon = float(epsilon)
        self.dim = int(classifiers[0].dim)
        self._runtime: _EnsembleRuntime | None = None
        if all(isinstance(m, QuantizedModel) for m in classifiers) and classifiers:
            lowercase_flags = {m.dictionary.lowercase for m in classifiers}
            if len(lowercase_flags) == 1:
                self._runtime = _EnsembleRuntime(self.classifiers)

    @property
    def n_members(self) -> int:
        return len(self.classifiers)

    def encode(self, text: str) -> np.ndarray:
        """Arithmetic mean of the member sentence embeddings (float32)."""
        if self._runtime is not None:
            return self._runtime.encode_mean(text)
        acc = np.zeros(self.dim, dtype=np.float64)
        for member in self.classifiers:
            acc += member.sentence_embedding(text)
        acc /= self.n_members
        return acc.astype(np.float32)

    def similarity(self, s1: str, s2: str) -> float:
        return encoder_similarity(self, s1, s2)

    def is_semantics_preserving(self, s1: str, s2: str) -> bool:
        return self.similarity(s1, s2) > self.epsilon

    def cost_estimate(self) -> int:
        return sum(int(m.feature_row_count) * int(m.dim) for m in self.classifiers)


def _validate_members(classifiers: list, epsilon: float) -> None:
    if not classifiers:
        raise EmptyEnsembleError("an encoder ensemble needs at least one classifier")
    if not 0 < epsilon <= 1:
        raise InvalidEpsilonError(f"epsilon must be in (0, 1], got {epsilon}")
    dims = {}
    for i, m in enumerate(classifiers):
        dims.setdefault(int(m.dim), []).append(getattr(m, "task_name", "") or f"member{i}")
    if len(dims) > 1:
        detail = "; ".join(f"dim={d}: {', '.join(tasks)}" for d, tasks in sorted(dims.items()))
        raise DimensionMismatchError(f"ensemble members disagree on dim ({detail})")


def build_spe(models: list, epsilon: float = DEFAULT_EPSILON) -> SpeEncoder:
    """Validate a common embedding dimension and wrap the members in order."""
    _validate_members(models, epsilon)
    return SpeEncoder(models, epsilon, _validated=True)


def encode(spe: SpeEncoder, text: str) -> np.ndarray:
    return spe.encode(text)


def similarity(spe: SpeEncoder, s1: str, s2: str) -> float:
    return spe.similarity(s1, s2)


def is_semantics_preserving(spe: SpeEncoder, s1: str, s2: str) -> bool:
    return spe.is_semantics_preserving(s1, s2)


def cost_estimate(spe: SpeEncoder) -> int:
    return spe.cost_estimate()


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine of two vectors; 0.0 (with a warning) when either is zero."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        warnings.warn("cosine of a zero embedding is defined as 0",
                      DegenerateEmbeddingWarning, stacklevel=2)
        return 0.0
    return float(min(1.0, max(-1.0, float(np.dot(u, v)) / (nu * nv))))


def encoder_similarity(encoder, s1: str, s2: str) -> float:
    """Cosine between the encodings of two sentences under any encoder."""
    return cosine(encoder.encode(s1), encoder.encode(s2))


class BaselineStaticEncoder:
    """Mean-pooled static word vectors; OOV words pool as zero vectors."""

    name = "static-mean"

    def __init__(self, words: dict[str, int], matrix: np.ndarray, lowercase: bool = True):
        self.words = words
        self.matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        self.dim = int(matrix.shape[1])
        self.lowercase = lowercase

    @property
    def feature_row_count(self) -> int:
        return int(self.matrix.shape[0])

    def encode(self, text: str) -> np.ndarray:
        tokens = tokenize(text, self.lowercase)
        if not tokens:
            return np.zeros(self.dim, dtype=np.float32)
        get = self.words.get
        rows = [r for r in (get(t) for t in tokens) if r is not None]
        if not rows:
            return np.zeros(self.dim, dtype=np.float32)
        return (self.matrix[rows].sum(axis=0) / np.float32(len(tokens))).astype(np.float32)


def load_word_vectors(path: str) -> tuple[dict[str, int], np.ndarray]:
    """Parse the text word-vector format: header `<count> <dim>`, then rows."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.read().splitlines()
    except OSError as exc:
        raise IoError(f"cannot read word vectors {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: not valid UTF-8: {exc}") from exc
    if not lines:
        raise FormatError(f"{path}: empty word-vector file")
    head = lines[0].split()
    if len(head) != 2:
        raise FormatError(f"{path}: header must be '<count> <dim>', got {lines[0]!r}")
    try:
        count, dim = int(head[0]), int(head[1])
    except ValueError:
        raise FormatError(f"{path}: non-integer header {lines[0]!r}") from None
    if count < 0 or dim < 1:
        raise FormatError(f"{path}: invalid header values count={count} dim={dim}")
    body = [ln for ln in lines[1:] if ln]
    if len(body) != count:
        raise FormatError(f"{path}: header declares {count} rows, found {len(body)}")
    words: dict[str, int] = {}
    matrix = np.empty((count, dim), dtype=np.float32)
    n_kept = 0
    for lineno, line in enumerate(body, start=2):
        parts = line.split()
        if len(parts) != dim + 1:
            raise FormatError(f"{path}:{lineno}: expected word + {dim} floats, "
                              f"got {len(parts)} fields")
        word = parts[0]
        if word in words:  # first occurrence wins
            continue
        try:
            matrix[n_kept] = [float(x) for x in parts[1:]]
        except ValueError:
            raise FormatError(f"{path}:{lineno}: non-numeric vector component") from None
        words[word] = n_kept
        n_kept += 1
    return words, np.ascontiguousarray(matrix[:n_kept])


def load_baseline_encoder(path: str, lowercase: bool = True) -> BaselineStaticEncoder:
    """Mean-pooling encoder over a text word-vector file."""
    words, matrix = load_word_vectors(path)
    return BaselineStaticEncoder(words, matrix, lowercase=lowercase)


def save_word_vectors(words: list[str], matrix: np.ndarray, path: str) -> None:
    """Inverse of load_word_vectors (used for fixtures and exports)."""
    matrix = np.asarray(matrix)
    try:
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"{len(words)} {matrix.shape[1]}\n")
            for i, word in enumerate(words):
                comps = " ".join(f"{float(x):.8g}" for x in matrix[i])
                f.write(f"{word} {comps}\n")
    except OSError as exc:
        raise IoError(f"cannot write word vectors {path}: {exc}") from exc
