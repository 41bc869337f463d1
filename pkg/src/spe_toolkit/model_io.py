"""Versioned binary model files for full and quantized classifiers.

Layout (all little-endian):

  magic   4s   b"SPEC"
  version u16  currently 1
  flags   u8   bit0 set => quantized payload
  dictionary: lowercase u8, bucket_count i64, minn i32, maxnn i32,
              word_ngram_order i32, min_count i32,
              labels (u32 count, then u32 byte-length + UTF-8 each),
              words  (u32 count, then u32 byte-length + UTF-8 each;
                      position is the word id)
  hyperparams: epochs u32, lr f64, dim u32, seed i64, loss u8 (0 = softmax)
  task_name:   u32 byte-length + UTF-8
  full payload:      n_rows u64, input matrix f32 row-major,
                     n_label_rows u32, output matrix f32 row-major
  quantized payload: size_budget u64, n_retained u64,
                     retained feature ids u32 ascending,
                     codes u8 (n_retained x dim),
                     scales f32, offsets f32 (one each per retained row),
                     n_label_rows u32, output matrix f32 row-major
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

from .classifier import ClassifierModel, Hyperparams
from .errors import FormatError, IoError
from .text_pipeline import Dictionary

MAGIC = b"SPEC"
FORMAT_VERSION = 1
_FLAG_QUANTIZED = 0x01


def _pack_str(s: str) -> bytes:
    data = s.encode("utf-8")
    return struct.pack("<I", len(data)) + data


class _Reader:
    def __init__(self, data: bytes, path: str = "<bytes>"):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"{self.path}: truncated model file "
                              f"(needed {n} bytes at offset {self.pos})")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def read_str(self) -> str:
        (n,) = self.unpack("<I")
        return self.take(n).decode("utf-8")

    def read_array(self, dtype, count: int) -> np.ndarray:
        raw = self.take(count * np.dtype(dtype).itemsize)
        return np.frombuffer(raw, dtype=dtype).copy()

    def expect_end(self) -> None:
        if self.pos != len(self.data):
            raise FormatError(f"{self.path}: {len(self.data) - self.pos} "
                              "trailing bytes after model payload")


def _serialize_common(model) -> bytes:
    d: Dictionary = model.dictionary
    hp: Hyperparams = model.hyperparams
    parts = [
        struct.pack("<B", 1 if d.lowercase else 0),
        struct.pack("<q", d.bucket_count),
        struct.pack("<iiii", d.minn, d.maxnn, d.word_ngram_order, d.min_count),
        struct.pack("<I", len(d.label_set)),
    ]
    parts.extend(_pack_str(lab) for lab in d.label_set)
    parts.append(struct.pack("<I", len(d.words)))
    parts.extend(_pack_str(w) for w in d.words)
    parts.append(struct.pack("<IdIqB", hp.epochs, hp.lr, hp.dim, hp.seed, 0))
    parts.append(_pack_str(model.task_name))
    return b"".join(parts)


def serialized_base_size(model) -> int:
    """Bytes of everything except the retained-row payload of a quantized file.

    header + dictionary + hyperparams + task name + size_budget + n_retained
    + output matrix block.
    """
    header = struct.calcsize("<4sHB")
    common = len(_serialize_common(model))
    out_block = struct.calcsize("<I") + model.output_matrix.nbytes
    return header + common + struct.calcsize("<Q") * 2 + out_block


def quantized_row_bytes(dim: int) -> int:
    """Per retained row: u32 feature id + dim u8 codes + f32 scale + f32 offset."""
    return 4 + dim + 4 + 4


def serialize_model(model) -> bytes:
    from .quantization import QuantizedModel

    quantized = isinstance(model, QuantizedModel)
    flags = _FLAG_QUANTIZED if quantized else 0
    parts = [struct.pack("<4sHB", MAGIC, FORMAT_VERSION, flags),
             _serialize_common(model)]
    if quantized:
        parts.append(struct.pack("<Q", model.size_budget_bytes))
        parts.append(struct.pack("<Q", model.retained_ids.shape[0]))
        parts.append(model.retained_ids.astype(np.uint32).tobytes())
        parts.append(np.ascontiguousarray(model.codes).tobytes())
        parts.append(model.scales.astype(np.float32).tobytes())
        parts.append(model.offsets.astype(np.float32).tobytes())
    else:
        parts.append(struct.pack("<Q", model.input_matrix.shape[0]))
        parts.append(np.ascontiguousarray(model.input_matrix, dtype=np.float32).tobytes())
    parts.append(struct.pack("<I", model.output_matrix.shape[0]))
    parts.append(np.ascontiguousarray(model.output_matrix, dtype=np.float32).tobytes())
    return b"".join(parts)


def deserialize_model(data: bytes, path: str = "<bytes>"):
    from .quantization import QuantizedModel

    r = _Reader(data, path)
    magic, version, flags = r.unpack("<4sHB")
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version: "
                          f"expected {FORMAT_VERSION}, got {version}")
    (lowercase,) = r.unpack("<B")
    (bucket_count,) = r.unpack("<q")
    minn, maxnn, word_ngram_order, min_count = r.unpack("<iiii")
    (n_labels,) = r.unpack("<I")
    labels = [r.read_str() for _ in range(n_labels)]
    (n_words,) = r.unpack("<I")
    words = {r.read_str(): i for i in range(n_words)}
    epochs, lr, dim, seed, loss_code = r.unpack("<IdIqB")
    if loss_code != 0:
        raise FormatError(f"{path}: unknown loss code {loss_code}")
    task_name = r.read_str()
    dictionary = Dictionary(words=words, label_set=labels, bucket_count=bucket_count,
                            minn=minn, maxnn=maxnn, word_ngram_order=word_ngram_order,
                            min_count=min_count, lowercase=bool(lowercase))
    hp = Hyperparams(epochs=epochs, lr=lr, dim=dim, minn=minn, maxnn=maxnn,
                     word_ngram_order=word_ngram_order, loss="softmax", seed=seed,
                     min_count=min_count, bucket_count=bucket_count,
                     lowercase=bool(lowercase))
    if flags & _FLAG_QUANTIZED:
        (size_budget,) = r.unpack("<Q")
        (n_retained,) = r.unpack("<Q")
        retained = r.read_array(np.uint32, int(n_retained)).astype(np.int64)
        codes = r.read_array(np.uint8, int(n_retained) * dim).reshape(int(n_retained), dim)
        scales = r.read_array(np.float32, int(n_retained))
        offsets = r.read_array(np.float32, int(n_retained))
        (n_out,) = r.unpack("<I")
        output = r.read_array(np.float32, n_out * dim).reshape(n_out, dim)
        r.expect_end()
        return QuantizedModel(dictionary=dictionary, hyperparams=hp,
                              task_name=task_name, retained_ids=retained,
                              codes=codes, scales=scales, offsets=offsets,
                              output_matrix=output, size_budget_bytes=int(size_budget),
                              achieved_size_bytes=len(data))
    (n_rows,) = r.unpack("<Q")
    input_matrix = r.read_array(np.float32, int(n_rows) * dim).reshape(int(n_rows), dim)
    (n_out,) = r.unpack("<I")
    output = r.read_array(np.float32, n_out * dim).reshape(n_out, dim)
    r.expect_end()
    if input_matrix.shape[0] != dictionary.feature_space_size:
        raise FormatError(f"{path}: input matrix has {input_matrix.shape[0]} rows, "
                          f"dictionary implies {dictionary.feature_space_size}")
    return ClassifierModel(dictionary, input_matrix, output, hp, task_name=task_name)


def save(model, path: str) -> int:
    """Write the model; returns the serialized size in bytes."""
    data = serialize_model(model)
    try:
        with open(path, "wb") as f:
            f.write(data)
    except OSError as exc:
        raise IoError(f"cannot write model {path}: {exc}") from exc
    return len(data)


def load(path: str):
    """Read a model file; returns a ClassifierModel or QuantizedModel."""
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as exc:
        raise IoError(f"cannot read model {path}: {exc}") from exc
    return deserialize_model(data, path=path)


def fingerprint(model) -> str:
    """Stable short hash of the fully serialized model."""
    return hashlib.sha256(serialize_model(model)).hexdigest()[:16]
