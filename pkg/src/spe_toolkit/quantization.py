"""Size-budgeted model compression: norm-based row pruning + 8-bit rows.

Pruning drops input-matrix rows in ascending L2-norm order (rarely or never
trained rows carry the least signal) until the 8-bit serialization fits the
budget; explicit vocabulary rows are only pruned when the budget cannot hold
the vocabulary at all. Each surviving row is coded as dim uint8 values with a
float32 scale/offset pair; the output matrix stays full precision.
"""

from __future__ import annotations

import numpy as np

from .classifier import ClassifierModel, Hyperparams, _EmbeddingClassifierBase, _MemberRuntime
from .errors import BudgetTooSmallError, InvalidHyperparamsError
from .text_pipeline import Dictionary

DEFAULT_SIZE_BUDGET = 2_000_000


class QuantizedModel(_EmbeddingClassifierBase):
    """Pruned, 8-bit-coded classifier with the same inference interface."""

    def __init__(self, dictionary: Dictionary, hyperparams: Hyperparams,
                 task_name: str, retained_ids: np.ndarray, codes: np.ndarray,
                 scales: np.ndarray, offsets: np.ndarray, output_matrix: np.ndarray,
                 size_budget_bytes: int, achieved_size_bytes: int | None = None):
        self.dictionary = dictionary
        self.hyperparams = hyperparams
        self.task_name = task_name
        self.retained_ids = retained_ids  # int64, ascending
        self.codes = codes                # uint8 (n_retained, dim)
        self.scales = scales              # float32 (n_retained,)
        self.offsets = offsets            # float32 (n_retained,)
        self.output_matrix = output_matrix
        self.size_budget_bytes = size_budget_bytes
        self.achieved_size_bytes = achieved_size_bytes
        self._decoded: np.ndarray | None = None
        self._rt: _MemberRuntime | None = None

    @property
    def feature_row_count(self) -> int:
        return int(self.retained_ids.shape[0])

    def decoded_rows(self) -> np.ndarray:
        """Float32 reconstruction of the retained rows: scale * code + offset."""
        if self._decoded is None:
            self._decoded = (self.codes.astype(np.float32) * self.scales[:, None]
                             + self.offsets[:, None])
        return self._decoded

    def _runtime(self) -> _MemberRuntime:
        if self._rt is None:
            self._rt = _MemberRuntime(self.dictionary, self.decoded_rows(),
                                      self.retained_ids)
        return self._rt


def encode_rows(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-row affine 8-bit coding; returns (codes u8, scales f32, offsets f32)."""
    rows = np.asarray(rows, dtype=np.float32)
    lo = rows.min(axis=1).astype(np.float32)
    hi = rows.max(axis=1).astype(np.float32)
    span = (hi.astype(np.float64) - lo.astype(np.float64)) / 255.0
    span[span == 0.0] = 1.0
    scales = span.astype(np.float32)
    codes = np.clip(np.rint((rows - lo[:, None]) / scales[:, None]),
                    0, 255).astype(np.uint8)
    return codes, scales, lo


def quantize(model: ClassifierModel, size_budget_bytes: int = DEFAULT_SIZE_BUDGET
             ) -> QuantizedModel:
    """Compress a trained model to at most size_budget_bytes on disk."""
    from . import model_io

    if size_budget_bytes <= 0:
        raise InvalidHyperparamsError("size budget must be positive")
    if model.dictionary.feature_space_size >= 2 ** 32:
        raise InvalidHyperparamsError(
            "feature space too large for the quantized format (ids must fit u32)")
    base = model_io.serialized_base_size(model)
    per_row = model_io.quantized_row_bytes(model.dim)
    if size_budget_bytes < base:
        raise BudgetTooSmallError(
            f"budget {size_budget_bytes} below the fixed model overhead {base} "
            "(dictionary, labels, output matrix)")
    max_rows = min((size_budget_bytes - base) // per_row,
                   model.input_matrix.shape[0])
    vocab_size = model.dictionary.vocab_size
    norms = np.linalg.norm(model.input_matrix.astype(np.float64), axis=1)
    if max_rows >= vocab_size:
        n_hashed = int(max_rows - vocab_size)
        hashed_norms = norms[vocab_size:]
        # keep the n_hashed highest-norm hashed rows == prune ascending norm
        keep_hashed = np.sort(np.argsort(hashed_norms, kind="stable")[::-1][:n_hashed])
        retained = np.concatenate([np.arange(vocab_size, dtype=np.int64),
                                   keep_hashed.astype(np.int64) + vocab_size])
    else:
        vocab_norms = norms[:vocab_size]
        keep_vocab = np.sort(np.argsort(vocab_norms, kind="stable")[::-1][:int(max_rows)])
        retained = keep_vocab.astype(np.int64)
    codes, scales, offsets = encode_rows(model.input_matrix[retained])
    qm = QuantizedModel(dictionary=model.dictionary, hyperparams=model.hyperparams,
                        task_name=model.task_name, retained_ids=retained,
                        codes=codes, scales=scales, offsets=offsets,
                        output_matrix=model.output_matrix.copy(),
                        size_budget_bytes=size_budget_bytes)
    achieved = len(model_io.serialize_model(qm))
    if achieved > size_budget_bytes:
        raise BudgetTooSmallError(
            f"achieved size {achieved} exceeds budget {size_budget_bytes}")
    qm.achieved_size_bytes = achieved
    return qm
