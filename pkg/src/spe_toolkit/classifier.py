"""Supervised linear text classifiers over hashed n-gram features.

The model is a single embedding lookup plus a softmax projection: the hidden
vector of a sentence is the count-weighted mean of its feature rows, which
doubles as the classifier's sentence embedding. Training is plain SGD with a
linearly decaying learning rate, bit-deterministic for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import (
    DegenerateCorpusError,
    InvalidHyperparamsError,
    ToolkitError,
    UnknownLabelError,
)
from .text_pipeline import (
    DEFAULT_BUCKET_COUNT,
    Dictionary,
    LabeledCorpus,
    build_dictionary,
    extract_features,
    sentence_arrays,
    tokenize,
    validate_dictionary_settings,
)

DEFAULT_DIM = 10


@dataclass(frozen=True)
class Hyperparams:
    epochs: int = 5
    lr: float = 0.1
    dim: int = DEFAULT_DIM
    minn: int = 0
    maxnn: int = 0
    word_ngram_order: int = 1
    loss: str = "softmax"
    seed: int = 0
    min_count: int = 1
    bucket_count: int = DEFAULT_BUCKET_COUNT
    lowercase: bool = True

    def validate(self) -> None:
        if self.epochs < 1:
            raise InvalidHyperparamsError(f"epochs must be >= 1, got {self.epochs}")
        if not self.lr > 0:
            raise InvalidHyperparamsError(f"lr must be positive, got {self.lr}")
        if self.dim < 1:
            raise InvalidHyperparamsError(f"dim must be >= 1, got {self.dim}")
        if self.loss != "softmax":
            raise InvalidHyperparamsError(f"unsupported loss {self.loss!r} (only softmax)")
        validate_dictionary_settings(self.minn, self.maxnn, self.word_ngram_order,
                                     self.min_count, self.bucket_count)


@dataclass(frozen=True)
class LabelDistribution:
    labels: list[str]
    probabilities: np.ndarray  # float64, sums to 1

    @property
    def argmax_label(self) -> str:
        # np.argmax keeps the first maximum: ties break to the lowest label id.
        return self.labels[int(np.argmax(self.probabilities))]

    def prob(self, label: str) -> float:
        try:
            return float(self.probabilities[self.labels.index(label)])
        except ValueError:
            raise UnknownLabelError(f"label {label!r} not in {self.labels}") from None


class _MemberRuntime:
    """Kernel-ready view of one model's embedding data (config arrays,
    row matrix, optional id->row remap table)."""

    __slots__ = ("minns", "maxns", "orders", "buckets", "vocabs", "mats",
                 "row_offs", "use_remap", "rk", "rv", "t_offs", "words", "lowercase")

    def __init__(self, dictionary: Dictionary, mats: np.ndarray,
                 remap_ids: np.ndarray | None):
        self.minns = np.array([dictionary.minn], dtype=np.int64)
        self.maxns = np.array([dictionary.maxnn], dtype=np.int64)
        self.orders = np.array([dictionary.word_ngram_order], dtype=np.int64)
        self.buckets = np.array([dictionary.bucket_count], dtype=np.int64)
        self.vocabs = np.array([dictionary.vocab_size], dtype=np.int64)
        self.mats = mats
        self.row_offs = np.array([0, mats.shape[0]], dtype=np.int64)
        self.words = dictionary.words
        self.lowercase = dictionary.lowercase
        if remap_ids is None:
            self.use_remap = np.zeros(1, dtype=np.uint8)
            table = 2
            self.rk = np.full(table, -1, dtype=np.int64)
            self.rv = np.zeros(table, dtype=np.int32)
            self.t_offs = np.array([0, table], dtype=np.int64)
        else:
            self.use_remap = np.ones(1, dtype=np.uint8)
            table = 2
            while table <= 2 * remap_ids.shape[0]:
                table *= 2
            self.rk, self.rv = _kernels.build_remap_table(remap_ids, table)
            self.t_offs = np.array([0, table], dtype=np.int64)

    def embed_tokens(self, tokens: list[str]) -> np.ndarray:
        n = len(tokens)
        tok_cps, cp_offs, tok_bytes, byte_offs = sentence_arrays(tokens)
        word_ids = np.empty((n, 1), dtype=np.int32)
        get = self.words.get
        for i, tok in enumerate(tokens):
            word_ids[i, 0] = get(tok, -1)
        dim = self.mats.shape[1]
        partials = np.empty((n, 1, dim), dtype=np.float64)
        hits = np.empty((n, 1), dtype=np.int64)
        _kernels.token_partials(tok_cps, cp_offs, word_ids, self.minns, self.maxns,
                                self.buckets, self.vocabs, self.mats, self.row_offs,
                                self.use_remap, self.rk, self.rv, self.t_offs,
                                partials, hits)
        embs = _kernels.combine_partials(partials, hits, tok_bytes, byte_offs,
                                         self.orders, self.buckets, self.vocabs,
                                         self.mats, self.row_offs, self.use_remap,
                                         self.rk, self.rv, self.t_offs)
        return embs[0]


class _EmbeddingClassifierBase:
    """Prediction and embedding shared by full and quantized models.

    Subclasses provide: dictionary, output_matrix, hyperparams, task_name,
    and _runtime() returning a _MemberRuntime.
    """

    dictionary: Dictionary
    output_matrix: np.ndarray
    hyperparams: Hyperparams
    task_name: str

    @property
    def dim(self) -> int:
        return int(self.output_matrix.shape[1])

    @property
    def labels(self) -> list[str]:
        return self.dictionary.label_set

    def _runtime(self) -> _MemberRuntime:
        raise NotImplementedError

    def sentence_embedding(self, text: str) -> np.ndarray:
        """Count-weighted mean of the sentence's feature rows (float32)."""
        tokens = tokenize(text, self.dictionary.lowercase)
        return self._runtime().embed_tokens(tokens)

    def predict(self, text: str) -> LabelDistribution:
        hidden = self.sentence_embedding(text)
        logits = (self.output_matrix @ hidden).astype(np.float64)
        logits -= logits.max()
        probs = np.exp(logits)
        probs /= probs.sum()
        return LabelDistribution(labels=self.labels, probabilities=probs)

    def evaluate_accuracy(self, test: LabeledCorpus) -> float:
        gold_labels = {label for label, _ in test.examples}
        unknown = gold_labels - set(self.labels)
        if unknown:
            raise UnknownLabelError(
                f"gold labels {sorted(unknown)} not in model labels {self.labels}")
        if len(test) == 0:
            raise DegenerateCorpusError("cannot evaluate on an empty corpus")
        correct = sum(1 for label, text in test.examples
                      if self.predict(text).argmax_label == label)
        return correct / len(test)


class ClassifierModel(_EmbeddingClassifierBase):
    """Trained full-precision classifier; immutable after training."""

    def __init__(self, dictionary: Dictionary, input_matrix: np.ndarray,
                 output_matrix: np.ndarray, hyperparams: Hyperparams,
                 task_name: str = "", epoch_losses: list[float] | None = None):
        self.dictionary = dictionary
        self.input_matrix = input_matrix
        self.output_matrix = output_matrix
        self.hyperparams = hyperparams
        self.task_name = task_name
        self.epoch_losses = epoch_losses or []
        self._rt: _MemberRuntime | None = None

    @property
    def feature_row_count(self) -> int:
        return int(self.input_matrix.shape[0])

    def _runtime(self) -> _MemberRuntime:
        if self._rt is None:
            self._rt = _MemberRuntime(self.dictionary, self.input_matrix, None)
        return self._rt


def featurize_corpus(corpus: LabeledCorpus, dictionary: Dictionary
                     ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """CSR-packed aggregated features and label indices for a corpus."""
    label_index = {lab: i for i, lab in enumerate(dictionary.label_set)}
    ids_parts = []
    cnt_parts = []
    offs = np.zeros(len(corpus) + 1, dtype=np.int64)
    labels = np.empty(len(corpus), dtype=np.int32)
    for i, (label, text) in enumerate(corpus.examples):
        if label not in label_index:
            raise UnknownLabelError(f"label {label!r} not in dictionary labels")
        labels[i] = label_index[label]
        tokens = tokenize(text, dictionary.lowercase)
        tok_cps, cp_offs, tok_bytes, byte_offs = sentence_arrays(tokens)
        word_ids = dictionary.word_id_array(tokens)
        occ = _kernels.featurize(tok_cps, cp_offs, tok_bytes, byte_offs, word_ids,
                                 dictionary.minn, dictionary.maxnn,
                                 dictionary.word_ngram_order,
                                 dictionary.vocab_size, dictionary.bucket_count)
        uniq, counts = np.unique(occ, return_counts=True)
        ids_parts.append(uniq)
        cnt_parts.append(counts.astype(np.float32))
        offs[i + 1] = offs[i] + uniq.shape[0]
    feat_ids = np.concatenate(ids_parts) if ids_parts else np.empty(0, dtype=np.int64)
    feat_cnts = np.concatenate(cnt_parts) if cnt_parts else np.empty(0, dtype=np.float32)
    return feat_ids, feat_cnts, offs, labels


def train(corpus: LabeledCorpus, hp: Hyperparams, task_name: str = "") -> ClassifierModel:
    """SGD over softmax cross-entropy; bit-deterministic for a fixed seed."""
    hp.validate()
    dictionary = build_dictionary(
        corpus, minn=hp.minn, maxnn=hp.maxnn, word_ngram_order=hp.word_ngram_order,
        min_count=hp.min_count, bucket_count=hp.bucket_count, lowercase=hp.lowercase)
    if len(dictionary.label_set) < 2:
        raise DegenerateCorpusError(
            f"training needs >= 2 distinct labels, got {dictionary.label_set}")
    feat_ids, feat_cnts, offs, labels = featurize_corpus(corpus, dictionary)
    rng = np.random.default_rng(hp.seed)
    rows = dictionary.feature_space_size
    input_matrix = rng.random((rows, hp.dim), dtype=np.float32)
    input_matrix *= np.float32(2.0 / hp.dim)
    input_matrix -= np.float32(1.0 / hp.dim)
    output_matrix = np.zeros((len(dictionary.label_set), hp.dim), dtype=np.float32)
    losses = _kernels.sgd_epochs(feat_ids, feat_cnts, offs, labels,
                                 input_matrix, output_matrix,
                                 hp.epochs, float(hp.lr),
                                 np.uint64(hp.seed & 0xFFFFFFFFFFFFFFFF))
    if not np.isfinite(output_matrix).all():
        raise ToolkitError("training produced non-finite output weights")
    return ClassifierModel(dictionary, input_matrix, output_matrix, hp,
                           task_name=task_name, epoch_losses=[float(x) for x in losses])


def softmax_loss_and_gradient(input_matrix: np.ndarray, output_matrix: np.ndarray,
                              feat_ids: np.ndarray, feat_counts: np.ndarray,
                              label_index: int
                              ) -> tuple[float, np.ndarray, dict[int, np.ndarray]]:
    """Float64 softmax cross-entropy and analytic gradients for one example.

    Exposes the training objective in high precision so it can be checked
    against finite differences. Returns (loss, d_loss/d_output_matrix,
    {feature_id: d_loss/d_input_row}).
    """
    w_in = np.asarray(input_matrix, dtype=np.float64)
    w_out = np.asarray(output_matrix, dtype=np.float64)
    dim = w_out.shape[1]
    hidden = np.zeros(dim, dtype=np.float64)
    total = float(np.sum(feat_counts))
    for fid, cnt in zip(feat_ids, feat_counts):
        hidden += float(cnt) * w_in[int(fid)]
    if total > 0:
        hidden /= total
    logits = w_out @ hidden
    logits -= logits.max()
    probs = np.exp(logits)
    probs /= probs.sum()
    loss = -float(np.log(probs[label_index]))
    g = probs.copy()
    g[label_index] -= 1.0
    grad_out = np.outer(g, hidden)
    grad_rows: dict[int, np.ndarray] = {}
    if total > 0:
        grad_hidden = w_out.T @ g
        for fid, cnt in zip(feat_ids, feat_counts):
            grad_rows[int(fid)] = (float(cnt) / total) * grad_hidden
    return loss, grad_out, grad_rows


def loss_and_gradient(model: ClassifierModel, example: tuple[str, str]
                      ) -> tuple[float, np.ndarray, dict[int, np.ndarray]]:
    """Loss and gradients of one (label, text) example under the model."""
    label, text = example
    if label not in model.labels:
        raise UnknownLabelError(f"label {label!r} not in model labels {model.labels}")
    fv = extract_features(tokenize(text, model.dictionary.lowercase), model.dictionary)
    feat_ids = fv.ids()
    feat_counts = fv.counts().astype(np.float64)
    return softmax_loss_and_gradient(model.input_matrix, model.output_matrix,
                                     feat_ids, feat_counts,
                                     model.labels.index(label))


def predict(model: _EmbeddingClassifierBase, text: str) -> LabelDistribution:
    return model.predict(text)


def sentence_embedding(model: _EmbeddingClassifierBase, text: str) -> np.ndarray:
    return model.sentence_embedding(text)


def evaluate_accuracy(model: _EmbeddingClassifierBase, test: LabeledCorpus) -> float:
    return model.evaluate_accuracy(test)
