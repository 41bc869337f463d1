"""Per-task training presets for the ensemble's member classifiers.

Each preset fixes the hyperparameters used to train one member task.
Subword spans are stored normalized (minn <= maxnn). All members share
dim=10 softmax models so their sentence embeddings can be averaged.
"""

from __future__ import annotations

from .classifier import Hyperparams
from .errors import UnknownPresetError

TASK_PRESETS: dict[str, Hyperparams] = {
    "snli": Hyperparams(epochs=5, lr=0.05, minn=3, maxnn=6, word_ngram_order=4),
    "cola": Hyperparams(epochs=1, lr=0.09, minn=0, maxnn=0, word_ngram_order=5),
    "rte": Hyperparams(epochs=11, lr=0.09, minn=3, maxnn=6, word_ngram_order=1),
    "sst2": Hyperparams(epochs=55, lr=0.04, minn=3, maxnn=6, word_ngram_order=5),
    "stackoverflow": Hyperparams(epochs=23, lr=0.05, minn=3, maxnn=6,
                                 word_ngram_order=5),
    "emotion": Hyperparams(epochs=6, lr=0.073, minn=2, maxnn=6, word_ngram_order=3),
    "yelp": Hyperparams(epochs=5, lr=0.05, minn=0, maxnn=0, word_ngram_order=2),
}

# Test accuracies the stock presets reach on the corresponding public
# datasets; used as regression targets when those datasets are present.
REFERENCE_ACCURACY: dict[str, float] = {
    "snli": 0.595,
    "cola": 0.686,
    "rte": 0.563,
    "sst2": 0.829,
    "stackoverflow": 0.891,
    "emotion": 0.898,
    "yelp": 0.957,
}


def task_names() -> tuple[str, ...]:
    return tuple(TASK_PRESETS)


def task_preset(name: str) -> Hyperparams:
    """Stock hyperparameters for a named member task."""
    try:
        return TASK_PRESETS[name]
    except KeyError:
        raise UnknownPresetError(
            f"unknown task preset {name!r}; valid presets: "
            f"{', '.join(task_names())}") from None
