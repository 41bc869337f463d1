"""Linear text classifiers, an ensemble sentence encoder, and
encoder-constrained word-substitution attacks with evaluation tooling."""

from . import errors
from .attack import (
    AttackOutcome,
    AttackParams,
    SynonymIndex,
    attack_sentence,
    candidate_substitutions,
    preset,
    rank_word_importance,
    run_attack,
    verify_outcomes,
)
from .classifier import (
    ClassifierModel,
    Hyperparams,
    LabelDistribution,
    evaluate_accuracy,
    loss_and_gradient,
    predict,
    sentence_embedding,
    train,
)
from .evaluation import (
    AnnotationRecord,
    MetricsReport,
    PairJudgment,
    RasrResult,
    aggregate_annotations,
    build_report,
    compute_asr,
    compute_mod_rate,
    compute_rasr,
    compute_timing,
    export_annotation_sheet,
    ingest_annotations,
    pair_id,
)
from .model_io import load, save
from .presets import TASK_PRESETS, task_names, task_preset
from .quantization import QuantizedModel, quantize
from .spe import (
    DEFAULT_EPSILON,
    BaselineStaticEncoder,
    SentenceEncoderInterface,
    SpeEncoder,
    build_spe,
    cosine,
    cost_estimate,
    encode,
    encoder_similarity,
    is_semantics_preserving,
    load_baseline_encoder,
    similarity,
)
from .text_pipeline import (
    Dictionary,
    FeatureVector,
    LabeledCorpus,
    build_dictionary,
    extract_features,
    hash_feature,
    load_dataset,
    save_dataset,
    tokenize,
)

__version__ = "0.1.0"

__all__ = [
    "AnnotationRecord",
    "AttackOutcome",
    "AttackParams",
    "BaselineStaticEncoder",
    "ClassifierModel",
    "DEFAULT_EPSILON",
    "Dictionary",
    "FeatureVector",
    "Hyperparams",
    "LabelDistribution",
    "LabeledCorpus",
    "MetricsReport",
    "PairJudgment",
    "QuantizedModel",
    "RasrResult",
    "SentenceEncoderInterface",
    "SpeEncoder",
    "SynonymIndex",
    "TASK_PRESETS",
    "aggregate_annotations",
    "attack_sentence",
    "build_dictionary",
    "build_report",
    "build_spe",
    "candidate_substitutions",
    "compute_asr",
    "compute_mod_rate",
    "compute_rasr",
    "compute_timing",
    "cosine",
    "cost_estimate",
    "encode",
    "encoder_similarity",
    "errors",
    "evaluate_accuracy",
    "export_annotation_sheet",
    "extract_features",
    "hash_feature",
    "ingest_annotations",
    "is_semantics_preserving",
    "load",
    "load_baseline_encoder",
    "load_dataset",
    "loss_and_gradient",
    "pair_id",
    "predict",
    "preset",
    "quantize",
    "rank_word_importance",
    "run_attack",
    "save",
    "save_dataset",
    "sentence_embedding",
    "similarity",
    "task_names",
    "task_preset",
    "tokenize",
    "train",
    "verify_outcomes",
]
