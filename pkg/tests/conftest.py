"""Shared fixtures: trained ensembles, victim model, attack runs.

The expensive artifacts (seven preset-trained classifiers, their quantized
forms, the attack runs used by several test modules) are built once per
session. Full-precision models are dropped as soon as their quantized
counterpart and comparison embeddings exist, keeping peak memory bounded.
"""

from __future__ import annotations

from types import SimpleNamespace

import numpy as np
import pytest

from spe_toolkit import fixtures, model_io, presets
from spe_toolkit.attack import SynonymIndex, preset, run_attack
from spe_toolkit.classifier import Hyperparams, train
from spe_toolkit.quantization import quantize
from spe_toolkit.spe import BaselineStaticEncoder, build_spe

VICTIM_HP = Hyperparams(epochs=8, lr=0.15, dim=10, word_ngram_order=1,
                        bucket_count=50_000, seed=5)

MINI_HP = Hyperparams(epochs=6, lr=0.1, dim=10, minn=2, maxnn=4,
                      word_ngram_order=2, bucket_count=20_000, seed=3)


@pytest.fixture(scope="session")
def full_build():
    """Train all seven stock presets, quantize each to the 2MB budget.

    Collects, per task: the quantized member, its serialized size, the
    full-vs-quantized embedding cosines over the 1000 held-out sentences,
    and the held-out accuracy of both forms.
    """
    members = []
    sizes = {}
    cosines = {}
    accuracy_full = {}
    accuracy_quantized = {}
    heldout_texts = {}
    for task in presets.task_names():
        hp = presets.task_preset(task)
        train_corpus, heldout = fixtures.task_corpus(task)
        model = train(train_corpus, hp, task_name=task)
        quantized = quantize(model, 2_000_000)
        texts = [text for _label, text in heldout.examples]
        full_embs = np.stack([model.sentence_embedding(t) for t in texts])
        q_embs = np.stack([quantized.sentence_embedding(t) for t in texts])
        num = np.sum(full_embs.astype(np.float64) * q_embs.astype(np.float64), axis=1)
        den = (np.linalg.norm(full_embs.astype(np.float64), axis=1)
               * np.linalg.norm(q_embs.astype(np.float64), axis=1))
        cosines[task] = np.where(den > 0, num / np.where(den > 0, den, 1.0), 1.0)
        sizes[task] = quantized.achieved_size_bytes
        accuracy_full[task] = model.evaluate_accuracy(heldout)
        accuracy_quantized[task] = quantized.evaluate_accuracy(heldout)
        heldout_texts[task] = texts
        members.append(quantized)
        del model, full_embs, q_embs
    return SimpleNamespace(members=members, sizes=sizes, cosines=cosines,
                           accuracy_full=accuracy_full,
                           accuracy_quantized=accuracy_quantized,
                           heldout_texts=heldout_texts)


@pytest.fixture(scope="session")
def spe_full(full_build):
    return build_spe(full_build.members, epsilon=0.95)


@pytest.fixture(scope="session")
def victim():
    train_corpus, test_corpus = fixtures.victim_corpus()
    model = train(train_corpus, VICTIM_HP, task_name="victim")
    model.test_accuracy = model.evaluate_accuracy(test_corpus)
    return model


@pytest.fixture(scope="session")
def static_vectors():
    return fixtures.fixture_static_vectors()


@pytest.fixture(scope="session")
def synonym_index(static_vectors):
    words, matrix = static_vectors
    return SynonymIndex(words, matrix)


@pytest.fixture(scope="session")
def baseline_encoder(static_vectors):
    words, matrix = static_vectors
    return BaselineStaticEncoder(words, matrix)


@pytest.fixture(scope="session")
def attack_data():
    return fixtures.attack_dataset(200)


@pytest.fixture(scope="session")
def attack_results(victim, spe_full, baseline_encoder, synonym_index, attack_data):
    """The four preset/encoder attack runs over the 200-sentence fixture."""
    results = {}
    for encoder, encoder_label in ((spe_full, "spe"), (baseline_encoder, "baseline")):
        for preset_name in ("textfooler", "tfadjusted"):
            params = preset(preset_name, encoder=encoder, synonym_index=synonym_index)
            outcomes = run_attack(victim, params, attack_data)
            results[(preset_name, encoder_label)] = (params, outcomes)
    return results


@pytest.fixture(scope="session")
def mini_models():
    """Two small full-precision classifiers (cheap unit-test ensembles)."""
    models = []
    for task in ("sst2", "yelp"):
        corpus, _ = fixtures.task_corpus(task)
        corpus = type(corpus)(corpus.examples[:800])
        models.append(train(corpus, MINI_HP, task_name=task))
    return models


@pytest.fixture(scope="session")
def mini_quantized(mini_models):
    return [quantize(m, 300_000) for m in mini_models]


@pytest.fixture(scope="session")
def cli_workspace(tmp_path_factory, victim, mini_quantized, static_vectors):
    """Model, vector, and dataset files shared by the CLI tests."""
    from spe_toolkit.spe import save_word_vectors
    from spe_toolkit.text_pipeline import save_dataset

    root = tmp_path_factory.mktemp("cli")
    victim_path = str(root / "victim.model")
    model_io.save(victim, victim_path)
    member_paths = []
    for i, member in enumerate(mini_quantized):
        path = str(root / f"member{i}.model")
        model_io.save(member, path)
        member_paths.append(path)
    words, matrix = static_vectors
    ordered = [None] * len(words)
    for word, idx in words.items():
        ordered[idx] = word
    vectors_path = str(root / "vectors.txt")
    save_word_vectors(ordered, matrix, vectors_path)
    data_path = str(root / "attack.txt")
    save_dataset(fixtures.attack_dataset(40), data_path)
    train_path = str(root / "train.txt")
    test_path = str(root / "test.txt")
    train_corpus, test_corpus = fixtures.victim_corpus(seed=311)
    save_dataset(type(train_corpus)(train_corpus.examples[:400]), train_path)
    save_dataset(type(test_corpus)(test_corpus.examples[:100]), test_path)
    return SimpleNamespace(root=root, victim=victim_path, members=member_paths,
                           vectors=vectors_path, data=data_path,
                           train=train_path, test=test_path)
