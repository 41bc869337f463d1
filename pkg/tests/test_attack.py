"""Greedy substitution attack: ranking, gating, presets, verification.

The hand-traced cases use a deterministic fake victim whose confidence is
a logistic function of additive word scores, so every greedy step (and the
exact query count) can be derived on paper.
"""

from __future__ import annotations

import dataclasses
import math
from types import SimpleNamespace

import numpy as np
import pytest

from spe_toolkit.attack import (
    AttackOutcome,
    AttackParams,
    SynonymIndex,
    attack_sentence,
    candidate_substitutions,
    iter_attack,
    preset,
    rank_word_importance,
    replace_encoder,
    run_attack,
    verify_outcomes,
)
from spe_toolkit.classifier import LabelDistribution
from spe_toolkit.errors import (
    ConfigError,
    EmptySentenceError,
    InvalidEpsilonError,
    InvalidHyperparamsError,
    UnknownPresetError,
)
from spe_toolkit.spe import save_word_vectors


class FakeVictim:
    """Two-label victim: p(pos) = logistic(sum of per-word scores)."""

    def __init__(self, scores: dict[str, float]):
        self.scores = scores
        self.dictionary = SimpleNamespace(lowercase=True)
        self.n_predicts = 0

    def predict(self, text: str) -> LabelDistribution:
        self.n_predicts += 1
        z = sum(self.scores.get(tok, 0.0) for tok in text.split())
        p_pos = 1.0 / (1.0 + math.exp(-z))
        return LabelDistribution(labels=["pos", "neg"],
                                 probabilities=np.array([p_pos, 1.0 - p_pos]))


class StubIndex:
    """Synonym index stub with hand-specified neighbour lists."""

    def __init__(self, table: dict[str, list[tuple[str, float]]]):
        self.table = table

    def neighbors(self, word, k):
        return self.table.get(word, [])[:k]


class ConstEncoder:
    """Maps every sentence to the same unit vector: similarity always 1."""

    name = "const"
    epsilon = 0.95

    def encode(self, text: str) -> np.ndarray:
        return np.array([1.0, 0.0], dtype=np.float32)


class TableEncoder:
    """Unit-vector lookup by exact sentence text; unknown texts share e1."""

    name = "table"

    def __init__(self, orthogonal: set[str]):
        self.orthogonal = orthogonal

    def encode(self, text: str) -> np.ndarray:
        if text in self.orthogonal:
            return np.array([0.0, 1.0], dtype=np.float32)
        return np.array([1.0, 0.0], dtype=np.float32)


def make_params(**kwargs) -> AttackParams:
    defaults = dict(encoder=ConstEncoder(), synonym_index=StubIndex({}),
                    epsilon=0.95, stopword_policy="include")
    defaults.update(kwargs)
    return AttackParams(**defaults)


@pytest.fixture(scope="module")
def index():
    # a at angle 0; b, c identical at ~26 degrees (tie); d orthogonal;
    # e opposite; z the zero vector.
    words = {"a": 0, "b": 1, "c": 2, "d": 3, "e": 4, "z": 5}
    matrix = np.array([
        [1.0, 0.0],
        [0.9, 0.4],
        [0.9, 0.4],
        [0.0, 1.0],
        [-1.0, 0.0],
        [0.0, 0.0],
    ], dtype=np.float32)
    return SynonymIndex(words, matrix)


class TestSynonymIndex:
    def test_descending_order_and_self_exclusion(self, index):
        result = index.neighbors("a", 10)
        assert [w for w, _ in result] == ["b", "c", "d", "e"]
        cosines = [c for _, c in result]
        assert cosines == sorted(cosines, reverse=True)
        assert cosines[0] == pytest.approx(0.9 / math.hypot(0.9, 0.4), abs=1e-6)
        assert cosines[2] == pytest.approx(0.0, abs=1e-7)
        assert cosines[3] == -1.0

    def test_tie_breaks_to_lower_row(self, index):
        # b (row 1) and c (row 2) have identical vectors.
        result = index.neighbors("a", 2)
        assert [w for w, _ in result] == ["b", "c"]

    def test_k_truncates(self, index):
        assert [w for w, _ in index.neighbors("a", 1)] == ["b"]
        assert index.neighbors("a", 0) == []

    def test_zero_vector_has_no_neighbors(self, index):
        assert index.neighbors("z", 5) == []

    def test_zero_vector_never_appears(self, index):
        for word in ("a", "b", "d", "e"):
            assert "z" not in [w for w, _ in index.neighbors(word, 10)]

    def test_oov_word(self, index):
        assert index.neighbors("missing", 5) == []

    def test_cache_returns_same_object(self, index):
        assert index.neighbors("d", 3) is index.neighbors("d", 3)

    def test_cosines_clamped(self, index):
        for word in ("a", "b", "c", "d", "e"):
            for _, c in index.neighbors(word, 10):
                assert -1.0 <= c <= 1.0

    def test_from_word_vectors(self, tmp_path):
        path = str(tmp_path / "vec.txt")
        save_word_vectors(["x", "y"], np.eye(2, dtype=np.float32), path)
        idx = SynonymIndex.from_word_vectors(path)
        assert [w for w, _ in idx.neighbors("x", 5)] == ["y"]


class TestCandidates:
    def test_floor_is_inclusive(self):
        index = StubIndex({"w": [("hi", 0.95), ("edge", 0.9), ("lo", 0.89)]})
        params = make_params(synonym_index=index, min_word_cos=0.9)
        assert candidate_substitutions("w", index, params) == ["hi", "edge"]

    def test_oov_yields_nothing(self):
        index = StubIndex({})
        params = make_params(synonym_index=index)
        assert candidate_substitutions("w", index, params) == []

    def test_synonym_k_limits(self):
        index = StubIndex({"w": [(f"n{i}", 0.99 - i * 0.001) for i in range(60)]})
        params = make_params(synonym_index=index, synonym_k=10)
        assert len(candidate_substitutions("w", index, params)) == 10


class TestParamsAndPresets:
    @pytest.mark.parametrize("kwargs,error", [
        (dict(epsilon=0.0), InvalidEpsilonError),
        (dict(epsilon=1.0001), InvalidEpsilonError),
        (dict(synonym_k=0), InvalidHyperparamsError),
        (dict(min_word_cos=-0.1), InvalidHyperparamsError),
        (dict(min_word_cos=1.1), InvalidHyperparamsError),
        (dict(max_mod_fraction=0.0), InvalidHyperparamsError),
        (dict(max_mod_fraction=1.5), InvalidHyperparamsError),
        (dict(stopword_policy="drop"), InvalidHyperparamsError),
    ])
    def test_validation(self, kwargs, error):
        with pytest.raises(error):
            make_params(**kwargs)

    def test_textfooler_uses_encoder_threshold(self):
        enc = ConstEncoder()
        p = preset("textfooler", encoder=enc, synonym_index=StubIndex({}))
        assert p.epsilon == enc.epsilon == 0.95
        assert p.min_word_cos == 0.5
        assert p.preset_name == "textfooler"
        assert p.synonym_k == 50
        assert p.max_mod_fraction == 0.4
        assert p.stopword_policy == "skip"

    def test_tfadjusted_tightens_threshold(self):
        p = preset("tfadjusted", encoder=ConstEncoder(), synonym_index=StubIndex({}))
        assert p.epsilon == pytest.approx(0.98)  # min(0.95 + 0.03, 0.98)
        assert p.min_word_cos == 0.9
        assert p.preset_name == "tfadjusted"

    def test_tfadjusted_offsets_loose_encoders(self):
        enc = ConstEncoder()
        enc.epsilon = 0.9
        p = preset("tfadjusted", encoder=enc, synonym_index=StubIndex({}))
        assert p.epsilon == pytest.approx(0.93)

    def test_tfadjusted_caps_at_098(self):
        enc = ConstEncoder()
        enc.epsilon = 0.97
        p = preset("tfadjusted", encoder=enc, synonym_index=StubIndex({}))
        assert p.epsilon == pytest.approx(0.98)

    def test_encoder_without_threshold_gets_default(self):
        enc = SimpleNamespace(encode=lambda text: np.ones(2))
        assert preset("textfooler", encoder=enc,
                      synonym_index=StubIndex({})).epsilon == 0.95

    def test_unknown_preset(self):
        with pytest.raises(UnknownPresetError):
            preset("deepwordbug")

    def test_replace_encoder(self):
        p = make_params(max_mod_fraction=0.7)
        other = TableEncoder(set())
        q = replace_encoder(p, other)
        assert q.encoder is other
        assert q.synonym_index is p.synonym_index
        assert q.max_mod_fraction == 0.7
        assert p.encoder is not other  # original untouched

    def test_missing_encoder_or_index(self):
        with pytest.raises(ConfigError):
            attack_sentence(FakeVictim({}), AttackParams(encoder=None,
                                                         synonym_index=StubIndex({})),
                            "some text")
        with pytest.raises(ConfigError):
            attack_sentence(FakeVictim({}), AttackParams(encoder=ConstEncoder(),
                                                         synonym_index=None),
                            "some text")


class TestRanking:
    def test_leave_one_out_importance(self):
        victim = FakeVictim({"good": 2.0, "fine": 0.6})
        ranking = rank_word_importance(victim, "the good fine show")
        positions = [pos for pos, _ in ranking]
        # Dropping "good" hurts most, then "fine"; zero-impact ties keep
        # ascending position order.
        assert positions == [1, 2, 0, 3]
        scores = dict(ranking)
        assert scores[1] > scores[2] > 0.0
        assert scores[0] == pytest.approx(0.0, abs=1e-12)
        assert scores[3] == pytest.approx(0.0, abs=1e-12)

    def test_empty_sentence(self):
        with pytest.raises(EmptySentenceError):
            rank_word_importance(FakeVictim({}), "   ")


class TestAttackSentenceTraces:
    def test_full_trace_flip_on_best_candidate(self):
        victim = FakeVictim({"good": 2.0, "great": 1.5, "fine": 0.6, "bad": -2.0})
        index = StubIndex({"good": [("great", 0.92), ("fine", 0.75), ("bad", 0.60)]})
        params = make_params(synonym_index=index)
        out = attack_sentence(victim, params, "The movie was GOOD", gold_label="pos")
        assert out.original == "the movie was good"
        assert out.perturbed == "the movie was bad"
        assert out.success and out.attackable
        assert out.original_label == "pos"
        assert out.final_label == "neg"
        assert out.edited_positions == (3,)
        assert out.n_words == 4
        assert out.similarity == 1.0
        # 1 original + 4 leave-one-out + 3 candidate queries.
        assert out.queries == 8
        assert victim.n_predicts == 8
        assert out.wall_time_s >= 0.0

    def test_epsilon_gate_skips_candidate_without_querying(self):
        victim = FakeVictim({"good": 2.0, "great": 1.5, "fine": 0.6, "bad": -2.0})
        index = StubIndex({"good": [("great", 0.92), ("fine", 0.75), ("bad", 0.60)]})
        encoder = TableEncoder(orthogonal={"the movie was bad"})
        params = make_params(encoder=encoder, synonym_index=index)
        out = attack_sentence(victim, params, "the movie was good", gold_label="pos")
        # "bad" fails the sentence-similarity gate, so the best admissible
        # candidate is "fine"; no flip, and the gated candidate costs no query.
        assert out.perturbed == "the movie was fine"
        assert not out.success
        assert out.edited_positions == (3,)
        assert out.queries == 7
        assert victim.n_predicts == 7
        assert out.similarity == 1.0

    def test_substitution_needs_strict_drop(self):
        victim = FakeVictim({"good": 2.0, "film": 0.0, "movie": 0.0})
        index = StubIndex({"movie": [("film", 0.95)]})
        params = make_params(synonym_index=index, max_mod_fraction=0.5)
        out = attack_sentence(victim, params, "movie good", gold_label="pos")
        # "film" leaves the confidence unchanged: equal is not a drop.
        assert out.perturbed == out.original == "movie good"
        assert out.edited_positions == ()
        assert not out.success
        assert out.similarity == 1.0
        assert out.queries == 4  # 1 + 2 ranking + 1 rejected trial

    def test_stopword_policy_skip_vs_include(self):
        scores = {"good": 2.0, "a": -0.1}
        index = StubIndex({"the": [("a", 0.99)]})
        skip = make_params(synonym_index=index, stopword_policy="skip",
                           max_mod_fraction=0.5)
        out = attack_sentence(FakeVictim(dict(scores)), skip, "the good",
                              gold_label="pos")
        assert out.perturbed == "the good"
        assert out.edited_positions == ()
        assert out.queries == 3  # stopword position never explored

        include = make_params(synonym_index=index, stopword_policy="include",
                              max_mod_fraction=0.5)
        out = attack_sentence(FakeVictim(dict(scores)), include, "the good",
                              gold_label="pos")
        assert out.perturbed == "a good"
        assert out.edited_positions == (0,)
        assert not out.success
        assert out.queries == 4

    def test_modification_budget_stops_editing(self):
        victim = FakeVictim({"good": 2.0, "great": 1.5, "fine": 0.6, "bad": -2.0,
                             "poor": -1.5})
        index = StubIndex({"good": [("fine", 0.9)], "movie": [("poor", 0.9)],
                           "was": [("poor", 0.9)], "the": [("poor", 0.9)]})
        params = make_params(synonym_index=index, max_mod_fraction=0.25)
        out = attack_sentence(victim, params, "the movie was good", gold_label="pos")
        # One edit uses the whole budget of floor(0.25 * 4); the loop stops
        # before touching a second position.
        assert len(out.edited_positions) == 1
        assert out.perturbed == "the movie was fine"
        assert not out.success

    def test_two_edit_success(self):
        victim = FakeVictim({"good": 2.0, "nice": 0.5, "fine": 0.6, "poor": -1.5})
        index = StubIndex({"good": [("fine", 0.9)], "nice": [("poor", 0.85)]})
        params = make_params(synonym_index=index, max_mod_fraction=1.0)
        out = attack_sentence(victim, params, "good nice", gold_label="pos")
        assert out.perturbed == "fine poor"
        assert out.success
        assert out.edited_positions == (0, 1)
        assert out.mod_rate == 1.0
        assert out.queries == 5  # 1 + 2 ranking + 2 applied trials

    def test_not_attackable_short_circuits(self):
        victim = FakeVictim({"good": 2.0})
        params = make_params(synonym_index=StubIndex({"good": [("bad", 0.9)]}))
        out = attack_sentence(victim, params, "good stuff", gold_label="neg")
        assert not out.attackable
        assert not out.success
        assert out.perturbed == out.original
        assert out.edited_positions == ()
        assert out.similarity == 1.0
        assert out.queries == 1
        assert victim.n_predicts == 1

    def test_without_gold_label_everything_is_attackable(self):
        victim = FakeVictim({"good": 2.0, "bad": -2.0})
        params = make_params(synonym_index=StubIndex({"good": [("bad", 0.9)]}))
        out = attack_sentence(victim, params, "good movie overall here")
        assert out.attackable
        assert out.success

    def test_empty_sentence(self):
        with pytest.raises(EmptySentenceError):
            attack_sentence(FakeVictim({}), make_params(), " \t ")


class TestOutcome:
    def test_round_trip(self):
        out = AttackOutcome(original="a b", perturbed="a c", success=True,
                            attackable=True, similarity=0.97,
                            original_label="pos", final_label="neg",
                            edited_positions=(1,), n_words=2,
                            wall_time_s=0.01, queries=5)
        assert AttackOutcome.from_dict(out.to_dict()) == out

    def test_mod_rate(self):
        out = AttackOutcome(original="a b c d", perturbed="a x c y", success=True,
                            attackable=True, similarity=0.99,
                            original_label="p", final_label="n",
                            edited_positions=(1, 3), n_words=4,
                            wall_time_s=0.0, queries=9)
        assert out.mod_rate == 0.5

    def test_mod_rate_zero_words(self):
        out = AttackOutcome(original="", perturbed="", success=False,
                            attackable=False, similarity=1.0,
                            original_label="p", final_label="p",
                            edited_positions=(), n_words=0,
                            wall_time_s=0.0, queries=1)
        assert out.mod_rate == 0.0


class TestRunAttack:
    def test_real_models_satisfy_invariants(self, victim, baseline_encoder,
                                            synonym_index, attack_data):
        params = preset("textfooler", encoder=baseline_encoder,
                        synonym_index=synonym_index)
        data = type(attack_data)(attack_data.examples[:30])
        outcomes = run_attack(victim, params, data)
        assert len(outcomes) == 30
        assert verify_outcomes(outcomes, params) == []
        for out, (label, text) in zip(outcomes, data.examples):
            assert out.original == " ".join(text.lower().split())
            assert len(out.perturbed.split()) == out.n_words
            assert out.queries >= 1
            if out.attackable:
                assert out.original_label == label
                assert out.queries >= 1 + out.n_words
            diff = tuple(i for i, (a, b) in enumerate(
                zip(out.original.split(), out.perturbed.split())) if a != b)
            assert diff == out.edited_positions
            if out.edited_positions:
                assert (len(out.edited_positions) + 0.0) / out.n_words \
                    <= params.max_mod_fraction
            if out.success:
                assert out.final_label != out.original_label
                assert out.similarity > params.epsilon

    def test_limit(self, victim, baseline_encoder, synonym_index, attack_data):
        params = preset("textfooler", encoder=baseline_encoder,
                        synonym_index=synonym_index)
        outcomes = run_attack(victim, params, attack_data, limit=5)
        assert len(outcomes) == 5

    def test_determinism(self, victim, baseline_encoder, synonym_index,
                         attack_data):
        params = preset("tfadjusted", encoder=baseline_encoder,
                        synonym_index=synonym_index)
        data = type(attack_data)(attack_data.examples[:12])
        a = run_attack(victim, params, data)
        b = run_attack(victim, params, data)
        strip = lambda o: dataclasses.replace(o, wall_time_s=0.0)
        assert [strip(o) for o in a] == [strip(o) for o in b]

    def test_parallel_matches_serial(self, victim, baseline_encoder,
                                     synonym_index, attack_data):
        params = preset("textfooler", encoder=baseline_encoder,
                        synonym_index=synonym_index)
        data = type(attack_data)(attack_data.examples[:12])
        serial = run_attack(victim, params, data, jobs=1)
        parallel = run_attack(victim, params, data, jobs=3)
        strip = lambda o: dataclasses.replace(o, wall_time_s=0.0)
        assert [strip(o) for o in serial] == [strip(o) for o in parallel]

    def test_bad_jobs(self, victim):
        params = make_params()
        with pytest.raises(InvalidHyperparamsError):
            list(iter_attack(victim, params, [("pos", "x")], jobs=0))

    def test_iter_attack_is_lazy(self):
        victim = FakeVictim({"good": 2.0})
        params = make_params(synonym_index=StubIndex({}))
        gen = iter_attack(victim, params, [("pos", "good day"), ("pos", "good")])
        assert victim.n_predicts == 0
        next(gen)
        assert victim.n_predicts > 0


class TestVerifyOutcomes:
    def _one_success(self):
        victim = FakeVictim({"good": 2.0, "bad": -2.0})
        params = make_params(synonym_index=StubIndex({"good": [("bad", 0.9)]}))
        out = attack_sentence(victim, params, "good movie stuff here",
                              gold_label="pos")
        assert out.success
        return out, params

    def test_clean_run_passes(self):
        out, params = self._one_success()
        assert verify_outcomes([out], params) == []

    def test_detects_similarity_violation(self):
        out, params = self._one_success()
        bad_params = dataclasses.replace(
            params, encoder=TableEncoder(orthogonal={out.perturbed}))
        problems = verify_outcomes([out], bad_params)
        assert len(problems) == 1
        assert "similarity" in problems[0]

    def test_detects_position_mismatch(self):
        out, params = self._one_success()
        tampered = dataclasses.replace(out, edited_positions=(2,))
        assert any("positions" in p for p in verify_outcomes([tampered], params))

    def test_detects_token_count_change(self):
        out, params = self._one_success()
        tampered = dataclasses.replace(out, perturbed=out.perturbed + " extra")
        assert any("token count" in p for p in verify_outcomes([tampered], params))

    def test_detects_budget_violation(self):
        out, params = self._one_success()
        tight = dataclasses.replace(params, max_mod_fraction=0.1)
        tampered = dataclasses.replace(
            out, perturbed="bad movie stuff here", edited_positions=(0,))
        assert any("fraction" in p or "similarity" in p
                   for p in verify_outcomes([tampered], tight))

    def test_ignores_failures(self):
        victim = FakeVictim({"good": 5.0})
        params = make_params(synonym_index=StubIndex({}))
        out = attack_sentence(victim, params, "good work", gold_label="pos")
        assert not out.success
        assert verify_outcomes([out], params) == []
