"""Greedy word-substitution attacks constrained by a sentence encoder.

The attack ranks words by how much deleting them drops the victim's
confidence, then walks positions in that order replacing words with
nearest static-vector neighbours. A substitution is kept only when the
encoder still judges the perturbed sentence semantically equivalent to
the original and the victim's confidence in its original label strictly
drops. Success means the victim's argmax label changed.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    ConfigError,
    EmptySentenceError,
    InvalidEpsilonError,
    InvalidHyperparamsError,
    UnknownPresetError,
)
from .spe import DEFAULT_EPSILON, encoder_similarity, load_word_vectors
from .stopwords import STOPWORDS
from .text_pipeline import LabeledCorpus, tokenize

DEFAULT_SYNONYM_K = 50
DEFAULT_MAX_MOD_FRACTION = 0.4

PRESET_NAMES = ("textfooler", "tfadjusted")


class SynonymIndex:
    """Top-k cosine neighbours over a static word-vector table.

    Neighbour lists exclude the query word itself, order by descending
    cosine with ties broken toward the lower row index, and are cached
    per (word, k). Words absent from the table have no neighbours.
    """

    def __init__(self, words: dict[str, int], matrix: np.ndarray):
        self.words = words
        self.matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        self._norms = np.linalg.norm(self.matrix.astype(np.float64), axis=1)
        self._index_to_word = [""] * len(words)
        for w, i in words.items():
            self._index_to_word[i] = w
        self._cache: dict[tuple[str, int], list[tuple[str, float]]] = {}

    @classmethod
    def from_word_vectors(cls, path: str) -> "SynonymIndex":
        words, matrix = load_word_vectors(path)
        return cls(words, matrix)

    def neighbors(self, word: str, k: int) -> list[tuple[str, float]]:
        """k nearest neighbours of `word` as (word, cosine) pairs."""
        if k < 1:
            return []
        key = (word, k)
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        idx = self.words.get(word)
        result: list[tuple[str, float]] = []
        if idx is not None and self._norms[idx] > 0.0:
            dots = self.matrix.astype(np.float64) @ self.matrix[idx].astype(np.float64)
            denom = self._norms * self._norms[idx]
            cos = np.full(dots.shape, -np.inf)
            nonzero = denom > 0.0
            cos[nonzero] = dots[nonzero] / denom[nonzero]
            cos[idx] = -np.inf
            keff = min(k, cos.shape[0] - 1)
            if keff > 0:
                cand = np.argpartition(-cos, keff - 1)[:keff]
                order = np.lexsort((cand, -cos[cand]))
                for j in cand[order]:
                    c = float(cos[j])
                    if c == -np.inf:
                        break
                    result.append((self._index_to_word[j], min(1.0, max(-1.0, c))))
        self._cache[key] = result
        return result


@dataclass
class AttackParams:
    """Knobs of one attack configuration.

    epsilon gates sentence-level similarity (strictly greater passes);
    min_word_cos gates word-level candidate similarity (inclusive).
    """

    encoder: object = None
    synonym_index: SynonymIndex | None = None
    epsilon: float = DEFAULT_EPSILON
    synonym_k: int = DEFAULT_SYNONYM_K
    min_word_cos: float = 0.5
    max_mod_fraction: float = DEFAULT_MAX_MOD_FRACTION
    stopword_policy: str = "skip"
    preset_name: str = ""

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise InvalidEpsilonError(f"epsilon must be in (0, 1], got {self.epsilon}")
        if self.synonym_k < 1:
            raise InvalidHyperparamsError(f"synonym_k must be >= 1, got {self.synonym_k}")
        if not 0 <= self.min_word_cos <= 1:
            raise InvalidHyperparamsError(
                f"min_word_cos must be in [0, 1], got {self.min_word_cos}")
        if not 0 < self.max_mod_fraction <= 1:
            raise InvalidHyperparamsError(
                f"max_mod_fraction must be in (0, 1], got {self.max_mod_fraction}")
        if self.stopword_policy not in ("skip", "include"):
            raise InvalidHyperparamsError(
                f"stopword_policy must be 'skip' or 'include', got {self.stopword_policy!r}")


def preset(name: str, encoder=None, synonym_index: SynonymIndex | None = None) -> AttackParams:
    """Named attack configurations.

    textfooler: word cosine floor 0.5, sentence threshold = the encoder's own.
    tfadjusted: word cosine floor 0.9, sentence threshold tightened by 0.03
    over the encoder's (capped at 0.98).
    """
    base_eps = float(getattr(encoder, "epsilon", DEFAULT_EPSILON))
    if name == "textfooler":
        return AttackParams(encoder=encoder, synonym_index=synonym_index,
                            epsilon=base_eps, min_word_cos=0.5, preset_name=name)
    if name == "tfadjusted":
        return AttackParams(encoder=encoder, synonym_index=synonym_index,
                            epsilon=min(base_eps + 0.03, 0.98),
                            min_word_cos=0.9, preset_name=name)
    raise UnknownPresetError(
        f"unknown attack preset {name!r}; valid presets: {', '.join(PRESET_NAMES)}")


@dataclass(frozen=True)
class AttackOutcome:
    """Result of attacking one sentence (whitespace-normalized text)."""

    original: str
    perturbed: str
    success: bool
    attackable: bool
    similarity: float
    original_label: str
    final_label: str
    edited_positions: tuple[int, ...]
    n_words: int
    wall_time_s: float
    queries: int

    @property
    def mod_rate(self) -> float:
        return len(self.edited_positions) / self.n_words if self.n_words else 0.0

    def to_dict(self) -> dict:
        return {
            "original": self.original,
            "perturbed": self.perturbed,
            "success": self.success,
            "attackable": self.attackable,
            "similarity": self.similarity,
            "original_label": self.original_label,
            "final_label": self.final_label,
            "edited_positions": list(self.edited_positions),
            "n_words": self.n_words,
            "wall_time_s": self.wall_time_s,
            "queries": self.queries,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttackOutcome":
        return cls(
            original=d["original"],
            perturbed=d["perturbed"],
            success=bool(d["success"]),
            attackable=bool(d["attackable"]),
            similarity=float(d["similarity"]),
            original_label=str(d["original_label"]),
            final_label=str(d["final_label"]),
            edited_positions=tuple(int(p) for p in d["edited_positions"]),
            n_words=int(d["n_words"]),
            wall_time_s=float(d["wall_time_s"]),
            queries=int(d["queries"]),
        )


def _require(params: AttackParams) -> None:
    if params.encoder is None:
        raise ConfigError("attack params need an encoder")
    if params.synonym_index is None:
        raise ConfigError("attack params need a synonym index")


def _importance(victim, tokens: list[str], orig_dist) -> list[tuple[int, float]]:
    """Leave-one-out confidence drops, sorted descending (ties: lower index)."""
    orig_label = orig_dist.argmax_label
    p_orig = orig_dist.prob(orig_label)
    scores = np.empty(len(tokens))
    for i in range(len(tokens)):
        reduced = " ".join(tokens[:i] + tokens[i + 1:])
        scores[i] = p_orig - victim.predict(reduced).prob(orig_label)
    order = np.argsort(-scores, kind="stable")
    return [(int(i), float(scores[i])) for i in order]


def rank_word_importance(victim, sentence: str) -> list[tuple[int, float]]:
    """Positions of `sentence` ranked by leave-one-out importance."""
    tokens = tokenize(sentence, victim.dictionary.lowercase)
    if not tokens:
        raise EmptySentenceError("cannot rank words of an empty sentence")
    return _importance(victim, tokens, victim.predict(" ".join(tokens)))


def candidate_substitutions(word: str, index: SynonymIndex,
                            params: AttackParams) -> list[str]:
    """Neighbour words passing the word-level cosine floor (best first)."""
    return [w for w, c in index.neighbors(word, params.synonym_k)
            if c >= params.min_word_cos]


def attack_sentence(victim, params: AttackParams, sentence: str,
                    gold_label: str | None = None) -> AttackOutcome:
    """Run the greedy substitution attack on one sentence.

    When gold_label is given and the victim already misclassifies the
    sentence, it is flagged not attackable and returned unmodified.
    """
    _require(params)
    t0 = time.perf_counter()
    tokens = tokenize(sentence, victim.dictionary.lowercase)
    if not tokens:
        raise EmptySentenceError("cannot attack an empty sentence")
    original = " ".join(tokens)
    n = len(tokens)
    queries = 1
    orig_dist = victim.predict(original)
    orig_label = orig_dist.argmax_label

    if gold_label is not None and orig_label != gold_label:
        return AttackOutcome(
            original=original, perturbed=original, success=False,
            attackable=False, similarity=1.0, original_label=orig_label,
            final_label=orig_label, edited_positions=(), n_words=n,
            wall_time_s=time.perf_counter() - t0, queries=queries)

    ranking = _importance(victim, tokens, orig_dist)
    queries += n

    current = list(tokens)
    edited: list[int] = []
    p_cur = orig_dist.prob(orig_label)
    final_dist = orig_dist
    for pos, _score in ranking:
        if params.stopword_policy == "skip" and tokens[pos] in STOPWORDS:
            continue
        if (len(edited) + 1) / n > params.max_mod_fraction:
            break
        best_word = None
        best_p = p_cur
        best_dist = None
        for cand in candidate_substitutions(tokens[pos], params.synonym_index, params):
            trial = current.copy()
            trial[pos] = cand
            trial_text = " ".join(trial)
            if encoder_similarity(params.encoder, original, trial_text) <= params.epsilon:
                continue
            dist = victim.predict(trial_text)
            queries += 1
            p_cand = dist.prob(orig_label)
            if p_cand < best_p:
                best_word, best_p, best_dist = cand, p_cand, dist
        if best_word is None:
            continue
        current[pos] = best_word
        edited.append(pos)
        p_cur = best_p
        final_dist = best_dist
        if final_dist.argmax_label != orig_label:
            break

    perturbed = " ".join(current)
    similarity = (encoder_similarity(params.encoder, original, perturbed)
                  if edited else 1.0)
    final_label = final_dist.argmax_label
    return AttackOutcome(
        original=original, perturbed=perturbed,
        success=final_label != orig_label, attackable=True,
        similarity=similarity, original_label=orig_label,
        final_label=final_label, edited_positions=tuple(sorted(edited)),
        n_words=n, wall_time_s=time.perf_counter() - t0, queries=queries)


def iter_attack(victim, params: AttackParams, examples, jobs: int = 1):
    """Yield attack outcomes for (label, text) pairs in input order."""
    _require(params)
    if jobs < 1:
        raise InvalidHyperparamsError(f"jobs must be >= 1, got {jobs}")
    if jobs == 1 or len(examples) <= 1:
        for label, text in examples:
            yield attack_sentence(victim, params, text, gold_label=label)
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            yield from pool.map(
                lambda ex: attack_sentence(victim, params, ex[1], gold_label=ex[0]),
                examples)


def run_attack(victim, params: AttackParams, dataset: LabeledCorpus,
               limit: int | None = None, jobs: int = 1) -> list[AttackOutcome]:
    """Attack the first `limit` dataset sentences, preserving input order.

    Every processed sentence yields an outcome; sentences the victim
    already misclassifies are flagged not attackable rather than dropped.
    """
    examples = dataset.examples if limit is None else dataset.examples[:limit]
    return list(iter_attack(victim, params, examples, jobs=jobs))


def verify_outcomes(outcomes: list[AttackOutcome], params: AttackParams) -> list[str]:
    """Post-hoc constraint check; returns one message per violation."""
    _require(params)
    problems = []
    for i, out in enumerate(outcomes):
        if not out.success:
            continue
        sim = encoder_similarity(params.encoder, out.original, out.perturbed)
        if sim <= params.epsilon:
            problems.append(
                f"outcome {i}: similarity {sim:.6f} does not exceed {params.epsilon}")
        if out.n_words and len(out.edited_positions) / out.n_words > params.max_mod_fraction:
            problems.append(
                f"outcome {i}: edited fraction "
                f"{len(out.edited_positions) / out.n_words:.3f} exceeds "
                f"{params.max_mod_fraction}")
        o_toks, p_toks = out.original.split(), out.perturbed.split()
        if len(o_toks) != len(p_toks):
            problems.append(f"outcome {i}: token count changed")
        else:
            diff = tuple(j for j, (a, b) in enumerate(zip(o_toks, p_toks)) if a != b)
            if diff != out.edited_positions:
                problems.append(
                    f"outcome {i}: edited positions {out.edited_positions} "
                    f"do not match text diff {diff}")
    return problems


def replace_encoder(params: AttackParams, encoder, synonym_index=None) -> AttackParams:
    """Copy of params bound to a different encoder (and optionally index)."""
    return replace(params, encoder=encoder,
                   synonym_index=synonym_index or params.synonym_index)
