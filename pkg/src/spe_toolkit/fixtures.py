"""Deterministic synthetic fixtures: task corpora, word vectors, attack data.

Seven small labeled corpora (one per stock task preset) share a polar
vocabulary organized as synonym groups with antonym counterparts, so an
ensemble trained on them learns that within-group swaps preserve meaning
while antonym swaps invert it. The static word vectors place synonyms at
cosine ~0.92 and antonyms at ~0.60: close enough that a loose word filter
proposes antonyms as substitutes, far enough that a 0.9 floor prunes them.
All generators are seeded and reproducible.
"""

from __future__ import annotations

import numpy as np

from .text_pipeline import LabeledCorpus

# Paired synonym groups; each positive group's antonyms live in the
# matching negative group.
POLAR_GROUPS: dict[str, tuple[tuple[str, ...], tuple[str, ...]]] = {
    "general": (
        ("good", "great", "excellent", "wonderful", "fantastic",
         "amazing", "superb", "brilliant"),
        ("bad", "terrible", "awful", "horrible", "dreadful",
         "appalling", "dismal", "atrocious"),
    ),
    "food": (
        ("tasty", "delicious", "flavorful", "fresh", "crisp", "savory"),
        ("bland", "disgusting", "stale", "soggy", "flavorless", "rancid"),
    ),
    "mood": (
        ("enjoyable", "delightful", "charming", "pleasant", "lovely",
         "happy", "cheerful", "joyful"),
        ("boring", "dreary", "dull", "unpleasant", "gloomy",
         "sad", "tedious", "miserable"),
    ),
}

# Curated antonym pairs (positive word, negative word), used to probe
# whether an encoder rejects polarity-inverting substitutions.
ANTONYM_PAIRS: tuple[tuple[str, str], ...] = (
    ("good", "bad"), ("great", "terrible"), ("excellent", "awful"),
    ("wonderful", "horrible"), ("fantastic", "dreadful"),
    ("amazing", "appalling"), ("brilliant", "dismal"), ("superb", "atrocious"),
    ("tasty", "bland"), ("delicious", "disgusting"), ("fresh", "stale"),
    ("crisp", "soggy"), ("flavorful", "flavorless"), ("savory", "rancid"),
    ("enjoyable", "boring"), ("delightful", "dreary"), ("charming", "dull"),
    ("pleasant", "unpleasant"), ("lovely", "gloomy"), ("happy", "sad"),
)

# Synonym clusters for ordinary context words (same geometry as polar
# groups but with no antonym axis).
CONTEXT_CLUSTERS: tuple[tuple[str, ...], ...] = (
    ("movie", "film", "picture"),
    ("meal", "dinner", "supper"),
    ("restaurant", "diner", "bistro"),
    ("story", "tale", "plot"),
    ("acting", "performance", "portrayal"),
)

# Polar words the victim model's corpus uses; everything else in the
# polar groups stays out-of-vocabulary for the victim while the ensemble
# still knows it, which is exactly the asymmetry attacks exploit.
VICTIM_POLAR = {
    "positive": ("good", "great", "enjoyable"),
    "negative": ("bad", "terrible", "boring"),
}


def positive_words() -> tuple[str, ...]:
    return tuple(w for pos, _neg in POLAR_GROUPS.values() for w in pos)


def negative_words() -> tuple[str, ...]:
    return tuple(w for _pos, neg in POLAR_GROUPS.values() for w in neg)


def _pick(rng: np.random.Generator, seq):
    return seq[int(rng.integers(len(seq)))]


# ---------------------------------------------------------------------------
# Static word vectors


def build_static_vectors(extra_words=(), dim: int = 512, seed: int = 11,
                         ) -> tuple[dict[str, int], np.ndarray]:
    """Unit word vectors with the synonym/antonym cosine geometry.

    Within a group, word cosines land near 0.92; across an antonym pair
    near 0.60; unrelated words near 0. Context clusters get the 0.92
    treatment without an antonym counterpart; every other word (including
    `extra_words`) is an independent random direction.
    """
    rng = np.random.default_rng(seed)
    families = list(POLAR_GROUPS)
    base = rng.standard_normal((dim, 2 * len(families)))
    q, _ = np.linalg.qr(base)
    g_axes = {fam: q[:, i] for i, fam in enumerate(families)}
    d_axes = {fam: q[:, len(families) + i] for i, fam in enumerate(families)}
    b, a, e = np.sqrt(0.76), np.sqrt(0.16), np.sqrt(0.08)

    def residual_unit() -> np.ndarray:
        n = rng.standard_normal(dim)
        n -= q @ (q.T @ n)
        return n / np.linalg.norm(n)

    vectors: dict[str, np.ndarray] = {}
    for fam, (pos, neg) in POLAR_GROUPS.items():
        for sign, group in ((1.0, pos), (-1.0, neg)):
            for w in group:
                vectors[w] = (b * g_axes[fam] + sign * a * d_axes[fam]
                              + e * residual_unit())
    for cluster in CONTEXT_CLUSTERS:
        axis = residual_unit()
        for w in cluster:
            v = np.sqrt(0.92) * axis + np.sqrt(0.08) * residual_unit()
            vectors[w] = v / np.linalg.norm(v)
    for w in extra_words:
        if w not in vectors:
            v = rng.standard_normal(dim)
            vectors[w] = v / np.linalg.norm(v)

    words = {w: i for i, w in enumerate(vectors)}
    matrix = np.stack([vectors[w] for w in words]).astype(np.float32)
    return words, matrix


# ---------------------------------------------------------------------------
# Task corpora

_SUBJECTS_MOVIE = ("movie", "film", "plot", "acting", "cast", "script",
                   "ending", "story")
_SUBJECTS_FOOD = ("meal", "pasta", "pizza", "dessert", "coffee", "service",
                  "dinner", "soup")
_INTENSIFIERS = ("so", "really", "quite", "truly", "rather")
_OPENERS = ("honestly", "overall", "frankly", "anyway", "somehow")

_MOVIE_FRAMES = (
    "{opener} the {subj} was {int} {polar}",
    "the {subj} felt {int} {polar} from start to finish",
    "{opener} i found the {subj} {int} {polar}",
    "critics called the {subj} {polar} and the crowd agreed",
    "the {subj} seemed {polar} though the theater was crowded",
    "viewers said the {subj} was {polar} on opening night",
    "{opener} that {subj} turned out {int} {polar}",
    "my friends thought the {subj} was {polar} last weekend",
)

_FOOD_FRAMES = (
    "{opener} the {subj} was {int} {polar}",
    "the {subj} tasted {int} {polar} tonight",
    "our waiter brought a {polar} {subj} after a short wait",
    "the {subj} here is always {polar} on weekends",
    "{opener} i found the {subj} {int} {polar}",
    "regulars say the {subj} stays {polar} all season",
    "the kitchen served a {int} {polar} {subj} again",
    "that little place makes a {polar} {subj} every friday",
)


def _polarized(task_frames, subjects, pos_pool, neg_pool, labels,
               n: int, seed: int) -> LabeledCorpus:
    rng = np.random.default_rng(seed)
    pos_label, neg_label = labels
    examples = []
    for i in range(n):
        positive = i % 2 == 0
        text = _pick(rng, task_frames).format(
            opener=_pick(rng, _OPENERS), subj=_pick(rng, subjects),
            int=_pick(rng, _INTENSIFIERS),
            polar=_pick(rng, pos_pool if positive else neg_pool))
        examples.append((pos_label if positive else neg_label, text))
    return LabeledCorpus(examples)


def _sst2(n: int, seed: int) -> LabeledCorpus:
    pos = POLAR_GROUPS["general"][0] + POLAR_GROUPS["mood"][0]
    neg = POLAR_GROUPS["general"][1] + POLAR_GROUPS["mood"][1]
    return _polarized(_MOVIE_FRAMES, _SUBJECTS_MOVIE, pos, neg,
                      ("positive", "negative"), n, seed)


def _yelp(n: int, seed: int) -> LabeledCorpus:
    pos = POLAR_GROUPS["food"][0] + POLAR_GROUPS["general"][0]
    neg = POLAR_GROUPS["food"][1] + POLAR_GROUPS["general"][1]
    return _polarized(_FOOD_FRAMES, _SUBJECTS_FOOD, pos, neg,
                      ("positive", "negative"), n, seed)


_EMOTION_WORDS = {
    "joy": ("happy", "cheerful", "joyful", "delighted", "wonderful", "fantastic"),
    "sadness": ("sad", "gloomy", "miserable", "heartbroken", "dreary", "dismal"),
    "anger": ("angry", "furious", "irritated", "outraged", "livid", "annoyed"),
    "fear": ("afraid", "scared", "terrified", "anxious", "nervous", "uneasy"),
    "love": ("loving", "adoring", "devoted", "affectionate", "charming", "lovely"),
    "surprise": ("surprised", "astonished", "amazed", "stunned", "shocked", "startled"),
}

_EMOTION_FRAMES = (
    "i feel {word} about what happened today",
    "i am {word} because the {subj} was {polar}",
    "feeling {word} after reading that letter",
    "i felt so {word} when the news arrived",
    "that evening left me {word} for hours",
    "i am honestly {word} about tomorrow",
)


def _emotion(n: int, seed: int) -> LabeledCorpus:
    rng = np.random.default_rng(seed)
    labels = tuple(_EMOTION_WORDS)
    all_polar = positive_words() + negative_words()
    examples = []
    for i in range(n):
        label = labels[i % len(labels)]
        text = _pick(rng, _EMOTION_FRAMES).format(
            word=_pick(rng, _EMOTION_WORDS[label]),
            subj=_pick(rng, _SUBJECTS_FOOD + _SUBJECTS_MOVIE),
            polar=_pick(rng, all_polar))
        examples.append((label, text))
    return LabeledCorpus(examples)


_NLI_SUBJECTS = ("meal", "movie", "story", "evening", "concert", "service")


def _nli_parts(rng: np.random.Generator):
    """Premise plus entailed / contradicting / neutral continuations."""
    fam = _pick(rng, list(POLAR_GROUPS))
    pos, neg = POLAR_GROUPS[fam]
    positive = bool(rng.integers(2))
    group, other = (pos, neg) if positive else (neg, pos)
    word = _pick(rng, group)
    synonym = _pick(rng, tuple(w for w in group if w != word))
    antonym = _pick(rng, other)
    subj = _pick(rng, _NLI_SUBJECTS)
    intens = _pick(rng, _INTENSIFIERS)
    premise = f"the {subj} was {intens} {word}"
    entailed = f"the {subj} was {intens} {synonym}"
    contradicting = f"the {subj} was {intens} {antonym}"
    neutral = f"the {subj} happened on a {_pick(rng, ('monday', 'friday', 'sunday'))}"
    return premise, entailed, contradicting, neutral


def _snli(n: int, seed: int) -> LabeledCorpus:
    rng = np.random.default_rng(seed)
    examples = []
    for i in range(n):
        premise, entailed, contradicting, neutral = _nli_parts(rng)
        kind = i % 3
        if kind == 0:
            examples.append(("entailment", f"{premise} {entailed}"))
        elif kind == 1:
            examples.append(("contradiction", f"{premise} {contradicting}"))
        else:
            examples.append(("neutral", f"{premise} {neutral}"))
    return LabeledCorpus(examples)


def _rte(n: int, seed: int) -> LabeledCorpus:
    # Four same-group polar words per example and label tied to the group,
    # so every polarity-bearing character n-gram gets a consistent gradient.
    rng = np.random.default_rng(seed)
    examples = []
    for i in range(n):
        fam = _pick(rng, list(POLAR_GROUPS))
        pos, neg = POLAR_GROUPS[fam]
        positive = i % 2 == 0
        group = pos if positive else neg
        w1, w2, s1, s2 = (_pick(rng, group) for _ in range(4))
        subj = _pick(rng, _NLI_SUBJECTS)
        label = "entailment" if positive else "not_entailment"
        examples.append(
            (label, f"the {subj} felt {w1} and {w2} so it seemed {s1} and {s2}"))
    return LabeledCorpus(examples)


_COLA_FRAMES = (
    "the {subj} was {int} {polar} yesterday",
    "my friend thought the {subj} seemed {polar}",
    "{opener} the {subj} looked {polar} to everyone",
    "the {subj} stayed {polar} until the very end",
)


def _scramble(tokens: list[str], pattern: int) -> list[str]:
    """One of four fixed reorderings (keeps the n-gram space bounded)."""
    n = len(tokens)
    if pattern == 0:
        return tokens[::-1]
    if pattern == 1:
        half = n // 2
        return tokens[half:] + tokens[:half]
    if pattern == 2:
        return tokens[0::2] + tokens[1::2]
    return tokens[1:] + tokens[:1]


def _cola(n: int, seed: int) -> LabeledCorpus:
    rng = np.random.default_rng(seed)
    all_polar = positive_words() + negative_words()
    examples = []
    for i in range(n):
        text = _pick(rng, _COLA_FRAMES).format(
            opener=_pick(rng, _OPENERS),
            subj=_pick(rng, _SUBJECTS_MOVIE + _SUBJECTS_FOOD),
            int=_pick(rng, _INTENSIFIERS), polar=_pick(rng, all_polar))
        if i % 2 == 0:
            examples.append(("acceptable", text))
        else:
            tokens = _scramble(text.split(), int(rng.integers(4)))
            examples.append(("unacceptable", " ".join(tokens)))
    return LabeledCorpus(examples)


_STACKOVERFLOW_TOPICS = {
    "python": ("list", "dict", "pandas", "loop", "tuple", "generator"),
    "javascript": ("promise", "callback", "array", "closure", "dom", "event"),
    "sql": ("query", "join", "table", "index", "schema", "transaction"),
    "css": ("selector", "flexbox", "margin", "stylesheet", "grid", "padding"),
    "android": ("activity", "intent", "fragment", "layout", "manifest", "gradle"),
    "linux": ("bash", "kernel", "cron", "permission", "systemd", "shell"),
    "git": ("branch", "rebase", "merge", "commit", "stash", "remote"),
    "docker": ("container", "image", "volume", "compose", "registry", "network"),
}

_SO_FRAMES = (
    "how do i {verb} a {thing} in {topic}",
    "why does my {thing} break when i {verb} it in {topic}",
    "best way to {verb} the {thing} using {topic}",
    "cannot {verb} {thing} after upgrading {topic}",
    "is there a {topic} trick to {verb} a {thing} quickly",
)

_SO_VERBS = ("sort", "merge", "cache", "parse", "update", "delete", "inspect")


def _stackoverflow(n: int, seed: int) -> LabeledCorpus:
    rng = np.random.default_rng(seed)
    topics = tuple(_STACKOVERFLOW_TOPICS)
    examples = []
    for i in range(n):
        topic = topics[i % len(topics)]
        text = _pick(rng, _SO_FRAMES).format(
            verb=_pick(rng, _SO_VERBS),
            thing=_pick(rng, _STACKOVERFLOW_TOPICS[topic]), topic=topic)
        examples.append((topic, text))
    return LabeledCorpus(examples)


_TASK_BUILDERS = {
    "snli": _snli,
    "cola": _cola,
    "rte": _rte,
    "sst2": _sst2,
    "stackoverflow": _stackoverflow,
    "emotion": _emotion,
    "yelp": _yelp,
}

# Low-epoch presets need more examples for the input rows to train far
# enough past their random initialization to survive norm-based pruning.
_TRAIN_SIZES = {"cola": 24000, "yelp": 12000, "snli": 12000,
                "emotion": 12000, "rte": 12000}
_DEFAULT_TRAIN_SIZE = 3000
HELDOUT_SIZE = 1000


def task_corpus(task: str, seed: int = 101) -> tuple[LabeledCorpus, LabeledCorpus]:
    """Seeded (train, heldout) corpora for one stock task."""
    builder = _TASK_BUILDERS[task]
    n_train = _TRAIN_SIZES.get(task, _DEFAULT_TRAIN_SIZE)
    offset = sorted(_TASK_BUILDERS).index(task)
    train = builder(n_train, seed + offset)
    heldout = builder(HELDOUT_SIZE, seed + offset + 7000)
    return train, heldout


def all_task_words() -> set[str]:
    """Every word any fixture corpus can emit (for vector coverage)."""
    words: set[str] = set()
    for task in _TASK_BUILDERS:
        train, heldout = task_corpus(task)
        for corpus in (train, heldout):
            for _label, text in corpus.examples:
                words.update(text.split())
    for corpus in (victim_corpus()[0], victim_corpus()[1], attack_dataset()):
        for _label, text in corpus.examples:
            words.update(text.split())
    return words


# ---------------------------------------------------------------------------
# Victim model corpus and attack dataset

_VICTIM_FRAMES = (
    "{opener} the {subj} was {int} {polar}",
    "the {subj} seemed {polar} though the seats were stiff",
    "{opener} i thought the {subj} was {int} {polar}",
    "the {subj} stayed {polar} even after the intermission",
    "most people called the {subj} {polar} that night",
    "the {subj} felt {polar} despite the long runtime",
)


def victim_corpus(seed: int = 303) -> tuple[LabeledCorpus, LabeledCorpus]:
    """Movie-review corpus whose polar vocabulary is deliberately narrow."""
    train = _polarized(_VICTIM_FRAMES, _SUBJECTS_MOVIE,
                       VICTIM_POLAR["positive"], VICTIM_POLAR["negative"],
                       ("positive", "negative"), 1200, seed)
    test = _polarized(_VICTIM_FRAMES, _SUBJECTS_MOVIE,
                      VICTIM_POLAR["positive"], VICTIM_POLAR["negative"],
                      ("positive", "negative"), 300, seed + 1)
    return train, test


_ATTACK_FRAMES = (
    "{opener} the {subj} was quite {polar} though the pacing dragged a bit",
    "the {subj} felt {polar} overall even if the start was slow going",
    "{opener} i found the {subj} rather {polar} despite the shaky camera work",
    "the {subj} was {polar} for the most part though the music felt loud",
    "most of the {subj} seemed {polar} even when the dialogue wandered off",
)


def attack_dataset(n: int = 200, seed: int = 909) -> LabeledCorpus:
    """Movie reviews with one strong polar anchor and a mild hedge each."""
    rng = np.random.default_rng(seed)
    examples = []
    for i in range(n):
        positive = i % 2 == 0
        pool = VICTIM_POLAR["positive" if positive else "negative"]
        text = _pick(rng, _ATTACK_FRAMES).format(
            opener=_pick(rng, _OPENERS), subj=_pick(rng, _SUBJECTS_MOVIE),
            polar=_pick(rng, pool))
        examples.append(("positive" if positive else "negative", text))
    return LabeledCorpus(examples)


def fixture_static_vectors(dim: int = 512, seed: int = 11,
                           ) -> tuple[dict[str, int], np.ndarray]:
    """Static vectors covering the full fixture vocabulary."""
    return build_static_vectors(sorted(all_task_words()), dim=dim, seed=seed)
