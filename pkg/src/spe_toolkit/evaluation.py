"""Attack-quality metrics, human-annotation ingestion, and reporting.

Success rate is computed over attackable sentences only (sentences the
victim already misclassified are excluded). Human annotators score
original/perturbed pairs on a 1-4 similarity scale; a pair counts as
semantically similar when its mean score is at least 2.5. The revised
success rate scales the raw rate by the annotated fraction judged
similar, and is omitted when fewer than 10 attacks succeeded.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .attack import AttackOutcome
from .errors import (
    DuplicateAnnotationError,
    IoError,
    NoAnnotationsError,
    NoAttemptedSentencesError,
    NoSuccessesError,
    PairIdMismatchError,
    ParseError,
    ScoreOutOfRangeError,
)

SIMILARITY_SCORE_MIN = 1
SIMILARITY_SCORE_MAX = 4
SIMILAR_MEAN_THRESHOLD = 2.5
RASR_MIN_SUCCESSES = 10

ANNOTATION_HEADER = ("pair_id", "annotator_id", "score")
SHEET_HEADER = ("pair_id", "original", "perturbed")


def pair_id(original: str, perturbed: str) -> str:
    """Stable 16-hex-digit id of an original/perturbed sentence pair."""
    digest = hashlib.sha256((original + "\x1f" + perturbed).encode("utf-8"))
    return digest.hexdigest()[:16]


@dataclass(frozen=True)
class AnnotationRecord:
    pair_id: str
    annotator_id: str
    score: int


@dataclass(frozen=True)
class PairJudgment:
    pair_id: str
    mean_score: float
    similar: bool
    n_annotations: int


@dataclass(frozen=True)
class RasrResult:
    """Revised success rate, or the reason it is omitted."""

    value: float | None
    omitted: bool
    reason: str
    n_success: int
    n_similar: int
    n_annotated: int

    def to_dict(self) -> dict:
        return {"value": self.value, "omitted": self.omitted, "reason": self.reason,
                "n_success": self.n_success, "n_similar": self.n_similar,
                "n_annotated": self.n_annotated}

    @classmethod
    def from_dict(cls, d: dict) -> "RasrResult":
        return cls(value=d["value"], omitted=bool(d["omitted"]), reason=d["reason"],
                   n_success=int(d["n_success"]), n_similar=int(d["n_similar"]),
                   n_annotated=int(d["n_annotated"]))


def _attempted(outcomes: list[AttackOutcome]) -> list[AttackOutcome]:
    return [o for o in outcomes if o.attackable]


def _successes(outcomes: list[AttackOutcome]) -> list[AttackOutcome]:
    return [o for o in outcomes if o.attackable and o.success]


def compute_asr(outcomes: list[AttackOutcome]) -> float:
    """Attack success rate in percent over attackable sentences."""
    attempted = _attempted(outcomes)
    if not attempted:
        raise NoAttemptedSentencesError("no attackable sentences to score")
    return 100.0 * len(_successes(outcomes)) / len(attempted)


def compute_mod_rate(outcomes: list[AttackOutcome]) -> float:
    """Mean percentage of words changed, over successful attacks."""
    successes = _successes(outcomes)
    if not successes:
        raise NoSuccessesError("modification rate needs at least one successful attack")
    return 100.0 * float(np.mean([o.mod_rate for o in successes]))


def compute_timing(outcomes: list[AttackOutcome]) -> float:
    """Mean wall-clock seconds per attacked sentence."""
    attempted = _attempted(outcomes)
    if not attempted:
        raise NoAttemptedSentencesError("no attackable sentences were timed")
    return float(np.mean([o.wall_time_s for o in attempted]))


def ingest_annotations(path: str) -> list[AnnotationRecord]:
    """Read annotator scores from a pair_id,annotator_id,score CSV."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            rows = list(csv.reader(f))
    except OSError as exc:
        raise IoError(f"cannot read annotations {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise ParseError(f"not valid UTF-8: {exc}", path=path) from exc
    if not rows:
        raise ParseError("missing header row", path=path, line_number=1)
    if tuple(rows[0]) != ANNOTATION_HEADER:
        raise ParseError(
            f"expected header {','.join(ANNOTATION_HEADER)}, got {','.join(rows[0])!r}",
            path=path, line_number=1)
    records: list[AnnotationRecord] = []
    seen: set[tuple[str, str]] = set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3:
            raise ParseError(f"expected 3 fields, got {len(row)}",
                             path=path, line_number=lineno)
        pid, annotator, raw_score = row
        try:
            score = int(raw_score)
        except ValueError:
            raise ParseError(f"score must be an integer, got {raw_score!r}",
                             path=path, line_number=lineno) from None
        if not SIMILARITY_SCORE_MIN <= score <= SIMILARITY_SCORE_MAX:
            raise ScoreOutOfRangeError(
                f"score must be in [{SIMILARITY_SCORE_MIN}, {SIMILARITY_SCORE_MAX}], "
                f"got {score}", line_number=lineno)
        key = (pid, annotator)
        if key in seen:
            raise DuplicateAnnotationError(
                f"annotator {annotator!r} scored pair {pid!r} more than once "
                f"(line {lineno})")
        seen.add(key)
        records.append(AnnotationRecord(pair_id=pid, annotator_id=annotator, score=score))
    return records


def aggregate_annotations(records: list[AnnotationRecord]) -> list[PairJudgment]:
    """Per-pair mean score and the >= 2.5 similarity verdict, sorted by id."""
    by_pair: dict[str, list[int]] = {}
    for rec in records:
        by_pair.setdefault(rec.pair_id, []).append(rec.score)
    judgments = []
    for pid in sorted(by_pair):
        scores = by_pair[pid]
        mean = sum(scores) / len(scores)
        judgments.append(PairJudgment(pair_id=pid, mean_score=mean,
                                      similar=mean >= SIMILAR_MEAN_THRESHOLD,
                                      n_annotations=len(scores)))
    return judgments


def compute_rasr(asr_pct: float, judgments: list[PairJudgment],
                 n_success: int) -> RasrResult:
    """Scale the success rate by the annotated fraction judged similar.

    Omitted (value None) when fewer than RASR_MIN_SUCCESSES attacks
    succeeded, since a handful of successes cannot support the estimate.
    """
    if n_success < RASR_MIN_SUCCESSES:
        return RasrResult(value=None, omitted=True,
                          reason=f"fewer than {RASR_MIN_SUCCESSES} successes "
                                 f"({n_success})",
                          n_success=n_success,
                          n_similar=sum(j.similar for j in judgments or []),
                          n_annotated=len(judgments or []))
    if not judgments:
        raise NoAnnotationsError("revised success rate needs annotated pairs")
    n_similar = sum(j.similar for j in judgments)
    value = asr_pct * n_similar / len(judgments)
    return RasrResult(value=value, omitted=False, reason="",
                      n_success=n_success, n_similar=n_similar,
                      n_annotated=len(judgments))


@dataclass(frozen=True)
class MetricsReport:
    """Aggregate attack metrics plus the configuration that produced them."""

    n_sentences: int
    n_attackable: int
    n_not_attackable: int
    n_success: int
    asr_pct: float
    mod_rate_pct: float | None
    mean_wall_time_s: float
    mean_queries: float
    rasr: RasrResult
    config: dict
    config_fingerprint: str

    def to_dict(self) -> dict:
        return {
            "n_sentences": self.n_sentences,
            "n_attackable": self.n_attackable,
            "n_not_attackable": self.n_not_attackable,
            "n_success": self.n_success,
            "asr_pct": self.asr_pct,
            "mod_rate_pct": self.mod_rate_pct,
            "mean_wall_time_s": self.mean_wall_time_s,
            "mean_queries": self.mean_queries,
            "rasr": self.rasr.to_dict(),
            "config": self.config,
            "config_fingerprint": self.config_fingerprint,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(
            n_sentences=int(d["n_sentences"]),
            n_attackable=int(d["n_attackable"]),
            n_not_attackable=int(d["n_not_attackable"]),
            n_success=int(d["n_success"]),
            asr_pct=float(d["asr_pct"]),
            mod_rate_pct=None if d["mod_rate_pct"] is None else float(d["mod_rate_pct"]),
            mean_wall_time_s=float(d["mean_wall_time_s"]),
            mean_queries=float(d["mean_queries"]),
            rasr=RasrResult.from_dict(d["rasr"]),
            config=dict(d["config"]),
            config_fingerprint=str(d["config_fingerprint"]),
        )


def config_fingerprint(config: dict) -> str:
    """16-hex-digit digest of the canonical JSON form of a config dict."""
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def build_report(outcomes: list[AttackOutcome],
                 judgments: list[PairJudgment] | None,
                 config: dict) -> MetricsReport:
    """Assemble all metrics for one attack run.

    Judgments, when given, must reference pairs that exist among the
    successful outcomes; they may cover any subset (sheets are sampled).
    """
    attempted = _attempted(outcomes)
    successes = _successes(outcomes)
    if judgments:
        known = {pair_id(o.original, o.perturbed) for o in successes}
        for j in judgments:
            if j.pair_id not in known:
                raise PairIdMismatchError(
                    f"judgment pair id {j.pair_id!r} matches no successful outcome")
    asr = compute_asr(outcomes)
    mod = compute_mod_rate(outcomes) if successes else None
    if judgments is None:
        if len(successes) < RASR_MIN_SUCCESSES:
            rasr = compute_rasr(asr, [], len(successes))
        else:
            rasr = RasrResult(value=None, omitted=True,
                              reason="no annotations supplied",
                              n_success=len(successes), n_similar=0, n_annotated=0)
    else:
        rasr = compute_rasr(asr, judgments, len(successes))
    return MetricsReport(
        n_sentences=len(outcomes),
        n_attackable=len(attempted),
        n_not_attackable=len(outcomes) - len(attempted),
        n_success=len(successes),
        asr_pct=asr,
        mod_rate_pct=mod,
        mean_wall_time_s=compute_timing(outcomes),
        mean_queries=float(np.mean([o.queries for o in attempted])),
        rasr=rasr,
        config=config,
        config_fingerprint=config_fingerprint(config),
    )


def export_annotation_sheet(outcomes: list[AttackOutcome], sample_n: int,
                            seed: int = 0) -> list[tuple[str, str, str]]:
    """Sample successful pairs for human annotation (without replacement).

    Outcomes with identical texts collapse to one pair: score ingestion
    forbids an annotator scoring the same pair twice, so the sheet must
    be unique by pair id.
    """
    successes = _successes(outcomes)
    if not successes:
        raise NoSuccessesError("no successful attacks to annotate")
    unique: dict[str, tuple[str, str]] = {}
    for outcome in successes:
        pid = pair_id(outcome.original, outcome.perturbed)
        unique.setdefault(pid, (outcome.original, outcome.perturbed))
    pairs = [(pid, original, perturbed)
             for pid, (original, perturbed) in unique.items()]
    rng = np.random.default_rng(seed)
    n = min(sample_n, len(pairs))
    picks = rng.choice(len(pairs), size=n, replace=False)
    return [pairs[int(i)] for i in picks]


def write_annotation_sheet(rows: list[tuple[str, str, str]], path: str) -> None:
    """Write sampled pairs as a pair_id,original,perturbed CSV."""
    try:
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(SHEET_HEADER)
            writer.writerows(rows)
    except OSError as exc:
        raise IoError(f"cannot write annotation sheet {path}: {exc}") from exc


def read_annotation_sheet(path: str) -> list[tuple[str, str, str]]:
    """Inverse of write_annotation_sheet."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            rows = list(csv.reader(f))
    except OSError as exc:
        raise IoError(f"cannot read annotation sheet {path}: {exc}") from exc
    if not rows or tuple(rows[0]) != SHEET_HEADER:
        raise ParseError(f"expected header {','.join(SHEET_HEADER)}",
                         path=path, line_number=1)
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3:
            raise ParseError(f"expected 3 fields, got {len(row)}",
                             path=path, line_number=lineno)
        out.append((row[0], row[1], row[2]))
    return out
