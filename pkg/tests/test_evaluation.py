"""Metrics, annotation ingestion/aggregation, revised success rate, reports."""

from __future__ import annotations

import hashlib

import pytest

from spe_toolkit.attack import AttackOutcome
from spe_toolkit.errors import (
    DuplicateAnnotationError,
    IoError,
    NoAnnotationsError,
    NoAttemptedSentencesError,
    NoSuccessesError,
    PairIdMismatchError,
    ParseError,
    ScoreOutOfRangeError,
)
from spe_toolkit.evaluation import (
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
    config_fingerprint,
    export_annotation_sheet,
    ingest_annotations,
    pair_id,
    read_annotation_sheet,
    write_annotation_sheet,
)


def make_outcome(i: int, success: bool = True, attackable: bool = True,
                 n_words: int = 10, n_edits: int = 2, wall: float = 0.01,
                 queries: int = 30) -> AttackOutcome:
    orig = f"sentence number {i} padded to a fixed width here now"
    words = orig.split()
    if success:
        for p in range(n_edits):
            words[p] = f"swap{p}x{i}"
    pert = " ".join(words)
    return AttackOutcome(
        original=orig, perturbed=pert, success=success, attackable=attackable,
        similarity=0.97 if success else 1.0, original_label="pos",
        final_label="neg" if success else "pos",
        edited_positions=tuple(range(n_edits)) if success else (),
        n_words=n_words, wall_time_s=wall, queries=queries)


class TestPairId:
    def test_matches_digest_formula(self):
        expected = hashlib.sha256("a b\x1fa c".encode("utf-8")).hexdigest()[:16]
        assert pair_id("a b", "a c") == expected

    def test_shape(self):
        pid = pair_id("x", "y")
        assert len(pid) == 16
        assert all(c in "0123456789abcdef" for c in pid)

    def test_sensitive_to_both_sides(self):
        assert pair_id("a", "b") != pair_id("a", "c")
        assert pair_id("a", "b") != pair_id("c", "b")
        assert pair_id("a", "b") != pair_id("b", "a")

    def test_separator_prevents_ambiguity(self):
        assert pair_id("ab", "c") != pair_id("a", "bc")


class TestBasicMetrics:
    def test_asr_over_attackable_only(self):
        outcomes = ([make_outcome(i) for i in range(3)]
                    + [make_outcome(i + 10, success=False) for i in range(2)]
                    + [make_outcome(20, success=False, attackable=False)])
        assert compute_asr(outcomes) == 60.0

    def test_asr_needs_attackable(self):
        with pytest.raises(NoAttemptedSentencesError):
            compute_asr([make_outcome(0, success=False, attackable=False)])
        with pytest.raises(NoAttemptedSentencesError):
            compute_asr([])

    def test_mod_rate_over_successes_only(self):
        outcomes = [make_outcome(0, n_words=10, n_edits=2),
                    make_outcome(1, n_words=10, n_edits=4),
                    make_outcome(2, success=False, n_words=10)]
        assert compute_mod_rate(outcomes) == pytest.approx(30.0)

    def test_mod_rate_needs_successes(self):
        with pytest.raises(NoSuccessesError):
            compute_mod_rate([make_outcome(0, success=False)])

    def test_timing_over_attackable(self):
        outcomes = [make_outcome(0, wall=0.02),
                    make_outcome(1, success=False, wall=0.04),
                    make_outcome(2, attackable=False, success=False, wall=9.0)]
        assert compute_timing(outcomes) == pytest.approx(0.03)


class TestIngestAnnotations:
    def write(self, tmp_path, text):
        path = tmp_path / "ann.csv"
        path.write_text(text)
        return str(path)

    def test_happy_path(self, tmp_path):
        path = self.write(tmp_path,
                          "pair_id,annotator_id,score\n"
                          "p1,a1,4\np1,a2,3\np2,a1,1\n")
        records = ingest_annotations(path)
        assert records == [
            AnnotationRecord("p1", "a1", 4),
            AnnotationRecord("p1", "a2", 3),
            AnnotationRecord("p2", "a1", 1),
        ]

    def test_blank_lines_skipped(self, tmp_path):
        path = self.write(tmp_path, "pair_id,annotator_id,score\n\np1,a1,2\n\n")
        assert len(ingest_annotations(path)) == 1

    def test_bad_header(self, tmp_path):
        path = self.write(tmp_path, "id,rater,val\np1,a1,3\n")
        with pytest.raises(ParseError) as exc:
            ingest_annotations(path)
        assert exc.value.line_number == 1

    def test_empty_file(self, tmp_path):
        with pytest.raises(ParseError):
            ingest_annotations(self.write(tmp_path, ""))

    def test_wrong_field_count(self, tmp_path):
        path = self.write(tmp_path, "pair_id,annotator_id,score\np1,a1\n")
        with pytest.raises(ParseError) as exc:
            ingest_annotations(path)
        assert exc.value.line_number == 2

    def test_non_integer_score(self, tmp_path):
        path = self.write(tmp_path, "pair_id,annotator_id,score\np1,a1,high\n")
        with pytest.raises(ParseError):
            ingest_annotations(path)

    @pytest.mark.parametrize("score", ["0", "5", "-1"])
    def test_score_out_of_range(self, tmp_path, score):
        path = self.write(tmp_path,
                          f"pair_id,annotator_id,score\np1,a1,2\np2,a1,{score}\n")
        with pytest.raises(ScoreOutOfRangeError) as exc:
            ingest_annotations(path)
        assert exc.value.line_number == 3

    def test_duplicate_annotator_pair(self, tmp_path):
        path = self.write(tmp_path,
                          "pair_id,annotator_id,score\np1,a1,2\np1,a1,3\n")
        with pytest.raises(DuplicateAnnotationError):
            ingest_annotations(path)

    def test_same_pair_different_annotators_ok(self, tmp_path):
        path = self.write(tmp_path,
                          "pair_id,annotator_id,score\np1,a1,2\np1,a2,2\n")
        assert len(ingest_annotations(path)) == 2

    def test_missing_file(self, tmp_path):
        with pytest.raises(IoError):
            ingest_annotations(str(tmp_path / "none.csv"))


class TestAggregate:
    def test_means_and_threshold(self):
        records = [
            AnnotationRecord("pb", "a1", 2), AnnotationRecord("pb", "a2", 3),
            AnnotationRecord("pa", "a1", 2), AnnotationRecord("pa", "a2", 2),
            AnnotationRecord("pc", "a1", 4),
        ]
        judgments = aggregate_annotations(records)
        assert [j.pair_id for j in judgments] == ["pa", "pb", "pc"]
        by_id = {j.pair_id: j for j in judgments}
        # Mean exactly 2.5 counts as similar (inclusive threshold).
        assert by_id["pb"].mean_score == 2.5 and by_id["pb"].similar
        assert by_id["pa"].mean_score == 2.0 and not by_id["pa"].similar
        assert by_id["pc"].mean_score == 4.0 and by_id["pc"].similar
        assert by_id["pb"].n_annotations == 2
        assert by_id["pc"].n_annotations == 1

    def test_empty(self):
        assert aggregate_annotations([]) == []


class TestComputeRasr:
    def judgments(self, n_similar, n_total):
        return [PairJudgment(f"p{i:03d}", 4.0 if i < n_similar else 1.0,
                             i < n_similar, 2)
                for i in range(n_total)]

    def test_scaling_formula(self):
        result = compute_rasr(80.0, self.judgments(30, 100), n_success=400)
        assert not result.omitted
        assert result.value == pytest.approx(80.0 * 30 / 100)
        assert result.n_similar == 30
        assert result.n_annotated == 100
        assert result.n_success == 400

    def test_omitted_below_ten_successes(self):
        result = compute_rasr(1.0, self.judgments(5, 9), n_success=9)
        assert result.omitted
        assert result.value is None
        assert result.reason == "fewer than 10 successes (9)"

    def test_ten_successes_is_enough(self):
        result = compute_rasr(10.0, self.judgments(5, 10), n_success=10)
        assert not result.omitted
        assert result.value == pytest.approx(5.0)

    def test_needs_annotations_when_supported(self):
        with pytest.raises(NoAnnotationsError):
            compute_rasr(50.0, [], n_success=25)

    def test_round_trip(self):
        result = compute_rasr(80.0, self.judgments(3, 10), n_success=40)
        assert RasrResult.from_dict(result.to_dict()) == result


class TestConfigFingerprint:
    def test_stable_and_order_independent(self):
        a = {"preset": "textfooler", "epsilon": 0.95}
        b = {"epsilon": 0.95, "preset": "textfooler"}
        assert config_fingerprint(a) == config_fingerprint(b)
        assert len(config_fingerprint(a)) == 16

    def test_value_sensitive(self):
        a = {"preset": "textfooler"}
        b = {"preset": "tfadjusted"}
        assert config_fingerprint(a) != config_fingerprint(b)


class TestBuildReport:
    CONFIG = {"preset": "textfooler", "encoder": "spe"}

    def outcomes(self, n_success=12, n_fail=6, n_skip=2):
        return ([make_outcome(i) for i in range(n_success)]
                + [make_outcome(100 + i, success=False) for i in range(n_fail)]
                + [make_outcome(200 + i, success=False, attackable=False)
                   for i in range(n_skip)])

    def test_counts_and_rates(self):
        report = build_report(self.outcomes(), None, self.CONFIG)
        assert report.n_sentences == 20
        assert report.n_attackable == 18
        assert report.n_not_attackable == 2
        assert report.n_success == 12
        assert report.asr_pct == pytest.approx(100.0 * 12 / 18)
        assert report.mod_rate_pct == pytest.approx(20.0)
        assert report.mean_wall_time_s == pytest.approx(0.01)
        assert report.mean_queries == pytest.approx(30.0)
        assert report.config == self.CONFIG
        assert report.config_fingerprint == config_fingerprint(self.CONFIG)

    def test_no_annotations_but_supported(self):
        report = build_report(self.outcomes(), None, self.CONFIG)
        assert report.rasr.omitted
        assert report.rasr.reason == "no annotations supplied"

    def test_no_annotations_and_unsupported(self):
        report = build_report(self.outcomes(n_success=4), None, self.CONFIG)
        assert report.rasr.omitted
        assert report.rasr.reason == "fewer than 10 successes (4)"

    def test_empty_judgment_list_raises_when_supported(self):
        with pytest.raises(NoAnnotationsError):
            build_report(self.outcomes(), [], self.CONFIG)

    def test_with_judgments(self):
        outcomes = self.outcomes()
        successes = [o for o in outcomes if o.success]
        judgments = [PairJudgment(pair_id(o.original, o.perturbed),
                                  4.0 if i % 2 == 0 else 1.0, i % 2 == 0, 1)
                     for i, o in enumerate(successes[:8])]
        report = build_report(outcomes, judgments, self.CONFIG)
        assert not report.rasr.omitted
        assert report.rasr.n_annotated == 8
        assert report.rasr.n_similar == 4
        assert report.rasr.value == pytest.approx(report.asr_pct * 4 / 8)

    def test_unknown_pair_id(self):
        judgments = [PairJudgment("deadbeefdeadbeef", 4.0, True, 1)]
        with pytest.raises(PairIdMismatchError):
            build_report(self.outcomes(), judgments, self.CONFIG)

    def test_mod_rate_none_without_successes(self):
        report = build_report(self.outcomes(n_success=0), None, self.CONFIG)
        assert report.mod_rate_pct is None
        assert report.asr_pct == 0.0

    def test_report_round_trip(self):
        report = build_report(self.outcomes(), None, self.CONFIG)
        assert MetricsReport.from_dict(report.to_dict()) == report


class TestAnnotationSheets:
    def test_export_samples_successes(self):
        outcomes = ([make_outcome(i) for i in range(30)]
                    + [make_outcome(100, success=False)])
        rows = export_annotation_sheet(outcomes, sample_n=5, seed=0)
        assert len(rows) == 5
        valid = {pair_id(o.original, o.perturbed): o
                 for o in outcomes if o.success}
        for pid, orig, pert in rows:
            assert pid in valid
            assert valid[pid].original == orig
            assert valid[pid].perturbed == pert
        assert len({pid for pid, _, _ in rows}) == 5  # without replacement

    def test_export_deterministic(self):
        outcomes = [make_outcome(i) for i in range(30)]
        assert export_annotation_sheet(outcomes, 5, seed=3) == \
            export_annotation_sheet(outcomes, 5, seed=3)

    def test_duplicate_text_pairs_collapse(self):
        # Two successes over identical sentences are one annotatable pair:
        # the sheet must never repeat a pair id.
        outcomes = [make_outcome(0), make_outcome(0), make_outcome(1)]
        rows = export_annotation_sheet(outcomes, sample_n=10, seed=0)
        assert len(rows) == 2
        assert len({pid for pid, _, _ in rows}) == 2

    def test_seed_changes_selection(self):
        outcomes = [make_outcome(i) for i in range(30)]
        a = export_annotation_sheet(outcomes, 5, seed=0)
        b = export_annotation_sheet(outcomes, 5, seed=1)
        assert a != b

    def test_sample_larger_than_successes(self):
        outcomes = [make_outcome(i) for i in range(3)]
        assert len(export_annotation_sheet(outcomes, 50, seed=0)) == 3

    def test_no_successes(self):
        with pytest.raises(NoSuccessesError):
            export_annotation_sheet([make_outcome(0, success=False)], 5)

    def test_sheet_round_trip(self, tmp_path):
        rows = [("abc123", "text, with comma", 'quoted "text" here'),
                ("def456", "plain", "plain too")]
        path = str(tmp_path / "sheet.csv")
        write_annotation_sheet(rows, path)
        assert read_annotation_sheet(path) == rows

    def test_sheet_bad_header(self, tmp_path):
        path = tmp_path / "sheet.csv"
        path.write_text("a,b,c\nx,y,z\n")
        with pytest.raises(ParseError):
            read_annotation_sheet(str(path))
