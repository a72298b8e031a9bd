import random
from fractions import Fraction

import pytest

from fgprm.core import HallucinationType
from fgprm.metrics import (
    EmptyChain,
    EmptyReport,
    ShapeMismatch,
    compile_report,
    confusion_by_type,
    detection_metrics,
    step_score,
)


def single_type_corpus(pred_row, gold_row, t=HallucinationType.CONTEXT_INCONSISTENCY):
    """One instance whose matrices are false everywhere except row t."""
    width = len(pred_row)
    pred = [[False] * width for _ in range(6)]
    gold = [[False] * width for _ in range(6)]
    pred[int(t)] = list(pred_row)
    gold[int(t)] = list(gold_row)
    return [pred], [gold]


class TestDetectionMetrics:
    def test_hand_enumerated_confusion(self):
        pred, gold = single_type_corpus([True, False, True], [True, True, False])
        report = detection_metrics(pred, gold)
        row = report.per_type["context_inconsistency"]
        counts = report.counts["context_inconsistency"]
        assert (counts.tp, counts.fp, counts.fn, counts.tn) == (1, 1, 1, 0)
        assert row.precision == row.recall == row.f1 == 0.5

    def test_perfect_predictions(self):
        gold = [[[i % 2 == 0 for i in range(4)] for _ in range(6)]]
        report = detection_metrics(gold, gold)
        for row in report.per_type.values():
            assert row.precision == row.recall == row.f1 == 1.0
        assert report.macro_f1 == 1.0

    def test_types_without_predictions_are_excluded_from_the_macro(self):
        pred, gold = single_type_corpus([True, False], [True, False])
        report = detection_metrics(pred, gold)
        assert report.per_type["fabrication"].f1 is None
        assert report.macro_f1 == 1.0

    def test_literal_numerator_counts_agreements(self):
        pred, gold = single_type_corpus([True, False], [True, False])
        literal = detection_metrics(pred, gold, "literal")
        row = literal.per_type["context_inconsistency"]
        # agreements = 2 over 1 predicted-true and 1 gold-true
        assert row.precision == 2.0
        assert row.recall == 2.0
        assert row.f1 == 2.0

    def test_shape_mismatch_is_rejected(self):
        pred, gold = single_type_corpus([True], [True])
        with pytest.raises(ShapeMismatch):
            detection_metrics(pred, [g[:5] for g in gold])
        with pytest.raises(ShapeMismatch):
            detection_metrics(pred, gold + gold)

    def _random_corpus(self, rng, n_instances=6, max_steps=8):
        pred, gold = [], []
        for _ in range(n_instances):
            width = rng.randint(1, max_steps)
            pred.append(
                [[rng.random() < 0.3 for _ in range(width)] for _ in range(6)]
            )
            gold.append(
                [[rng.random() < 0.3 for _ in range(width)] for _ in range(6)]
            )
        return pred, gold

    def test_matches_brute_force_recount_on_random_corpora(self):
        rng = random.Random(42)
        for _ in range(25):
            pred, gold = self._random_corpus(rng)
            report = detection_metrics(pred, gold)
            for t in HallucinationType:
                pairs = [
                    (p, g)
                    for p_mat, g_mat in zip(pred, gold)
                    for p, g in zip(p_mat[int(t)], g_mat[int(t)])
                ]
                tp = sum(1 for p, g in pairs if p and g)
                fp = sum(1 for p, g in pairs if p and not g)
                fn = sum(1 for p, g in pairs if not p and g)
                row = report.per_type[t.slug]
                expected_p = tp / (tp + fp) if tp + fp else None
                expected_r = tp / (tp + fn) if tp + fn else None
                assert row.precision == expected_p
                assert row.recall == expected_r

    def test_f1_bounds(self):
        rng = random.Random(7)
        for _ in range(25):
            pred, gold = self._random_corpus(rng)
            report = detection_metrics(pred, gold)
            for slug, row in report.per_type.items():
                if row.f1 is None:
                    continue
                assert 0.0 <= row.f1 <= 1.0
                counts = report.counts[slug]
                assert (row.f1 == 0.0) == (counts.tp == 0)


class TestStepScore:
    def test_single_chain_fraction(self):
        assert step_score([[True, True, True, False]]) == 0.75

    def test_fully_correct_upper_bound(self):
        assert step_score([[True, True], [True]]) == 1.0

    def test_two_chain_mean(self):
        assert step_score([[True, False], [True]]) == 0.75

    def test_reordering_generations_changes_nothing(self):
        flags = [[True, False, True], [False], [True, True]]
        assert step_score(flags) == step_score(list(reversed(flags)))

    def test_exact_rational_oracle(self):
        rng = random.Random(3)
        for _ in range(10):
            flags = [
                [rng.random() < 0.6 for _ in range(rng.randint(1, 9))]
                for _ in range(rng.randint(1, 12))
            ]
            expected = sum(
                (Fraction(sum(map(bool, f)), len(f)) for f in flags),
                Fraction(0),
            ) / len(flags)
            assert abs(step_score(flags) - float(expected)) < 1e-12

    def test_empty_generation_is_rejected(self):
        with pytest.raises(EmptyChain):
            step_score([[True], []])
        with pytest.raises(EmptyChain):
            step_score([])


class TestCompileReport:
    def test_detection_only_report_omits_other_blocks(self):
        report = compile_report(
            detection={"macro_f1": 1.0}, config_digest="abc"
        )
        payload = report.payload()
        assert "verification" not in payload
        assert "step_scores" not in payload

    def test_identical_inputs_give_identical_digests(self):
        a = compile_report(detection={"x": 1}, config_digest="abc")
        b = compile_report(detection={"x": 1}, config_digest="abc")
        assert a.digest() == b.digest()
        assert a.to_json() == b.to_json()

    def test_timestamp_does_not_change_the_digest(self):
        a = compile_report(detection={"x": 1}, config_digest="abc")
        b = compile_report(
            detection={"x": 1}, config_digest="abc", timestamp="2026-01-01T00:00:00"
        )
        assert a.digest() == b.digest()
        assert "timestamp" in b.to_json()

    def test_empty_report_is_rejected(self):
        with pytest.raises(EmptyReport):
            compile_report(config_digest="abc")


class TestConfusionByType:
    def test_totals_cover_every_labeled_step(self):
        rng = random.Random(0)
        width = 7
        pred = [[[rng.random() < 0.5 for _ in range(width)] for _ in range(6)]]
        gold = [[[rng.random() < 0.5 for _ in range(width)] for _ in range(6)]]
        counts = confusion_by_type(pred, gold)
        for c in counts.values():
            assert c.total == width
