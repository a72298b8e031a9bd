import math

import numpy as np
import pytest

from fgprm.codec import normalize_answer
from fgprm.core import ReasoningChain
from fgprm.rewards import DomainError, EPS
from fgprm.verify import (
    CandidatePool,
    aggregate_reward,
    best_of_n,
    bundle_verifier,
    n_schedule,
    read_pools,
    self_consistency,
    truncate_pool,
    verify_suite,
    write_pools,
)
from tests.helpers import (
    build_fixture_pools,
    oracle_bundle,
    pool_from_rewards,
    scripted_bundle,
)


class TestAggregateReward:
    def test_clean_matrix_contributes_almost_nothing(self):
        matrix = np.full((6, 4), 1 - EPS)
        assert abs(aggregate_reward(matrix)) < 6 * 4 * 2 * EPS

    def test_uniform_half_matrix_hand_value(self):
        matrix = np.full((6, 2), 0.5)
        assert abs(aggregate_reward(matrix) - 12 * math.log(0.5)) < 1e-12

    def test_lowering_any_cell_strictly_lowers_the_total(self):
        base = np.full((6, 3), 0.9)
        reference = aggregate_reward(base)
        for t in range(6):
            for i in range(3):
                bumped = base.copy()
                bumped[t, i] = 0.4
                assert aggregate_reward(bumped) < reference

    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.2, 1.2])
    def test_out_of_range_cells_are_rejected(self, bad):
        matrix = np.full((6, 2), 0.5)
        matrix[3, 1] = bad
        with pytest.raises(DomainError):
            aggregate_reward(matrix)


class TestBestOfN:
    def test_argmax_selection(self):
        pool, bundle = pool_from_rewards(
            [-1.2, -0.3, -0.9], ["3", "5", "7"]
        )
        record = best_of_n(pool, bundle)
        assert record.chosen_index == 2
        assert record.correct

    def test_ties_break_to_the_lowest_index(self):
        pool, bundle = pool_from_rewards([-0.3, -1.0, -0.3], ["5", "3", "5"])
        assert best_of_n(pool, bundle).chosen_index == 1

    def test_chosen_candidate_without_answer_is_incorrect(self):
        question = "What is the value?"
        candidates = (
            ReasoningChain.from_texts(question, ["cand 0", "nothing numeric here"]),
            ReasoningChain.from_texts(question, ["cand 1", "# Answer\n\n5"]),
        )
        pool = CandidatePool(
            question=question,
            candidates=candidates,
            gold_answer=normalize_answer("5"),
        )
        bundle = scripted_bundle({"cand 0": 0.9, "cand 1": 0.1})
        record = best_of_n(pool, bundle)
        assert record.chosen_index == 1
        assert not record.correct

    def test_oracle_beats_self_consistency_on_a_wrong_majority_pool(self):
        pools = build_fixture_pools(n_pools=1, n_wrong_majority=1, seed=4)
        pool = pools[0]
        oracle_record = best_of_n(pool, oracle_bundle())
        sc_record = self_consistency(pool)
        assert oracle_record.correct
        assert not sc_record.correct


class TestSelfConsistency:
    def _pool(self, answers, gold="5"):
        question = "What is the value?"
        candidates = tuple(
            ReasoningChain.from_texts(question, [f"path {i}", f"# Answer\n\n{a}"])
            for i, a in enumerate(answers)
        )
        return CandidatePool(
            question=question,
            candidates=candidates,
            gold_answer=normalize_answer(gold),
        )

    def test_majority_answer_wins(self):
        record = self_consistency(self._pool(["5", "5", "3"]))
        assert record.chosen_index == 1
        assert record.correct

    def test_tie_goes_to_the_earliest_member(self):
        record = self_consistency(self._pool(["2", "3"], gold="2"))
        assert record.chosen_index == 1
        assert record.correct

    def test_groups_form_by_numeric_equality(self):
        record = self_consistency(self._pool(["1/2", "0.5", "3"], gold="0.5"))
        assert record.chosen_index == 1
        assert record.correct
        assert record.per_candidate_reward[:2] == [2.0, 2.0]

    def test_order_permutation_changes_nothing_but_the_tie_holder(self):
        a = self_consistency(self._pool(["7", "5", "5"]))
        b = self_consistency(self._pool(["5", "5", "7"]))
        assert a.correct == b.correct
        assert b.chosen_index == 1

    def test_unanswerable_candidates_form_text_groups(self):
        question = "What is the value?"
        candidates = (
            ReasoningChain.from_texts(question, ["mystery words only"]),
            ReasoningChain.from_texts(question, ["other mystery words"]),
            ReasoningChain.from_texts(question, ["# Answer\n\n5"]),
        )
        pool = CandidatePool(
            question=question,
            candidates=candidates,
            gold_answer=normalize_answer("5"),
        )
        record = self_consistency(pool)
        assert record.per_candidate_reward == [1.0, 1.0, 1.0]
        assert record.chosen_index == 1
        assert not record.correct


class TestVerifySuite:
    def test_oracle_hits_every_pool_with_a_clean_candidate(self):
        pools = build_fixture_pools(n_pools=8, n_wrong_majority=3, seed=1)
        suite = verify_suite(pools, {"oracle": bundle_verifier(oracle_bundle())})
        assert suite.accuracy["oracle"] == 1.0

    def test_oracle_never_ranks_a_marked_chain_over_a_clean_one(self):
        bundle = oracle_bundle()
        for seed in range(5):
            for pool in build_fixture_pools(n_pools=4, n_wrong_majority=2, seed=seed):
                record = best_of_n(pool, bundle)
                chosen = pool.candidates[record.chosen_index - 1]
                assert not any(
                    "becomes" in step for step in chosen.step_texts()
                ), "a hallucinated candidate outranked a clean one"

    def test_suite_report_lists_per_pool_verdicts(self):
        pools = build_fixture_pools(n_pools=4, n_wrong_majority=1, seed=3)
        suite = verify_suite(pools, {"oracle": bundle_verifier(oracle_bundle())})
        rows = suite.as_dict()["pools"]["oracle"]
        assert len(rows) == 4
        for row in rows:
            assert set(row) == {"chosen", "correct", "reward_digest"}

    def test_single_candidate_pools_equalize_all_verifiers(self):
        pools = [
            truncate_pool(p, 1)
            for p in build_fixture_pools(n_pools=6, n_wrong_majority=2, seed=2)
        ]
        suite = verify_suite(
            pools,
            {
                "oracle": bundle_verifier(oracle_bundle()),
                "self_consistency": self_consistency,
            },
        )
        assert suite.accuracy["oracle"] == suite.accuracy["self_consistency"]

    def test_n_schedule_is_doubling_plus_max(self):
        assert n_schedule(16) == [1, 2, 4, 8, 16]
        assert n_schedule(6) == [1, 2, 4, 6]
        assert n_schedule(1) == [1]


class TestPoolIO:
    def test_write_then_read_round_trip(self, tmp_path):
        pools = build_fixture_pools(n_pools=3, n_wrong_majority=1, seed=9)
        path = tmp_path / "pools.jsonl"
        write_pools(pools, path)
        loaded = read_pools(path)
        assert len(loaded) == 3
        for original, copy in zip(pools, loaded):
            assert copy.question == original.question
            assert copy.gold_answer == original.gold_answer
            assert [c.step_texts() for c in copy.candidates] == [
                c.step_texts() for c in original.candidates
            ]
