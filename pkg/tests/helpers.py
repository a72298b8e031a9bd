"""Shared test utilities: synthetic golden chains, marker-based oracle
scorers, candidate-pool fixtures, and scripted reward bundles."""

from __future__ import annotations

import random

import numpy as np

from fgprm import offline
from fgprm.codec import normalize_answer
from fgprm.core import (
    AnnotatedInstance,
    HallucinationType,
    ReasoningChain,
    StepLabelMatrix,
    make_instance,
)
from fgprm.rewards import EPS, ScorerBundle
from fgprm.verify import CandidatePool

_NAMES = ["Maya", "Leo", "Sara", "Omar", "Nina", "Paul", "Rhea", "Ivan"]
_CONTAINERS = ["boxes", "crates", "baskets", "cartons", "trays", "bundles"]
_THINGS = ["apples", "pears", "books", "pencils", "shells", "coins", "stamps", "cards"]


def make_clean_golden(count: int, seed: int) -> list[AnnotatedInstance]:
    """Synthetic golden chains with a lexicon disjoint from marker phrases."""
    rng = random.Random(seed)
    out = []
    for i in range(count):
        name = rng.choice(_NAMES)
        container = rng.choice(_CONTAINERS)
        thing = rng.choice(_THINGS)
        a = rng.randint(3, 12)
        b = rng.randint(4, 15)
        c = rng.randint(2, 9)
        total = a * b + c
        question = (
            f"{name} fills {a} {container} with {b} {thing} each and then "
            f"adds {c} more {thing}. How many {thing} are there in total?"
        )
        steps = [
            f"Each of the {a} {container} holds {b} {thing}.",
            f"Multiplying gives {a} * {b} = {a * b} {thing} in the {container}.",
            f"Adding the extra {c} gives {a * b} + {c} = {total} {thing}.",
            f"# Answer\n\n{total}",
        ]
        chain = ReasoningChain.from_texts(question, steps, final_answer=str(total))
        out.append(
            make_instance(
                chain,
                StepLabelMatrix.all_false(chain.length),
                "golden",
                instance_id=f"sep-{i:04d}",
            )
        )
    return out


class MarkerOracleScorer:
    """Step scorer that knows the truth: a step is dirty iff it carries this
    type's offline marker phrase."""

    def __init__(self, hallucination: HallucinationType):
        self.hallucination = hallucination
        self.name = hallucination.slug

    def score_steps(self, question: str, step_texts) -> np.ndarray:
        phrase = offline.MARKER_PHRASES[self.hallucination]
        return np.array(
            [EPS if phrase in text else 1.0 - EPS for text in step_texts],
            dtype=np.float64,
        )


def oracle_bundle() -> ScorerBundle:
    return ScorerBundle(
        mode="fg_prm",
        step_scorers=tuple(MarkerOracleScorer(t) for t in HallucinationType),
    )


class ScriptedOutcomeScorer:
    """Maps a candidate's first-step text to a fixed scalar reward."""

    def __init__(self, table):
        self.table = table

    def score_solution(self, question, step_texts):
        return self.table[step_texts[0]]


def scripted_bundle(table) -> ScorerBundle:
    return ScorerBundle(mode="orm", outcome_scorer=ScriptedOutcomeScorer(table))


def pool_from_rewards(rewards, answers, gold="5"):
    """A pool whose candidates carry predetermined scalar rewards."""
    question = "What is the value?"
    candidates = tuple(
        ReasoningChain.from_texts(question, [f"cand {i}", f"# Answer\n\n{a}"])
        for i, a in enumerate(answers)
    )
    table = {f"cand {i}": r for i, r in enumerate(rewards)}
    pool = CandidatePool(
        question=question,
        candidates=candidates,
        gold_answer=normalize_answer(gold),
    )
    return pool, scripted_bundle(table)


def build_fixture_pools(
    n_pools: int = 50,
    n_candidates: int = 16,
    n_wrong_majority: int = 20,
    seed: int = 23,
) -> list[CandidatePool]:
    """Pools whose first candidate is clean and correct; a pool is
    wrong-majority when nine hallucinated candidates share one wrong answer."""
    rng = random.Random(seed)
    types = list(HallucinationType)
    pools = []
    for j in range(n_pools):
        a = rng.randint(12, 44)
        b = rng.randint(5, 28)
        gold = a + b
        question = f"What is the sum of {a} and {b}?"

        def clean(answer: int) -> ReasoningChain:
            return ReasoningChain.from_texts(
                question,
                [
                    f"Adding the two numbers gives {a} + {b} = {answer}.",
                    f"# Answer\n\n{answer}",
                ],
            )

        def marked(answer: int, t: HallucinationType) -> ReasoningChain:
            return ReasoningChain.from_texts(
                question,
                [
                    f"Adding the two numbers gives {a} + {b} = {answer}.",
                    offline.scripted_step_body(t, 2),
                    f"# Answer\n\n{answer}",
                ],
            )

        candidates = [clean(gold)]
        if j < n_wrong_majority:
            shared_wrong = gold + rng.randint(1, 5)
            for i in range(9):
                candidates.append(marked(shared_wrong, types[i % 6]))
            for i in range(n_candidates - 10):
                candidates.append(marked(gold + 10 + i, types[i % 6]))
        else:
            for _ in range(8):
                candidates.append(clean(gold))
            for i in range(n_candidates - 9):
                candidates.append(marked(gold + 1 + i, types[i % 6]))
        pools.append(
            CandidatePool(
                question=question,
                candidates=tuple(candidates),
                gold_answer=normalize_answer(str(gold)),
            )
        )
    return pools
