"""Solution verification: the log-sum aggregate reward, best-of-N selection,
the self-consistency baseline, and the accuracy-vs-N evaluation harness."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from .codec import NoAnswerFound, NormalizedAnswer, extract_answer, normalize_answer
from .core import ReasoningChain
from .rewards import DomainError, ScorerBundle, score_solution


@dataclass(frozen=True)
class CandidatePool:
    """N candidate solutions to one question, with the gold answer."""

    question: str
    candidates: tuple[ReasoningChain, ...]
    gold_answer: NormalizedAnswer

    def __post_init__(self) -> None:
        if not self.candidates:
            raise ValueError("a pool needs at least one candidate")
        for c in self.candidates:
            if c.question != self.question:
                raise ValueError("all candidates must share the pool's question")

    @property
    def size(self) -> int:
        return len(self.candidates)


@dataclass
class VerdictRecord:
    """Outcome of running one verifier on one pool; chosen_index is 1-based."""

    chosen_index: int
    per_candidate_reward: list[float]
    verifier_kind: str
    correct: bool

    def reward_digest(self) -> str:
        payload = json.dumps([repr(r) for r in self.per_candidate_reward])
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


def aggregate_reward(matrix) -> float:
    """Log-sum of all clean probabilities in a 6 x L matrix (always <= 0).

    A fully clean solution has every entry near 1 and contributes almost
    nothing; any doubted cell pulls the reward down.
    """
    cells = np.asarray(matrix, dtype=np.float64)
    if cells.size == 0:
        raise DomainError("reward matrix must be non-empty")
    if np.any(cells <= 0.0) or np.any(cells >= 1.0):
        raise DomainError("all matrix entries must lie in (0, 1)")
    return float(np.log(cells).sum())


def _argmax_lowest(rewards: Sequence[float]) -> int:
    """1-based argmax; ties broken by the lowest candidate index."""
    best = 0
    for i in range(1, len(rewards)):
        if rewards[i] > rewards[best]:
            best = i
    return best + 1


def _answer_of(chain: ReasoningChain) -> Optional[NormalizedAnswer]:
    try:
        return extract_answer(chain)
    except NoAnswerFound:
        return None


def best_of_n(pool: CandidatePool, bundle: ScorerBundle) -> VerdictRecord:
    """Pick the candidate with the highest bundle reward.

    Candidates without an extractable answer stay rankable but are scored
    incorrect when chosen.
    """
    bundle.require_trained()
    rewards = [score_solution(bundle, c) for c in pool.candidates]
    chosen = _argmax_lowest(rewards)
    answer = _answer_of(pool.candidates[chosen - 1])
    correct = answer is not None and answer == pool.gold_answer
    return VerdictRecord(
        chosen_index=chosen,
        per_candidate_reward=rewards,
        verifier_kind=bundle.mode,
        correct=correct,
    )


def self_consistency(pool: CandidatePool) -> VerdictRecord:
    """Majority vote over normalized answers.

    Unanswerable candidates group by their raw solution text. The reward of a
    candidate is its group size, so the argmax-lowest-index rule lands on the
    earliest member of the winning group.
    """
    keys = []
    for c in pool.candidates:
        answer = _answer_of(c)
        keys.append(
            ("answer", answer.canonical) if answer is not None
            else ("text", "\n".join(c.step_texts()))
        )
    sizes = [float(keys.count(k)) for k in keys]
    chosen = _argmax_lowest(sizes)
    answer = _answer_of(pool.candidates[chosen - 1])
    correct = answer is not None and answer == pool.gold_answer
    return VerdictRecord(
        chosen_index=chosen,
        per_candidate_reward=sizes,
        verifier_kind="self_consistency",
        correct=correct,
    )


Verifier = Callable[[CandidatePool], VerdictRecord]


def bundle_verifier(bundle: ScorerBundle) -> Verifier:
    return lambda pool: best_of_n(pool, bundle)


def truncate_pool(pool: CandidatePool, n: int) -> CandidatePool:
    """Prefix truncation to the first n candidates."""
    n = max(1, min(n, pool.size))
    return CandidatePool(
        question=pool.question,
        candidates=pool.candidates[:n],
        gold_answer=pool.gold_answer,
    )


def n_schedule(max_n: int) -> list[int]:
    """Powers of two up to max_n, always ending at max_n itself."""
    ns = []
    n = 1
    while n < max_n:
        ns.append(n)
        n *= 2
    ns.append(max_n)
    return ns


@dataclass
class SuiteResult:
    accuracy: dict[str, float]
    by_n: dict[str, dict[int, float]]
    verdicts: dict[str, list[VerdictRecord]]

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "by_n": {
                name: {str(n): acc for n, acc in curve.items()}
                for name, curve in self.by_n.items()
            },
            "pools": {
                name: [
                    {
                        "chosen": v.chosen_index,
                        "correct": v.correct,
                        "reward_digest": v.reward_digest(),
                    }
                    for v in records
                ]
                for name, records in self.verdicts.items()
            },
        }


def verify_suite(
    pools: Sequence[CandidatePool], verifiers: Mapping[str, Verifier]
) -> SuiteResult:
    """Accuracy per verifier, plus accuracy-vs-N curves by prefix truncation."""
    if not pools:
        raise ValueError("pools must be non-empty")
    max_n = max(p.size for p in pools)
    schedule = n_schedule(max_n)
    accuracy: dict[str, float] = {}
    by_n: dict[str, dict[int, float]] = {}
    verdicts: dict[str, list[VerdictRecord]] = {}
    for name, verifier in verifiers.items():
        records = [verifier(p) for p in pools]
        verdicts[name] = records
        accuracy[name] = sum(r.correct for r in records) / len(pools)
        curve = {}
        for n in schedule:
            hits = sum(verifier(truncate_pool(p, n)).correct for p in pools)
            curve[n] = hits / len(pools)
        by_n[name] = curve
    return SuiteResult(accuracy=accuracy, by_n=by_n, verdicts=verdicts)


# ---------------------------------------------------------------------------
# Pool file IO: one JSON object per line
# {"question": str, "gold_answer": str, "candidates": [{"steps": [str, ...]}]}


def read_pools(path: Union[str, Path]) -> list[CandidatePool]:
    pools = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            record = json.loads(line)
            question = record["question"]
            candidates = tuple(
                ReasoningChain.from_texts(question, c["steps"])
                for c in record["candidates"]
            )
            pools.append(
                CandidatePool(
                    question=question,
                    candidates=candidates,
                    gold_answer=normalize_answer(str(record["gold_answer"])),
                )
            )
    return pools


def write_pools(pools: Sequence[CandidatePool], path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for pool in pools:
            record = {
                "question": pool.question,
                "gold_answer": pool.gold_answer.raw,
                "candidates": [{"steps": c.step_texts()} for c in pool.candidates],
            }
            fh.write(json.dumps(record, ensure_ascii=False, separators=(",", ":")))
            fh.write("\n")
