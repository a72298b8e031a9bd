"""Script tables for the offline provider.

The synthesis pipeline's requests are deterministic, so for a given golden
pool and corpus config every judgment and generation request can be
enumerated up front and mapped to a canned response. That keeps mock runs
total (no scripted-provider misses) and bit-reproducible.
"""

from __future__ import annotations

from typing import Mapping, Sequence

from .core import AnnotatedInstance, HallucinationType
from .gateway import MockScriptedProvider, request_digest
from .injection import (
    CorpusConfig,
    generation_request,
    judgment_request,
    load_judgment_rule,
    load_recipe,
)

# One distinctive phrase per type so that offline corpora are lexically
# separable: per-type scorers have a real signal to learn.
MARKER_PHRASES: Mapping[HallucinationType, str] = {
    HallucinationType.CONTEXT_INCONSISTENCY: (
        "rereading the problem as stating a different given value"
    ),
    HallucinationType.LOGICAL_INCONSISTENCY: (
        "as supposedly shown in an earlier step that never said so"
    ),
    HallucinationType.INSTRUCTION_INCONSISTENCY: (
        "answering a different target instead of what was asked"
    ),
    HallucinationType.CALCULATION_ERROR: (
        "miscomputing the running total in this calculation"
    ),
    HallucinationType.FACTUAL_INCONSISTENCY: (
        "using the wellknown fact that water boils at 90 degrees"
    ),
    HallucinationType.FABRICATION: (
        "according to the Selwyn Institute survey of reasoning habits"
    ),
}


def scripted_step_body(t: HallucinationType, position: int) -> str:
    """Deterministic hallucinated step text for one (type, position)."""
    return (
        f"Continuing, {MARKER_PHRASES[t]}, the value at this point "
        f"becomes {position + 37}."
    )


def scripted_generation_response(t: HallucinationType, position: int) -> str:
    label = t.label
    return (
        f"[Explanation]\nThis step introduces a {label} hallucination "
        f"for the scripted offline pipeline.\n\n"
        f"[Next Reasoning Step with {label} Hallucination]\n"
        f"Step {position}: {scripted_step_body(t, position)}"
    )


def build_offline_script(
    golden_pool: Sequence[AnnotatedInstance],
    config: CorpusConfig,
    *,
    judge_yes: bool = True,
) -> dict[str, str]:
    """Digest-to-response table covering every request the corpus builder can
    make over this pool: one judgment and one generation per (chain, type,
    position), plus the bumped-seed generation retries."""
    verdict = "The prefix provides the anchor this type needs.\nYes" if judge_yes else (
        "The prefix lacks the anchor this type needs.\nNo"
    )
    script: dict[str, str] = {}
    kind = "mock_scripted"
    for golden in golden_pool:
        question = golden.chain.question
        for t in HallucinationType:
            rule = load_judgment_rule(t)
            recipe = load_recipe(t)
            for k in range(1, golden.chain.length + 1):
                prefix = golden.chain.steps[:k]
                jr = judgment_request(
                    question,
                    prefix,
                    rule,
                    model_id=config.model_id,
                    max_tokens=config.judge_max_tokens,
                )
                script[request_digest(kind, jr)] = verdict
                for seed in (config.seed, config.seed + 1):
                    gr = generation_request(
                        recipe,
                        question,
                        prefix,
                        model_id=config.model_id,
                        temperature=config.temperature,
                        seed=seed,
                        max_tokens=config.gen_max_tokens,
                    )
                    script[request_digest(kind, gr)] = scripted_generation_response(
                        t, k
                    )
    return script


def offline_provider(
    golden_pool: Sequence[AnnotatedInstance],
    config: CorpusConfig,
    *,
    judge_yes: bool = True,
) -> MockScriptedProvider:
    """Scripted provider ready to drive :func:`fgprm.injection.build_corpus`."""
    return MockScriptedProvider(
        script=build_offline_script(golden_pool, config, judge_yes=judge_yes)
    )
