"""Two-stage hallucination synthesis: per-type feasibility judgment over
candidate positions, hallucinated-step generation from instructions plus
two-shot demonstrations, splicing and labeling, a deterministic
calculation-error injector, and the balanced corpus builder."""

from __future__ import annotations

import ast
import logging
import random
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from typing import Optional, Sequence

from .codec import _shortest_rendering
from .core import (
    AnnotatedInstance,
    HallucinationType,
    InjectionMeta,
    InvalidMeta,
    ReasoningChain,
    ReasoningStep,
    StepLabelMatrix,
    make_instance,
)
from .gateway import (
    ChatRequest,
    Provider,
    ProtocolViolation,
    ResponseCache,
    complete,
    parse_yes_no,
    render_template,
)

log = logging.getLogger(__name__)


class GenerationParseError(ValueError):
    """The generated response lacks the next-reasoning-step section header."""


class PositionOutOfRange(IndexError):
    """Requested injection position is outside 1..L."""


# ---------------------------------------------------------------------------
# Prompt assets


@dataclass(frozen=True)
class JudgmentRule:
    """Per-type feasibility rule; the text is the bundled asset verbatim."""

    hallucination: HallucinationType
    rule_text: str


@dataclass(frozen=True)
class Demonstration:
    question: str
    steps_block: str
    explanation: str
    hallucinated_step: str


@dataclass(frozen=True)
class InjectionRecipe:
    """Generation instruction plus exactly two worked demonstrations."""

    hallucination: HallucinationType
    instruction_text: str
    demonstrations: tuple[Demonstration, Demonstration]

    def __post_init__(self) -> None:
        if len(self.demonstrations) != 2:
            raise ValueError("a recipe carries exactly two demonstrations")
        for demo in self.demonstrations:
            if not demo.hallucinated_step.strip():
                raise ValueError("demonstration hallucinated step must be non-empty")


def _read_asset(*parts: str) -> str:
    root = resources.files("fgprm.assets")
    return root.joinpath("/".join(parts)).read_text(encoding="utf-8").strip()


@lru_cache(maxsize=None)
def load_judgment_rule(hallucination: HallucinationType) -> JudgmentRule:
    text = _read_asset("judgment", f"{hallucination.slug}.txt")
    return JudgmentRule(hallucination=hallucination, rule_text=text)


@lru_cache(maxsize=None)
def generation_preamble() -> str:
    return _read_asset("instructions", "preamble.txt")


_DEMO_SECTION = re.compile(
    r"\[(Question|Correct Reasoning Steps|Explanation|"
    r"Next Reasoning Step with [^\]]*)\]"
)


def _parse_demonstration(block: str) -> Demonstration:
    matches = list(_DEMO_SECTION.finditer(block))
    sections: dict[str, str] = {}
    for m, nxt in zip(matches, matches[1:] + [None]):
        end = nxt.start() if nxt is not None else len(block)
        name = m.group(1)
        key = "next_step" if name.startswith("Next Reasoning Step") else name
        sections[key] = block[m.end() : end].strip()
    try:
        return Demonstration(
            question=sections["Question"],
            steps_block=sections["Correct Reasoning Steps"],
            explanation=sections["Explanation"],
            hallucinated_step=sections["next_step"],
        )
    except KeyError as exc:
        raise ValueError(f"demonstration block missing section {exc}") from exc


@lru_cache(maxsize=None)
def load_recipe(hallucination: HallucinationType) -> InjectionRecipe:
    instruction = _read_asset("instructions", f"{hallucination.slug}.txt")
    raw = _read_asset("demonstrations", f"{hallucination.slug}.txt")
    blocks = [b.strip() for b in re.split(r"(?m)^===\s*$", raw) if b.strip()]
    if len(blocks) != 2:
        raise ValueError(
            f"expected 2 demonstrations for {hallucination.slug}, got {len(blocks)}"
        )
    demos = tuple(_parse_demonstration(b) for b in blocks)
    return InjectionRecipe(
        hallucination=hallucination,
        instruction_text=instruction,
        demonstrations=demos,  # type: ignore[arg-type]
    )


# ---------------------------------------------------------------------------
# Judgment (feasibility of injecting at a position)


def _steps_block(steps: Sequence[ReasoningStep]) -> str:
    return "\n".join(f"Step {s.ordinal}: {s.text}" for s in steps)


def judgment_request(
    question: str,
    golden_prefix: Sequence[ReasoningStep],
    rule: JudgmentRule,
    *,
    model_id: str,
    max_tokens: int = 256,
) -> ChatRequest:
    """The deterministic (temperature 0) request asking whether the prefix's
    last step supports injecting this rule's hallucination type."""
    prompt = render_template(
        "judgment",
        {
            "question": question,
            "steps": _steps_block(golden_prefix),
            "instruction": rule.rule_text,
        },
    )
    return ChatRequest(
        messages=(("user", prompt),),
        model_id=model_id,
        temperature=0.0,
        max_tokens=max_tokens,
    )


def judge_position(
    provider: Provider,
    rule: JudgmentRule,
    question: str,
    golden_prefix: Sequence[ReasoningStep],
    cache: Optional[ResponseCache] = None,
    *,
    model_id: str,
    max_tokens: int = 256,
) -> bool:
    """Ask the provider whether the prefix's last step admits this type.

    A response violating the yes/no protocol is treated as infeasible and
    logged rather than raised, so unjudgeable positions are skipped.
    """
    if not golden_prefix:
        raise ValueError("golden_prefix must contain at least one step")
    request = judgment_request(
        question, golden_prefix, rule, model_id=model_id, max_tokens=max_tokens
    )
    response = complete(provider, request, cache)
    try:
        return parse_yes_no(response)
    except ProtocolViolation as exc:
        log.warning(
            "judgment protocol violation for %s at step %d: %s",
            rule.hallucination.name,
            golden_prefix[-1].ordinal,
            exc,
        )
        return False


# ---------------------------------------------------------------------------
# Generation (hallucinated next step)

_OUTPUT_FORMAT = (
    "In the output, first give an [Explanation] section describing how the "
    "hallucination is introduced. Then, under a "
    "\"[Next Reasoning Step with {label} Hallucination]\" header, output the "
    "single next reasoning step."
)

_NEXT_STEP_HEADER = re.compile(r"\[Next Reasoning Step with [^\]]*\]")
_LEADING_STEP_MARKER = re.compile(r"^\s*Step\s+\d+\s*:\s*")


def _render_query(question: str, steps_block: str, label: str) -> str:
    return render_template(
        "injection_query",
        {
            "question": question,
            "steps": steps_block,
            "output_format": _OUTPUT_FORMAT.format(label=label),
        },
    )


def generation_request(
    recipe: InjectionRecipe,
    question: str,
    golden_prefix: Sequence[ReasoningStep],
    *,
    model_id: str,
    temperature: float = 0.7,
    seed: Optional[int] = None,
    max_tokens: int = 512,
) -> ChatRequest:
    """Request carrying the generation preamble, the per-type instruction,
    two demonstrations, and the live query."""
    label = recipe.hallucination.label
    system = generation_preamble() + "\n\n" + recipe.instruction_text
    parts = []
    for demo in recipe.demonstrations:
        parts.append(_render_query(demo.question, demo.steps_block, label))
        parts.append(
            f"[Explanation]\n{demo.explanation}\n\n"
            f"[Next Reasoning Step with {label} Hallucination]\n"
            f"{demo.hallucinated_step}"
        )
    parts.append(_render_query(question, _steps_block(golden_prefix), label))
    return ChatRequest(
        messages=(("user", "\n\n".join(parts)),),
        model_id=model_id,
        system_prompt=system,
        temperature=temperature,
        seed=seed,
        max_tokens=max_tokens,
    )


def parse_generated_step(response: str) -> str:
    """Pull the step text out of the next-reasoning-step section; the leading
    ``Step k:`` marker, if present, is stripped."""
    matches = list(_NEXT_STEP_HEADER.finditer(response))
    if not matches:
        raise GenerationParseError("response lacks the next-reasoning-step header")
    body = response[matches[-1].end() :]
    # Stop at the next bracketed section if the model kept talking.
    cut = re.search(r"(?m)^\[", body)
    if cut:
        body = body[: cut.start()]
    text = _LEADING_STEP_MARKER.sub("", body.strip(), count=1).strip()
    if not text:
        raise GenerationParseError("next-reasoning-step section is empty")
    return text


def inject_step(
    provider: Provider,
    recipe: InjectionRecipe,
    question: str,
    golden_prefix: Sequence[ReasoningStep],
    cache: Optional[ResponseCache] = None,
    *,
    model_id: str,
    temperature: float = 0.7,
    seed: Optional[int] = None,
    max_tokens: int = 512,
) -> str:
    """Generate the hallucinated next step.

    A malformed response is retried once with a bumped seed before the parse
    error propagates. Without a seed the retry is skipped: the request would
    be identical and the cache contract makes the answer identical too.
    """
    seeds = [seed] if seed is None else [seed, seed + 1]
    for i, attempt_seed in enumerate(seeds):
        request = generation_request(
            recipe,
            question,
            golden_prefix,
            model_id=model_id,
            temperature=temperature,
            seed=attempt_seed,
            max_tokens=max_tokens,
        )
        response = complete(provider, request, cache)
        try:
            return parse_generated_step(response)
        except GenerationParseError:
            if i == len(seeds) - 1:
                raise
            log.warning(
                "unparseable generation for %s, retrying once",
                recipe.hallucination.name,
            )
    raise GenerationParseError("unreachable")  # pragma: no cover


# ---------------------------------------------------------------------------
# Splicing


def splice(
    golden: AnnotatedInstance,
    position: int,
    hallucination: HallucinationType,
    hallucinated_text: str,
    *,
    instance_id: Optional[str] = None,
) -> AnnotatedInstance:
    """Replace golden step ``position`` with the hallucinated step and drop
    everything after it; the label matrix is true only at that cell."""
    if golden.provenance != "golden":
        raise InvalidMeta("splice requires a golden source instance")
    length = golden.chain.length
    if not 1 <= position <= length:
        raise PositionOutOfRange(
            f"position {position} outside 1..{length}"
        )
    texts = golden.chain.step_texts()[: position - 1] + [hallucinated_text]
    chain = ReasoningChain.from_texts(golden.chain.question, texts)
    labels = StepLabelMatrix.single(hallucination, position, position)
    meta = {"source_id": golden.instance_id}
    return make_instance(
        chain,
        labels,
        "injected",
        InjectionMeta(hallucination, position),
        instance_id=instance_id,
        meta=meta,
    )


# ---------------------------------------------------------------------------
# Deterministic calculation-error injector

_EQUATION = re.compile(
    r"(?P<expr>[0-9(][0-9 \t.,+\-*/^()×⋅÷–−]*?)\s*=\s*"
    r"(?P<value>-?\d[\d,]*(?:\.\d+)?(?:\s*/\s*\d+)?)"
)
_IMPLICIT_MUL = re.compile(r"(?<=[\d)])\s*\(")

_OP_MAP = {"×": "*", "⋅": "*", "÷": "/", "−": "-", "–": "-", "^": "**"}


def evaluate_expression(expr: str) -> Optional[Fraction]:
    """Exact-rational evaluation of a +,-,*,/,^ expression; None if it does
    not parse, divides by zero, or uses an unreasonable exponent."""
    text = expr
    for src, dst in _OP_MAP.items():
        text = text.replace(src, dst)
    text = text.replace(",", "")
    text = _IMPLICIT_MUL.sub("*(", text)
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError:
        return None
    try:
        return _eval_node(tree.body)
    except (ValueError, ZeroDivisionError, OverflowError):
        return None


def _eval_node(node: ast.AST) -> Fraction:
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return Fraction(str(node.value))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        value = _eval_node(node.operand)
        return -value if isinstance(node.op, ast.USub) else value
    if isinstance(node, ast.BinOp):
        left = _eval_node(node.left)
        right = _eval_node(node.right)
        if isinstance(node.op, ast.Add):
            return left + right
        if isinstance(node.op, ast.Sub):
            return left - right
        if isinstance(node.op, ast.Mult):
            return left * right
        if isinstance(node.op, ast.Div):
            return left / right
        if isinstance(node.op, ast.Pow):
            if right.denominator != 1 or abs(right.numerator) > 12:
                raise ValueError("unsupported exponent")
            return left ** right.numerator
    raise ValueError(f"unsupported syntax: {ast.dump(node)}")


def _parse_stated_value(text: str) -> Optional[Fraction]:
    try:
        return Fraction(text.replace(",", "").replace(" ", ""))
    except (ValueError, ZeroDivisionError):
        return None


def _render_value(value: Fraction) -> str:
    if value.denominator == 1:
        return str(value.numerator)
    return _shortest_rendering(value)


def _perturb(value: Fraction, rng: random.Random) -> Fraction:
    # Small offsets keep the error subtle; a redraw pool avoids landing back
    # on the true value.
    offsets: list[Fraction] = []
    for delta in (1, -1, 2, -2):
        offsets.append(Fraction(delta))
    tenth = Fraction(round(abs(value) / 10))
    if tenth != 0:
        offsets.extend((tenth, -tenth))
    seen = set()
    unique = [o for o in offsets if not (o in seen or seen.add(o))]
    return value + rng.choice(unique)


def deterministic_calc_error(
    golden_prefix: Sequence[ReasoningStep], rng: random.Random
) -> Optional[str]:
    """Corrupt the arithmetic in the last step of the prefix.

    Scans the step being replaced (the prefix's last step) for equations
    ``<expr> = <value>``, re-evaluates the expression exactly, and when the
    stated value checks out rewrites it to a perturbed wrong value. Returns
    None when no verifiable equation exists; absence is a value, not an
    error.
    """
    if not golden_prefix:
        return None
    target = golden_prefix[-1].text
    for match in _EQUATION.finditer(target):
        expr_value = evaluate_expression(match.group("expr"))
        if expr_value is None:
            continue
        stated = _parse_stated_value(match.group("value"))
        if stated is None or stated != expr_value:
            continue
        wrong = _perturb(stated, rng)
        start, end = match.span("value")
        return target[:start] + _render_value(wrong) + target[end:]
    return None


# ---------------------------------------------------------------------------
# Corpus builder


@dataclass(frozen=True)
class CorpusConfig:
    """Settings for one synthesis run; all randomness derives from ``seed``."""

    per_type_quota: int
    golden_ratio: float = 1.0
    seed: int = 0
    model_id: str = "mock-model"
    temperature: float = 0.7
    judge_max_tokens: int = 256
    gen_max_tokens: int = 512
    use_deterministic_ce: bool = True


@dataclass
class InjectionOutcome:
    """Result of one injection attempt on one (golden chain, type) pair."""

    source_id: str
    hallucination: HallucinationType
    status: str  # success | no_feasible_position | generation_failed
    judged_positions: list[tuple[int, bool]] = field(default_factory=list)
    attempts: int = 0
    instance: Optional[AnnotatedInstance] = None


@dataclass
class CorpusResult:
    instances: list[AnnotatedInstance]
    outcomes: list[InjectionOutcome]
    audit: dict


def _position_order(config: CorpusConfig, t: HallucinationType, gid: str, cycle: int,
                    length: int) -> list[int]:
    rng = random.Random(f"{config.seed}:{int(t)}:{gid}:{cycle}")
    positions = list(range(1, length + 1))
    rng.shuffle(positions)
    return positions


def _attempt_injection(
    golden: AnnotatedInstance,
    t: HallucinationType,
    cycle: int,
    provider: Provider,
    config: CorpusConfig,
    cache: Optional[ResponseCache],
) -> InjectionOutcome:
    outcome = InjectionOutcome(source_id=golden.instance_id, hallucination=t, status="no_feasible_position")
    question = golden.chain.question
    positions = _position_order(config, t, golden.instance_id, cycle, golden.chain.length)
    deterministic = (
        t is HallucinationType.CALCULATION_ERROR and config.use_deterministic_ce
    )
    for k in positions:
        prefix = golden.chain.steps[:k]
        text: Optional[str] = None
        if deterministic:
            ce_rng = random.Random(f"{config.seed}:ce:{golden.instance_id}:{k}:{cycle}")
            text = deterministic_calc_error(prefix, ce_rng)
            feasible = text is not None
        else:
            feasible = judge_position(
                provider,
                load_judgment_rule(t),
                question,
                prefix,
                cache,
                model_id=config.model_id,
                max_tokens=config.judge_max_tokens,
            )
        outcome.judged_positions.append((k, feasible))
        if not feasible:
            continue
        outcome.attempts += 1
        if text is None:
            try:
                text = inject_step(
                    provider,
                    load_recipe(t),
                    question,
                    prefix,
                    cache,
                    model_id=config.model_id,
                    temperature=config.temperature,
                    seed=config.seed,
                    max_tokens=config.gen_max_tokens,
                )
            except GenerationParseError:
                outcome.status = "generation_failed"
                return outcome
        instance_id = f"inj-{golden.instance_id}-t{int(t)}-c{cycle}"
        outcome.instance = splice(golden, k, t, text, instance_id=instance_id)
        outcome.status = "success"
        return outcome
    # A whole pass over the positions found nothing; if we never reached the
    # generation stage this still counts as one attempt against the audit.
    if outcome.attempts == 0:
        outcome.attempts = 1
    return outcome


def build_corpus(
    golden_pool: Sequence[AnnotatedInstance],
    provider: Provider,
    config: CorpusConfig,
    cache: Optional[ResponseCache] = None,
) -> CorpusResult:
    """Assemble a balanced injected corpus plus golden positives.

    Types are filled round-robin; positions are tried in seeded random order
    per chain; clean chains are appended at ``golden_ratio`` golden instances
    per injected one. With a scripted provider and fixed seed the result is
    bit-reproducible. An exhausted pool is reported per type in the audit
    rather than raised.
    """
    if not golden_pool:
        raise ValueError("golden pool must be non-empty")
    for g in golden_pool:
        if g.provenance != "golden":
            raise InvalidMeta(f"pool instance {g.instance_id} is not golden")
    if config.per_type_quota < 0:
        raise ValueError("per_type_quota must be >= 0")

    outcomes: list[InjectionOutcome] = []
    injected: list[AnnotatedInstance] = []
    successes = {t: 0 for t in HallucinationType}
    attempts = {t: 0 for t in HallucinationType}
    unreachable: list[str] = []

    for t in HallucinationType:
        cycle = 0
        while successes[t] < config.per_type_quota:
            order_rng = random.Random(f"{config.seed}:order:{int(t)}:{cycle}")
            order = list(range(len(golden_pool)))
            order_rng.shuffle(order)
            progressed = False
            for idx in order:
                if successes[t] >= config.per_type_quota:
                    break
                outcome = _attempt_injection(
                    golden_pool[idx], t, cycle, provider, config, cache
                )
                outcomes.append(outcome)
                attempts[t] += outcome.attempts
                if outcome.status == "success":
                    successes[t] += 1
                    injected.append(outcome.instance)  # type: ignore[arg-type]
                    progressed = True
            if successes[t] >= config.per_type_quota:
                break
            if not progressed:
                log.warning(
                    "quota unreachable for %s: %d of %d after exhausting pool",
                    t.name,
                    successes[t],
                    config.per_type_quota,
                )
                unreachable.append(t.name)
                break
            cycle += 1

    injected.sort(key=lambda i: (i.meta.get("source_id", ""), int(i.injection_meta.hallucination), i.instance_id))  # type: ignore[union-attr]

    golden_count = int(round(config.golden_ratio * len(injected)))
    golden_instances: list[AnnotatedInstance] = []
    if golden_count:
        order_rng = random.Random(f"{config.seed}:golden")
        order = list(range(len(golden_pool)))
        order_rng.shuffle(order)
        for n in range(golden_count):
            src = golden_pool[order[n % len(order)]]
            golden_instances.append(
                make_instance(
                    src.chain,
                    src.labels,
                    "golden",
                    instance_id=f"gold-{n:05d}-{src.instance_id}",
                    meta={"source_id": src.instance_id},
                )
            )

    audit = {
        "per_type": {
            t.slug: {
                "attempts": attempts[t],
                "successes": successes[t],
                "rate": (successes[t] / attempts[t]) if attempts[t] else None,
            }
            for t in HallucinationType
        },
        "quota_per_type": config.per_type_quota,
        "quota_unreachable": unreachable,
        "injected": len(injected),
        "golden": len(golden_instances),
    }
    return CorpusResult(
        instances=injected + golden_instances, outcomes=outcomes, audit=audit
    )
