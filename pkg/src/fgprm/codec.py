"""Parsing and serialization: raw solution text to steps, the sep-delimited
scorer input format, final-answer normalization, and the on-disk dataset
schema."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional, Union

from .core import (
    AnnotatedInstance,
    HallucinationType,
    InjectionMeta,
    N_TYPES,
    PROVENANCES,
    ReasoningChain,
    ReasoningStep,
    StepLabelMatrix,
    make_instance,
)

SEP_TOKEN = "[sep]"
_ENCODE_HEADER = "question: "
_ENCODE_JOINER = ", reasoning steps: "

_STEP_MARKER = re.compile(r"(?m)^[ \t]*Step\s+\d+\s*:")
_ANSWER_HEADER = re.compile(r"(?m)^[ \t]*#\s*Answer\b")
_ANSWER_PHRASE = re.compile(
    r"(?:final\s+answer|answer)\s+is\s*:?\s*(.+?)\s*$", re.IGNORECASE
)
_MATH_GROUP = re.compile(r"\$([^$]+)\$")
_NUMBER_TOKEN = re.compile(r"-?\d[\d,]*(?:\.\d+)?(?:\s*/\s*\d+)?")
_BOXED = re.compile(r"\\boxed\{([^{}]*)\}")
_LATEX_FRAC = re.compile(r"\\[dt]?frac\{(-?\d+)\}\{(-?\d+)\}")
_DIGIT_COMMA = re.compile(r"(?<=\d),(?=\d)")


class EmptySolution(ValueError):
    """No step content could be recovered from the solution text."""


class NoAnswerFound(LookupError):
    """None of the answer-extraction patterns matched the chain."""


class SchemaError(ValueError):
    """A dataset record violates the line-delimited schema."""

    def __init__(self, line: int, fld: str, message: str):
        super().__init__(f"line {line}, field {fld!r}: {message}")
        self.line = line
        self.field = fld


def split_steps(solution_text: str) -> list[ReasoningStep]:
    """Split raw solution text into ordered steps.

    Splits on line-initial ``Step k:`` markers when present, otherwise on
    newlines. A trailing ``# Answer`` block is kept intact as its own final
    step. Markers are stripped from the step text.
    """
    text = solution_text.strip()
    if not text:
        raise EmptySolution("solution text is empty")

    answer_block: Optional[str] = None
    headers = list(_ANSWER_HEADER.finditer(text))
    if headers:
        start = headers[-1].start()
        answer_block = text[start:].strip()
        text = text[:start].rstrip()

    texts: list[str] = []
    markers = list(_STEP_MARKER.finditer(text))
    if markers:
        if markers[0].start() > 0:
            lead = text[: markers[0].start()].strip()
            if lead:
                texts.append(lead)
        for m, nxt in zip(markers, markers[1:] + [None]):
            end = nxt.start() if nxt is not None else len(text)
            body = text[m.end() : end].strip()
            if body:
                texts.append(body)
    else:
        texts.extend(line.strip() for line in text.splitlines() if line.strip())

    if answer_block:
        texts.append(answer_block)
    if not texts:
        raise EmptySolution("no step content found in solution text")

    return [ReasoningStep(text=t, ordinal=i) for i, t in enumerate(texts, start=1)]


@dataclass(frozen=True)
class EncodedInput:
    """Scorer input text plus the offset of each sep token, one per step."""

    text: str
    sep_positions: tuple[int, ...]


def encode_for_scorer(chain: ReasoningChain) -> EncodedInput:
    """Render a chain as ``question: <q>, reasoning steps: <y1> [sep] ... <yL> [sep]``."""
    for step in chain.steps:
        if SEP_TOKEN in step.text:
            raise ValueError(f"step text contains reserved token {SEP_TOKEN!r}")
    parts = [_ENCODE_HEADER, chain.question, _ENCODE_JOINER]
    offset = sum(len(p) for p in parts)
    positions: list[int] = []
    for i, step in enumerate(chain.steps):
        if i > 0:
            parts.append(" ")
            offset += 1
        parts.append(step.text)
        offset += len(step.text)
        parts.append(" ")
        offset += 1
        positions.append(offset)
        parts.append(SEP_TOKEN)
        offset += len(SEP_TOKEN)
    return EncodedInput(text="".join(parts), sep_positions=tuple(positions))


def step_spans(encoded: EncodedInput) -> list[tuple[int, int]]:
    """Character span of each step's text within the encoded input."""
    first = encoded.text.index(_ENCODE_JOINER)
    spans: list[tuple[int, int]] = []
    start = first + len(_ENCODE_JOINER)
    for pos in encoded.sep_positions:
        spans.append((start, pos - 1))
        start = pos + len(SEP_TOKEN) + 1
    return spans


def decode_scorer_input(encoded: EncodedInput) -> ReasoningChain:
    """Recover (question, steps) from an encoded input; inverse of encoding."""
    if not encoded.text.startswith(_ENCODE_HEADER):
        raise ValueError("encoded input does not start with the question header")
    first = encoded.text.index(_ENCODE_JOINER)
    question = encoded.text[len(_ENCODE_HEADER) : first]
    texts = [encoded.text[a:b] for a, b in step_spans(encoded)]
    return ReasoningChain.from_texts(question, texts)


@dataclass(frozen=True)
class NormalizedAnswer:
    """A final answer with an exact rational value when one can be parsed.

    Two answers compare equal by rational value when both parse, otherwise by
    canonical string. The canonical form of a rational is its shortest
    decimal-or-fraction rendering, so canonical equality coincides with
    numeric equality whenever both numerics exist.
    """

    raw: str
    numeric: Optional[Fraction]
    canonical: str

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, NormalizedAnswer):
            return NotImplemented
        if self.numeric is not None and other.numeric is not None:
            return self.numeric == other.numeric
        return self.canonical == other.canonical

    def __hash__(self) -> int:
        return hash(self.canonical)


def _terminating_decimal(value: Fraction) -> Optional[str]:
    d = value.denominator
    twos = fives = 0
    while d % 2 == 0:
        d //= 2
        twos += 1
    while d % 5 == 0:
        d //= 5
        fives += 1
    if d != 1:
        return None
    places = max(twos, fives)
    scaled = abs(value) * 10**places
    digits = str(int(scaled)).rjust(places + 1, "0")
    int_part, frac_part = digits[:-places], digits[-places:]
    sign = "-" if value < 0 else ""
    return f"{sign}{int_part}.{frac_part}"


def _shortest_rendering(value: Fraction) -> str:
    if value.denominator == 1:
        return str(value.numerator)
    candidates = [f"{value.numerator}/{value.denominator}"]
    decimal = _terminating_decimal(value)
    if decimal is not None:
        candidates.append(decimal)
    return min(candidates, key=lambda s: (len(s), s))


def normalize_answer(raw: str) -> NormalizedAnswer:
    """Normalize an answer string, parsing an exact rational when possible.

    Strips dollar signs, ``\\boxed{}`` wrappers, digit-group commas, and a
    trailing period before parsing.
    """
    s = raw.strip()
    for _ in range(4):
        unwrapped = _BOXED.sub(r"\1", s)
        if unwrapped == s:
            break
        s = unwrapped
    s = s.strip().strip("$").strip()
    s = _LATEX_FRAC.sub(r"\1/\2", s)
    s = _DIGIT_COMMA.sub("", s)
    s = s.rstrip(".").strip()
    numeric: Optional[Fraction] = None
    try:
        numeric = Fraction(s.replace(" ", ""))
    except (ValueError, ZeroDivisionError):
        numeric = None
    if numeric is not None:
        canonical = _shortest_rendering(numeric)
    else:
        canonical = " ".join(s.split()).casefold()
    return NormalizedAnswer(raw=raw, numeric=numeric, canonical=canonical)


def extract_answer(chain: ReasoningChain) -> NormalizedAnswer:
    """Extract the final answer from a chain.

    Tried in priority order: an explicit ``# Answer`` block (latest step
    first), a trailing "the answer is X" phrase in the last step, then the
    last ``$...$`` math group or bare number in the last step.
    """
    for step in reversed(chain.steps):
        m = _ANSWER_HEADER.search(step.text)
        if m:
            body = step.text[m.end() :].lstrip(" \t:")
            for line in body.splitlines():
                if line.strip():
                    return normalize_answer(line.strip())

    last = chain.steps[-1].text
    phrase = None
    for m in _ANSWER_PHRASE.finditer(last):
        phrase = m
    if phrase:
        return normalize_answer(phrase.group(1))

    groups = list(_MATH_GROUP.finditer(last))
    if groups:
        return normalize_answer(groups[-1].group(1))
    numbers = list(_NUMBER_TOKEN.finditer(last))
    if numbers:
        return normalize_answer(numbers[-1].group(0))

    raise NoAnswerFound(f"no answer pattern matched the last step: {last!r}")


def instance_to_record(instance: AnnotatedInstance) -> dict:
    """Dataset record for one instance; field order is part of the contract."""
    injection = None
    if instance.injection_meta is not None:
        injection = {
            "type": int(instance.injection_meta.hallucination),
            "position": instance.injection_meta.position,
        }
    return {
        "id": instance.instance_id,
        "question": instance.chain.question,
        "steps": instance.chain.step_texts(),
        "labels": instance.labels.to_lists(),
        "final_answer": instance.chain.final_answer,
        "provenance": instance.provenance,
        "injection": injection,
        "meta": dict(instance.meta),
    }


def _require(record: dict, fld: str, line: int):
    if fld not in record:
        raise SchemaError(line, fld, "missing")
    return record[fld]


def record_to_instance(record: dict, line: int = 0) -> AnnotatedInstance:
    instance_id = _require(record, "id", line)
    if not isinstance(instance_id, str) or not instance_id:
        raise SchemaError(line, "id", "must be a non-empty string")
    question = _require(record, "question", line)
    if not isinstance(question, str) or not question.strip():
        raise SchemaError(line, "question", "must be a non-empty string")
    steps = _require(record, "steps", line)
    if not isinstance(steps, list) or not steps or not all(
        isinstance(s, str) and s.strip() for s in steps
    ):
        raise SchemaError(line, "steps", "must be a non-empty list of non-empty strings")
    labels = _require(record, "labels", line)
    if not isinstance(labels, list) or len(labels) != N_TYPES:
        raise SchemaError(line, "labels", f"must have exactly {N_TYPES} rows")
    for row in labels:
        if not isinstance(row, list) or len(row) != len(steps):
            raise SchemaError(line, "labels", "row width must equal step count")
        if not all(isinstance(v, bool) for v in row):
            raise SchemaError(line, "labels", "entries must be booleans")
    final_answer = record.get("final_answer")
    if final_answer is not None and not isinstance(final_answer, str):
        raise SchemaError(line, "final_answer", "must be a string or null")
    provenance = _require(record, "provenance", line)
    if provenance not in PROVENANCES:
        raise SchemaError(line, "provenance", f"must be one of {PROVENANCES}")
    injection = record.get("injection")
    injection_meta = None
    if injection is not None:
        if not isinstance(injection, dict):
            raise SchemaError(line, "injection", "must be an object or null")
        t = injection.get("type")
        pos = injection.get("position")
        if not isinstance(t, int) or not 0 <= t < N_TYPES:
            raise SchemaError(line, "injection", f"type must be 0..{N_TYPES - 1}")
        if not isinstance(pos, int) or pos < 1:
            raise SchemaError(line, "injection", "position must be a positive integer")
        injection_meta = InjectionMeta(HallucinationType(t), pos)
    meta = record.get("meta") or {}
    if not isinstance(meta, dict):
        raise SchemaError(line, "meta", "must be an object")

    try:
        chain = ReasoningChain.from_texts(question, steps, final_answer)
        matrix = StepLabelMatrix.from_rows(labels)
        return make_instance(
            chain,
            matrix,
            provenance,
            injection_meta,
            instance_id=instance_id,
            meta=meta,
        )
    except (ValueError, KeyError) as exc:
        raise SchemaError(line, "record", str(exc)) from exc


def write_dataset(
    instances: Iterable[AnnotatedInstance], path: Union[str, Path]
) -> None:
    """Write instances as one JSON object per line, UTF-8."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for instance in instances:
            fh.write(
                json.dumps(
                    instance_to_record(instance),
                    ensure_ascii=False,
                    separators=(",", ":"),
                )
            )
            fh.write("\n")


def read_dataset(path: Union[str, Path]) -> list[AnnotatedInstance]:
    """Read a line-delimited dataset; rejects malformed records with line numbers."""
    instances: list[AnnotatedInstance] = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(line_no, "json", str(exc)) from exc
            if not isinstance(record, dict):
                raise SchemaError(line_no, "json", "record must be an object")
            instances.append(record_to_instance(record, line_no))
    return instances
