"""Shared data model: the six-way hallucination taxonomy, reasoning chains,
and per-step label matrices used by every pipeline stage."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any, Mapping, Optional, Sequence


class DimensionMismatch(ValueError):
    """Label matrix shape does not match the chain it annotates."""


class InvalidMeta(ValueError):
    """Provenance, injection metadata, and labels are mutually inconsistent."""


class HallucinationType(IntEnum):
    """The six step-level hallucination categories, in fixed index order.

    The integer value doubles as the row index used by label matrices,
    prompt assets, checkpoints, and reports. The ordering is part of every
    serialized contract and must never change.
    """

    CONTEXT_INCONSISTENCY = 0
    LOGICAL_INCONSISTENCY = 1
    INSTRUCTION_INCONSISTENCY = 2
    CALCULATION_ERROR = 3
    FACTUAL_INCONSISTENCY = 4
    FABRICATION = 5

    @property
    def label(self) -> str:
        """Human-readable display name, e.g. ``"Context Inconsistency"``."""
        return _LABELS[self]

    @property
    def slug(self) -> str:
        """Lowercase identifier used for asset file names and reports."""
        return self.name.lower()


_LABELS = {
    HallucinationType.CONTEXT_INCONSISTENCY: "Context Inconsistency",
    HallucinationType.LOGICAL_INCONSISTENCY: "Logical Inconsistency",
    HallucinationType.INSTRUCTION_INCONSISTENCY: "Instruction Inconsistency",
    HallucinationType.CALCULATION_ERROR: "Calculation Error",
    HallucinationType.FACTUAL_INCONSISTENCY: "Factual Inconsistency",
    HallucinationType.FABRICATION: "Fabrication",
}

N_TYPES = len(HallucinationType)

PROVENANCES = ("golden", "injected", "model_generated")


@dataclass(frozen=True)
class ReasoningStep:
    """One step of a solution. ``ordinal`` is the 1-based position in its chain."""

    text: str
    ordinal: int

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("step text must be non-empty after trimming")
        if self.ordinal < 1:
            raise ValueError(f"step ordinal must be >= 1, got {self.ordinal}")


@dataclass(frozen=True)
class ReasoningChain:
    """A question plus its ordered reasoning steps and optional final answer."""

    question: str
    steps: tuple[ReasoningStep, ...]
    final_answer: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.question.strip():
            raise ValueError("question must be non-empty")
        if len(self.steps) < 1:
            raise ValueError("a chain must contain at least one step")
        for i, step in enumerate(self.steps, start=1):
            if step.ordinal != i:
                raise ValueError(
                    f"step ordinals must be 1..L without gaps; "
                    f"position {i} has ordinal {step.ordinal}"
                )

    @property
    def length(self) -> int:
        return len(self.steps)

    @classmethod
    def from_texts(
        cls,
        question: str,
        step_texts: Sequence[str],
        final_answer: Optional[str] = None,
    ) -> "ReasoningChain":
        steps = tuple(
            ReasoningStep(text=t, ordinal=i) for i, t in enumerate(step_texts, start=1)
        )
        return cls(question=question, steps=steps, final_answer=final_answer)

    def step_texts(self) -> list[str]:
        return [s.text for s in self.steps]


@dataclass(frozen=True)
class StepLabelMatrix:
    """Boolean 6 x L matrix; True at (t, i) means step i carries type t.

    Rows follow the :class:`HallucinationType` index order. Columns are
    1-based step positions stored 0-based internally.
    """

    rows: tuple[tuple[bool, ...], ...]

    def __post_init__(self) -> None:
        if len(self.rows) != N_TYPES:
            raise DimensionMismatch(
                f"label matrix must have {N_TYPES} rows, got {len(self.rows)}"
            )
        widths = {len(r) for r in self.rows}
        if len(widths) != 1:
            raise DimensionMismatch(f"label matrix rows have uneven widths: {widths}")

    @property
    def width(self) -> int:
        return len(self.rows[0])

    @classmethod
    def all_false(cls, length: int) -> "StepLabelMatrix":
        return cls(rows=tuple((False,) * length for _ in range(N_TYPES)))

    @classmethod
    def single(
        cls, hallucination: HallucinationType, position: int, length: int
    ) -> "StepLabelMatrix":
        """Matrix that is True only at (hallucination, position); position is 1-based."""
        if not 1 <= position <= length:
            raise DimensionMismatch(
                f"position {position} outside 1..{length}"
            )
        rows = [
            [False] * length
            for _ in range(N_TYPES)
        ]
        rows[int(hallucination)][position - 1] = True
        return cls(rows=tuple(tuple(r) for r in rows))

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[bool]]) -> "StepLabelMatrix":
        return cls(rows=tuple(tuple(bool(v) for v in row) for row in rows))

    def value_at(self, hallucination: HallucinationType, position: int) -> bool:
        """Label at a 1-based step position."""
        return self.rows[int(hallucination)][position - 1]

    def is_all_false(self) -> bool:
        return not any(any(row) for row in self.rows)

    def true_cells(self) -> list[tuple[HallucinationType, int]]:
        """All (type, 1-based position) pairs that are True."""
        return [
            (HallucinationType(t), i + 1)
            for t, row in enumerate(self.rows)
            for i, v in enumerate(row)
            if v
        ]

    def to_lists(self) -> list[list[bool]]:
        return [list(row) for row in self.rows]


def collapse_labels(matrix: StepLabelMatrix) -> list[bool]:
    """Coarse-grained view: element i is True iff any type is True at step i."""
    return [any(row[i] for row in matrix.rows) for i in range(matrix.width)]


@dataclass(frozen=True)
class InjectionMeta:
    """Which hallucination was injected and at which 1-based step position."""

    hallucination: HallucinationType
    position: int


@dataclass(frozen=True)
class AnnotatedInstance:
    """A labeled chain: the unit record for training and evaluation.

    ``meta`` carries free-form bookkeeping (e.g. the source golden id for an
    injected instance) and round-trips through the dataset codec untouched.
    """

    instance_id: str
    chain: ReasoningChain
    labels: StepLabelMatrix
    provenance: str
    injection_meta: Optional[InjectionMeta] = None
    meta: Mapping[str, Any] = field(default_factory=dict)


def _mint_id(
    chain: ReasoningChain,
    labels: StepLabelMatrix,
    provenance: str,
    injection_meta: Optional[InjectionMeta],
) -> str:
    # Content-addressed so that rebuilt corpora are byte-identical across runs.
    payload = json.dumps(
        [
            chain.question,
            chain.step_texts(),
            chain.final_answer,
            labels.to_lists(),
            provenance,
            [int(injection_meta.hallucination), injection_meta.position]
            if injection_meta
            else None,
        ],
        ensure_ascii=False,
        sort_keys=True,
    )
    return "inst-" + hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def make_instance(
    chain: ReasoningChain,
    labels: StepLabelMatrix,
    provenance: str,
    injection_meta: Optional[InjectionMeta] = None,
    *,
    instance_id: Optional[str] = None,
    meta: Optional[Mapping[str, Any]] = None,
) -> AnnotatedInstance:
    """Validate and assemble an :class:`AnnotatedInstance`.

    When ``instance_id`` is omitted a deterministic content-derived id is
    minted. Raises :class:`DimensionMismatch` on shape violations and
    :class:`InvalidMeta` when provenance and metadata disagree.
    """
    if labels.width != chain.length:
        raise DimensionMismatch(
            f"label matrix width {labels.width} != chain length {chain.length}"
        )
    if provenance not in PROVENANCES:
        raise InvalidMeta(f"unknown provenance {provenance!r}")

    if provenance == "injected":
        if injection_meta is None:
            raise InvalidMeta("injected instances require injection_meta")
        if not 1 <= injection_meta.position <= chain.length:
            raise InvalidMeta(
                f"injection position {injection_meta.position} outside "
                f"1..{chain.length}"
            )
        expected = StepLabelMatrix.single(
            injection_meta.hallucination, injection_meta.position, chain.length
        )
        if labels != expected:
            raise InvalidMeta(
                "injected instance labels must be true exactly at "
                f"({injection_meta.hallucination.name}, {injection_meta.position})"
            )
    else:
        if injection_meta is not None:
            raise InvalidMeta(f"{provenance} instances must not carry injection_meta")
        if provenance == "golden" and not labels.is_all_false():
            raise InvalidMeta("golden instances must have an all-false label matrix")

    if instance_id is None:
        instance_id = _mint_id(chain, labels, provenance, injection_meta)

    return AnnotatedInstance(
        instance_id=instance_id,
        chain=chain,
        labels=labels,
        provenance=provenance,
        injection_meta=injection_meta,
        meta=dict(meta) if meta else {},
    )
