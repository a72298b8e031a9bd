"""Detection metrics (standard confusion-based and literal audit formulas),
the step-correctness score, and run-report assembly."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Optional, Sequence

from .core import N_TYPES, HallucinationType


class ShapeMismatch(ValueError):
    """Prediction and gold label shapes disagree."""


class EmptyChain(ValueError):
    """A generation has no steps to score."""


class EmptyReport(ValueError):
    """A report needs at least one metric block."""


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


@dataclass
class TypeMetrics:
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]

    def as_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


@dataclass
class DetectionReport:
    mode: str
    per_type: dict[str, TypeMetrics]
    counts: dict[str, ConfusionCounts]
    macro_f1: Optional[float]

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "per_type": {k: v.as_dict() for k, v in self.per_type.items()},
            "counts": {k: v.as_dict() for k, v in self.counts.items()},
            "macro_f1": self.macro_f1,
        }


def _check_shapes(
    pred: Sequence[Sequence[Sequence[bool]]],
    gold: Sequence[Sequence[Sequence[bool]]],
) -> None:
    if len(pred) != len(gold):
        raise ShapeMismatch(f"{len(pred)} predictions vs {len(gold)} golds")
    for i, (p, g) in enumerate(zip(pred, gold)):
        if len(p) != N_TYPES or len(g) != N_TYPES:
            raise ShapeMismatch(f"instance {i}: matrices must have {N_TYPES} rows")
        widths = {len(row) for row in p} | {len(row) for row in g}
        if len(widths) != 1:
            raise ShapeMismatch(f"instance {i}: ragged or mismatched step counts")


def confusion_by_type(
    pred: Sequence[Sequence[Sequence[bool]]],
    gold: Sequence[Sequence[Sequence[bool]]],
) -> dict[HallucinationType, ConfusionCounts]:
    """Aggregate per-type confusion counts over a corpus of 6 x L matrices."""
    _check_shapes(pred, gold)
    counts = {t: ConfusionCounts() for t in HallucinationType}
    for p_mat, g_mat in zip(pred, gold):
        for t in HallucinationType:
            for p, g in zip(p_mat[int(t)], g_mat[int(t)]):
                if p and g:
                    counts[t].tp += 1
                elif p and not g:
                    counts[t].fp += 1
                elif not p and g:
                    counts[t].fn += 1
                else:
                    counts[t].tn += 1
    return counts


def _ratio(num: int, den: int) -> Optional[float]:
    return num / den if den else None


def _f1(precision: Optional[float], recall: Optional[float]) -> Optional[float]:
    if precision is None or recall is None or precision + recall == 0:
        return None
    return 2 * precision * recall / (precision + recall)


def detection_metrics(
    pred: Sequence[Sequence[Sequence[bool]]],
    gold: Sequence[Sequence[Sequence[bool]]],
    mode: str = "standard",
) -> DetectionReport:
    """Per-type precision/recall/F1 plus the macro mean.

    ``standard`` uses true positives in the numerators. ``literal`` keeps an
    audit variant whose numerators count all agreements (true negatives
    included), which can exceed 1; it is reported, never silently preferred.
    Undefined ratios are reported as None and excluded from the macro mean.
    """
    if mode not in ("standard", "literal"):
        raise ValueError(f"unknown metric mode {mode!r}")
    counts = confusion_by_type(pred, gold)
    per_type: dict[str, TypeMetrics] = {}
    f1_values = []
    for t in HallucinationType:
        c = counts[t]
        if mode == "standard":
            precision = _ratio(c.tp, c.tp + c.fp)
            recall = _ratio(c.tp, c.tp + c.fn)
        else:
            agreements = c.tp + c.tn
            precision = _ratio(agreements, c.tp + c.fp)
            recall = _ratio(agreements, c.tp + c.fn)
        f1 = _f1(precision, recall)
        per_type[t.slug] = TypeMetrics(precision=precision, recall=recall, f1=f1)
        if f1 is not None:
            f1_values.append(f1)
    macro = sum(f1_values) / len(f1_values) if f1_values else None
    return DetectionReport(
        mode=mode,
        per_type=per_type,
        counts={t.slug: counts[t] for t in HallucinationType},
        macro_f1=macro,
    )


def step_score(correct_flags: Sequence[Sequence[bool]]) -> float:
    """Mean over generations of the fraction of correct steps."""
    if not correct_flags:
        raise EmptyChain("no generations to score")
    total = 0.0
    for i, flags in enumerate(correct_flags):
        if not flags:
            raise EmptyChain(f"generation {i} has no steps")
        total += sum(bool(f) for f in flags) / len(flags)
    return total / len(correct_flags)


@dataclass
class RunReport:
    """Persisted metrics artifact for one configured run.

    The timestamp is excluded from the canonical payload so identical inputs
    produce identical digests and byte-identical report files when the
    timestamp is left unset.
    """

    config_digest: str
    detection: Optional[dict] = None
    verification: Optional[dict] = None
    step_scores: Optional[dict] = None
    timestamp: Optional[str] = None

    def payload(self) -> dict:
        body: dict = {"config_digest": self.config_digest}
        if self.detection is not None:
            body["detection"] = self.detection
        if self.verification is not None:
            body["verification"] = self.verification
        if self.step_scores is not None:
            body["step_scores"] = self.step_scores
        return body

    def digest(self) -> str:
        canonical = json.dumps(self.payload(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def to_json(self) -> str:
        body = self.payload()
        body["report_digest"] = self.digest()
        if self.timestamp is not None:
            body["timestamp"] = self.timestamp
        return json.dumps(body, sort_keys=True, ensure_ascii=False, indent=2) + "\n"


def compile_report(
    detection: Optional[dict] = None,
    verification: Optional[dict] = None,
    step_scores: Optional[dict] = None,
    *,
    config_digest: str,
    timestamp: Optional[str] = None,
) -> RunReport:
    """Assemble a run report; at least one metric block must be present."""
    if detection is None and verification is None and step_scores is None:
        raise EmptyReport("a report needs detection, verification, or step scores")
    return RunReport(
        config_digest=config_digest,
        detection=detection,
        verification=verification,
        step_scores=step_scores,
        timestamp=timestamp,
    )
