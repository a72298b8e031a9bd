"""Step scorers and their training.

Score polarity: every step scorer emits the probability that a step is CLEAN
of its hallucination type, so a fully correct solution scores near 1
everywhere and contributes almost nothing to the log-sum reward. The
hallucination-probability view is simply 1 - p.

The trainable reference backbone is a hashed n-gram logistic model: character
3-5-grams plus word unigrams/bigrams of the step text concatenated with the
question, hashed into 2**18 buckets, one logistic (or softmax) unit per
output. Losses are standard negative log-likelihood cross-entropy; the
outcome loss is the single-step special case of the process loss.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .codec import encode_for_scorer, step_spans
from .core import (
    AnnotatedInstance,
    HallucinationType,
    N_TYPES,
    ReasoningChain,
    collapse_labels,
)

EPS = 1e-6
FEATURE_DIM = 1 << 18

MODES = ("fg_prm", "cg_prm", "orm", "compact")
N_COMPACT_CATEGORIES = N_TYPES + 1  # six types plus no-error
CLEAN_CATEGORY = N_TYPES


class DomainError(ValueError):
    """A probability argument is outside (0, 1)."""


class LengthMismatch(ValueError):
    """Prediction and label vectors have different lengths."""


class DegenerateLabels(ValueError):
    """A scorer's training data contains only one class."""

    def __init__(self, name: str):
        super().__init__(f"training labels for {name} contain only one class")
        self.scorer_name = name


class ConfigError(ValueError):
    """Invalid training configuration."""


class UntrainedBundle(RuntimeError):
    """The bundle has no trained scorers yet."""


# ---------------------------------------------------------------------------
# Losses (cross-entropy as negative log-likelihood)


def orm_loss(r_y: float, y_star: Union[bool, int]) -> float:
    """Cross-entropy of a whole-solution correctness prediction."""
    if not 0.0 < r_y < 1.0:
        raise DomainError(f"r_y must lie in (0, 1), got {r_y}")
    y = 1.0 if y_star else 0.0
    return -(y * math.log(r_y) + (1.0 - y) * math.log(1.0 - r_y))


def prm_loss(p: Sequence[float], y_star: Sequence[Union[bool, int]]) -> float:
    """Summed per-step cross-entropy; y_star[i] is 1 when step i is clean.

    Reduces exactly to :func:`orm_loss` when L = 1.
    """
    if len(p) != len(y_star):
        raise LengthMismatch(f"{len(p)} predictions vs {len(y_star)} labels")
    return sum(orm_loss(pi, yi) for pi, yi in zip(p, y_star))


# ---------------------------------------------------------------------------
# Hashed n-gram features

_CHAR_NGRAM_SIZES = (3, 4, 5)


def hash_features(
    step_text: str, question: str, dim: int = FEATURE_DIM
) -> tuple[np.ndarray, np.ndarray]:
    """Sparse hashed feature vector for one step in its question context.

    Returns (indices, values) with indices sorted ascending and values
    L2-normalized counts. Pure function of the text and dim.
    """
    combined = f"{step_text} {question}".lower()
    counts: dict[int, float] = {}

    def bump(token: str) -> None:
        idx = zlib.crc32(token.encode("utf-8")) & (dim - 1)
        counts[idx] = counts.get(idx, 0.0) + 1.0

    for n in _CHAR_NGRAM_SIZES:
        for i in range(len(combined) - n + 1):
            bump(f"c{n}:{combined[i:i + n]}")
    words = combined.split()
    for w in words:
        bump(f"w1:{w}")
    for a, b in zip(words, words[1:]):
        bump(f"w2:{a} {b}")

    if not counts:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)
    indices = np.array(sorted(counts), dtype=np.int64)
    values = np.array([counts[i] for i in indices], dtype=np.float64)
    values /= np.linalg.norm(values)
    return indices, values


@dataclass
class Example:
    """One training example: sparse features plus an integer label."""

    indices: np.ndarray
    values: np.ndarray
    label: int


# ---------------------------------------------------------------------------
# Reference backbone


@dataclass
class ReferenceBackbone:
    """Linear model over hashed features with one unit per output."""

    dim: int
    n_outputs: int
    seed: int
    weights: np.ndarray
    bias: np.ndarray

    @classmethod
    def zeros(cls, dim: int, n_outputs: int, seed: int) -> "ReferenceBackbone":
        return cls(
            dim=dim,
            n_outputs=n_outputs,
            seed=seed,
            weights=np.zeros((n_outputs, dim), dtype=np.float64),
            bias=np.zeros(n_outputs, dtype=np.float64),
        )

    def logits(self, indices: np.ndarray, values: np.ndarray) -> np.ndarray:
        if indices.size == 0:
            return self.bias.copy()
        return self.weights[:, indices] @ values + self.bias

    def copy(self) -> "ReferenceBackbone":
        return replace(self, weights=self.weights.copy(), bias=self.bias.copy())


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max()
    e = np.exp(shifted)
    return e / e.sum()


def binary_example_loss(backbone: ReferenceBackbone, example: Example) -> float:
    p = _clamp(_sigmoid(float(backbone.logits(example.indices, example.values)[0])))
    return orm_loss(p, example.label)


def binary_example_gradient(
    backbone: ReferenceBackbone, example: Example
) -> tuple[np.ndarray, float]:
    """Sparse gradient of the NLL wrt weights (over example.indices) and bias."""
    p = _sigmoid(float(backbone.logits(example.indices, example.values)[0]))
    g = p - example.label
    return g * example.values, g


def finite_difference_check(
    backbone: ReferenceBackbone,
    example: Example,
    *,
    n_coords: int = 120,
    h: float = 1e-5,
    rng: Optional[random.Random] = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Coordinates are drawn from the example's active features padded with
    random inactive ones; inactive coordinates have zero gradient on both
    sides and contribute zero error.
    """
    rng = rng or random.Random(0)
    active = [int(i) for i in example.indices]
    coords = list(active[:n_coords])
    while len(coords) < n_coords:
        coords.append(rng.randrange(backbone.dim))
    sparse_grad, _ = binary_example_gradient(backbone, example)
    grad_by_idx = dict(zip(active, sparse_grad))

    worst = 0.0
    for c in coords:
        analytic = grad_by_idx.get(c, 0.0)
        original = backbone.weights[0, c]
        backbone.weights[0, c] = original + h
        up = binary_example_loss(backbone, example)
        backbone.weights[0, c] = original - h
        down = binary_example_loss(backbone, example)
        backbone.weights[0, c] = original
        numeric = (up - down) / (2.0 * h)
        scale = max(abs(analytic), abs(numeric), 1e-12)
        worst = max(worst, abs(analytic - numeric) / scale)
    return worst


# ---------------------------------------------------------------------------
# Scorers


def _clamp(p: float) -> float:
    return min(max(p, EPS), 1.0 - EPS)


@dataclass
class TrainedStepScorer:
    """Per-step clean-probability scorer backed by one logistic unit."""

    backbone: ReferenceBackbone
    name: str

    def score_steps(self, question: str, step_texts: Sequence[str]) -> np.ndarray:
        out = np.empty(len(step_texts), dtype=np.float64)
        for i, text in enumerate(step_texts):
            idx, val = hash_features(text, question, self.backbone.dim)
            out[i] = _clamp(_sigmoid(float(self.backbone.logits(idx, val)[0])))
        return out


@dataclass
class TrainedOutcomeScorer:
    """Whole-solution correctness scorer."""

    backbone: ReferenceBackbone
    name: str = "orm"

    def score_solution(self, question: str, step_texts: Sequence[str]) -> float:
        idx, val = hash_features("\n".join(step_texts), question, self.backbone.dim)
        return _clamp(_sigmoid(float(self.backbone.logits(idx, val)[0])))


@dataclass
class CompactStepScorer:
    """Single 7-way per-step classifier: six types plus a no-error category."""

    backbone: ReferenceBackbone
    name: str = "compact"

    def category_probs(self, question: str, step_texts: Sequence[str]) -> np.ndarray:
        out = np.empty((len(step_texts), N_COMPACT_CATEGORIES), dtype=np.float64)
        for i, text in enumerate(step_texts):
            idx, val = hash_features(text, question, self.backbone.dim)
            out[i] = _softmax(self.backbone.logits(idx, val))
        return out


@dataclass
class ScorerBundle:
    """A trained scorer family; exactly one of the member fields is populated
    according to ``mode``."""

    mode: str
    step_scorers: Optional[tuple[TrainedStepScorer, ...]] = None
    outcome_scorer: Optional[TrainedOutcomeScorer] = None
    compact_scorer: Optional[CompactStepScorer] = None
    config_digest: str = ""

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"unknown bundle mode {self.mode!r}")
        if self.mode == "fg_prm" and self.step_scorers is not None:
            if len(self.step_scorers) != N_TYPES:
                raise ConfigError("fg_prm bundles carry exactly six step scorers")
        if self.mode == "cg_prm" and self.step_scorers is not None:
            if len(self.step_scorers) != 1:
                raise ConfigError("cg_prm bundles carry exactly one step scorer")

    @classmethod
    def untrained(cls, mode: str) -> "ScorerBundle":
        return cls(mode=mode)

    @property
    def is_trained(self) -> bool:
        return (
            self.step_scorers is not None
            or self.outcome_scorer is not None
            or self.compact_scorer is not None
        )

    def require_trained(self) -> None:
        if not self.is_trained:
            raise UntrainedBundle(f"bundle mode {self.mode!r} has not been trained")


def score_steps(bundle: ScorerBundle, chain: ReasoningChain) -> np.ndarray:
    """Clean-probability matrix for a chain: 6 x L for fg_prm and compact
    (compact rows are 1 - P(category t)), 1 x L for cg_prm.

    Step texts are sliced out of the encoded scorer input at its sep
    positions, so scoring sees exactly what the encoding defines as a step.
    """
    bundle.require_trained()
    encoded = encode_for_scorer(chain)
    texts = [encoded.text[a:b] for a, b in step_spans(encoded)]
    question = chain.question
    if bundle.mode in ("fg_prm", "cg_prm"):
        assert bundle.step_scorers is not None
        rows = [scorer.score_steps(question, texts) for scorer in bundle.step_scorers]
        return np.vstack(rows)
    if bundle.mode == "compact":
        assert bundle.compact_scorer is not None
        cats = bundle.compact_scorer.category_probs(question, texts)
        clean = 1.0 - cats[:, :N_TYPES].T
        return np.clip(clean, EPS, 1.0 - EPS)
    raise ConfigError("orm bundles score whole solutions, not steps")


def score_solution(bundle: ScorerBundle, chain: ReasoningChain) -> float:
    """Scalar reward for one candidate under this bundle's mode."""
    bundle.require_trained()
    texts = chain.step_texts()
    if bundle.mode == "orm":
        assert bundle.outcome_scorer is not None
        return bundle.outcome_scorer.score_solution(chain.question, texts)
    matrix = score_steps(bundle, chain)
    return float(np.log(matrix).sum())


# ---------------------------------------------------------------------------
# Training


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2.0
    epochs: int = 60
    batch_size: int = 32
    seed: int = 0
    val_fraction: float = 0.05
    early_stop_patience: int = 5

    def digest(self) -> str:
        payload = json.dumps(
            {
                "learning_rate": self.learning_rate,
                "epochs": self.epochs,
                "batch_size": self.batch_size,
                "seed": self.seed,
                "val_fraction": self.val_fraction,
                "early_stop_patience": self.early_stop_patience,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass
class ScorerTrace:
    name: str
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    selected_epoch: int = -1

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "train_losses": self.train_losses,
            "val_losses": self.val_losses,
            "selected_epoch": self.selected_epoch,
        }


@dataclass
class TrainingTrace:
    scorers: list[ScorerTrace] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"scorers": [s.as_dict() for s in self.scorers]}


def _step_features(
    corpus: Sequence[AnnotatedInstance], dim: int
) -> list[list[tuple[np.ndarray, np.ndarray]]]:
    """Per-instance, per-step features, computed once and shared by all scorers."""
    out = []
    for instance in corpus:
        question = instance.chain.question
        out.append(
            [hash_features(s, question, dim) for s in instance.chain.step_texts()]
        )
    return out


def _mean_binary_loss(backbone: ReferenceBackbone, examples: Sequence[Example]) -> float:
    return sum(binary_example_loss(backbone, e) for e in examples) / len(examples)


def _mean_softmax_loss(backbone: ReferenceBackbone, examples: Sequence[Example]) -> float:
    total = 0.0
    for e in examples:
        probs = _softmax(backbone.logits(e.indices, e.values))
        total += -math.log(max(probs[e.label], EPS))
    return total / len(examples)


def _split(
    examples: list[Example], cfg: TrainConfig, name: str
) -> tuple[list[Example], list[Example]]:
    if cfg.val_fraction <= 0 or cfg.val_fraction >= 1:
        raise ConfigError("val_fraction must lie in (0, 1)")
    order = list(range(len(examples)))
    random.Random(f"{cfg.seed}:split:{name}").shuffle(order)
    n_val = max(1, int(round(cfg.val_fraction * len(examples))))
    if n_val >= len(examples):
        raise ConfigError("not enough examples to hold out a validation split")
    val = [examples[i] for i in order[:n_val]]
    train = [examples[i] for i in order[n_val:]]
    return train, val


def _train_linear(
    examples: list[Example],
    n_outputs: int,
    cfg: TrainConfig,
    name: str,
    dim: int,
    batch_probe: Optional[Callable[[str, int, float], None]] = None,
) -> tuple[ReferenceBackbone, ScorerTrace]:
    """Deterministic mini-batch gradient descent with validation early stop."""
    if cfg.learning_rate <= 0 or cfg.epochs < 1 or cfg.batch_size < 1:
        raise ConfigError("learning_rate, epochs, and batch_size must be positive")
    train, val = _split(examples, cfg, name)
    backbone = ReferenceBackbone.zeros(dim, n_outputs, cfg.seed)
    softmax = n_outputs > 1
    loss_fn = _mean_softmax_loss if softmax else _mean_binary_loss

    trace = ScorerTrace(name=name)
    best = math.inf
    best_backbone = backbone.copy()
    stale = 0
    order_rng = random.Random(f"{cfg.seed}:epochs:{name}")
    for epoch in range(cfg.epochs):
        order = list(range(len(train)))
        order_rng.shuffle(order)
        for start in range(0, len(order), cfg.batch_size):
            batch = [train[i] for i in order[start : start + cfg.batch_size]]
            scale = cfg.learning_rate / len(batch)
            for e in batch:
                if softmax:
                    probs = _softmax(backbone.logits(e.indices, e.values))
                    grad = probs.copy()
                    grad[e.label] -= 1.0
                    if e.indices.size:
                        backbone.weights[:, e.indices] -= scale * np.outer(
                            grad, e.values
                        )
                    backbone.bias -= scale * grad
                else:
                    sparse_grad, bias_grad = binary_example_gradient(backbone, e)
                    if e.indices.size:
                        backbone.weights[0, e.indices] -= scale * sparse_grad
                    backbone.bias[0] -= scale * bias_grad
            if batch_probe is not None and epoch == 0:
                batch_probe(name, start // cfg.batch_size, loss_fn(backbone, train))
        train_loss = loss_fn(backbone, train)
        val_loss = loss_fn(backbone, val)
        trace.train_losses.append(train_loss)
        trace.val_losses.append(val_loss)
        if val_loss < best - 1e-12:
            best = val_loss
            best_backbone = backbone.copy()
            trace.selected_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= cfg.early_stop_patience:
                break
    return best_backbone, trace


def _binary_examples(
    corpus: Sequence[AnnotatedInstance],
    features: list[list[tuple[np.ndarray, np.ndarray]]],
    clean_fn,
) -> list[Example]:
    out = []
    for instance, feats in zip(corpus, features):
        flags = clean_fn(instance)
        for (idx, val), clean in zip(feats, flags):
            out.append(Example(indices=idx, values=val, label=int(clean)))
    return out


def train(
    mode: str,
    corpus: Sequence[AnnotatedInstance],
    cfg: TrainConfig,
    *,
    feature_dim: int = FEATURE_DIM,
    batch_probe: Optional[Callable[[str, int, float], None]] = None,
) -> tuple[ScorerBundle, TrainingTrace]:
    """Train a scorer bundle of the given mode on an annotated corpus.

    The corpus is split 95:5 (salted by scorer name) into train/validation;
    each scorer minimizes its cross-entropy by mini-batch gradient descent
    with early stopping on validation loss, and the checkpoint with the best
    validation loss is kept. Deterministic for a fixed seed and data order.
    """
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; expected one of {MODES}")
    if not corpus:
        raise ConfigError("corpus must be non-empty")

    trace = TrainingTrace()

    if mode == "orm":
        examples = []
        for instance in corpus:
            idx, val = hash_features(
                "\n".join(instance.chain.step_texts()),
                instance.chain.question,
                feature_dim,
            )
            correct = not any(collapse_labels(instance.labels))
            examples.append(Example(indices=idx, values=val, label=int(correct)))
        if len({e.label for e in examples}) < 2:
            raise DegenerateLabels("orm")
        backbone, scorer_trace = _train_linear(
            examples, 1, cfg, "orm", feature_dim, batch_probe
        )
        trace.scorers.append(scorer_trace)
        bundle = ScorerBundle(
            mode=mode,
            outcome_scorer=TrainedOutcomeScorer(backbone=backbone),
            config_digest=cfg.digest(),
        )
        return bundle, trace

    features = _step_features(corpus, feature_dim)

    if mode == "fg_prm":
        scorers = []
        for t in HallucinationType:
            examples = _binary_examples(
                corpus,
                features,
                lambda inst, t=t: [
                    not inst.labels.rows[int(t)][i]
                    for i in range(inst.chain.length)
                ],
            )
            if len({e.label for e in examples}) < 2:
                raise DegenerateLabels(t.name)
            backbone, scorer_trace = _train_linear(
                examples, 1, cfg, t.slug, feature_dim, batch_probe
            )
            trace.scorers.append(scorer_trace)
            scorers.append(TrainedStepScorer(backbone=backbone, name=t.slug))
        bundle = ScorerBundle(
            mode=mode, step_scorers=tuple(scorers), config_digest=cfg.digest()
        )
        return bundle, trace

    if mode == "cg_prm":
        examples = _binary_examples(
            corpus,
            features,
            lambda inst: [not f for f in collapse_labels(inst.labels)],
        )
        if len({e.label for e in examples}) < 2:
            raise DegenerateLabels("cg_prm")
        backbone, scorer_trace = _train_linear(
            examples, 1, cfg, "cg_prm", feature_dim, batch_probe
        )
        trace.scorers.append(scorer_trace)
        bundle = ScorerBundle(
            mode=mode,
            step_scorers=(TrainedStepScorer(backbone=backbone, name="cg_prm"),),
            config_digest=cfg.digest(),
        )
        return bundle, trace

    # compact: one 7-way classifier; a step's category is its lowest true
    # type index, or no-error when the column is all false.
    examples = []
    for instance, feats in zip(corpus, features):
        for i, (idx, val) in enumerate(feats):
            label = CLEAN_CATEGORY
            for t in HallucinationType:
                if instance.labels.rows[int(t)][i]:
                    label = int(t)
                    break
            examples.append(Example(indices=idx, values=val, label=label))
    if len({e.label for e in examples}) < 2:
        raise DegenerateLabels("compact")
    backbone, scorer_trace = _train_linear(
        examples, N_COMPACT_CATEGORIES, cfg, "compact", feature_dim, batch_probe
    )
    trace.scorers.append(scorer_trace)
    bundle = ScorerBundle(
        mode=mode,
        compact_scorer=CompactStepScorer(backbone=backbone),
        config_digest=cfg.digest(),
    )
    return bundle, trace


# ---------------------------------------------------------------------------
# Checkpoints

_CHECKPOINT_FORMAT = "fgprm-checkpoint-v1"
_MANIFEST_NAME = "manifest.json"


def _save_checkpoint(path: Path, header: dict, backbone: ReferenceBackbone) -> None:
    header = dict(
        header,
        format=_CHECKPOINT_FORMAT,
        dim=backbone.dim,
        n_outputs=backbone.n_outputs,
        seed=backbone.seed,
    )
    with path.open("wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(backbone.bias.astype("<f8").tobytes())
        fh.write(backbone.weights.astype("<f8").tobytes())


def _load_checkpoint(path: Path) -> tuple[dict, ReferenceBackbone]:
    raw = path.read_bytes()
    newline = raw.index(b"\n")
    header = json.loads(raw[:newline].decode("utf-8"))
    if header.get("format") != _CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a recognized checkpoint")
    dim, n_outputs = header["dim"], header["n_outputs"]
    body = raw[newline + 1 :]
    bias = np.frombuffer(body[: 8 * n_outputs], dtype="<f8").copy()
    weights = (
        np.frombuffer(body[8 * n_outputs :], dtype="<f8")
        .reshape(n_outputs, dim)
        .copy()
    )
    backbone = ReferenceBackbone(
        dim=dim, n_outputs=n_outputs, seed=header["seed"], weights=weights, bias=bias
    )
    return header, backbone


def save_bundle(
    bundle: ScorerBundle,
    directory: Union[str, Path],
    trace: Optional[TrainingTrace] = None,
) -> None:
    """Write one checkpoint file per scorer plus a manifest (and trace)."""
    bundle.require_trained()
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files: dict[str, dict] = {}
    if bundle.mode in ("fg_prm", "cg_prm"):
        assert bundle.step_scorers is not None
        for i, scorer in enumerate(bundle.step_scorers):
            fname = f"{scorer.name}.ckpt"
            _save_checkpoint(
                directory / fname,
                {
                    "mode": bundle.mode,
                    "type_index": i if bundle.mode == "fg_prm" else None,
                    "name": scorer.name,
                    "config_digest": bundle.config_digest,
                },
                scorer.backbone,
            )
            files[fname] = {"name": scorer.name}
    elif bundle.mode == "orm":
        assert bundle.outcome_scorer is not None
        _save_checkpoint(
            directory / "orm.ckpt",
            {
                "mode": "orm",
                "type_index": None,
                "name": "orm",
                "config_digest": bundle.config_digest,
            },
            bundle.outcome_scorer.backbone,
        )
        files["orm.ckpt"] = {"name": "orm"}
    else:
        assert bundle.compact_scorer is not None
        _save_checkpoint(
            directory / "compact.ckpt",
            {
                "mode": "compact",
                "type_index": None,
                "name": "compact",
                "config_digest": bundle.config_digest,
            },
            bundle.compact_scorer.backbone,
        )
        files["compact.ckpt"] = {"name": "compact"}

    manifest = {
        "mode": bundle.mode,
        "config_digest": bundle.config_digest,
        "files": files,
    }
    (directory / _MANIFEST_NAME).write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    if trace is not None:
        (directory / "trace.json").write_text(
            json.dumps(trace.as_dict(), sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )


def load_bundle(directory: Union[str, Path]) -> ScorerBundle:
    directory = Path(directory)
    manifest = json.loads((directory / _MANIFEST_NAME).read_text(encoding="utf-8"))
    mode = manifest["mode"]
    if mode == "fg_prm":
        scorers = []
        for t in HallucinationType:
            _, backbone = _load_checkpoint(directory / f"{t.slug}.ckpt")
            scorers.append(TrainedStepScorer(backbone=backbone, name=t.slug))
        return ScorerBundle(
            mode=mode,
            step_scorers=tuple(scorers),
            config_digest=manifest["config_digest"],
        )
    if mode == "cg_prm":
        _, backbone = _load_checkpoint(directory / "cg_prm.ckpt")
        return ScorerBundle(
            mode=mode,
            step_scorers=(TrainedStepScorer(backbone=backbone, name="cg_prm"),),
            config_digest=manifest["config_digest"],
        )
    if mode == "orm":
        _, backbone = _load_checkpoint(directory / "orm.ckpt")
        return ScorerBundle(
            mode=mode,
            outcome_scorer=TrainedOutcomeScorer(backbone=backbone),
            config_digest=manifest["config_digest"],
        )
    if mode == "compact":
        _, backbone = _load_checkpoint(directory / "compact.ckpt")
        return ScorerBundle(
            mode=mode,
            compact_scorer=CompactStepScorer(backbone=backbone),
            config_digest=manifest["config_digest"],
        )
    raise ConfigError(f"manifest has unknown mode {mode!r}")
