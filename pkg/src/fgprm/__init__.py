"""Step-level hallucination detection and reward modeling for
chain-of-thought math reasoning: synthetic corpus construction by judged
injection, per-type process reward models, and best-of-N verification."""

from .codec import (
    EncodedInput,
    NoAnswerFound,
    NormalizedAnswer,
    encode_for_scorer,
    extract_answer,
    normalize_answer,
    read_dataset,
    split_steps,
    write_dataset,
)
from .core import (
    AnnotatedInstance,
    HallucinationType,
    InjectionMeta,
    ReasoningChain,
    ReasoningStep,
    StepLabelMatrix,
    collapse_labels,
    make_instance,
)
from .injection import (
    CorpusConfig,
    InjectionRecipe,
    JudgmentRule,
    build_corpus,
    deterministic_calc_error,
    inject_step,
    judge_position,
    splice,
)
from .metrics import compile_report, detection_metrics, step_score
from .rewards import (
    ScorerBundle,
    TrainConfig,
    load_bundle,
    orm_loss,
    prm_loss,
    save_bundle,
    score_steps,
    train,
)
from .verify import (
    CandidatePool,
    aggregate_reward,
    best_of_n,
    self_consistency,
    verify_suite,
)

__version__ = "0.1.0"
