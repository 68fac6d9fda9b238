"""Hierarchy-aware credit assignment and strategy-diversity analysis tools.

The package splits long-form reasoning traces into planning and execution
tokens via a mined strategic-gram inventory, amplifies planning credit on
top of group-relative advantages, measures the entropy family of training
diagnostics, and ships a small tabular simulator that reproduces the
two-phase training dynamic at desk scale.
"""

from .classify import SGMatch, TokenClassMask, classify_trajectory, label_tokens, match_sgs
from .credit import (
    AdvantageArray,
    TargetDistribution,
    clipped_surrogate,
    grpo_advantages,
    hicra_advantages,
    kl_objective,
    optimal_target_check,
    policy_gradient,
    target_distribution,
)
from .embeddings import EmbeddingProvider, HashEmbedder, HTTPEmbedder, PrecomputedEmbedder
from .judge import ErrorVerdict, JudgeEndpoint, classify_failure, classify_failures, error_series
from .metrics import (
    MetricPoint,
    MetricSeries,
    StepWindow,
    build_windows,
    conditional_entropy,
    entropy_overlap_stats,
    pass_at_k,
    relative_perplexity_series,
    semantic_entropy,
    semantic_entropy_series,
    sensitivity_drop,
    token_entropy_series,
)
from .mining import Gram, SGCluster, SGSet, cluster_grams, extract_ngrams, mine_sgset
from .sim import EnvSpec, PolicyTable, TrainConfig, rollout, train, two_phase_probe
from .textnorm import NORMALIZATION_VERSION, normalize
from .traces import (
    RolloutGroup,
    TokenRecord,
    TraceParseError,
    Trajectory,
    group_rollouts,
    load_corpus,
    save_corpus,
)

__version__ = "0.1.0"

__all__ = [
    "AdvantageArray",
    "EmbeddingProvider",
    "EnvSpec",
    "ErrorVerdict",
    "Gram",
    "HTTPEmbedder",
    "HashEmbedder",
    "JudgeEndpoint",
    "MetricPoint",
    "MetricSeries",
    "NORMALIZATION_VERSION",
    "PolicyTable",
    "PrecomputedEmbedder",
    "RolloutGroup",
    "SGCluster",
    "SGMatch",
    "SGSet",
    "StepWindow",
    "TargetDistribution",
    "TokenClassMask",
    "TokenRecord",
    "TraceParseError",
    "TrainConfig",
    "Trajectory",
    "build_windows",
    "classify_failure",
    "classify_failures",
    "classify_trajectory",
    "clipped_surrogate",
    "cluster_grams",
    "conditional_entropy",
    "entropy_overlap_stats",
    "error_series",
    "extract_ngrams",
    "grpo_advantages",
    "group_rollouts",
    "hicra_advantages",
    "kl_objective",
    "label_tokens",
    "load_corpus",
    "match_sgs",
    "mine_sgset",
    "normalize",
    "optimal_target_check",
    "pass_at_k",
    "policy_gradient",
    "relative_perplexity_series",
    "rollout",
    "save_corpus",
    "semantic_entropy",
    "semantic_entropy_series",
    "sensitivity_drop",
    "target_distribution",
    "token_entropy_series",
    "train",
    "two_phase_probe",
]
