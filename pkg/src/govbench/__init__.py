"""Governance policy benchmarking: ingest DAO voting data, extract
vote-dynamics and market-response features, run decision policies, and
score them against human outcomes."""

from .core import (
    ChoiceWeights,
    EvaluationSet,
    ForumSignal,
    Proposal,
    ProposalOutcome,
    VoteRecord,
    classify_proposal_kind,
    dedupe_latest,
    normalize_choice,
    tally_outcome,
)
from .dynamics import (
    DynamicsFeatures,
    ParticipationSeries,
    build_participation_series,
    features_bundle,
    half_slope_diff,
    lead_metrics,
    spike_metrics,
    stairwise_ratio,
)
from .evaluation import (
    AlignmentReport,
    ProposalAlignment,
    VoterBenchmark,
    aggregate_alignment,
    bucket_agreement,
    contested_subset,
    evaluate_dataset,
    expost_validity,
    proposal_alignment,
    temporal_comparison,
    voter_benchmarks,
)
from .market import (
    MarketWindow,
    compute_market_window,
    market_adjusted_return,
    windowed_pct_change,
)
from .policy import (
    DecisionContext,
    PolicyDecision,
    build_decision_context,
    decide_baseline,
    decide_llm,
)
from .store import Dataset, DatasetStore, MarketSeries
from .synth import ScenarioSpec, generate_dataset

__version__ = "0.1.0"

__all__ = [
    "AlignmentReport",
    "ChoiceWeights",
    "Dataset",
    "DatasetStore",
    "DecisionContext",
    "DynamicsFeatures",
    "EvaluationSet",
    "ForumSignal",
    "MarketSeries",
    "MarketWindow",
    "ParticipationSeries",
    "PolicyDecision",
    "Proposal",
    "ProposalAlignment",
    "ProposalOutcome",
    "ScenarioSpec",
    "VoteRecord",
    "VoterBenchmark",
    "aggregate_alignment",
    "bucket_agreement",
    "build_decision_context",
    "build_participation_series",
    "classify_proposal_kind",
    "compute_market_window",
    "contested_subset",
    "decide_baseline",
    "decide_llm",
    "dedupe_latest",
    "evaluate_dataset",
    "expost_validity",
    "features_bundle",
    "generate_dataset",
    "half_slope_diff",
    "lead_metrics",
    "market_adjusted_return",
    "normalize_choice",
    "proposal_alignment",
    "spike_metrics",
    "stairwise_ratio",
    "tally_outcome",
    "temporal_comparison",
    "voter_benchmarks",
    "windowed_pct_change",
]
