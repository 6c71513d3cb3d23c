"""Score policy decisions against human voting outcomes.

Per proposal the module computes the winning option's share of voting
power, the share agreeing with the policy's selection, and the fraction
of voters agreeing with it; per voter it computes agreement benchmarks
with realized winners. Approval and weighted ballots contribute their
allocation mass on an option wherever a single-choice ballot would
contribute an indicator, which keeps every quantity inside [0, 1] and
reduces to plain counting when all ballots are single-choice.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, MutableMapping, Sequence

import numpy as np

from .core import (
    Proposal,
    ProposalOutcome,
    VoteRecord,
    dedupe_latest,
    normalize_choice,
    tally_outcome,
)
from .errors import (
    CoverageError,
    DegenerateTally,
    EmptyEvaluation,
    EmptyTally,
    InvalidArgument,
)
from .market import MarketWindow
from .policy import PolicyDecision
from .store import Dataset

SCHEMA_VERSION = 1

BUCKET_KEYS = ("binary_change", "binary_no_change", "multi_change", "multi_no_change")


@dataclass(frozen=True)
class ProposalAlignment:
    """Alignment quantities of one proposal against one decision."""

    proposal_id: str
    majority_share: float  # winning option's share of total voting power
    token_alignment: float  # power share agreeing with the policy's option
    headcount_alignment: float  # voter fraction agreeing with the policy's option
    ai_equals_final: bool
    kind: str | None = None
    calls_for_change: bool | None = None
    tie: bool = False
    n_voters: int = 0


@dataclass(frozen=True)
class VoterBenchmark:
    """One voter's agreement with realized winners across their proposals."""

    voter: str
    n_proposals: int
    token_agreement: float  # power-weighted agreement with winners
    headcount_agreement: float  # mean allocation on winners


@dataclass(frozen=True)
class AlignmentReport:
    """Full evaluation output; serializable to a versioned JSON document."""

    policy: dict
    counts: dict
    aggregate: dict
    global_stats: dict
    buckets: dict
    contested: dict
    expost: dict | None = None
    temporal: dict | None = None
    schema_version: int = SCHEMA_VERSION
    per_proposal: tuple[ProposalAlignment, ...] = field(default=(), repr=False)
    per_voter: tuple[VoterBenchmark, ...] = field(default=(), repr=False)

    def to_json_dict(self) -> dict:
        doc = {
            "schema_version": self.schema_version,
            "policy": self.policy,
            "counts": self.counts,
            "aggregate": self.aggregate,
            "global": self.global_stats,
            "buckets": self.buckets,
            "contested": self.contested,
            "expost": self.expost,
            "temporal": self.temporal,
        }
        return doc


def proposal_alignment(
    outcome: ProposalOutcome,
    votes: Sequence[VoteRecord],
    decision: PolicyDecision,
    proposal: Proposal | None = None,
) -> ProposalAlignment:
    """Score one decision against one tallied proposal.

    ``votes`` must be the deduplicated ballots the outcome was computed
    from (one per voter). When the policy selects the final option the
    token alignment equals the majority share exactly, both being the
    same per-option mass divided by the same total.
    """
    if outcome.proposal_id != decision.proposal_id:
        raise InvalidArgument(
            f"outcome {outcome.proposal_id} vs decision {decision.proposal_id}"
        )
    if outcome.total_vp <= 0.0:
        raise DegenerateTally(f"{outcome.proposal_id}: zero total voting power")
    if len(votes) != outcome.n_voters:
        raise InvalidArgument(
            f"{outcome.proposal_id}: expected one deduplicated ballot per voter"
        )
    n = len(outcome.per_option_vp)
    if not 1 <= decision.selected_option <= n:
        raise InvalidArgument(
            f"{outcome.proposal_id}: selected option {decision.selected_option} "
            f"outside 1..{n}"
        )
    counts = _headcounts(votes, n)
    final = outcome.final_option
    ai = decision.selected_option
    majority_share = outcome.per_option_vp[final - 1] / outcome.total_vp
    token_alignment = outcome.per_option_vp[ai - 1] / outcome.total_vp
    headcount_alignment = counts[ai - 1] / outcome.n_voters
    return ProposalAlignment(
        proposal_id=outcome.proposal_id,
        majority_share=majority_share,
        token_alignment=token_alignment,
        headcount_alignment=headcount_alignment,
        ai_equals_final=ai == final,
        kind=proposal.kind if proposal is not None else None,
        calls_for_change=proposal.calls_for_change if proposal is not None else None,
        tie=outcome.tie,
        n_voters=outcome.n_voters,
    )


def _headcounts(votes: Sequence[VoteRecord], n: int) -> tuple[float, ...]:
    parts: list[list[float]] = [[] for _ in range(n)]
    for vote in votes:
        alloc = normalize_choice(vote.choice, n).allocation
        for j in range(n):
            if alloc[j]:
                parts[j].append(alloc[j])
    return tuple(math.fsum(p) for p in parts)


def voter_benchmarks(
    proposals: Mapping[str, Proposal],
    votes_by_proposal: Mapping[str, Sequence[VoteRecord]],
    outcomes: Mapping[str, ProposalOutcome],
) -> list[VoterBenchmark]:
    """Per-voter agreement with realized winners over tallied proposals.

    Every voter is listed regardless of participation; callers filter by
    ``n_proposals`` when taking medians. A voter whose total power is
    zero gets zero token agreement.
    """
    token_num: dict[str, list[float]] = {}
    token_den: dict[str, list[float]] = {}
    head_parts: dict[str, list[float]] = {}
    for pid, outcome in outcomes.items():
        final = outcome.final_option
        n = len(outcome.per_option_vp)
        for vote in votes_by_proposal.get(pid, ()):
            alloc = normalize_choice(vote.choice, n).allocation
            token_num.setdefault(vote.voter, []).append(vote.vp * alloc[final - 1])
            token_den.setdefault(vote.voter, []).append(vote.vp)
            head_parts.setdefault(vote.voter, []).append(alloc[final - 1])
    out = []
    for voter in sorted(token_den):
        den = math.fsum(token_den[voter])
        num = math.fsum(token_num[voter])
        k = len(head_parts[voter])
        out.append(
            VoterBenchmark(
                voter=voter,
                n_proposals=k,
                token_agreement=num / den if den > 0 else 0.0,
                headcount_agreement=math.fsum(head_parts[voter]) / k,
            )
        )
    return out


def _describe(values: np.ndarray) -> dict:
    return {
        "mean": float(np.mean(values)),
        "median": float(np.median(values)),
        "std": float(np.std(values)),
        "q25": float(np.quantile(values, 0.25)),
        "q75": float(np.quantile(values, 0.75)),
        "max": float(np.max(values)),
    }


def aggregate_alignment(
    per_proposal: Sequence[ProposalAlignment],
    per_voter: Sequence[VoterBenchmark],
    *,
    min_participation: int = 5,
) -> tuple[dict, dict]:
    """Aggregate table plus the global means/medians/comparisons."""
    if not per_proposal:
        raise EmptyEvaluation("no proposals to aggregate")
    token = np.array([a.token_alignment for a in per_proposal])
    head = np.array([a.headcount_alignment for a in per_proposal])
    share = np.array([a.majority_share for a in per_proposal])
    voters = np.array([a.n_voters for a in per_proposal], dtype=float)
    aggregate = {
        "token_alignment": _describe(token),
        "headcount_alignment": _describe(head),
        "majority_share": _describe(share),
        "n_voters": _describe(voters),
    }
    filtered_token = [
        b.token_agreement for b in per_voter if b.n_proposals >= min_participation
    ]
    filtered_head = [
        b.headcount_agreement for b in per_voter if b.n_proposals >= min_participation
    ]
    token_median = float(np.median(filtered_token)) if filtered_token else None
    head_median = float(np.median(filtered_head)) if filtered_head else None
    token_mean = float(np.mean(token))
    head_mean = float(np.mean(head))
    global_stats = {
        "p_ai_equals_final": float(
            np.mean([1.0 if a.ai_equals_final else 0.0 for a in per_proposal])
        ),
        "token_alignment_mean": token_mean,
        "headcount_alignment_mean": head_mean,
        "majority_share_mean": float(np.mean(share)),
        "voter_token_agreement_median": token_median,
        "voter_headcount_agreement_median": head_median,
        "ai_beats_median_token_voter": (
            token_mean > token_median if token_median is not None else None
        ),
        "ai_beats_median_headcount_voter": (
            head_mean > head_median if head_median is not None else None
        ),
        "min_participation": min_participation,
        "voters_total": len(per_voter),
        "voters_filtered": len(filtered_token),
    }
    return aggregate, global_stats


def _bucket_key(alignment: ProposalAlignment) -> str:
    if alignment.kind is None or alignment.calls_for_change is None:
        return "unlabeled"
    prefix = "binary" if alignment.kind == "binary" else "multi"
    suffix = "change" if alignment.calls_for_change else "no_change"
    return f"{prefix}_{suffix}"


def bucket_agreement(
    per_proposal: Sequence[ProposalAlignment],
    ballot_winner_allocs: Mapping[str, Sequence[float]],
) -> dict:
    """Human vs policy agreement with the final decision per bucket.

    ``ballot_winner_allocs`` maps each proposal to its ballots' allocation
    mass on the final option; the human column averages those ballots
    within the bucket, the policy column is its rate of matching the
    final option, and the difference is in percentage points.
    """
    rows = {}
    for key in BUCKET_KEYS + ("unlabeled",):
        members = [a for a in per_proposal if _bucket_key(a) == key]
        if not members and key == "unlabeled":
            continue
        ballots: list[float] = []
        for a in members:
            ballots.extend(ballot_winner_allocs.get(a.proposal_id, ()))
        humans = float(np.mean(ballots)) if ballots else None
        ai = (
            float(np.mean([1.0 if a.ai_equals_final else 0.0 for a in members]))
            if members
            else None
        )
        rows[key] = {
            "n": len(members),
            "humans": humans,
            "ai": ai,
            "difference_pp": (
                (ai - humans) * 100.0 if ai is not None and humans is not None else None
            ),
        }
    return {"rows": rows}


def expost_validity(
    per_proposal: Sequence[ProposalAlignment],
    market_windows: Mapping[str, MarketWindow],
) -> dict:
    """Conditional probability of positive market responses per bucket.

    The policy column conditions on proposals whose adopted outcome
    matched the policy's endorsement; the final column is the
    human-adopted baseline over every proposal with the metric present.
    Positive means strictly greater than zero.
    """
    rows = {}
    buckets = {key: [] for key in BUCKET_KEYS + ("unlabeled", "all")}
    for a in per_proposal:
        buckets[_bucket_key(a)].append(a)
        buckets["all"].append(a)
    for key, members in buckets.items():
        if not members and key in ("unlabeled",):
            continue
        row = {"n": len(members)}
        for metric, getter in (
            ("price", lambda w: w.price_pct_change),
            ("tvl", lambda w: w.tvl_abnormal),
        ):
            with_metric = [
                (a, getter(market_windows[a.proposal_id]))
                for a in members
                if a.proposal_id in market_windows
                and getter(market_windows[a.proposal_id]) is not None
            ]
            endorsed = [(a, v) for a, v in with_metric if a.ai_equals_final]
            row[metric] = {
                "p_ai": (
                    sum(1 for _, v in endorsed if v > 0) / len(endorsed)
                    if endorsed
                    else None
                ),
                "n_ai": len(endorsed),
                "p_final": (
                    sum(1 for _, v in with_metric if v > 0) / len(with_metric)
                    if with_metric
                    else None
                ),
                "n_final": len(with_metric),
            }
        rows[key] = row
    return {"rows": rows}


def contested_subset(
    per_proposal: Sequence[ProposalAlignment], threshold: float = 0.60
) -> dict:
    """Restrict to weak-consensus proposals (majority share at or below).

    Lowering the threshold never grows the subset.
    """
    members = [a for a in per_proposal if a.majority_share <= threshold]
    result = {"threshold": threshold, "n": len(members)}
    if members:
        result.update(
            {
                "p_ai_equals_final": float(
                    np.mean([1.0 if a.ai_equals_final else 0.0 for a in members])
                ),
                "token_alignment_mean": float(
                    np.mean([a.token_alignment for a in members])
                ),
                "headcount_alignment_mean": float(
                    np.mean([a.headcount_alignment for a in members])
                ),
                "majority_share_mean": float(
                    np.mean([a.majority_share for a in members])
                ),
            }
        )
    else:
        result.update(
            {
                "p_ai_equals_final": None,
                "token_alignment_mean": None,
                "headcount_alignment_mean": None,
                "majority_share_mean": None,
            }
        )
    by_kind = {}
    for kind in ("binary", "multi"):
        sub = [a for a in members if a.kind == kind]
        by_kind[kind] = {
            "n": len(sub),
            "p_ai_equals_final": (
                float(np.mean([1.0 if a.ai_equals_final else 0.0 for a in sub]))
                if sub
                else None
            ),
        }
    result["by_kind"] = by_kind
    return result


def _cutoff_row(alignments: Sequence[ProposalAlignment]) -> dict:
    return {
        "p_ai_equals_final": float(
            np.mean([1.0 if a.ai_equals_final else 0.0 for a in alignments])
        ),
        "token_alignment_mean": float(np.mean([a.token_alignment for a in alignments])),
        "headcount_alignment_mean": float(
            np.mean([a.headcount_alignment for a in alignments])
        ),
        "majority_share_mean": float(np.mean([a.majority_share for a in alignments])),
    }


def temporal_comparison(
    ex_ante_alignments: Sequence[ProposalAlignment],
    ex_post_alignments: Sequence[ProposalAlignment],
    ex_ante_selected: Mapping[str, int],
    ex_post_selected: Mapping[str, int],
) -> dict:
    """Side-by-side cutoff metrics plus the decision divergence fraction."""
    ante_ids = {a.proposal_id for a in ex_ante_alignments}
    post_ids = {a.proposal_id for a in ex_post_alignments}
    if ante_ids != post_ids:
        missing = sorted(ante_ids ^ post_ids)
        raise CoverageError(
            f"cutoff decision sets cover different proposals: {missing[:10]}",
            missing_ids=missing,
        )
    if not ante_ids:
        raise EmptyEvaluation("no proposals in temporal comparison")
    differing = sum(
        1 for pid in ante_ids if ex_ante_selected[pid] != ex_post_selected[pid]
    )
    return {
        "n": len(ante_ids),
        "divergence_fraction": differing / len(ante_ids),
        "ex_ante": _cutoff_row(ex_ante_alignments),
        "ex_post": _cutoff_row(ex_post_alignments),
    }


def evaluate_dataset(
    dataset: Dataset,
    decisions: Mapping[str, PolicyDecision],
    *,
    min_participation: int = 5,
    contested_threshold: float = 0.60,
    market_windows: Mapping[str, MarketWindow] | None = None,
    ex_ante_decisions: Mapping[str, PolicyDecision] | None = None,
    exclude_ties: bool = False,
    workers: int = 1,
    counters: MutableMapping[str, int] | None = None,
) -> AlignmentReport:
    """Score a decision set over a dataset into one report.

    Proposals without ballots or with zero total power are excluded and
    counted; decisions must cover every remaining proposal or a
    :class:`CoverageError` lists the gaps. Results are identical for any
    worker count since per-proposal work is pure and reassembled in
    proposal-id order.
    """
    ballots_by_pid: dict[str, list[VoteRecord]] = {}
    outcomes: dict[str, ProposalOutcome] = {}
    skipped_empty = 0
    skipped_degenerate = 0
    for pid in sorted(dataset.proposals):
        ballots = dedupe_latest(dataset.votes.get(pid, ()), counters)
        try:
            outcome = tally_outcome(dataset.proposals[pid], ballots)
        except EmptyTally:
            skipped_empty += 1
            continue
        if outcome.total_vp <= 0.0:
            skipped_degenerate += 1
            continue
        ballots_by_pid[pid] = ballots
        outcomes[pid] = outcome

    if not outcomes:
        raise EmptyEvaluation("dataset has no tallyable proposals")
    missing = sorted(set(outcomes) - set(decisions))
    if missing:
        raise CoverageError(
            f"decisions missing for {len(missing)} proposals", missing_ids=missing
        )

    def _score(pid: str, decision_set: Mapping[str, PolicyDecision]) -> ProposalAlignment:
        return proposal_alignment(
            outcomes[pid],
            ballots_by_pid[pid],
            decision_set[pid],
            dataset.proposals[pid],
        )

    pids = sorted(outcomes)
    per_proposal = _parallel_map(lambda pid: _score(pid, decisions), pids, workers)

    ties = sum(1 for a in per_proposal if a.tie)
    if exclude_ties:
        per_proposal = [a for a in per_proposal if not a.tie]
        if not per_proposal:
            raise EmptyEvaluation("all proposals were ties")

    ballot_winner_allocs = {
        pid: [
            normalize_choice(v.choice, len(outcomes[pid].per_option_vp)).allocation[
                outcomes[pid].final_option - 1
            ]
            for v in ballots_by_pid[pid]
        ]
        for pid in (a.proposal_id for a in per_proposal)
    }
    per_voter = voter_benchmarks(dataset.proposals, ballots_by_pid, outcomes)
    aggregate, global_stats = aggregate_alignment(
        per_proposal, per_voter, min_participation=min_participation
    )
    buckets = bucket_agreement(per_proposal, ballot_winner_allocs)
    contested = contested_subset(per_proposal, contested_threshold)
    expost = (
        expost_validity(per_proposal, market_windows)
        if market_windows is not None
        else None
    )

    temporal = None
    if ex_ante_decisions is not None:
        missing_ante = sorted(set(outcomes) - set(ex_ante_decisions))
        if missing_ante:
            raise CoverageError(
                f"ex-ante decisions missing for {len(missing_ante)} proposals",
                missing_ids=missing_ante,
            )
        ante_alignments = _parallel_map(
            lambda pid: _score(pid, ex_ante_decisions), pids, workers
        )
        if exclude_ties:
            ante_alignments = [a for a in ante_alignments if not a.tie]
        post_for_temporal = per_proposal
        temporal = temporal_comparison(
            ante_alignments,
            post_for_temporal,
            {pid: ex_ante_decisions[pid].selected_option for pid in outcomes},
            {pid: decisions[pid].selected_option for pid in outcomes},
        )

    policy_ids = sorted({d.policy_id for d in decisions.values()})
    cutoffs = sorted({d.cutoff_kind for d in decisions.values()})
    report = AlignmentReport(
        policy={"policy_id": policy_ids, "cutoff": cutoffs},
        counts={
            "proposals_evaluated": len(per_proposal),
            "proposals_without_ballots": skipped_empty,
            "proposals_degenerate_tally": skipped_degenerate,
            "ties": ties,
            "ties_excluded": exclude_ties,
        },
        aggregate=aggregate,
        global_stats=global_stats,
        buckets=buckets,
        contested=contested,
        expost=expost,
        temporal=temporal,
        per_proposal=tuple(per_proposal),
        per_voter=tuple(per_voter),
    )
    return report


def _parallel_map(fn, items, workers: int) -> list:
    if workers <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
