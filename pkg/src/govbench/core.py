"""Canonical governance records and deterministic tally logic.

Option indices are 1-based everywhere they appear as scalars (ballot
choices, final outcomes, policy selections), matching the Snapshot wire
convention. Dense vectors over options (allocations, per-option tallies)
use position ``j`` for option ``j + 1``.

All types are immutable after construction and all operations are pure,
so they are safe to share across concurrent workers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

from .errors import EmptyTally, InvalidArgument, InvalidChoice

ChoiceExpr = Union[int, Sequence[int], Mapping[int, float]]

DEFAULT_ABSTAIN_LABELS = ("abstain",)

ALLOCATION_SUM_TOL = 1e-9
WEIGHT_CONSERVATION_RTOL = 1e-6


@dataclass(frozen=True)
class ChoiceWeights:
    """Per-option mass allocation of one ballot; entries sum to 1."""

    allocation: tuple[float, ...]

    def __post_init__(self):
        if not self.allocation:
            raise InvalidChoice("allocation must be non-empty")
        if any(a < 0.0 or a > 1.0 for a in self.allocation):
            raise InvalidChoice("allocation entries must lie in [0, 1]")
        total = math.fsum(self.allocation)
        if abs(total - 1.0) > ALLOCATION_SUM_TOL:
            raise InvalidChoice(f"allocation sums to {total!r}, expected 1")


@dataclass(frozen=True)
class Proposal:
    """Metadata and voting window for one governance vote."""

    proposal_id: str
    space_id: str
    title: str
    choices: tuple[str, ...]
    created_at: int
    start: int
    end: int
    body: str | None = None
    calls_for_change: bool | None = None
    category: str | None = None
    kind: str = field(init=False, default="")
    abstain_labels: tuple[str, ...] = DEFAULT_ABSTAIN_LABELS

    def __post_init__(self):
        if len(self.choices) < 2:
            raise InvalidArgument(
                f"proposal {self.proposal_id}: needs at least 2 choices"
            )
        trimmed = [c.strip() for c in self.choices]
        if len(set(trimmed)) != len(trimmed):
            raise InvalidArgument(
                f"proposal {self.proposal_id}: duplicate choice labels"
            )
        if not self.start < self.end:
            raise InvalidArgument(
                f"proposal {self.proposal_id}: start must precede end"
            )
        if self.created_at > self.start:
            raise InvalidArgument(
                f"proposal {self.proposal_id}: created after voting start"
            )
        object.__setattr__(
            self, "kind", classify_proposal_kind(self.choices, self.abstain_labels)
        )

    @property
    def n_options(self) -> int:
        return len(self.choices)


@dataclass(frozen=True)
class VoteRecord:
    """One ballot: voter address, raw choice expression, power, timestamp.

    ``choice`` is kept in its source form (single 1-based index, approval
    list, or weighted map); use :func:`normalize_choice` to obtain the
    dense allocation.
    """

    proposal_id: str
    voter: str
    choice: ChoiceExpr
    vp: float
    timestamp: int

    def __post_init__(self):
        if self.vp < 0:
            raise InvalidArgument(f"vote by {self.voter}: negative voting power")


@dataclass(frozen=True)
class ProposalOutcome:
    """Final tally of one proposal."""

    proposal_id: str
    per_option_vp: tuple[float, ...]
    total_vp: float
    n_voters: int
    final_option: int  # 1-based
    tie: bool

    def __post_init__(self):
        allocated = math.fsum(self.per_option_vp)
        tol = WEIGHT_CONSERVATION_RTOL * max(1.0, abs(self.total_vp))
        if abs(allocated - self.total_vp) > tol:
            raise InvalidArgument(
                f"outcome {self.proposal_id}: per-option mass {allocated!r} "
                f"does not conserve total {self.total_vp!r}"
            )
        if not 1 <= self.final_option <= len(self.per_option_vp):
            raise InvalidArgument(
                f"outcome {self.proposal_id}: final option out of range"
            )
        best = max(self.per_option_vp)
        if self.per_option_vp[self.final_option - 1] != best:
            raise InvalidArgument(
                f"outcome {self.proposal_id}: final option does not attain max"
            )


@dataclass(frozen=True)
class ForumSignal:
    """Pre-scored discussion context for one proposal."""

    proposal_id: str
    url: str
    stance_score: float
    sentiment: float
    comment_counts: tuple[int, int, int] | None = None  # positive, negative, neutral
    comment_timestamps: tuple[int, ...] | None = None

    def __post_init__(self):
        if not -1.0 <= self.stance_score <= 1.0:
            raise InvalidArgument("stance_score outside [-1, 1]")
        if not -1.0 <= self.sentiment <= 1.0:
            raise InvalidArgument("sentiment outside [-1, 1]")
        if self.comment_counts is not None:
            if any(c < 0 for c in self.comment_counts):
                raise InvalidArgument("comment counts must be nonnegative")
            if self.comment_timestamps is not None and sum(
                self.comment_counts
            ) != len(self.comment_timestamps):
                raise InvalidArgument(
                    "comment counts inconsistent with timestamp list"
                )


@dataclass(frozen=True)
class EvaluationSet:
    """The proposal universe P and each voter's participation index P_i."""

    proposals: frozenset[str]
    per_voter_index: Mapping[str, frozenset[str]]

    def __post_init__(self):
        for voter, pids in self.per_voter_index.items():
            if not pids:
                raise InvalidArgument(f"voter {voter}: empty participation set")
            if not pids <= self.proposals:
                raise InvalidArgument(
                    f"voter {voter}: participation outside the evaluation set"
                )


def classify_proposal_kind(
    choices: Sequence[str],
    abstain_labels: Sequence[str] = DEFAULT_ABSTAIN_LABELS,
) -> str:
    """Return ``"binary"`` or ``"multi"`` for a choice list.

    Binary means exactly two options remain after dropping labels that
    case-insensitively match the abstain list; everything else is multi.
    """
    abstain = {a.strip().lower() for a in abstain_labels}
    effective = [c for c in choices if c.strip().lower() not in abstain]
    return "binary" if len(effective) == 2 else "multi"


def normalize_choice(choice: ChoiceExpr, n_options: int) -> ChoiceWeights:
    """Resolve any supported ballot expression into a dense allocation.

    Single index puts unit mass on that option, an approval list splits
    mass uniformly over its distinct members, and a weighted map is
    normalized by its own sum.
    """
    if n_options < 1:
        raise InvalidArgument("n_options must be positive")

    if isinstance(choice, bool):
        raise InvalidChoice(f"unsupported choice expression: {choice!r}")

    if isinstance(choice, int):
        _check_index(choice, n_options)
        alloc = [0.0] * n_options
        alloc[choice - 1] = 1.0
        return ChoiceWeights(tuple(alloc))

    if isinstance(choice, Mapping):
        if not choice:
            raise InvalidChoice("weighted ballot has no entries")
        total = 0.0
        for idx, weight in choice.items():
            _check_index(idx, n_options)
            if weight < 0:
                raise InvalidChoice(f"negative weight on option {idx}")
            total += float(weight)
        if total <= 0.0:
            raise InvalidChoice("weighted ballot has no positive weight")
        alloc = [0.0] * n_options
        for idx, weight in choice.items():
            alloc[idx - 1] += float(weight) / total
        return ChoiceWeights(tuple(alloc))

    if isinstance(choice, Sequence) and not isinstance(choice, (str, bytes)):
        members = sorted({int(i) for i in choice})
        if not members:
            raise InvalidChoice("approval ballot selects no options")
        for idx in members:
            _check_index(idx, n_options)
        share = 1.0 / len(members)
        alloc = [0.0] * n_options
        for idx in members:
            alloc[idx - 1] = share
        return ChoiceWeights(tuple(alloc))

    raise InvalidChoice(f"unsupported choice expression: {choice!r}")


def _check_index(idx: int, n_options: int) -> None:
    if not isinstance(idx, int) or isinstance(idx, bool):
        raise InvalidChoice(f"option index {idx!r} is not an integer")
    if not 1 <= idx <= n_options:
        raise InvalidChoice(f"option index {idx} outside 1..{n_options}")


def dedupe_latest(
    votes: Sequence[VoteRecord], counters=None
) -> list[VoteRecord]:
    """Keep each voter's latest ballot, dropping superseded ones.

    Ballots with equal timestamps resolve to the last one in input order.
    """
    latest: dict[str, VoteRecord] = {}
    dropped = 0
    for vote in sorted(votes, key=lambda v: v.timestamp):
        if vote.voter in latest:
            dropped += 1
        latest[vote.voter] = vote
    if counters is not None and dropped:
        counters["duplicate_ballots_dropped"] = (
            counters.get("duplicate_ballots_dropped", 0) + dropped
        )
    return sorted(latest.values(), key=lambda v: (v.timestamp, v.voter))


def tally_outcome(proposal: Proposal, votes: Sequence[VoteRecord]) -> ProposalOutcome:
    """Sum allocated voting power per option and pick the winner.

    Ties break to the lowest option index with the ``tie`` flag set.
    Raises :class:`EmptyTally` on an empty vote list; callers must handle
    proposals without ballots explicitly.
    """
    if not votes:
        raise EmptyTally(f"proposal {proposal.proposal_id}: no ballots")
    n = proposal.n_options
    # fsum is exactly rounded, which makes the tally permutation-invariant.
    contributions: list[list[float]] = [[] for _ in range(n)]
    powers: list[float] = []
    voters = set()
    for vote in votes:
        if vote.proposal_id != proposal.proposal_id:
            raise InvalidArgument(
                f"vote by {vote.voter} belongs to {vote.proposal_id}, "
                f"not {proposal.proposal_id}"
            )
        alloc = normalize_choice(vote.choice, n).allocation
        for j in range(n):
            if alloc[j]:
                contributions[j].append(vote.vp * alloc[j])
        powers.append(vote.vp)
        voters.add(vote.voter)
    per_option = [math.fsum(c) for c in contributions]
    total = math.fsum(powers)
    best = max(per_option)
    final = per_option.index(best) + 1
    tie = sum(1 for mass in per_option if mass == best) > 1
    return ProposalOutcome(
        proposal_id=proposal.proposal_id,
        per_option_vp=tuple(per_option),
        total_vp=total,
        n_voters=len(voters),
        final_option=final,
        tie=tie,
    )
