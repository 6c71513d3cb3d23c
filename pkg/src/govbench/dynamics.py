"""Temporal participation features for one proposal's vote stream.

The stream is replayed once in event order; after every ballot the
cumulative per-option voting power decides who currently leads. Quartiles
split the official voting window into four equal sub-intervals, half-open
except the last, and quartile membership is computed with integer
arithmetic so a constant shift of all timestamps never moves an event
across a boundary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import MutableMapping, Sequence

from .core import ChoiceWeights, Proposal, VoteRecord, normalize_choice
from .errors import DegenerateSeries


@dataclass(frozen=True)
class VoteEvent:
    timestamp: int
    voter: str
    weights: ChoiceWeights
    vp: float


@dataclass(frozen=True)
class SeriesMeta:
    unique_voters: int
    total_votes: int
    first_ts: int | None
    last_ts: int | None
    per_quartile_vp_sums: tuple[float, float, float, float]


@dataclass(frozen=True)
class ParticipationSeries:
    proposal_id: str
    n_options: int
    events: tuple[VoteEvent, ...]
    window: tuple[int, int]
    meta: SeriesMeta

    def quartile_of(self, timestamp: int) -> int:
        """0-based quartile index; the final sub-interval is closed."""
        start, end = self.window
        return min(3, (4 * (timestamp - start)) // (end - start))

    def in_late_half(self, timestamp: int) -> bool:
        start, end = self.window
        return 2 * (timestamp - start) >= (end - start)


@dataclass(frozen=True)
class DynamicsFeatures:
    """Feature bundle; vectors are indexed by option position (0-based)."""

    lead_ratio_by_quartile: tuple[tuple[float, ...], ...]  # 4 x n_options
    lead_ratio_total: tuple[float, ...]
    early_ratio: tuple[float, ...]
    spike_index: float
    spike_overflow: bool
    spike_follow_support_ratio: float
    spike_empty_tail: bool
    stairwise_ratio: float
    half_slope_diff: float
    winner: int  # 1-based option the spike/stair metrics refer to; 0 if degenerate
    degenerate: bool


def build_participation_series(
    proposal: Proposal,
    votes: Sequence[VoteRecord],
    counters: MutableMapping[str, int] | None = None,
) -> ParticipationSeries:
    """Sort ballots into a replayable event stream.

    Ballots outside the voting window are rejected with the
    ``votes_outside_window`` warning counter, mirroring ingest behaviour.
    Events with equal timestamps are ordered by voter address.
    """
    start, end = proposal.start, proposal.end
    n = proposal.n_options
    kept = []
    for vote in votes:
        if not start <= vote.timestamp <= end:
            if counters is not None:
                counters["votes_outside_window"] = (
                    counters.get("votes_outside_window", 0) + 1
                )
            continue
        kept.append(vote)
    kept.sort(key=lambda v: (v.timestamp, v.voter))
    events = tuple(
        VoteEvent(v.timestamp, v.voter, normalize_choice(v.choice, n), v.vp)
        for v in kept
    )
    span = end - start
    quartile_vp = [[], [], [], []]
    for e in events:
        q = min(3, (4 * (e.timestamp - start)) // span)
        quartile_vp[q].append(e.vp)
    meta = SeriesMeta(
        unique_voters=len({e.voter for e in events}),
        total_votes=len(events),
        first_ts=events[0].timestamp if events else None,
        last_ts=events[-1].timestamp if events else None,
        per_quartile_vp_sums=tuple(math.fsum(q) for q in quartile_vp),
    )
    return ParticipationSeries(
        proposal_id=proposal.proposal_id,
        n_options=n,
        events=events,
        window=(start, end),
        meta=meta,
    )


def lead_metrics(series: ParticipationSeries) -> dict:
    """Leadership counts sampled after each vote event.

    An option scores a lead hit for an event when its cumulative voting
    power strictly exceeds every other option's; exact ties award nothing.
    """
    n = series.n_options
    hits = [[0] * n for _ in range(4)]
    votes_q = [0, 0, 0, 0]
    cum = [0.0] * n
    for e in series.events:
        alloc = e.weights.allocation
        for j in range(n):
            if alloc[j]:
                cum[j] += e.vp * alloc[j]
        q = series.quartile_of(e.timestamp)
        votes_q[q] += 1
        leader = _strict_leader(cum)
        if leader is not None:
            hits[q][leader] += 1

    by_quartile = tuple(
        tuple(hits[q][j] / max(1, votes_q[q]) for j in range(n)) for q in range(4)
    )
    totals = [sum(hits[q][j] for q in range(4)) for j in range(n)]
    grand = sum(totals)
    lead_total = tuple(
        (t / grand) if grand else 0.0 for t in totals
    )
    q1_total = sum(hits[0])
    early = tuple(hits[0][j] / max(1, q1_total) for j in range(n))
    return {
        "lead_ratio_by_quartile": by_quartile,
        "lead_ratio_total": lead_total,
        "early_ratio": early,
    }


def _strict_leader(cum: Sequence[float]) -> int | None:
    best = max(cum)
    leaders = [j for j, v in enumerate(cum) if v == best]
    return leaders[0] if len(leaders) == 1 else None


def spike_metrics(series: ParticipationSeries, winner: int) -> dict:
    """Largest single-event surge relative to the winner's final mass.

    The step maximum ranges over every event of every option; the spike
    event itself is excluded from the follow-support window. ``winner``
    is 1-based.
    """
    if not series.events:
        raise DegenerateSeries(f"{series.proposal_id}: no events")
    w = winner - 1
    winner_total = 0.0
    for e in series.events:
        winner_total += e.vp * e.weights.allocation[w]
    if winner_total <= 0.0:
        raise DegenerateSeries(
            f"{series.proposal_id}: winner option {winner} has no voting power"
        )
    spike_at = 0
    spike_step = series.events[0].vp
    for i, e in enumerate(series.events[1:], start=1):
        if e.vp > spike_step:
            spike_step = e.vp
            spike_at = i
    overflow = spike_step > winner_total
    spike_index = min(1.0, spike_step / winner_total)

    tail = series.events[spike_at + 1:]
    if not tail:
        return {
            "spike_index": spike_index,
            "spike_overflow": overflow,
            "spike_follow_support_ratio": 0.0,
            "spike_empty_tail": True,
        }
    winner_after = 0.0
    total_after = 0.0
    for e in tail:
        winner_after += e.vp * e.weights.allocation[w]
        total_after += e.vp
    ratio = winner_after / total_after if total_after > 0.0 else 0.0
    return {
        "spike_index": spike_index,
        "spike_overflow": overflow,
        "spike_follow_support_ratio": ratio,
        "spike_empty_tail": False,
    }


def stairwise_ratio(series: ParticipationSeries, winner: int) -> float:
    """One minus the winner-mass share held by the top decile of events.

    Contributions are the winner-allocated portions of each event; the
    top decile keeps the ``ceil(k / 10)`` largest of ``k`` contributions.
    Near 1 the winner's support accumulated in many small steps, near 0 a
    handful of events carried it.
    """
    w = winner - 1
    contributions = sorted(
        (e.vp * e.weights.allocation[w] for e in series.events
         if e.vp * e.weights.allocation[w] > 0.0),
        reverse=True,
    )
    k = len(contributions)
    if k == 0:
        raise DegenerateSeries(
            f"{series.proposal_id}: option {winner} has no supporting events"
        )
    top_n = (k + 9) // 10
    top_mass = math.fsum(contributions[:top_n])
    total = math.fsum(contributions)
    return 1.0 - top_mass / total


def half_slope_diff(series: ParticipationSeries) -> float:
    """Mean per-event power in the late window half minus the early half.

    The split point is the window midpoint; an empty half contributes 0.
    """
    early, late = [], []
    for e in series.events:
        (late if series.in_late_half(e.timestamp) else early).append(e.vp)
    early_mean = math.fsum(early) / len(early) if early else 0.0
    late_mean = math.fsum(late) / len(late) if late else 0.0
    return late_mean - early_mean


def current_leader(series: ParticipationSeries) -> int | None:
    """1-based option leading the cumulative tally; lowest index on ties.

    Returns None for an empty series.
    """
    if not series.events:
        return None
    n = series.n_options
    cum = [0.0] * n
    for e in series.events:
        alloc = e.weights.allocation
        for j in range(n):
            if alloc[j]:
                cum[j] += e.vp * alloc[j]
    return cum.index(max(cum)) + 1


def features_bundle(
    series: ParticipationSeries, winner: int | None = None
) -> DynamicsFeatures:
    """All features for one series, degenerate-safe.

    ``winner`` defaults to the option currently leading the cumulative
    tally. Empty series or a zero-power winner yield zeroed spike/stair
    metrics with the ``degenerate`` flag instead of raising.
    """
    n = series.n_options
    leads = lead_metrics(series)
    slope = half_slope_diff(series)
    if winner is None:
        winner = current_leader(series)
    degenerate = winner is None
    spike = {
        "spike_index": 0.0,
        "spike_overflow": False,
        "spike_follow_support_ratio": 0.0,
        "spike_empty_tail": False,
    }
    stair = 0.0
    if winner is not None:
        try:
            spike = spike_metrics(series, winner)
            stair = stairwise_ratio(series, winner)
        except DegenerateSeries:
            degenerate = True
    return DynamicsFeatures(
        lead_ratio_by_quartile=leads["lead_ratio_by_quartile"],
        lead_ratio_total=leads["lead_ratio_total"],
        early_ratio=leads["early_ratio"],
        spike_index=spike["spike_index"],
        spike_overflow=spike["spike_overflow"],
        spike_follow_support_ratio=spike["spike_follow_support_ratio"],
        spike_empty_tail=spike["spike_empty_tail"],
        stairwise_ratio=stair,
        half_slope_diff=slope,
        winner=winner if winner is not None else 0,
        degenerate=degenerate,
    )


# CSV export: one row per proposal. Vector cells join entries with "|",
# the quartile matrix joins rows with ";" on top of that.
CSV_COLUMNS = (
    "proposal_id",
    "n_options",
    "unique_voters",
    "total_votes",
    "first_ts",
    "last_ts",
    "per_quartile_vp_sums",
    "winner",
    "spike_index",
    "spike_overflow",
    "spike_follow_support_ratio",
    "spike_empty_tail",
    "stairwise_ratio",
    "half_slope_diff",
    "lead_ratio_total",
    "early_ratio",
    "lead_ratio_by_quartile",
)


def features_csv_header() -> str:
    return ",".join(CSV_COLUMNS)


def features_csv_row(series: ParticipationSeries, features: DynamicsFeatures) -> str:
    def vec(values) -> str:
        return "|".join(repr(float(v)) for v in values)

    meta = series.meta
    cells = [
        series.proposal_id,
        str(series.n_options),
        str(meta.unique_voters),
        str(meta.total_votes),
        "" if meta.first_ts is None else str(meta.first_ts),
        "" if meta.last_ts is None else str(meta.last_ts),
        vec(meta.per_quartile_vp_sums),
        str(features.winner),
        repr(features.spike_index),
        str(int(features.spike_overflow)),
        repr(features.spike_follow_support_ratio),
        str(int(features.spike_empty_tail)),
        repr(features.stairwise_ratio),
        repr(features.half_slope_diff),
        vec(features.lead_ratio_total),
        vec(features.early_ratio),
        ";".join(vec(row) for row in features.lead_ratio_by_quartile),
    ]
    return ",".join(cells)
