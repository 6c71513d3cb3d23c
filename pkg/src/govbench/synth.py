"""Seeded synthetic governance datasets for offline testing.

Generation draws every random number from one PCG64 stream seeded with
``ScenarioSpec.seed`` (numpy's documented, portable generator), so a spec
fully determines its dataset byte-for-byte. Alongside the dataset a
ground-truth sidecar records what was engineered into each proposal
(intended winner, contested flag, injected spike event); the sidecar is
for test assertions only and is never read by production code.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .core import Proposal, VoteRecord, normalize_choice
from .errors import SpecError
from .forum import signal_from_comments
from .store import Dataset, MarketSeries, timestamp_to_day

VP_DISTRIBUTIONS = ("uniform", "pareto")
ARRIVAL_PATTERNS = ("uniform", "early_rush", "late_spike", "stairwise")

CONTESTED_TARGET = 0.60

_BASE_TIME = 1_600_000_000  # fixed epoch anchor so fixtures are stable
_WINDOW_SECONDS = 7 * 86400
_PROPOSAL_GAP = 14 * 86400

_CATEGORIES = (
    "Funding Proposals",
    "Risk Management",
    "Treasury Management",
    "Incentive Program",
)

_POSITIVE_COMMENTS = (
    "strong support, this will benefit growth",
    "i agree, good direction for the protocol",
    "approve, the upside is useful",
)
_NEGATIVE_COMMENTS = (
    "oppose this, too risky and costly",
    "i disagree, likely harm and decline",
    "reject, the plan is weak",
)
_NEUTRAL_COMMENTS = (
    "what is the timeline for this",
    "can someone link the previous discussion",
    "neutral on the details so far",
)


@dataclass(frozen=True)
class ScenarioSpec:
    """Parameters of one synthetic scenario; the seed determines output."""

    seed: int
    n_proposals: int
    n_options: tuple[int, int] = (2, 4)
    voter_count: int = 50
    votes_per_proposal: tuple[int, int] = (5, 40)
    vp_distribution: str = "uniform"
    pareto_alpha: float = 1.5
    arrival_pattern: str = "uniform"
    contested_fraction: float = 0.0
    ballot_mix: tuple[float, float, float] = (1.0, 0.0, 0.0)
    space_id: str = "synth.eth"
    with_forum: bool = True
    with_market: bool = True
    index_symbol: str = "MKT100"

    def __post_init__(self):
        if self.n_proposals < 1:
            raise SpecError("n_proposals must be >= 1")
        if self.voter_count < 1:
            raise SpecError("voter_count must be >= 1")
        lo, hi = self.n_options
        if lo < 2 or hi < lo:
            raise SpecError(f"invalid n_options range {self.n_options}")
        vlo, vhi = self.votes_per_proposal
        if vlo < 1 or vhi < vlo:
            raise SpecError(f"invalid votes_per_proposal range {self.votes_per_proposal}")
        if self.vp_distribution not in VP_DISTRIBUTIONS:
            raise SpecError(f"unknown vp_distribution {self.vp_distribution!r}")
        if self.arrival_pattern not in ARRIVAL_PATTERNS:
            raise SpecError(f"unknown arrival_pattern {self.arrival_pattern!r}")
        if self.pareto_alpha <= 0:
            raise SpecError("pareto_alpha must be positive")
        if not 0.0 <= self.contested_fraction <= 1.0:
            raise SpecError("contested_fraction must lie in [0, 1]")
        if any(f < 0 or f > 1 for f in self.ballot_mix) or abs(
            sum(self.ballot_mix) - 1.0
        ) > 1e-9:
            raise SpecError(f"ballot_mix must be fractions summing to 1")
        if self.contested_fraction > 0.0 and (self.voter_count < 2 or vhi < 2):
            raise SpecError("contested proposals need at least two voters")

    @classmethod
    def from_file(cls, path: Path | str) -> "ScenarioSpec":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        for key in ("n_options", "votes_per_proposal", "ballot_mix"):
            if key in raw:
                raw[key] = tuple(raw[key])
        return cls(**raw)

    def to_file(self, path: Path | str) -> None:
        Path(path).write_text(
            json.dumps(asdict(self), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )


def generate_dataset(spec: ScenarioSpec) -> tuple[Dataset, dict]:
    """Build a dataset plus its ground-truth sidecar from a scenario spec."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    voters = [f"0x{i:040x}" for i in range(spec.voter_count)]
    dataset = Dataset()
    sidecar: dict = {"seed": spec.seed, "proposals": {}}

    for i in range(spec.n_proposals):
        created = _BASE_TIME + i * _PROPOSAL_GAP
        start = created + 86400
        end = start + _WINDOW_SECONDS
        n_opt = int(rng.integers(spec.n_options[0], spec.n_options[1] + 1))
        choices = _make_choices(rng, n_opt)
        pid = f"prop-{spec.seed}-{i:04d}"
        proposal = Proposal(
            proposal_id=pid,
            space_id=spec.space_id,
            title=f"Proposal {i}: adjust parameter set {int(rng.integers(1, 99))}",
            body=f"Synthetic governance text for scenario seed {spec.seed}.",
            choices=choices,
            created_at=created,
            start=start,
            end=end,
            calls_for_change=bool(rng.random() < 0.6),
            category=(
                _CATEGORIES[int(rng.integers(0, len(_CATEGORIES)))]
                if rng.random() < 0.8
                else None
            ),
        )
        intended_winner = int(rng.integers(1, n_opt + 1))
        contested = bool(rng.random() < spec.contested_fraction)

        k = int(rng.integers(spec.votes_per_proposal[0], spec.votes_per_proposal[1] + 1))
        k = min(k, spec.voter_count)
        if contested:
            k = max(k, 2)
        chosen = [voters[j] for j in rng.choice(spec.voter_count, size=k, replace=False)]
        timestamps = _draw_timestamps(rng, spec.arrival_pattern, start, end, k)
        vps = _draw_vps(rng, spec, k)

        spike_event = None
        if contested:
            ballots = _contested_ballots(pid, chosen, vps, timestamps, n_opt)
            intended_winner = 1
        else:
            ballots = [
                VoteRecord(
                    proposal_id=pid,
                    voter=chosen[j],
                    choice=_draw_choice(rng, spec.ballot_mix, n_opt, intended_winner),
                    vp=float(vps[j]),
                    timestamp=int(timestamps[j]),
                )
                for j in range(k)
            ]
            if spec.arrival_pattern == "late_spike":
                spike_vp = 3.0 * max(v.vp for v in ballots) + 1.0
                spike_ts = start + int(0.92 * (end - start))
                spike_voter = f"0x{'f' * 30}{i:010x}"
                ballots.append(
                    VoteRecord(
                        proposal_id=pid,
                        voter=spike_voter,
                        choice=intended_winner,
                        vp=spike_vp,
                        timestamp=spike_ts,
                    )
                )
                spike_event = {
                    "voter": spike_voter,
                    "timestamp": spike_ts,
                    "vp": spike_vp,
                }

        dataset.proposals[pid] = proposal
        dataset.votes[pid] = ballots
        sidecar["proposals"][pid] = {
            "intended_winner": intended_winner,
            "contested": contested,
            "pattern": spec.arrival_pattern,
            "spike_event": spike_event,
        }

        if spec.with_forum:
            dataset.forum[pid] = [_make_forum(rng, proposal)]

    if spec.with_market:
        _add_market_series(rng, spec, dataset)
    return dataset, sidecar


def _make_choices(rng: np.random.Generator, n_opt: int) -> tuple[str, ...]:
    if n_opt == 2:
        return ("For", "Against")
    if n_opt == 3 and rng.random() < 0.5:
        # still binary under the abstain rule
        return ("For", "Against", "Abstain")
    return tuple(f"Option {chr(ord('A') + j)}" for j in range(n_opt))


def _draw_timestamps(rng, pattern: str, start: int, end: int, k: int) -> list[int]:
    span = end - start
    if pattern == "stairwise":
        return [start + int((j + 0.5) * span / k) for j in range(k)]
    if pattern == "early_rush":
        fractions = rng.beta(1.2, 4.0, size=k)
    else:  # uniform and the base draw for late_spike
        fractions = rng.random(size=k)
    return [start + min(span - 1, int(f * span)) for f in fractions]


def _draw_vps(rng, spec: ScenarioSpec, k: int) -> list[float]:
    if spec.vp_distribution == "pareto":
        return [float((rng.pareto(spec.pareto_alpha) + 1.0) * 10.0) for _ in range(k)]
    if spec.arrival_pattern == "stairwise":
        return [10.0] * k
    return [float(v) for v in rng.uniform(1.0, 100.0, size=k)]


def _draw_choice(rng, mix, n_opt: int, favored: int):
    r = float(rng.random())
    target = favored if rng.random() < 0.8 else int(rng.integers(1, n_opt + 1))
    if r < mix[0] or n_opt < 2:
        return target
    if r < mix[0] + mix[1]:
        members = {target}
        for opt in range(1, n_opt + 1):
            if opt != target and rng.random() < 0.3:
                members.add(opt)
        return tuple(sorted(members))
    weights = {target: 0.5 + 0.4 * float(rng.random())}
    others = [o for o in range(1, n_opt + 1) if o != target]
    extra = [others[j] for j in rng.choice(len(others), size=min(2, len(others)), replace=False)]
    remaining = 1.0 - weights[target]
    for idx, opt in enumerate(extra):
        weights[opt] = remaining / len(extra)
    return weights


def _contested_ballots(pid, chosen, vps, timestamps, n_opt: int) -> list[VoteRecord]:
    """Engineer ballots whose winning share ends at or below 0.60.

    Voters split into two camps over options 1 and 2 by balanced greedy
    partition of their power; while the leader still holds more than the
    target share, the largest single-choice ballot in the leading camp is
    converted into a 0.52/0.48 split. The personal ballot mix is ignored
    for contested proposals since feasibility depends on splitting whales.
    """
    order = sorted(range(len(chosen)), key=lambda j: -vps[j])
    camp_vp = [0.0, 0.0]
    camp_of: dict[int, int] = {}
    for j in order:
        camp = 0 if camp_vp[0] <= camp_vp[1] else 1
        camp_of[j] = camp
        camp_vp[camp] += vps[j]
    choice_of: dict[int, object] = {j: camp_of[j] + 1 for j in range(len(chosen))}

    def winner_share() -> float:
        masses = [0.0] * n_opt
        for j, choice in choice_of.items():
            alloc = normalize_choice(choice, n_opt).allocation
            for opt in range(n_opt):
                masses[opt] += vps[j] * alloc[opt]
        total = sum(vps)
        return max(masses) / total, masses.index(max(masses)) + 1

    for _ in range(len(chosen) + 1):
        share, leader = winner_share()
        if share <= CONTESTED_TARGET:
            break
        candidates = [
            j for j, choice in choice_of.items() if choice == leader
        ]
        if not candidates:
            break
        heaviest = max(candidates, key=lambda j: vps[j])
        other = 2 if leader == 1 else 1
        choice_of[heaviest] = {leader: 0.52, other: 0.48}
    share, _ = winner_share()
    if share > CONTESTED_TARGET:
        raise SpecError(f"{pid}: could not engineer a contested tally")

    return [
        VoteRecord(
            proposal_id=pid,
            voter=chosen[j],
            choice=choice_of[j],
            vp=float(vps[j]),
            timestamp=int(timestamps[j]),
        )
        for j in range(len(chosen))
    ]


def _make_forum(rng, proposal: Proposal):
    n_comments = int(rng.integers(3, 12))
    p_pos = 0.6 if proposal.calls_for_change else 0.35
    comments = []
    for _ in range(n_comments):
        ts = int(rng.integers(proposal.created_at, proposal.end + 1))
        r = rng.random()
        if r < p_pos:
            text = _POSITIVE_COMMENTS[int(rng.integers(0, len(_POSITIVE_COMMENTS)))]
        elif r < p_pos + 0.25:
            text = _NEGATIVE_COMMENTS[int(rng.integers(0, len(_NEGATIVE_COMMENTS)))]
        else:
            text = _NEUTRAL_COMMENTS[int(rng.integers(0, len(_NEUTRAL_COMMENTS)))]
        comments.append((ts, text))
    return signal_from_comments(
        proposal.proposal_id,
        f"https://forum.example/{proposal.proposal_id}",
        comments,
    )


def _add_market_series(rng, spec: ScenarioSpec, dataset: Dataset) -> None:
    if not dataset.proposals:
        return
    first = min(p.created_at for p in dataset.proposals.values())
    last = max(p.end for p in dataset.proposals.values())
    day_lo = timestamp_to_day(first) - 6
    day_hi = timestamp_to_day(last) + 6
    days = list(range(day_lo, day_hi + 1))

    def walk(start_value: float, vol: float) -> list[float]:
        values = [start_value]
        for _ in days[1:]:
            factor = max(0.5, 1.0 + float(rng.normal(0.0, vol)))
            values.append(values[-1] * factor)
        return values

    plan = [
        (spec.space_id, "price", walk(100.0, 0.02)),
        (spec.space_id, "tvl", walk(1_000_000.0, 0.03)),
        (spec.space_id, "treasury", walk(500_000.0, 0.01)),
        (spec.index_symbol, "index", walk(1000.0, 0.015)),
    ]
    for protocol, metric, values in plan:
        dataset.market[(protocol, metric)] = MarketSeries(
            protocol=protocol,
            metric=metric,
            samples=tuple(zip(days, values)),
        )


def sidecar_to_file(sidecar: dict, path: Path | str) -> None:
    Path(path).write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
