"""Decision policies: temporal contexts, deterministic baselines, LLM adapter.

A :class:`DecisionContext` gathers everything a policy may look at for
one proposal at a temporal cutoff, filtered so that nothing in it
postdates the cutoff (look-ahead freedom). Baselines decide from the
context deterministically; the LLM policy renders the prompt templates,
calls a chat-completion endpoint, and never silently substitutes a
default when the reply cannot be parsed.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .core import ForumSignal, Proposal, VoteRecord, dedupe_latest, tally_outcome
from .dynamics import DynamicsFeatures, build_participation_series, features_bundle
from .errors import (
    EmptyTally,
    InvalidArgument,
    NotFound,
    PolicyFailure,
    PolicyInapplicable,
)
from .ingest import ProtocolIds
from .market import MarketWindow, compute_market_window
from .prompts import render_decision_prompt, render_messages, render_reask_prompt
from .sources import HttpSource
from .store import Dataset, timestamp_to_day

BASELINE_POLICIES = (
    "token_majority",
    "headcount_majority",
    "sentiment_sign",
    "seeded_random",
)

AFFIRMATIVE_LABELS = frozenset(
    {"for", "yes", "yae", "aye", "approve", "accept", "agree", "support", "in favor"}
)

_TOKEN = re.compile(r"[a-z0-9']+")


@dataclass(frozen=True)
class SimilarProposal:
    proposal: Proposal
    final_option: int
    market_window: MarketWindow | None
    overlap: float


@dataclass(frozen=True)
class DecisionContext:
    proposal: Proposal
    cutoff_kind: str  # ex_ante | ex_post | custom
    cutoff: int
    votes_visible: tuple[VoteRecord, ...]
    forum_visible: tuple[ForumSignal, ...]
    dynamics_visible: DynamicsFeatures
    similar_proposals: tuple[SimilarProposal, ...]
    market_history: tuple[MarketWindow, ...]
    window_days: int

    def visible_tally(self) -> tuple[float, ...]:
        """Cumulative voting power per option over the visible ballots."""
        from .core import normalize_choice

        n = self.proposal.n_options
        parts: list[list[float]] = [[] for _ in range(n)]
        for vote in self.votes_visible:
            alloc = normalize_choice(vote.choice, n).allocation
            for j in range(n):
                if alloc[j]:
                    parts[j].append(vote.vp * alloc[j])
        return tuple(math.fsum(c) for c in parts)

    def visible_headcounts(self) -> tuple[float, ...]:
        from .core import normalize_choice

        n = self.proposal.n_options
        parts: list[list[float]] = [[] for _ in range(n)]
        for vote in self.votes_visible:
            alloc = normalize_choice(vote.choice, n).allocation
            for j in range(n):
                if alloc[j]:
                    parts[j].append(alloc[j])
        return tuple(math.fsum(c) for c in parts)


@dataclass(frozen=True)
class PolicyDecision:
    proposal_id: str
    selected_option: int  # 1-based index into the proposal's choices
    justification: str
    policy_id: str
    cutoff_kind: str
    cutoff: int
    fallback: bool = False

    def __post_init__(self):
        if self.selected_option < 1:
            raise InvalidArgument("selected_option must be a 1-based index")
        if not self.justification:
            raise InvalidArgument("justification must be non-empty")


def decision_to_record(d: PolicyDecision) -> dict:
    return {
        "proposal_id": d.proposal_id,
        "selected_option": d.selected_option,
        "justification": d.justification,
        "policy_id": d.policy_id,
        "cutoff_kind": d.cutoff_kind,
        "cutoff": d.cutoff,
        "fallback": d.fallback,
    }


def record_to_decision(rec: Mapping) -> PolicyDecision:
    return PolicyDecision(
        proposal_id=rec["proposal_id"],
        selected_option=int(rec["selected_option"]),
        justification=rec["justification"],
        policy_id=rec["policy_id"],
        cutoff_kind=rec["cutoff_kind"],
        cutoff=int(rec["cutoff"]),
        fallback=bool(rec.get("fallback", False)),
    )


def resolve_cutoff(proposal: Proposal, cutoff: str | int) -> tuple[str, int]:
    if cutoff == "ex_ante":
        return "ex_ante", proposal.start
    if cutoff == "ex_post":
        return "ex_post", proposal.end
    if isinstance(cutoff, int):
        return "custom", cutoff
    raise InvalidArgument(f"unsupported cutoff {cutoff!r}")


def build_decision_context(
    proposal_id: str,
    dataset: Dataset,
    cutoff: str | int,
    *,
    similar_k: int = 5,
    window_days: int = 3,
    protocol_of: Mapping[str, ProtocolIds] | None = None,
    index_protocol: str | None = None,
) -> DecisionContext:
    """Assemble the look-ahead-free evidence for one decision.

    Similar past proposals come from the same space ranked by title/body
    token overlap (ties broken by recency); their market windows are only
    attached once the full observation window predates the cutoff, so an
    ex-ante context never peeks at post-event prices.
    """
    proposal = dataset.proposals.get(proposal_id)
    if proposal is None:
        raise NotFound(f"proposal {proposal_id} not in dataset")
    cutoff_kind, cutoff_ts = resolve_cutoff(proposal, cutoff)

    # An ex-ante decision precedes the voting window, so ballots stamped
    # exactly at the opening instant are concurrent, not visible.
    votes_visible = _visible_votes(
        dataset.votes.get(proposal_id, ()),
        cutoff_ts,
        strict=(cutoff_kind == "ex_ante"),
    )
    forum_visible = tuple(
        restricted
        for signal in dataset.forum.get(proposal_id, ())
        if (restricted := restrict_forum_signal(signal, cutoff_ts, proposal.end))
        is not None
    )
    series = build_participation_series(proposal, votes_visible)
    dynamics = features_bundle(series)

    if index_protocol is None:
        index_protocol = _single_index_protocol(dataset)
    similar = _similar_proposals(
        proposal, dataset, cutoff_ts, similar_k, window_days, protocol_of, index_protocol
    )
    history = _market_history(
        proposal, dataset, cutoff_ts, window_days, protocol_of, index_protocol
    )
    return DecisionContext(
        proposal=proposal,
        cutoff_kind=cutoff_kind,
        cutoff=cutoff_ts,
        votes_visible=votes_visible,
        forum_visible=forum_visible,
        dynamics_visible=dynamics,
        similar_proposals=similar,
        market_history=history,
        window_days=window_days,
    )


def _visible_votes(
    votes: Sequence[VoteRecord], cutoff: int, strict: bool = False
) -> tuple[VoteRecord, ...]:
    # Vote replacement applies among the visible ballots only.
    latest: dict[str, VoteRecord] = {}
    for vote in sorted(votes, key=lambda v: (v.timestamp, v.voter)):
        if vote.timestamp < cutoff or (not strict and vote.timestamp == cutoff):
            latest[vote.voter] = vote
    return tuple(sorted(latest.values(), key=lambda v: (v.timestamp, v.voter)))


def restrict_forum_signal(
    signal: ForumSignal, cutoff: int, proposal_end: int
) -> ForumSignal | None:
    """Drop or down-scale a forum signal to its comments at the cutoff.

    With per-comment timestamps the list is filtered and the category
    counts rescaled by largest remainder; without timestamps the whole
    signal only becomes visible once the voting window has elapsed.
    Returns None when nothing of the signal is visible yet.
    """
    if signal.comment_timestamps is None:
        return signal if cutoff >= proposal_end else None
    visible = tuple(t for t in signal.comment_timestamps if t <= cutoff)
    if len(visible) == len(signal.comment_timestamps):
        return signal
    if not visible:
        return None
    counts = signal.comment_counts
    if counts is not None:
        counts = _scale_counts(counts, len(visible))
    return ForumSignal(
        proposal_id=signal.proposal_id,
        url=signal.url,
        stance_score=signal.stance_score,
        sentiment=signal.sentiment,
        comment_counts=counts,
        comment_timestamps=visible,
    )


def _scale_counts(counts: tuple[int, int, int], target: int) -> tuple[int, int, int]:
    total = sum(counts)
    if total == 0:
        return counts
    exact = [c * target / total for c in counts]
    floors = [int(x) for x in exact]
    remainder = target - sum(floors)
    order = sorted(range(3), key=lambda i: (floors[i] - exact[i], i))
    for i in order[:remainder]:
        floors[i] += 1
    return tuple(floors)


def _tokens(proposal: Proposal) -> frozenset[str]:
    text = proposal.title + " " + (proposal.body or "")
    return frozenset(_TOKEN.findall(text.lower()))


def _jaccard(a: frozenset[str], b: frozenset[str]) -> float:
    if not a and not b:
        return 0.0
    return len(a & b) / len(a | b)


def _window_horizon(end_ts: int, window_days: int) -> int:
    """First second at which the full post-event window has elapsed."""
    return (timestamp_to_day(end_ts) + window_days + 1) * 86400


def _market_bundle(
    space_id: str,
    dataset: Dataset,
    protocol_of: Mapping[str, ProtocolIds] | None,
    index_protocol: str | None,
) -> dict:
    ids = (protocol_of or {}).get(space_id, ProtocolIds(space_id, space_id))
    return {
        "price": dataset.market.get((ids.symbol, "price")),
        "index": (
            dataset.market.get((index_protocol, "index")) if index_protocol else None
        ),
        "tvl": dataset.market.get((ids.slug, "tvl")),
        "treasury": dataset.market.get((ids.slug, "treasury")),
    }


def _single_index_protocol(dataset: Dataset) -> str | None:
    names = [proto for (proto, metric) in dataset.market if metric == "index"]
    return names[0] if len(names) == 1 else None


def _past_window(
    q: Proposal,
    dataset: Dataset,
    cutoff: int,
    window_days: int,
    protocol_of,
    index_protocol,
) -> MarketWindow | None:
    if _window_horizon(q.end, window_days) > cutoff:
        return None
    bundle = _market_bundle(q.space_id, dataset, protocol_of, index_protocol)
    if all(v is None for v in bundle.values()):
        return None
    return compute_market_window(q, bundle, window_days)


def _similar_proposals(
    proposal, dataset, cutoff, similar_k, window_days, protocol_of, index_protocol
) -> tuple[SimilarProposal, ...]:
    target = _tokens(proposal)
    candidates = []
    for q in dataset.proposals.values():
        if q.proposal_id == proposal.proposal_id or q.space_id != proposal.space_id:
            continue
        if q.end > cutoff:
            continue
        candidates.append((_jaccard(target, _tokens(q)), q))
    candidates.sort(key=lambda item: (-item[0], -item[1].end, item[1].proposal_id))
    out = []
    for overlap, q in candidates:
        if len(out) >= similar_k:
            break
        try:
            outcome = tally_outcome(q, dedupe_latest(dataset.votes.get(q.proposal_id, ())))
        except EmptyTally:
            continue
        window = _past_window(q, dataset, cutoff, window_days, protocol_of, index_protocol)
        out.append(
            SimilarProposal(
                proposal=q,
                final_option=outcome.final_option,
                market_window=window,
                overlap=overlap,
            )
        )
    return tuple(out)


def _market_history(
    proposal, dataset, cutoff, window_days, protocol_of, index_protocol, cap: int = 10
) -> tuple[MarketWindow, ...]:
    past = [
        q
        for q in dataset.proposals.values()
        if q.space_id == proposal.space_id
        and q.proposal_id != proposal.proposal_id
        and q.end <= cutoff
    ]
    if proposal.category is not None:
        same_category = [q for q in past if q.category == proposal.category]
        if same_category:
            past = same_category
    past.sort(key=lambda q: (-q.end, q.proposal_id))
    windows = []
    for q in past:
        if len(windows) >= cap:
            break
        window = _past_window(q, dataset, cutoff, window_days, protocol_of, index_protocol)
        if window is not None:
            windows.append(window)
    return tuple(windows)


def context_max_timestamp(context: DecisionContext, dataset: Dataset) -> int | None:
    """Latest knowledge timestamp of anything visible in the context.

    Used by the look-ahead audit: the result must never exceed the
    context cutoff. Market windows count as known only once their full
    observation window has elapsed.
    """
    stamps: list[int] = []
    stamps.extend(v.timestamp for v in context.votes_visible)
    for signal in context.forum_visible:
        if signal.comment_timestamps:
            stamps.append(max(signal.comment_timestamps))
        else:
            stamps.append(context.proposal.end)
    for sim in context.similar_proposals:
        stamps.append(sim.proposal.end)
        if sim.market_window is not None:
            stamps.append(_window_horizon(sim.proposal.end, context.window_days))
    for window in context.market_history:
        q = dataset.proposals.get(window.proposal_id)
        if q is not None:
            stamps.append(_window_horizon(q.end, context.window_days))
    return max(stamps) if stamps else None


# ---------------------------------------------------------------------------
# baselines

def decide_baseline(context: DecisionContext, policy: str, *, seed: int = 0) -> PolicyDecision:
    """Deterministic benchmark policies.

    ``token_majority`` and ``headcount_majority`` take the visible argmax
    (lowest index on ties; no visible ballots falls back to option 1 with
    the ``fallback`` flag). ``sentiment_sign`` maps mean visible forum
    sentiment onto the affirmative option of a binary proposal.
    ``seeded_random`` draws uniformly from a hash of (seed, proposal id).
    """
    p = context.proposal
    if policy == "token_majority":
        return _argmax_decision(context, context.visible_tally(), "token_majority")
    if policy == "headcount_majority":
        return _argmax_decision(
            context, context.visible_headcounts(), "headcount_majority"
        )
    if policy == "sentiment_sign":
        return _sentiment_decision(context)
    if policy == "seeded_random":
        digest = hashlib.sha256(f"{seed}|{p.proposal_id}".encode()).digest()
        option = int.from_bytes(digest[:8], "big") % p.n_options + 1
        return PolicyDecision(
            proposal_id=p.proposal_id,
            selected_option=option,
            justification=f"Uniform draw over {p.n_options} options with seed {seed}.",
            policy_id="seeded_random",
            cutoff_kind=context.cutoff_kind,
            cutoff=context.cutoff,
        )
    raise InvalidArgument(f"unknown baseline policy {policy!r}")


def _argmax_decision(
    context: DecisionContext, masses: Sequence[float], policy_id: str
) -> PolicyDecision:
    p = context.proposal
    if not context.votes_visible:
        return PolicyDecision(
            proposal_id=p.proposal_id,
            selected_option=1,
            justification="No ballots visible at the cutoff; defaulted to the first option.",
            policy_id=policy_id,
            cutoff_kind=context.cutoff_kind,
            cutoff=context.cutoff,
            fallback=True,
        )
    best = max(masses)
    option = list(masses).index(best) + 1
    return PolicyDecision(
        proposal_id=p.proposal_id,
        selected_option=option,
        justification=(
            f"Option {option} ({p.choices[option - 1]}) leads the visible tally "
            f"with {best:.6f} of {math.fsum(masses):.6f}."
        ),
        policy_id=policy_id,
        cutoff_kind=context.cutoff_kind,
        cutoff=context.cutoff,
    )


def _sentiment_decision(context: DecisionContext) -> PolicyDecision:
    p = context.proposal
    if p.kind != "binary":
        raise PolicyInapplicable(
            f"sentiment_sign needs a binary proposal, got {p.kind}"
        )
    abstain = {a.strip().lower() for a in p.abstain_labels}
    effective = [
        (i, label)
        for i, label in enumerate(p.choices, 1)
        if label.strip().lower() not in abstain
    ]
    affirmative = next(
        ((i, label) for i, label in effective
         if label.strip().lower() in AFFIRMATIVE_LABELS),
        effective[0],
    )
    other = next((entry for entry in effective if entry[0] != affirmative[0]))
    if context.forum_visible:
        mean_sentiment = sum(f.sentiment for f in context.forum_visible) / len(
            context.forum_visible
        )
    else:
        mean_sentiment = 0.0
    selected = affirmative if mean_sentiment > 0 else other
    return PolicyDecision(
        proposal_id=p.proposal_id,
        selected_option=selected[0],
        justification=(
            f"Mean visible forum sentiment {mean_sentiment:.4f} "
            f"{'supports' if mean_sentiment > 0 else 'does not support'} "
            f"the affirmative option."
        ),
        policy_id="sentiment_sign",
        cutoff_kind=context.cutoff_kind,
        cutoff=context.cutoff,
    )


# ---------------------------------------------------------------------------
# LLM policy

@dataclass(frozen=True)
class LlmConfig:
    url: str
    model: str
    api_key_env: str = "GOVBENCH_LLM_API_KEY"
    policy_id: str = "llm"


class AuditLog:
    """Append-only JSONL log of every LLM exchange."""

    def __init__(self, path: Path | str):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def append(self, record: Mapping) -> None:
        line = json.dumps(record, ensure_ascii=False, separators=(",", ":"))
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")


def parse_option_reply(reply: str, choices: Sequence[str]) -> int | None:
    """Map a free-text reply onto a 1-based choice index.

    Tries exact label equality first, then case-insensitive equality,
    then a unique case-insensitive label prefix, over the whole reply and
    each line of it (surrounding quotes and punctuation ignored).
    """
    candidates = [reply.strip()]
    candidates.extend(line.strip() for line in reply.splitlines() if line.strip())
    cleaned = [cand.strip("\"'`*.,:;!? \t") for cand in candidates]
    for cand in cleaned:
        for i, label in enumerate(choices, 1):
            if cand == label:
                return i
    for cand in cleaned:
        for i, label in enumerate(choices, 1):
            if cand.casefold() == label.casefold():
                return i
    for cand in cleaned:
        if len(cand) < 2:
            continue
        matches = [
            i
            for i, label in enumerate(choices, 1)
            if label.casefold().startswith(cand.casefold())
        ]
        if len(matches) == 1:
            return matches[0]
    return None


def decide_llm(
    context: DecisionContext,
    config: LlmConfig,
    *,
    source: HttpSource | None = None,
    audit: AuditLog | None = None,
) -> PolicyDecision:
    """One decision via the configured chat-completion endpoint.

    An unparsable reply triggers exactly one structured re-ask; a second
    failure raises :class:`PolicyFailure` rather than guessing. Every
    request/response pair is appended to the audit log when one is given.
    """
    source = source or HttpSource()
    p = context.proposal
    system_text, user_text = render_messages(context)
    messages = [
        {"role": "system", "content": system_text},
        {"role": "user", "content": user_text},
    ]
    reply = _chat(source, config, messages)
    option = parse_option_reply(reply, p.choices)
    _audit(audit, context, config, messages, reply, option)
    if option is None:
        reask = render_reask_prompt(context)
        messages = messages + [
            {"role": "assistant", "content": reply},
            {"role": "user", "content": reask},
        ]
        reply2 = _chat(source, config, messages)
        option = parse_option_reply(reply2, p.choices)
        _audit(audit, context, config, messages, reply2, option)
        if option is None:
            raise PolicyFailure(
                f"{p.proposal_id}: endpoint produced no parsable option "
                f"after one re-ask (last reply {reply2[:120]!r})"
            )
        reply = reply2
    return PolicyDecision(
        proposal_id=p.proposal_id,
        selected_option=option,
        justification=reply.strip() or p.choices[option - 1],
        policy_id=config.policy_id,
        cutoff_kind=context.cutoff_kind,
        cutoff=context.cutoff,
    )


def _chat(source: HttpSource, config: LlmConfig, messages: list[dict]) -> str:
    headers = {}
    key = os.environ.get(config.api_key_env, "")
    if key:
        headers["Authorization"] = f"Bearer {key}"
    body = source.post_json(
        config.url, {"model": config.model, "messages": messages}, headers=headers
    )
    try:
        return str(body["choices"][0]["message"]["content"])
    except (KeyError, IndexError, TypeError):
        if isinstance(body.get("content"), str):
            return body["content"]
        return ""


def _audit(audit, context, config, messages, reply, option) -> None:
    if audit is None:
        return
    audit.append(
        {
            "proposal_id": context.proposal.proposal_id,
            "policy_id": config.policy_id,
            "prompt": messages,
            "raw_reply": reply,
            "parsed_option": option,
            "timestamp": int(time.time()),
        }
    )


__all__ = [
    "AFFIRMATIVE_LABELS",
    "AuditLog",
    "BASELINE_POLICIES",
    "DecisionContext",
    "LlmConfig",
    "PolicyDecision",
    "SimilarProposal",
    "build_decision_context",
    "context_max_timestamp",
    "decide_baseline",
    "decide_llm",
    "decision_to_record",
    "parse_option_reply",
    "record_to_decision",
    "render_decision_prompt",
    "restrict_forum_signal",
]
