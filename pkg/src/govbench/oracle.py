"""Independent naive recomputation of every metric, for tests only.

Everything here is deliberately re-derived from the raw records with
plain Python loops: ballot normalization, tallies, alignment quantities,
voter benchmarks, aggregate statistics, temporal features, and market
windows. No metric code is shared with the production modules, so tests
can require production-vs-oracle agreement as evidence of correctness.
Production code must never import this module.
"""
from __future__ import annotations

from typing import Mapping, Sequence

from .store import Dataset


# --- ballot handling (reimplemented) ---------------------------------------

def _alloc(choice, n: int) -> list[float]:
    alloc = [0.0] * n
    if isinstance(choice, int):
        alloc[choice - 1] = 1.0
        return alloc
    if isinstance(choice, Mapping):
        total = sum(float(w) for w in choice.values())
        for idx, weight in choice.items():
            alloc[int(idx) - 1] += float(weight) / total
        return alloc
    members = sorted(set(int(i) for i in choice))
    for idx in members:
        alloc[idx - 1] = 1.0 / len(members)
    return alloc


def _dedupe(votes) -> list:
    latest = {}
    for vote in sorted(votes, key=lambda v: v.timestamp):
        latest[vote.voter] = vote
    return sorted(latest.values(), key=lambda v: (v.timestamp, v.voter))


def _tally(proposal, ballots):
    n = len(proposal.choices)
    masses = [0.0] * n
    total = 0.0
    for vote in ballots:
        alloc = _alloc(vote.choice, n)
        for j in range(n):
            masses[j] += vote.vp * alloc[j]
        total += vote.vp
    best = max(masses)
    final = masses.index(best) + 1
    tie = len([m for m in masses if m == best]) > 1
    return masses, total, final, tie


# --- plain statistics -------------------------------------------------------

def _mean(xs: Sequence[float]) -> float:
    return sum(xs) / len(xs)


def _median(xs: Sequence[float]) -> float:
    data = sorted(xs)
    mid = len(data) // 2
    if len(data) % 2:
        return data[mid]
    return (data[mid - 1] + data[mid]) / 2.0


def _std(xs: Sequence[float]) -> float:
    m = _mean(xs)
    return (sum((x - m) ** 2 for x in xs) / len(xs)) ** 0.5


def _quantile(xs: Sequence[float], q: float) -> float:
    data = sorted(xs)
    if len(data) == 1:
        return data[0]
    pos = q * (len(data) - 1)
    lo = int(pos)
    frac = pos - lo
    if lo + 1 >= len(data):
        return data[-1]
    return data[lo] + frac * (data[lo + 1] - data[lo])


def _describe(xs: Sequence[float]) -> dict:
    return {
        "mean": _mean(xs),
        "median": _median(xs),
        "std": _std(xs),
        "q25": _quantile(xs, 0.25),
        "q75": _quantile(xs, 0.75),
        "max": max(xs),
    }


# --- alignment ---------------------------------------------------------------

def _bucket_key(kind, calls_for_change) -> str:
    if kind is None or calls_for_change is None:
        return "unlabeled"
    return ("binary" if kind == "binary" else "multi") + (
        "_change" if calls_for_change else "_no_change"
    )


def oracle_alignment(
    dataset: Dataset,
    selected: Mapping[str, int],
    *,
    min_participation: int = 5,
    contested_threshold: float = 0.60,
) -> dict:
    """Recompute every alignment quantity for a selection map (pid -> option)."""
    per_proposal: dict[str, dict] = {}
    ballots_by_pid: dict[str, list] = {}
    for pid in sorted(dataset.proposals):
        proposal = dataset.proposals[pid]
        ballots = _dedupe(dataset.votes.get(pid, ()))
        if not ballots:
            continue
        masses, total, final, tie = _tally(proposal, ballots)
        if total <= 0:
            continue
        n = len(proposal.choices)
        ai = selected[pid]
        head_match = 0.0
        for vote in ballots:
            head_match += _alloc(vote.choice, n)[ai - 1]
        per_proposal[pid] = {
            "majority_share": masses[final - 1] / total,
            "token_alignment": masses[ai - 1] / total,
            "headcount_alignment": head_match / len(ballots),
            "ai_equals_final": ai == final,
            "tie": tie,
            "kind": proposal.kind,
            "calls_for_change": proposal.calls_for_change,
            "n_voters": len(ballots),
            "final_option": final,
        }
        ballots_by_pid[pid] = ballots

    voters: dict[str, dict] = {}
    for pid, row in per_proposal.items():
        proposal = dataset.proposals[pid]
        n = len(proposal.choices)
        final = row["final_option"]
        for vote in ballots_by_pid[pid]:
            entry = voters.setdefault(
                vote.voter, {"num": 0.0, "den": 0.0, "head": 0.0, "n": 0}
            )
            alloc_final = _alloc(vote.choice, n)[final - 1]
            entry["num"] += vote.vp * alloc_final
            entry["den"] += vote.vp
            entry["head"] += alloc_final
            entry["n"] += 1
    voter_rows = {
        voter: {
            "n_proposals": entry["n"],
            "token_agreement": entry["num"] / entry["den"] if entry["den"] > 0 else 0.0,
            "headcount_agreement": entry["head"] / entry["n"],
        }
        for voter, entry in voters.items()
    }

    rows = list(per_proposal.values())
    token = [r["token_alignment"] for r in rows]
    head = [r["headcount_alignment"] for r in rows]
    share = [r["majority_share"] for r in rows]
    nv = [float(r["n_voters"]) for r in rows]
    aggregate = {
        "token_alignment": _describe(token),
        "headcount_alignment": _describe(head),
        "majority_share": _describe(share),
        "n_voters": _describe(nv),
    }
    filtered_token = [
        v["token_agreement"]
        for v in voter_rows.values()
        if v["n_proposals"] >= min_participation
    ]
    filtered_head = [
        v["headcount_agreement"]
        for v in voter_rows.values()
        if v["n_proposals"] >= min_participation
    ]
    token_median = _median(filtered_token) if filtered_token else None
    head_median = _median(filtered_head) if filtered_head else None
    global_stats = {
        "p_ai_equals_final": _mean([1.0 if r["ai_equals_final"] else 0.0 for r in rows]),
        "token_alignment_mean": _mean(token),
        "headcount_alignment_mean": _mean(head),
        "majority_share_mean": _mean(share),
        "voter_token_agreement_median": token_median,
        "voter_headcount_agreement_median": head_median,
        "ai_beats_median_token_voter": (
            _mean(token) > token_median if token_median is not None else None
        ),
        "ai_beats_median_headcount_voter": (
            _mean(head) > head_median if head_median is not None else None
        ),
    }

    buckets: dict[str, dict] = {}
    for key in ("binary_change", "binary_no_change", "multi_change", "multi_no_change",
                "unlabeled"):
        members = [
            (pid, r)
            for pid, r in per_proposal.items()
            if _bucket_key(r["kind"], r["calls_for_change"]) == key
        ]
        if not members and key == "unlabeled":
            continue
        ballot_allocs: list[float] = []
        for pid, r in members:
            proposal = dataset.proposals[pid]
            n = len(proposal.choices)
            for vote in ballots_by_pid[pid]:
                ballot_allocs.append(_alloc(vote.choice, n)[r["final_option"] - 1])
        humans = _mean(ballot_allocs) if ballot_allocs else None
        ai = (
            _mean([1.0 if r["ai_equals_final"] else 0.0 for _, r in members])
            if members
            else None
        )
        buckets[key] = {
            "n": len(members),
            "humans": humans,
            "ai": ai,
            "difference_pp": (
                (ai - humans) * 100.0 if ai is not None and humans is not None else None
            ),
        }

    contested_rows = [r for r in rows if r["majority_share"] <= contested_threshold]
    contested = {
        "threshold": contested_threshold,
        "n": len(contested_rows),
        "p_ai_equals_final": (
            _mean([1.0 if r["ai_equals_final"] else 0.0 for r in contested_rows])
            if contested_rows
            else None
        ),
        "token_alignment_mean": (
            _mean([r["token_alignment"] for r in contested_rows])
            if contested_rows
            else None
        ),
        "headcount_alignment_mean": (
            _mean([r["headcount_alignment"] for r in contested_rows])
            if contested_rows
            else None
        ),
        "majority_share_mean": (
            _mean([r["majority_share"] for r in contested_rows])
            if contested_rows
            else None
        ),
        "by_kind": {
            kind: {
                "n": len([r for r in contested_rows if r["kind"] == kind]),
                "p_ai_equals_final": (
                    _mean(
                        [
                            1.0 if r["ai_equals_final"] else 0.0
                            for r in contested_rows
                            if r["kind"] == kind
                        ]
                    )
                    if [r for r in contested_rows if r["kind"] == kind]
                    else None
                ),
            }
            for kind in ("binary", "multi")
        },
    }
    return {
        "per_proposal": per_proposal,
        "voters": voter_rows,
        "aggregate": aggregate,
        "global": global_stats,
        "buckets": buckets,
        "contested": contested,
    }


def oracle_cutoff_row(per_proposal: Mapping[str, dict]) -> dict:
    rows = list(per_proposal.values())
    return {
        "p_ai_equals_final": _mean([1.0 if r["ai_equals_final"] else 0.0 for r in rows]),
        "token_alignment_mean": _mean([r["token_alignment"] for r in rows]),
        "headcount_alignment_mean": _mean([r["headcount_alignment"] for r in rows]),
        "majority_share_mean": _mean([r["majority_share"] for r in rows]),
    }


# --- temporal features -------------------------------------------------------

def oracle_dynamics(proposal, votes) -> dict:
    """Replay one vote stream with fresh code and recompute every feature."""
    start, end = proposal.start, proposal.end
    span = end - start
    n = len(proposal.choices)
    events = sorted(
        (v for v in votes if start <= v.timestamp <= end),
        key=lambda v: (v.timestamp, v.voter),
    )
    allocs = [_alloc(v.choice, n) for v in events]

    hits = [[0] * n for _ in range(4)]
    votes_q = [0] * 4
    quartile_vp = [0.0] * 4
    cum = [0.0] * n
    for v, alloc in zip(events, allocs):
        for j in range(n):
            cum[j] += v.vp * alloc[j]
        q = min(3, (4 * (v.timestamp - start)) // span)
        votes_q[q] += 1
        quartile_vp[q] += v.vp
        best = max(cum)
        leaders = [j for j in range(n) if cum[j] == best]
        if len(leaders) == 1:
            hits[q][leaders[0]] += 1
    by_quartile = [
        [hits[q][j] / max(1, votes_q[q]) for j in range(n)] for q in range(4)
    ]
    totals = [sum(hits[q][j] for q in range(4)) for j in range(n)]
    grand = sum(totals)
    lead_total = [t / grand if grand else 0.0 for t in totals]
    early = [hits[0][j] / max(1, sum(hits[0])) for j in range(n)]

    result = {
        "lead_ratio_by_quartile": by_quartile,
        "lead_ratio_total": lead_total,
        "early_ratio": early,
        "per_quartile_vp_sums": quartile_vp,
        "unique_voters": len({v.voter for v in events}),
        "total_votes": len(events),
    }

    winner = cum.index(max(cum)) + 1 if events else None
    result["winner"] = winner
    if winner is None:
        return result
    w = winner - 1
    winner_total = sum(v.vp * alloc[w] for v, alloc in zip(events, allocs))
    if winner_total <= 0:
        return result

    spike_at = 0
    for i in range(1, len(events)):
        if events[i].vp > events[spike_at].vp:
            spike_at = i
    spike_step = events[spike_at].vp
    result["spike_index"] = min(1.0, spike_step / winner_total)
    result["spike_overflow"] = spike_step > winner_total
    tail = list(range(spike_at + 1, len(events)))
    if tail:
        winner_after = sum(events[i].vp * allocs[i][w] for i in tail)
        total_after = sum(events[i].vp for i in tail)
        result["spike_follow_support_ratio"] = (
            winner_after / total_after if total_after > 0 else 0.0
        )
        result["spike_empty_tail"] = False
    else:
        result["spike_follow_support_ratio"] = 0.0
        result["spike_empty_tail"] = True

    contributions = sorted(
        (v.vp * alloc[w] for v, alloc in zip(events, allocs) if v.vp * alloc[w] > 0),
        reverse=True,
    )
    top_n = (len(contributions) + 9) // 10
    result["stairwise_ratio"] = 1.0 - sum(contributions[:top_n]) / sum(contributions)

    early_vp = [v.vp for v in events if 2 * (v.timestamp - start) < span]
    late_vp = [v.vp for v in events if 2 * (v.timestamp - start) >= span]
    early_mean = sum(early_vp) / len(early_vp) if early_vp else 0.0
    late_mean = sum(late_vp) / len(late_vp) if late_vp else 0.0
    result["half_slope_diff"] = late_mean - early_mean
    return result


# --- market windows ----------------------------------------------------------

def oracle_market_window(proposal, bundle: Mapping, window_days: int = 3) -> dict:
    """Recompute window responses from raw samples with fresh code."""
    event_day = proposal.end // 86400
    out: dict = {"proposal_id": proposal.proposal_id}

    def segments(series):
        lookup = dict(series.samples)
        pre = [
            lookup[d]
            for d in range(event_day - window_days, event_day)
            if d in lookup
        ]
        post = [
            lookup[d]
            for d in range(event_day + 1, event_day + window_days + 1)
            if d in lookup
        ]
        return pre, post

    def pct(series):
        if series is None:
            return None
        pre, post = segments(series)
        if not pre or not post:
            return None
        pre_avg = sum(pre) / len(pre)
        post_avg = sum(post) / len(post)
        if pre_avg <= 0:
            return None
        return (post_avg / pre_avg - 1.0) * 100.0

    def frac(series):
        if series is None:
            return None
        pre, post = segments(series)
        if not pre or not post:
            return None
        pre_avg = sum(pre) / len(pre)
        post_avg = sum(post) / len(post)
        if pre_avg <= 0:
            return None
        return post_avg / pre_avg - 1.0

    out["price_pct_change"] = pct(bundle.get("price"))
    out["tvl_abnormal"] = frac(bundle.get("tvl"))
    out["treasury_abnormal"] = frac(bundle.get("treasury"))
    price = bundle.get("price")
    index = bundle.get("index")
    adj = None
    if price is not None and index is not None:
        p_pre, p_post = segments(price)
        i_pre, i_post = segments(index)
        if p_pre and p_post and i_pre and i_post:
            p_pre_avg = sum(p_pre) / len(p_pre)
            i_pre_avg = sum(i_pre) / len(i_pre)
            if p_pre_avg > 0 and i_pre_avg > 0:
                adj = (
                    (sum(p_post) / len(p_post) / p_pre_avg - 1.0)
                    - (sum(i_post) / len(i_post) / i_pre_avg - 1.0)
                ) * 100.0
    out["adj_return"] = adj
    return out


def oracle_expost(per_proposal: Mapping[str, dict], windows: Mapping[str, dict]) -> dict:
    rows: dict[str, dict] = {}
    groups: dict[str, list] = {
        key: []
        for key in (
            "binary_change",
            "binary_no_change",
            "multi_change",
            "multi_no_change",
            "unlabeled",
            "all",
        )
    }
    for pid, r in per_proposal.items():
        groups[_bucket_key(r["kind"], r["calls_for_change"])].append((pid, r))
        groups["all"].append((pid, r))
    for key, members in groups.items():
        if not members and key == "unlabeled":
            continue
        row = {"n": len(members)}
        for metric, field in (("price", "price_pct_change"), ("tvl", "tvl_abnormal")):
            with_metric = [
                (r, windows[pid][field])
                for pid, r in members
                if pid in windows and windows[pid][field] is not None
            ]
            endorsed = [(r, v) for r, v in with_metric if r["ai_equals_final"]]
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
