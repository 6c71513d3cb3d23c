"""Event-study response of market metrics around a proposal's close.

The event day is the UTC day containing the proposal's end timestamp.
With a window of ``w`` days the pre segment covers the ``w`` days before
the event day and the post segment the ``w`` days after it; the event day
itself belongs to neither, so execution-day noise never contaminates the
averages. Price responses are percentages, TVL and treasury responses
are fractions, matching their source conventions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .core import Proposal
from .errors import DegenerateBaseline, NoData
from .store import MarketSeries, timestamp_to_day

DEFAULT_WINDOW_DAYS = 3


@dataclass(frozen=True)
class MarketWindow:
    """Per-metric responses in the event window of one proposal.

    A response field is present only when both its pre and post segments
    contained at least one usable sample; ``data_coverage`` records the
    (pre, post) sample counts per metric either way.
    """

    proposal_id: str
    window_days: int
    price_pct_change: float | None
    adj_return: float | None
    tvl_abnormal: float | None
    treasury_abnormal: float | None
    data_coverage: Mapping[str, tuple[int, int]]

    def __post_init__(self):
        if self.window_days < 1:
            raise ValueError("window_days must be >= 1")


def _segment_mean(values: Sequence[float], name: str) -> float:
    if not values:
        raise NoData(f"{name} segment is empty")
    return math.fsum(values) / len(values)


def windowed_pct_change(pre: Sequence[float], post: Sequence[float]) -> float:
    """Percentage change of the post-segment mean over the pre-segment mean."""
    pre_avg = _segment_mean(pre, "pre")
    post_avg = _segment_mean(post, "post")
    if pre_avg <= 0.0:
        raise DegenerateBaseline(f"pre average {pre_avg!r} is not positive")
    return (post_avg / pre_avg - 1.0) * 100.0


def market_adjusted_return(
    token_pre: Sequence[float],
    token_post: Sequence[float],
    index_pre: Sequence[float],
    index_post: Sequence[float],
) -> float:
    """Token percentage move minus the market index move, in percent."""
    token_pre_avg = _segment_mean(token_pre, "token pre")
    token_post_avg = _segment_mean(token_post, "token post")
    index_pre_avg = _segment_mean(index_pre, "index pre")
    index_post_avg = _segment_mean(index_post, "index post")
    if token_pre_avg <= 0.0:
        raise DegenerateBaseline("token pre average is not positive", series="token")
    if index_pre_avg <= 0.0:
        raise DegenerateBaseline("index pre average is not positive", series="index")
    return (
        (token_post_avg / token_pre_avg - 1.0)
        - (index_post_avg / index_pre_avg - 1.0)
    ) * 100.0


def abnormal_change(pre: Sequence[float], post: Sequence[float]) -> float:
    """Fractional change of segment means, used for TVL and treasury."""
    pre_avg = _segment_mean(pre, "pre")
    post_avg = _segment_mean(post, "post")
    if pre_avg <= 0.0:
        raise DegenerateBaseline(f"pre average {pre_avg!r} is not positive")
    return post_avg / pre_avg - 1.0


def event_segments(
    series: MarketSeries, event_day: int, window_days: int
) -> tuple[list[float], list[float]]:
    """Pre/post daily values around (and excluding) the event day."""
    pre_days = range(event_day - window_days, event_day)
    post_days = range(event_day + 1, event_day + window_days + 1)
    return series.values_for_days(pre_days), series.values_for_days(post_days)


def compute_market_window(
    proposal: Proposal,
    series_bundle: Mapping[str, MarketSeries | None],
    window_days: int = DEFAULT_WINDOW_DAYS,
) -> MarketWindow:
    """Evaluate every available metric independently for one proposal.

    ``series_bundle`` may carry ``price``, ``index``, ``tvl`` and
    ``treasury`` series; a missing or degenerate series leaves the
    corresponding field absent rather than failing the whole window. The
    adjusted return needs both the price and the index series.
    """
    event_day = timestamp_to_day(proposal.end)
    coverage: dict[str, tuple[int, int]] = {}
    segments: dict[str, tuple[list[float], list[float]]] = {}
    for metric in ("price", "index", "tvl", "treasury"):
        series = series_bundle.get(metric)
        if series is None:
            coverage[metric] = (0, 0)
            continue
        pre, post = event_segments(series, event_day, window_days)
        segments[metric] = (pre, post)
        coverage[metric] = (len(pre), len(post))

    def try_pct(metric: str) -> float | None:
        seg = segments.get(metric)
        if seg is None:
            return None
        try:
            return windowed_pct_change(*seg)
        except (NoData, DegenerateBaseline):
            return None

    def try_abnormal(metric: str) -> float | None:
        seg = segments.get(metric)
        if seg is None:
            return None
        try:
            return abnormal_change(*seg)
        except (NoData, DegenerateBaseline):
            return None

    price = try_pct("price")
    adj = None
    if "price" in segments and "index" in segments:
        try:
            adj = market_adjusted_return(
                segments["price"][0],
                segments["price"][1],
                segments["index"][0],
                segments["index"][1],
            )
        except (NoData, DegenerateBaseline):
            adj = None
    return MarketWindow(
        proposal_id=proposal.proposal_id,
        window_days=window_days,
        price_pct_change=price,
        adj_return=adj,
        tvl_abnormal=try_abnormal("tvl"),
        treasury_abnormal=try_abnormal("treasury"),
        data_coverage=coverage,
    )


def window_to_record(w: MarketWindow) -> dict:
    return {
        "proposal_id": w.proposal_id,
        "window_days": w.window_days,
        "price_pct_change": w.price_pct_change,
        "adj_return": w.adj_return,
        "tvl_abnormal": w.tvl_abnormal,
        "treasury_abnormal": w.treasury_abnormal,
        "data_coverage": {k: list(v) for k, v in sorted(w.data_coverage.items())},
    }


def record_to_window(rec: Mapping) -> MarketWindow:
    return MarketWindow(
        proposal_id=rec["proposal_id"],
        window_days=int(rec["window_days"]),
        price_pct_change=rec.get("price_pct_change"),
        adj_return=rec.get("adj_return"),
        tvl_abnormal=rec.get("tvl_abnormal"),
        treasury_abnormal=rec.get("treasury_abnormal"),
        data_coverage={
            k: (int(v[0]), int(v[1]))
            for k, v in rec.get("data_coverage", {}).items()
        },
    )
