"""Fetch governance and market data into a reproducible local dataset.

The fetch operations wrap the source clients and normalize everything
into core records. Forum signals arrive pre-scored from a user-supplied
JSONL file or endpoint; govbench never scrapes or scores live forums
(the lexicon scorer in :mod:`govbench.forum` only builds fixtures).
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, MutableMapping, Sequence

from .core import ForumSignal
from .errors import InvalidArgument, NoData, NotFound
from .sources import CmcClient, DefiLlamaClient, SnapshotClient
from .store import Dataset, DatasetStore, MarketSeries, read_jsonl, record_to_forum, timestamp_to_day


@dataclass(frozen=True)
class ProtocolIds:
    """Identifiers one space uses at the market data sources."""

    slug: str  # DeFiLlama protocol slug
    symbol: str  # token symbol at the price source


def fetch_market_series(
    llama: DefiLlamaClient,
    cmc: CmcClient,
    protocol: ProtocolIds,
    metric: str,
    day_range: tuple[int, int],
    *,
    window_days: int = 3,
) -> MarketSeries:
    """One daily series; gaps in the source are preserved, not filled.

    ``day_range`` must cover at least the event window plus one day of
    slack (the window's pre and post segments span ``2 * window_days``
    non-event days).
    """
    lo, hi = day_range
    if hi - lo + 1 < 2 * window_days + 1:
        raise InvalidArgument(
            f"day_range {day_range} shorter than the event window plus slack"
        )
    if metric == "price":
        return cmc.fetch_daily(protocol.symbol, day_range, metric="price")
    if metric == "index":
        return cmc.fetch_daily(protocol.symbol, day_range, metric="index")
    if metric == "tvl":
        return llama.fetch_tvl(protocol.slug, day_range)
    if metric == "treasury":
        return llama.fetch_treasury(protocol.slug, day_range)
    raise InvalidArgument(f"unknown market metric {metric!r}")


def load_forum_signals(source: Path | str) -> list[ForumSignal]:
    """Read pre-scored forum signals from a JSONL file or HTTP endpoint."""
    text = None
    if isinstance(source, str) and source.startswith(("http://", "https://")):
        import requests

        response = requests.get(source, timeout=30)
        response.raise_for_status()
        text = response.text
    if text is not None:
        import json

        return [
            record_to_forum(json.loads(line))
            for line in text.splitlines()
            if line.strip()
        ]
    return [record_to_forum(rec) for rec in read_jsonl(Path(source))]


def ingest_spaces(
    *,
    snapshot: SnapshotClient,
    llama: DefiLlamaClient | None,
    cmc: CmcClient | None,
    spaces: Sequence[str],
    protocol_of: Mapping[str, ProtocolIds] | None = None,
    index_symbol: str | None = None,
    forum_source: Path | str | None = None,
    window_days: int = 3,
    counters: MutableMapping[str, int] | None = None,
) -> Dataset:
    """Fetch everything for the given spaces into one dataset.

    Market series cover each space's full proposal history padded by the
    event window plus slack; a source with no data for a metric simply
    leaves that series out (counted, not fatal).
    """
    if not spaces:
        raise InvalidArgument("spaces must be non-empty")
    protocol_of = dict(protocol_of or {})
    dataset = Dataset()
    proposals = snapshot.fetch_proposals(spaces, counters=counters)
    for proposal in proposals:
        dataset.proposals[proposal.proposal_id] = proposal
        dataset.votes[proposal.proposal_id] = snapshot.fetch_votes(
            proposal, counters=counters
        )

    if forum_source is not None:
        for signal in load_forum_signals(forum_source):
            if signal.proposal_id in dataset.proposals:
                dataset.forum.setdefault(signal.proposal_id, []).append(signal)
            elif counters is not None:
                counters["forum_signals_unmatched"] = (
                    counters.get("forum_signals_unmatched", 0) + 1
                )

    if llama is not None and cmc is not None:
        for space in spaces:
            owned = [p for p in proposals if p.space_id == space]
            if not owned:
                continue
            ids = protocol_of.get(space, ProtocolIds(slug=space, symbol=space))
            lo = timestamp_to_day(min(p.created_at for p in owned)) - window_days - 1
            hi = timestamp_to_day(max(p.end for p in owned)) + window_days + 1
            for metric in ("price", "tvl", "treasury"):
                try:
                    series = fetch_market_series(
                        llama, cmc, ids, metric, (lo, hi), window_days=window_days
                    )
                except (NoData, NotFound):
                    if counters is not None:
                        counters[f"market_missing_{metric}"] = (
                            counters.get(f"market_missing_{metric}", 0) + 1
                        )
                    continue
                dataset.market[(series.protocol, series.metric)] = series
            if index_symbol:
                try:
                    index = cmc.fetch_daily(index_symbol, (lo, hi), metric="index")
                    dataset.market[(index.protocol, index.metric)] = index
                except (NoData, NotFound):
                    if counters is not None:
                        counters["market_missing_index"] = (
                            counters.get("market_missing_index", 0) + 1
                        )
    return dataset


def persist_dataset(
    root: Path | str,
    dataset: Dataset,
    *,
    endpoints: Mapping[str, str] | None = None,
    protocol_of: Mapping[str, ProtocolIds] | None = None,
) -> DatasetStore:
    store = DatasetStore(root)
    slug_of = {s: ids.slug for s, ids in (protocol_of or {}).items()}
    store.save(dataset, endpoints=endpoints, protocol_of=slug_of)
    return store
