"""HTTP clients for the governance and market data sources.

All clients share one retry/rate-limit layer: a per-source token bucket
caps request rates and transient failures retry with exponential backoff
up to a bounded attempt count before raising ``SourceUnavailable``. Base
URLs are configurable so the bundled mock server can stand in for every
source during offline runs.
"""
from __future__ import annotations

import os
import threading
import time
from typing import Mapping, MutableMapping, Sequence

import requests

from .core import Proposal, VoteRecord
from .errors import (
    InvalidArgument,
    NoData,
    NotFound,
    SourceProtocolError,
    SourceUnavailable,
)
from .store import MarketSeries, day_to_str, str_to_day

DEFAULT_PAGE_SIZE = 1000
DEFAULT_MAX_ATTEMPTS = 5


class TokenBucket:
    """Thread-safe token bucket; ``rate`` tokens per second, burst ``rate``."""

    def __init__(self, rate: float):
        if rate <= 0:
            raise InvalidArgument("rate must be positive")
        self.rate = rate
        self._tokens = rate
        self._updated = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(self.rate, self._tokens + (now - self._updated) * self.rate)
                self._updated = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            time.sleep(wait)


class HttpSource:
    """Shared request plumbing: rate limit, retries, error mapping."""

    def __init__(
        self,
        *,
        session: requests.Session | None = None,
        rate_limiter: TokenBucket | None = None,
        max_attempts: int = DEFAULT_MAX_ATTEMPTS,
        backoff_base: float = 0.25,
        timeout: float = 30.0,
    ):
        self.session = session or requests.Session()
        self.rate_limiter = rate_limiter
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.timeout = timeout

    def request(self, method: str, url: str, **kwargs) -> requests.Response:
        last_error: Exception | None = None
        for attempt in range(self.max_attempts):
            if self.rate_limiter is not None:
                self.rate_limiter.acquire()
            try:
                response = self.session.request(
                    method, url, timeout=self.timeout, **kwargs
                )
            except requests.RequestException as exc:
                last_error = exc
            else:
                if response.status_code == 404:
                    raise NotFound(f"{url}: not found")
                if response.status_code < 500:
                    return response
                last_error = SourceUnavailable(
                    f"{url}: server error {response.status_code}"
                )
            if attempt + 1 < self.max_attempts and self.backoff_base > 0:
                time.sleep(self.backoff_base * (2**attempt))
        raise SourceUnavailable(
            f"{url}: failed after {self.max_attempts} attempts ({last_error})"
        )

    def get_json(self, url: str, **kwargs) -> dict:
        response = self.request("GET", url, **kwargs)
        if response.status_code >= 400:
            raise SourceUnavailable(f"{url}: status {response.status_code}")
        return response.json()

    def post_json(self, url: str, payload: Mapping, **kwargs) -> dict:
        response = self.request("POST", url, json=payload, **kwargs)
        if response.status_code >= 400:
            raise SourceUnavailable(f"{url}: status {response.status_code}")
        return response.json()


PROPOSALS_QUERY = """\
query Proposals($spaces: [String!]!, $first: Int!, $createdGte: Int!, $state: String!) {
  proposals(
    first: $first
    where: { space_in: $spaces, state: $state, created_gte: $createdGte }
    orderBy: "created"
    orderDirection: asc
  ) {
    id
    space { id }
    title
    body
    choices
    created
    start
    end
  }
}
"""

PROPOSAL_BY_ID_QUERY = """\
query ProposalById($id: String!) {
  proposal(id: $id) {
    id
    space { id }
    title
    body
    choices
    created
    start
    end
  }
}
"""

VOTES_QUERY = """\
query Votes($proposal: String!, $first: Int!, $createdGte: Int!) {
  votes(
    first: $first
    where: { proposal: $proposal, created_gte: $createdGte }
    orderBy: "created"
    orderDirection: asc
  ) {
    id
    voter
    choice
    vp
    created
  }
}
"""


class SnapshotClient(HttpSource):
    """GraphQL client for a Snapshot-hub-compatible endpoint.

    Pages proposals and votes with a (created, id) cursor at a fixed page
    size; a page that yields no unseen records raises
    ``SourceProtocolError`` to catch looping cursors.
    """

    def __init__(self, endpoint: str, *, page_size: int = DEFAULT_PAGE_SIZE, **kwargs):
        super().__init__(**kwargs)
        self.endpoint = endpoint
        self.page_size = page_size

    def _execute(self, query: str, variables: Mapping, operation: str) -> dict:
        payload = {"query": query, "variables": dict(variables), "operationName": operation}
        body = self.post_json(self.endpoint, payload)
        if "errors" in body:
            raise SourceProtocolError(f"graphql errors: {body['errors']}")
        return body.get("data") or {}

    def _page_all(self, query: str, operation: str, collection: str,
                  variables: dict) -> list[dict]:
        seen: set[str] = set()
        out: list[dict] = []
        cursor = 0
        while True:
            variables = dict(variables, first=self.page_size, createdGte=cursor)
            rows = self._execute(query, variables, operation).get(collection) or []
            fresh = [r for r in rows if r.get("id") not in seen]
            if not fresh:
                if len(rows) >= self.page_size:
                    raise SourceProtocolError(
                        f"{collection}: paging cursor made no progress at {cursor}"
                    )
                break
            for row in fresh:
                seen.add(row.get("id"))
                out.append(row)
            if len(rows) < self.page_size:
                break
            cursor = max(int(r.get("created", 0)) for r in fresh)
        return out

    def fetch_proposals(
        self,
        space_ids: Sequence[str],
        *,
        state: str = "closed",
        counters: MutableMapping[str, int] | None = None,
    ) -> list[Proposal]:
        """All proposals of the given spaces, deterministically ordered."""
        if not space_ids:
            raise InvalidArgument("space_ids must be non-empty")
        proposals: list[Proposal] = []
        for space in space_ids:
            rows = self._page_all(
                PROPOSALS_QUERY, "Proposals", "proposals",
                {"spaces": [space], "state": state},
            )
            for row in rows:
                try:
                    proposals.append(_row_to_proposal(row))
                except (InvalidArgument, KeyError, TypeError, ValueError):
                    _bump(counters, "records_skipped")
        proposals.sort(key=lambda p: (p.space_id, p.created_at, p.proposal_id))
        return proposals

    def fetch_proposal(self, proposal_id: str) -> Proposal:
        data = self._execute(
            PROPOSAL_BY_ID_QUERY, {"id": proposal_id}, "ProposalById"
        )
        row = data.get("proposal")
        if not row:
            raise NotFound(f"proposal {proposal_id} unknown at hub")
        return _row_to_proposal(row)

    def fetch_votes(
        self,
        proposal: Proposal,
        *,
        counters: MutableMapping[str, int] | None = None,
    ) -> list[VoteRecord]:
        """Complete vote list with replaced ballots dropped.

        A voter's earlier ballots are superseded by their latest one, and
        ballots stamped outside the voting window are dropped; both cases
        increment warning counters.
        """
        rows = self._page_all(
            VOTES_QUERY, "Votes", "votes", {"proposal": proposal.proposal_id}
        )
        latest: dict[str, VoteRecord] = {}
        for row in rows:
            try:
                vote = _row_to_vote(row, proposal)
            except (InvalidArgument, KeyError, TypeError, ValueError):
                _bump(counters, "records_skipped")
                continue
            if not proposal.start <= vote.timestamp <= proposal.end:
                _bump(counters, "votes_outside_window")
                continue
            prior = latest.get(vote.voter)
            if prior is not None:
                _bump(counters, "duplicate_ballots_dropped")
                if vote.timestamp < prior.timestamp:
                    continue
            latest[vote.voter] = vote
        votes = list(latest.values())
        votes.sort(key=lambda v: (v.timestamp, v.voter))
        return votes

    def fetch_votes_by_id(
        self,
        proposal_id: str,
        *,
        counters: MutableMapping[str, int] | None = None,
    ) -> list[VoteRecord]:
        """Vote list for a proposal id; unknown ids raise ``NotFound``."""
        return self.fetch_votes(self.fetch_proposal(proposal_id), counters=counters)


def _row_to_proposal(row: Mapping) -> Proposal:
    return Proposal(
        proposal_id=row["id"],
        space_id=row["space"]["id"],
        title=row["title"],
        body=row.get("body"),
        choices=tuple(row["choices"]),
        created_at=int(row["created"]),
        start=int(row["start"]),
        end=int(row["end"]),
        calls_for_change=row.get("calls_for_change"),
        category=row.get("category"),
    )


def _row_to_vote(row: Mapping, proposal: Proposal) -> VoteRecord:
    choice = row["choice"]
    if isinstance(choice, dict):
        choice = {int(k): float(v) for k, v in choice.items()}
    elif isinstance(choice, list):
        choice = tuple(int(i) for i in choice)
    else:
        choice = int(choice)
    return VoteRecord(
        proposal_id=proposal.proposal_id,
        voter=row["voter"],
        choice=choice,
        vp=float(row["vp"]),
        timestamp=int(row["created"]),
    )


class DefiLlamaClient(HttpSource):
    """Client for a DeFiLlama-compatible TVL/treasury REST endpoint."""

    def __init__(self, endpoint: str, **kwargs):
        super().__init__(**kwargs)
        self.endpoint = endpoint.rstrip("/")

    def _fetch(self, path: str, protocol: str, metric: str,
               day_range: tuple[int, int]) -> MarketSeries:
        body = self.get_json(f"{self.endpoint}/{path}/{protocol}")
        rows = body.get("tvl") or []
        lo, hi = day_range
        samples = []
        for row in rows:
            day = int(row["date"]) // 86400
            if lo <= day <= hi:
                samples.append((day, float(row["totalLiquidityUSD"])))
        samples.sort(key=lambda s: s[0])
        if not samples:
            raise NoData(f"{protocol}/{metric}: no samples in range")
        return MarketSeries(protocol=protocol, metric=metric, samples=tuple(samples))

    def fetch_tvl(self, protocol: str, day_range: tuple[int, int]) -> MarketSeries:
        return self._fetch("protocol", protocol, "tvl", day_range)

    def fetch_treasury(self, protocol: str, day_range: tuple[int, int]) -> MarketSeries:
        return self._fetch("treasury", protocol, "treasury", day_range)


class CmcClient(HttpSource):
    """Client for a CoinMarketCap-compatible daily quote endpoint.

    The API key is read from the named environment variable and sent as
    the ``X-CMC_PRO_API_KEY`` header when present.
    """

    def __init__(self, endpoint: str, *, api_key_env: str = "GOVBENCH_CMC_API_KEY",
                 **kwargs):
        super().__init__(**kwargs)
        self.endpoint = endpoint.rstrip("/")
        self.api_key_env = api_key_env

    def _headers(self) -> dict:
        key = os.environ.get(self.api_key_env, "")
        return {"X-CMC_PRO_API_KEY": key} if key else {}

    def fetch_daily(self, symbol: str, day_range: tuple[int, int],
                    metric: str = "price") -> MarketSeries:
        lo, hi = day_range
        params = {
            "symbol": symbol,
            "time_start": day_to_str(lo),
            "time_end": day_to_str(hi),
            "interval": "daily",
        }
        body = self.get_json(
            f"{self.endpoint}/v2/cryptocurrency/quotes/historical",
            params=params,
            headers=self._headers(),
        )
        quotes = (body.get("data") or {}).get("quotes") or []
        samples = []
        for quote in quotes:
            day = str_to_day(str(quote["timestamp"])[:10])
            if lo <= day <= hi:
                samples.append((day, float(quote["quote"]["USD"]["price"])))
        samples.sort(key=lambda s: s[0])
        if not samples:
            raise NoData(f"{symbol}/{metric}: no samples in range")
        return MarketSeries(protocol=symbol, metric=metric, samples=tuple(samples))


def _bump(counters: MutableMapping[str, int] | None, key: str) -> None:
    if counters is not None:
        counters[key] = counters.get(key, 0) + 1
