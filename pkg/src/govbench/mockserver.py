"""Fixture-backed mock of every external service, for offline runs.

One localhost HTTP server impersonates the Snapshot hub (GraphQL), the
DeFiLlama and CoinMarketCap REST endpoints, and a chat-completion LLM
endpoint, all serving from an in-memory :class:`~govbench.store.Dataset`.
Wire shapes match what the real clients consume, so the full pipeline can
run against it without touching the network.
"""
from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Mapping
from urllib.parse import parse_qs, urlparse

from .store import Dataset, day_to_str, str_to_day

LlmResponder = Callable[[Mapping], str]


def _default_llm_responder(payload: Mapping) -> str:
    """Reply with the first label from the prompt's choices line."""
    for message in payload.get("messages", []):
        for line in str(message.get("content", "")).splitlines():
            if line.startswith("- Choices: "):
                labels = line[len("- Choices: "):].split(" | ")
                if labels:
                    return labels[0].split(") ", 1)[-1]
    return "Abstain"


class MockHub:
    """Controller for the mock server; use as a context manager."""

    def __init__(self, dataset: Dataset, *, llm_responder: LlmResponder | None = None):
        self.dataset = dataset
        self.llm_responder = llm_responder or _default_llm_responder
        self.requests_served = 0
        self._fail_budget = 0
        self._fail_status = 500
        self._lock = threading.Lock()
        self._server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    # -- lifecycle ---------------------------------------------------------
    def start(self) -> "MockHub":
        handler = _make_handler(self)
        self._server = ThreadingHTTPServer(("127.0.0.1", 0), handler)
        self._thread = threading.Thread(
            target=lambda: self._server.serve_forever(poll_interval=0.02),
            daemon=True,
        )
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None

    def __enter__(self) -> "MockHub":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    @property
    def port(self) -> int:
        assert self._server is not None, "server not started"
        return self._server.server_address[1]

    @property
    def base_url(self) -> str:
        return f"http://127.0.0.1:{self.port}"

    def endpoints(self) -> dict[str, str]:
        base = self.base_url
        return {
            "snapshot": f"{base}/graphql",
            "defillama": base,
            "cmc": base,
            "llm": f"{base}/v1/chat/completions",
        }

    def fail_next(self, n: int, status: int = 500) -> None:
        """Make the next ``n`` requests fail with ``status``."""
        with self._lock:
            self._fail_budget = n
            self._fail_status = status

    def _take_failure(self) -> int | None:
        with self._lock:
            self.requests_served += 1
            if self._fail_budget > 0:
                self._fail_budget -= 1
                return self._fail_status
        return None

    # -- handlers ----------------------------------------------------------
    def handle_graphql(self, payload: Mapping) -> dict:
        operation = payload.get("operationName") or ""
        variables = payload.get("variables") or {}
        if operation == "Proposals":
            return {"data": {"proposals": self._proposals_page(variables)}}
        if operation == "ProposalById":
            row = None
            proposal = self.dataset.proposals.get(variables.get("id"))
            if proposal is not None:
                row = _proposal_row(proposal)
            return {"data": {"proposal": row}}
        if operation == "Votes":
            return {"data": {"votes": self._votes_page(variables)}}
        return {"errors": [{"message": f"unknown operation {operation!r}"}]}

    def _proposals_page(self, variables: Mapping) -> list[dict]:
        spaces = set(variables.get("spaces") or [])
        created_gte = int(variables.get("createdGte") or 0)
        first = int(variables.get("first") or 1000)
        rows = [
            p
            for p in self.dataset.proposals.values()
            if p.space_id in spaces and p.created_at >= created_gte
        ]
        rows.sort(key=lambda p: (p.created_at, p.proposal_id))
        return [_proposal_row(p) for p in rows[:first]]

    def _votes_page(self, variables: Mapping) -> list[dict]:
        pid = variables.get("proposal")
        created_gte = int(variables.get("createdGte") or 0)
        first = int(variables.get("first") or 1000)
        rows = [
            v for v in self.dataset.votes.get(pid, []) if v.timestamp >= created_gte
        ]
        rows.sort(key=lambda v: (v.timestamp, v.voter))
        out = []
        for v in rows[:first]:
            choice = v.choice
            if isinstance(choice, Mapping):
                choice = {str(k): float(w) for k, w in sorted(choice.items())}
            elif isinstance(choice, (list, tuple)):
                choice = [int(i) for i in choice]
            out.append(
                {
                    "id": f"{v.proposal_id}:{v.voter}:{v.timestamp}",
                    "voter": v.voter,
                    "choice": choice,
                    "vp": v.vp,
                    "created": v.timestamp,
                }
            )
        return out

    def handle_llama(self, kind: str, protocol: str) -> dict | None:
        metric = "tvl" if kind == "protocol" else "treasury"
        series = self.dataset.market.get((protocol, metric))
        if series is None:
            return None
        return {
            "tvl": [
                {"date": day * 86400, "totalLiquidityUSD": value}
                for day, value in series.samples
            ]
        }

    def handle_cmc(self, params: Mapping) -> dict | None:
        symbol = (params.get("symbol") or [""])[0]
        series = self.dataset.market.get((symbol, "price")) or self.dataset.market.get(
            (symbol, "index")
        )
        if series is None:
            return None
        lo = str_to_day((params.get("time_start") or ["1970-01-01"])[0])
        hi = str_to_day((params.get("time_end") or ["9999-01-01"])[0])
        quotes = [
            {
                "timestamp": f"{day_to_str(day)}T00:00:00.000Z",
                "quote": {"USD": {"price": value}},
            }
            for day, value in series.samples
            if lo <= day <= hi
        ]
        return {"data": {"quotes": quotes}}


def _proposal_row(p) -> dict:
    return {
        "id": p.proposal_id,
        "space": {"id": p.space_id},
        "title": p.title,
        "body": p.body,
        "choices": list(p.choices),
        "created": p.created_at,
        "start": p.start,
        "end": p.end,
        "calls_for_change": p.calls_for_change,
        "category": p.category,
    }


def _make_handler(hub: MockHub):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):  # keep test output quiet
            pass

        def _reply(self, status: int, body: Mapping | None) -> None:
            data = json.dumps(body if body is not None else {}).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def _read_json(self) -> dict:
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length) if length else b"{}"
            return json.loads(raw.decode("utf-8"))

        def do_POST(self):
            failure = hub._take_failure()
            if failure is not None:
                self._reply(failure, {"error": "injected failure"})
                return
            path = urlparse(self.path).path
            if path == "/graphql":
                self._reply(200, hub.handle_graphql(self._read_json()))
            elif path == "/v1/chat/completions":
                payload = self._read_json()
                content = hub.llm_responder(payload)
                self._reply(
                    200,
                    {"choices": [{"message": {"role": "assistant", "content": content}}]},
                )
            else:
                self._reply(404, {"error": f"no route {path}"})

        def do_GET(self):
            failure = hub._take_failure()
            if failure is not None:
                self._reply(failure, {"error": "injected failure"})
                return
            parsed = urlparse(self.path)
            parts = [p for p in parsed.path.split("/") if p]
            if len(parts) == 2 and parts[0] in ("protocol", "treasury"):
                body = hub.handle_llama(parts[0], parts[1])
                self._reply(200 if body is not None else 404, body)
            elif parsed.path == "/v2/cryptocurrency/quotes/historical":
                body = hub.handle_cmc(parse_qs(parsed.query))
                self._reply(200 if body is not None else 404, body)
            else:
                self._reply(404, {"error": f"no route {parsed.path}"})

    return Handler
