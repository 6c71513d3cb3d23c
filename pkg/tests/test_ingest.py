import pytest

from govbench.core import VoteRecord
from govbench.errors import (
    InvalidArgument,
    NoData,
    NotFound,
    SourceUnavailable,
)
from govbench.forum import classify_comment, lexicon_score, signal_from_comments
from govbench.ingest import ProtocolIds, fetch_market_series, ingest_spaces
from govbench.mockserver import MockHub
from govbench.sources import CmcClient, DefiLlamaClient, SnapshotClient, TokenBucket
from govbench.store import Dataset

from .conftest import make_proposal, make_vote


def fixture_dataset() -> Dataset:
    ds = Dataset()
    for i, pid in enumerate(("p-a", "p-b")):
        p = make_proposal(
            pid=pid, created=1000 + i, start=2000, end=10000, space="dao.eth"
        )
        ds.proposals[p.proposal_id] = p
    ds.votes["p-a"] = [
        make_vote(pid="p-a", voter="0x1", choice=1, vp=5.0, ts=2500),
        make_vote(pid="p-a", voter="0x2", choice=2, vp=3.0, ts=2600),
        make_vote(pid="p-a", voter="0x3", choice={1: 1, 2: 1}, vp=2.0, ts=2700),
    ]
    ds.votes["p-b"] = []
    return ds


def snapshot_client(hub, **kwargs):
    kwargs.setdefault("backoff_base", 0)
    return SnapshotClient(hub.endpoints()["snapshot"], **kwargs)


class TestFetchProposals:
    def test_fixture_proposals_ordered(self):
        with MockHub(fixture_dataset()) as hub:
            got = snapshot_client(hub).fetch_proposals(["dao.eth"])
        assert [p.proposal_id for p in got] == ["p-a", "p-b"]

    def test_empty_spaces_rejected(self):
        with MockHub(fixture_dataset()) as hub:
            with pytest.raises(InvalidArgument):
                snapshot_client(hub).fetch_proposals([])

    def test_paging_completes(self, synth_dataset):
        with MockHub(synth_dataset) as hub:
            got = snapshot_client(hub, page_size=3).fetch_proposals(["synth.eth"])
        assert len(got) == len(synth_dataset.proposals)

    def test_retries_then_succeeds(self):
        with MockHub(fixture_dataset()) as hub:
            hub.fail_next(2)
            client = snapshot_client(hub)
            got = client.fetch_proposals(["dao.eth"])
        assert len(got) == 2

    def test_source_unavailable_after_bounded_retries(self):
        with MockHub(fixture_dataset()) as hub:
            hub.fail_next(50)
            client = snapshot_client(hub, max_attempts=3)
            with pytest.raises(SourceUnavailable):
                client.fetch_proposals(["dao.eth"])
            assert hub.requests_served == 3


class TestFetchVotes:
    def test_fixture_ballots_parsed(self):
        ds = fixture_dataset()
        with MockHub(ds) as hub:
            client = snapshot_client(hub)
            proposal = client.fetch_proposal("p-a")
            votes = client.fetch_votes(proposal)
        assert len(votes) == 3
        assert all(isinstance(v, VoteRecord) for v in votes)
        assert votes[0].vp == 5.0
        assert votes[2].choice == {1: 1.0, 2: 1.0}

    def test_zero_ballots_is_empty_not_error(self):
        with MockHub(fixture_dataset()) as hub:
            client = snapshot_client(hub)
            proposal = client.fetch_proposal("p-b")
            assert client.fetch_votes(proposal) == []

    def test_unknown_proposal_not_found(self):
        with MockHub(fixture_dataset()) as hub:
            with pytest.raises(NotFound):
                snapshot_client(hub).fetch_proposal("nope")
            with pytest.raises(NotFound):
                snapshot_client(hub).fetch_votes_by_id("nope")

    def test_fetch_votes_by_id(self):
        with MockHub(fixture_dataset()) as hub:
            votes = snapshot_client(hub).fetch_votes_by_id("p-a")
        assert len(votes) == 3

    def test_duplicate_ballots_keep_latest(self):
        ds = fixture_dataset()
        ds.votes["p-a"].append(
            make_vote(pid="p-a", voter="0x1", choice=2, vp=5.0, ts=3000)
        )
        with MockHub(ds) as hub:
            client = snapshot_client(hub)
            counters = {}
            votes = client.fetch_votes(client.fetch_proposal("p-a"), counters=counters)
        kept = {v.voter: v for v in votes}
        assert kept["0x1"].choice == 2
        assert kept["0x1"].timestamp == 3000
        assert counters["duplicate_ballots_dropped"] == 1

    def test_out_of_window_votes_dropped(self):
        ds = fixture_dataset()
        ds.votes["p-a"].append(
            make_vote(pid="p-a", voter="0x9", choice=1, vp=1.0, ts=500)
        )
        with MockHub(ds) as hub:
            client = snapshot_client(hub)
            counters = {}
            votes = client.fetch_votes(client.fetch_proposal("p-a"), counters=counters)
        assert all(v.voter != "0x9" for v in votes)
        assert counters["votes_outside_window"] == 1

    def test_vote_paging_no_duplicates(self, synth_dataset):
        pid = sorted(synth_dataset.proposals)[0]
        with MockHub(synth_dataset) as hub:
            client = snapshot_client(hub, page_size=5)
            votes = client.fetch_votes(client.fetch_proposal(pid))
        voters = [v.voter for v in votes]
        assert len(voters) == len(set(voters))
        assert len(votes) == len(synth_dataset.votes[pid])


class TestMarketSeries:
    def llama(self, hub):
        return DefiLlamaClient(hub.endpoints()["defillama"], backoff_base=0)

    def cmc(self, hub):
        return CmcClient(hub.endpoints()["cmc"], backoff_base=0)

    def test_seven_day_price_fetch(self, synth_dataset):
        days = sorted(d for d, _ in synth_dataset.market[("synth.eth", "price")].samples)
        lo = days[0]
        with MockHub(synth_dataset) as hub:
            series = fetch_market_series(
                self.llama(hub),
                self.cmc(hub),
                ProtocolIds("synth.eth", "synth.eth"),
                "price",
                (lo, lo + 6),  # 7 days: the minimum span for a 3-day window
            )
        assert series.metric == "price"
        assert len(series.samples) == 7

    def test_gaps_preserved(self):
        ds = fixture_dataset()
        from govbench.store import MarketSeries

        ds.market[("dao.eth", "tvl")] = MarketSeries(
            "dao.eth", "tvl", ((10, 1.0), (11, 2.0), (13, 3.0), (14, 1.0),
                               (15, 2.0), (16, 2.5), (17, 2.0), (18, 1.0))
        )
        with MockHub(ds) as hub:
            series = fetch_market_series(
                self.llama(hub),
                self.cmc(hub),
                ProtocolIds("dao.eth", "dao.eth"),
                "tvl",
                (10, 18),
            )
        assert all(d != 12 for d, _ in series.samples)
        assert len(series.samples) == 8

    def test_index_metric_tagged(self, synth_dataset):
        days = sorted(d for d, _ in synth_dataset.market[("MKT100", "index")].samples)
        with MockHub(synth_dataset) as hub:
            series = fetch_market_series(
                self.llama(hub),
                self.cmc(hub),
                ProtocolIds("MKT100", "MKT100"),
                "index",
                (days[0], days[0] + 9),
            )
        assert series.metric == "index"

    def test_unknown_protocol_not_found(self):
        with MockHub(fixture_dataset()) as hub:
            with pytest.raises(NotFound):
                self.llama(hub).fetch_tvl("ghost", (0, 10))

    def test_empty_range_is_no_data(self, synth_dataset):
        with MockHub(synth_dataset) as hub:
            with pytest.raises(NoData):
                self.llama(hub).fetch_tvl("synth.eth", (1, 10))

    def test_short_range_rejected(self, synth_dataset):
        with MockHub(synth_dataset) as hub:
            with pytest.raises(InvalidArgument):
                fetch_market_series(
                    self.llama(hub),
                    self.cmc(hub),
                    ProtocolIds("synth.eth", "synth.eth"),
                    "tvl",
                    (0, 3),
                )


class TestIngestOrchestration:
    def test_full_space_ingest(self, synth_dataset):
        with MockHub(synth_dataset) as hub:
            got = ingest_spaces(
                snapshot=snapshot_client(hub),
                llama=DefiLlamaClient(hub.endpoints()["defillama"], backoff_base=0),
                cmc=CmcClient(hub.endpoints()["cmc"], backoff_base=0),
                spaces=["synth.eth"],
                index_symbol="MKT100",
            )
        assert len(got.proposals) == len(synth_dataset.proposals)
        assert ("MKT100", "index") in got.market
        assert ("synth.eth", "tvl") in got.market

    def test_forum_signals_from_file(self, tmp_path):
        ds = fixture_dataset()
        signal = signal_from_comments(
            "p-a", "https://forum/p-a", [(2500, "i support this, great benefit")]
        )
        from govbench.store import forum_to_record, write_jsonl

        path = tmp_path / "forum.jsonl"
        write_jsonl(path, [forum_to_record(signal)])
        with MockHub(ds) as hub:
            got = ingest_spaces(
                snapshot=snapshot_client(hub),
                llama=None,
                cmc=None,
                spaces=["dao.eth"],
                forum_source=path,
            )
        assert got.forum["p-a"][0].stance_score == 1.0


class TestLexiconScorer:
    def test_classify(self):
        assert classify_comment("I support this, great benefit") == 1
        assert classify_comment("too risky, oppose") == -1
        assert classify_comment("what is the timeline") == 0

    def test_score_is_pos_minus_neg_over_total(self):
        score, counts = lexicon_score(
            ["strong support", "i oppose", "timeline?", "great benefit"]
        )
        assert counts == (2, 1, 1)
        assert score == (2 - 1) / 4

    def test_signal_counts_match_timestamps(self):
        signal = signal_from_comments(
            "p", "u", [(5, "support"), (3, "oppose"), (9, "hm")]
        )
        assert signal.comment_timestamps == (3, 5, 9)
        assert sum(signal.comment_counts) == 3


def test_token_bucket_enforces_rate():
    import time

    bucket = TokenBucket(50)
    start = time.monotonic()
    for _ in range(60):
        bucket.acquire()
    # burst of 50 is free, the remaining 10 must wait ~0.2s
    assert time.monotonic() - start >= 0.15
