import math

import pytest

from govbench.dynamics import (
    build_participation_series,
    current_leader,
    features_bundle,
    features_csv_header,
    features_csv_row,
    half_slope_diff,
    lead_metrics,
    spike_metrics,
    stairwise_ratio,
)
from govbench.errors import DegenerateSeries

from .conftest import make_proposal, make_vote

WINDOW = make_proposal(start=0, end=8000, created=0)


def series_for(votes, proposal=WINDOW, counters=None):
    return build_participation_series(proposal, votes, counters)


def at_fraction(f: float) -> int:
    return int(f * 8000)


class TestSeriesConstruction:
    def test_quartile_assignment(self):
        votes = [
            make_vote(voter=f"0x{i}", choice=1, vp=1, ts=at_fraction(f))
            for i, f in enumerate((0.10, 0.30, 0.60, 0.90))
        ]
        series = series_for(votes)
        counts = [0, 0, 0, 0]
        for e in series.events:
            counts[series.quartile_of(e.timestamp)] += 1
        assert counts == [1, 1, 1, 1]

    def test_vote_exactly_at_end_is_q4(self):
        series = series_for([make_vote(voter="0x1", choice=1, vp=1, ts=8000)])
        assert series.quartile_of(8000) == 3

    def test_quartile_boundaries_are_half_open(self):
        series = series_for([])
        assert series.quartile_of(0) == 0
        assert series.quartile_of(1999) == 0
        assert series.quartile_of(2000) == 1
        assert series.quartile_of(6000) == 3

    def test_empty_votes_zeroed_meta(self):
        series = series_for([])
        assert series.meta.total_votes == 0
        assert series.meta.unique_voters == 0
        assert series.meta.first_ts is None
        assert series.meta.per_quartile_vp_sums == (0.0, 0.0, 0.0, 0.0)

    def test_out_of_window_votes_rejected_with_counter(self):
        counters = {}
        series = series_for(
            [
                make_vote(voter="0x1", choice=1, vp=1, ts=4000),
                make_vote(voter="0x2", choice=1, vp=1, ts=9000),
            ],
            counters=counters,
        )
        assert series.meta.total_votes == 1
        assert counters["votes_outside_window"] == 1

    def test_quartile_vp_sums_conserve(self):
        votes = [
            make_vote(voter=f"0x{i}", choice=1, vp=1.7 * i + 0.3, ts=at_fraction(i / 9))
            for i in range(9)
        ]
        series = series_for(votes)
        assert math.isclose(
            sum(series.meta.per_quartile_vp_sums),
            sum(v.vp for v in votes),
            rel_tol=1e-6,
        )


class TestLeadMetrics:
    def test_single_early_vote(self):
        series = series_for([make_vote(voter="0x1", choice=1, vp=5, ts=100)])
        leads = lead_metrics(series)
        assert leads["early_ratio"] == (1.0, 0.0)
        assert leads["lead_ratio_total"] == (1.0, 0.0)

    def test_alternating_leads_split_evenly(self):
        # replay by hand: leaders after each event are A, B, A, B
        votes = [
            make_vote(voter="0x1", choice=1, vp=10, ts=100),
            make_vote(voter="0x2", choice=2, vp=20, ts=200),
            make_vote(voter="0x3", choice=1, vp=20, ts=300),
            make_vote(voter="0x4", choice=2, vp=20, ts=400),
        ]
        leads = lead_metrics(series_for(votes))
        assert leads["lead_ratio_total"] == (0.5, 0.5)

    def test_all_ties_give_zero_vector(self):
        votes = [
            make_vote(voter=f"0x{i}", choice={1: 1, 2: 1}, vp=4, ts=100 + i)
            for i in range(3)
        ]
        leads = lead_metrics(series_for(votes))
        assert leads["lead_ratio_total"] == (0.0, 0.0)
        assert all(all(x == 0.0 for x in row) for row in leads["lead_ratio_by_quartile"])

    def test_quartile_rows_bounded_and_zero_when_empty(self):
        votes = [make_vote(voter="0x1", choice=1, vp=1, ts=100)]
        leads = lead_metrics(series_for(votes))
        for q, row in enumerate(leads["lead_ratio_by_quartile"]):
            for value in row:
                assert 0.0 <= value <= 1.0
            if q > 0:
                assert all(x == 0.0 for x in row)


class TestSpikeMetrics:
    def test_single_event_is_whole_mass(self):
        series = series_for([make_vote(voter="0x1", choice=1, vp=10, ts=100)])
        result = spike_metrics(series, winner=1)
        assert result["spike_index"] == 1.0
        assert result["spike_follow_support_ratio"] == 0.0
        assert result["spike_empty_tail"]

    def test_hand_replay(self):
        votes = [
            make_vote(voter=f"0x{i}", choice=1, vp=vp, ts=100 * (i + 1))
            for i, vp in enumerate([1, 1, 8, 1, 1])
        ]
        result = spike_metrics(series_for(votes), winner=1)
        assert math.isclose(result["spike_index"], 8 / 12)
        assert result["spike_follow_support_ratio"] == 1.0
        assert not result["spike_empty_tail"]

    def test_spike_as_last_event_flags_empty_tail(self):
        votes = [
            make_vote(voter="0x1", choice=1, vp=1, ts=100),
            make_vote(voter="0x2", choice=1, vp=9, ts=200),
        ]
        result = spike_metrics(series_for(votes), winner=1)
        assert result["spike_follow_support_ratio"] == 0.0
        assert result["spike_empty_tail"]

    def test_losing_option_spike_clamps_with_overflow(self):
        votes = [
            make_vote(voter="0x1", choice=1, vp=3, ts=100),
            make_vote(voter="0x2", choice=2, vp=50, ts=200),
        ]
        result = spike_metrics(series_for(votes), winner=1)
        assert result["spike_index"] == 1.0
        assert result["spike_overflow"]

    def test_earliest_spike_wins_ties(self):
        votes = [
            make_vote(voter="0x1", choice=1, vp=5, ts=100),
            make_vote(voter="0x2", choice=1, vp=5, ts=200),
            make_vote(voter="0x3", choice=1, vp=1, ts=300),
        ]
        result = spike_metrics(series_for(votes), winner=1)
        # tail after the first max event still carries 6 of 6 winner mass
        assert math.isclose(result["spike_follow_support_ratio"], 1.0)

    def test_zero_winner_mass_raises(self):
        series = series_for([make_vote(voter="0x1", choice=2, vp=5, ts=100)])
        with pytest.raises(DegenerateSeries):
            spike_metrics(series, winner=1)


class TestStairwiseRatio:
    def test_ten_equal_events(self):
        votes = [
            make_vote(voter=f"0x{i}", choice=1, vp=10, ts=100 + i) for i in range(10)
        ]
        assert math.isclose(stairwise_ratio(series_for(votes), 1), 0.9)

    def test_single_event_is_zero(self):
        series = series_for([make_vote(voter="0x1", choice=1, vp=10, ts=100)])
        assert stairwise_ratio(series, 1) == 0.0

    def test_whale_and_dust(self):
        votes = [make_vote(voter="0xw", choice=1, vp=90, ts=50)]
        votes += [
            make_vote(voter=f"0x{i}", choice=1, vp=1, ts=100 + i) for i in range(9)
        ]
        assert math.isclose(stairwise_ratio(series_for(votes), 1), 1 - 90 / 99)

    def test_no_supporting_events_raises(self):
        series = series_for([make_vote(voter="0x1", choice=2, vp=5, ts=100)])
        with pytest.raises(DegenerateSeries):
            stairwise_ratio(series, 1)


class TestHalfSlopeDiff:
    def test_uniform_equal_vp_is_zero(self):
        votes = [
            make_vote(voter=f"0x{i}", choice=1, vp=4, ts=at_fraction((i + 0.5) / 8))
            for i in range(8)
        ]
        assert abs(half_slope_diff(series_for(votes))) <= 1e-12

    def test_hand_computation(self):
        early = [
            make_vote(voter=f"0xe{i}", choice=1, vp=1, ts=at_fraction(0.1) + i)
            for i in range(4)
        ]
        late = [
            make_vote(voter=f"0xl{i}", choice=1, vp=3, ts=at_fraction(0.8) + i)
            for i in range(4)
        ]
        assert math.isclose(half_slope_diff(series_for(early + late)), 2.0)

    def test_all_events_early(self):
        votes = [
            make_vote(voter=f"0x{i}", choice=1, vp=2 + i, ts=100 + i) for i in range(3)
        ]
        assert math.isclose(half_slope_diff(series_for(votes)), -3.0)

    def test_midpoint_event_counts_late(self):
        votes = [make_vote(voter="0x1", choice=1, vp=6, ts=4000)]
        assert math.isclose(half_slope_diff(series_for(votes)), 6.0)


class TestFeatureBundle:
    def test_empty_series_degenerate(self):
        bundle = features_bundle(series_for([]))
        assert bundle.degenerate
        assert bundle.spike_index == 0.0
        assert bundle.winner == 0

    def test_winner_defaults_to_leader(self):
        votes = [
            make_vote(voter="0x1", choice=2, vp=9, ts=100),
            make_vote(voter="0x2", choice=1, vp=1, ts=200),
        ]
        series = series_for(votes)
        assert current_leader(series) == 2
        bundle = features_bundle(series)
        assert bundle.winner == 2
        assert not bundle.degenerate

    def test_csv_row_matches_header_width(self):
        votes = [make_vote(voter="0x1", choice=1, vp=3, ts=100)]
        series = series_for(votes)
        row = features_csv_row(series, features_bundle(series))
        assert len(row.split(",")) == len(features_csv_header().split(","))
