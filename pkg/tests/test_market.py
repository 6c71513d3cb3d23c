import math

import pytest

from govbench.errors import DegenerateBaseline, NoData
from govbench.market import (
    compute_market_window,
    market_adjusted_return,
    record_to_window,
    window_to_record,
    windowed_pct_change,
)
from govbench.store import MarketSeries

from .conftest import make_proposal

# proposal end lands mid-day on epoch day 100
EVENT_PROPOSAL = make_proposal(
    start=99 * 86400, end=100 * 86400 + 3600, created=98 * 86400
)


def daily(metric, values, start_day=95, protocol="dao.eth", skip=()):
    samples = tuple(
        (start_day + i, v) for i, v in enumerate(values) if start_day + i not in skip
    )
    return MarketSeries(protocol, metric, samples)


class TestWindowedPctChange:
    def test_plus_ten_percent(self):
        assert math.isclose(
            windowed_pct_change([100, 100, 100], [110, 110, 110]), 10.0
        )

    def test_identical_means_zero(self):
        assert windowed_pct_change([5, 7], [6, 6]) == 0.0

    def test_hand_computed_means(self):
        assert windowed_pct_change([80, 120], [90, 110]) == 0.0

    def test_empty_segment(self):
        with pytest.raises(NoData):
            windowed_pct_change([], [1.0])
        with pytest.raises(NoData):
            windowed_pct_change([1.0], [])

    def test_degenerate_baseline(self):
        with pytest.raises(DegenerateBaseline):
            windowed_pct_change([0.0, 0.0], [1.0])


class TestAdjustedReturn:
    def test_token_up_index_up(self):
        result = market_adjusted_return([100], [110], [100], [104])
        assert math.isclose(result, 6.0)

    def test_equal_moves_cancel(self):
        assert market_adjusted_return([50], [55], [200], [220]) == 0.0

    def test_token_lags_index(self):
        result = market_adjusted_return([100], [105], [100], [108])
        assert math.isclose(result, -3.0)

    def test_error_names_failing_series(self):
        with pytest.raises(DegenerateBaseline) as exc_info:
            market_adjusted_return([100], [105], [0.0], [108])
        assert exc_info.value.series == "index"


class TestComputeWindow:
    def test_tvl_abnormal(self):
        series = daily("tvl", [200.0] * 6 + [210.0] * 4)
        window = compute_market_window(EVENT_PROPOSAL, {"tvl": series})
        assert math.isclose(window.tvl_abnormal, 0.05)
        assert window.price_pct_change is None
        assert window.data_coverage["tvl"] == (3, 3)

    def test_missing_series_field_absent(self):
        window = compute_market_window(EVENT_PROPOSAL, {})
        assert window.treasury_abnormal is None
        assert window.data_coverage["treasury"] == (0, 0)

    def test_event_day_excluded(self):
        # a wild value on the event day itself must not leak into segments
        values = [100.0] * 5 + [999999.0] + [100.0] * 4
        series = daily("price", values)
        window = compute_market_window(EVENT_PROPOSAL, {"price": series})
        assert window.price_pct_change == 0.0

    def test_window_locality(self):
        base = daily("price", [100.0] * 10)
        spiked = daily("price", [100.0] * 10)
        far = tuple([(80, 5.0)] + list(spiked.samples) + [(130, 900.0)])
        spiked = MarketSeries("dao.eth", "price", far)
        a = compute_market_window(EVENT_PROPOSAL, {"price": base})
        b = compute_market_window(EVENT_PROPOSAL, {"price": spiked})
        assert a.price_pct_change == b.price_pct_change

    def test_gap_days_skipped_with_coverage(self):
        series = daily("tvl", [100.0] * 10, skip=(98,))
        window = compute_market_window(EVENT_PROPOSAL, {"tvl": series})
        assert window.data_coverage["tvl"] == (2, 3)
        assert window.tvl_abnormal == 0.0

    def test_one_sided_coverage_leaves_field_absent(self):
        series = daily("tvl", [100.0] * 10, skip=(101, 102, 103))
        window = compute_market_window(EVENT_PROPOSAL, {"tvl": series})
        assert window.tvl_abnormal is None
        assert window.data_coverage["tvl"] == (3, 0)

    def test_adjusted_return_needs_both_series(self):
        price = daily("price", [100.0] * 6 + [110.0] * 4)
        index = daily("index", [1000.0] * 6 + [1040.0] * 4, protocol="MKT")
        with_index = compute_market_window(
            EVENT_PROPOSAL, {"price": price, "index": index}
        )
        without = compute_market_window(EVENT_PROPOSAL, {"price": price})
        assert math.isclose(with_index.adj_return, 6.0)
        assert without.adj_return is None

    def test_scale_invariance(self):
        series = daily("tvl", [123.0, 130.0, 120.0, 140.0, 150.0, 160.0, 170.0, 165.0, 180.0, 175.0])
        scaled = MarketSeries(
            "dao.eth", "tvl", tuple((d, v * 37.5) for d, v in series.samples)
        )
        a = compute_market_window(EVENT_PROPOSAL, {"tvl": series})
        b = compute_market_window(EVENT_PROPOSAL, {"tvl": scaled})
        assert math.isclose(a.tvl_abnormal, b.tvl_abnormal, rel_tol=1e-12)

    def test_sign_correctness(self):
        up = daily("tvl", [100.0] * 6 + [120.0] * 4)
        down = daily("tvl", [100.0] * 6 + [90.0] * 4)
        assert compute_market_window(EVENT_PROPOSAL, {"tvl": up}).tvl_abnormal > 0
        assert compute_market_window(EVENT_PROPOSAL, {"tvl": down}).tvl_abnormal < 0

    def test_record_round_trip(self):
        series = daily("tvl", [200.0] * 6 + [210.0] * 4)
        window = compute_market_window(EVENT_PROPOSAL, {"tvl": series})
        assert record_to_window(window_to_record(window)) == window
