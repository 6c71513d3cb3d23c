"""Event-study windows around a proposal's close.

Given daily price/TVL/treasury series, the window compares the three days
before the close against the three days after it (the close day itself is
excluded), producing a percentage move for prices, an index-adjusted
excess return, and fractional changes for TVL and treasury. Run with:

    python3 demos/03_market_event_windows.py
"""
from govbench import Proposal, compute_market_window
from govbench.store import MarketSeries

DAY = 86400
proposal = Proposal(
    proposal_id="demo-3",
    space_id="demo.eth",
    title="Deploy on the new rollup",
    choices=("For", "Against"),
    created_at=90 * DAY,
    start=95 * DAY,
    end=100 * DAY + 7 * 3600,  # closes on epoch day 100
)

def series(metric, values, protocol="demo.eth"):
    return MarketSeries(protocol, metric, tuple((95 + i, v) for i, v in enumerate(values)))

bundle = {
    # a clean +4% step after the event
    "price": series("price", [50.0, 50.5, 49.5, 50.0, 49.0, 50.0, 52.0, 52.0, 52.0, 51.8]),
    # broad market rose ~1% at the same time
    "index": series("index", [1000.0] * 6 + [1010.0] * 4, protocol="MKT100"),
    # deposits drained slightly
    "tvl": series("tvl", [2.0e6] * 6 + [1.9e6] * 4),
    "treasury": series("treasury", [5.0e5] * 10),
}

window = compute_market_window(proposal, bundle, window_days=3)
print(f"event window: +/-{window.window_days} days around the close, close day excluded")
print(f"  price change      {window.price_pct_change:+.3f}%")
print(f"  adjusted return   {window.adj_return:+.3f}%  (index move removed)")
print(f"  TVL change        {window.tvl_abnormal:+.4f}  (fraction)")
print(f"  treasury change   {window.treasury_abnormal:+.4f}  (fraction)")
print(f"  coverage          {dict(window.data_coverage)}")
