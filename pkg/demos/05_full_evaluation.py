"""End-to-end: synthetic DAO, decisions at both cutoffs, alignment report.

Generates a contested-heavy synthetic dataset, scores the token-majority
policy ex post against an ex-ante run of the same policy, computes market
windows, and prints the rendered Markdown report. Everything runs offline.
Run with:

    python3 demos/05_full_evaluation.py
"""
from govbench import compute_market_window, evaluate_dataset
from govbench.policy import build_decision_context, decide_baseline
from govbench.report import render_markdown
from govbench.synth import ScenarioSpec, generate_dataset

dataset, _ = generate_dataset(
    ScenarioSpec(
        seed=1234,
        n_proposals=16,
        voter_count=40,
        votes_per_proposal=(8, 30),
        contested_fraction=0.35,
        ballot_mix=(0.6, 0.2, 0.2),
    )
)

decisions, ex_ante = {}, {}
for pid in sorted(dataset.proposals):
    decisions[pid] = decide_baseline(
        build_decision_context(pid, dataset, "ex_post"), "token_majority"
    )
    ex_ante[pid] = decide_baseline(
        build_decision_context(pid, dataset, "ex_ante"), "token_majority"
    )

index = dataset.market.get(("MKT100", "index"))
windows = {}
for pid, proposal in dataset.proposals.items():
    windows[pid] = compute_market_window(
        proposal,
        {
            "price": dataset.market.get((proposal.space_id, "price")),
            "index": index,
            "tvl": dataset.market.get((proposal.space_id, "tvl")),
            "treasury": dataset.market.get((proposal.space_id, "treasury")),
        },
    )

report = evaluate_dataset(
    dataset,
    decisions,
    market_windows=windows,
    ex_ante_decisions=ex_ante,
)
print(render_markdown(report.to_json_dict()))
