"""Ballots, normalization, and tallies.

Every ballot type (single choice, approval list, weighted map) reduces to
one dense allocation vector over the proposal's options; tallies then sum
voting power through those allocations. Run with:

    python3 demos/01_ballots_and_tallies.py
"""
from govbench import Proposal, VoteRecord, normalize_choice, tally_outcome

proposal = Proposal(
    proposal_id="demo-1",
    space_id="demo.eth",
    title="Raise the liquidity incentive budget",
    choices=("For", "Against", "Abstain"),
    created_at=0,
    start=100,
    end=100_000,
)
print(f"proposal: {proposal.title}")
print(f"choices:  {proposal.choices}  ->  kind={proposal.kind}")
print()

print("ballot expressions and their allocations:")
for expr in (1, [1, 3], {1: 2.0, 2: 6.0}):
    weights = normalize_choice(expr, proposal.n_options)
    print(f"  {expr!r:20} -> {[round(a, 4) for a in weights.allocation]}")
print()

votes = [
    VoteRecord("demo-1", "0xaaa", 1, vp=5.0, timestamp=200),
    VoteRecord("demo-1", "0xbbb", 1, vp=3.0, timestamp=300),
    VoteRecord("demo-1", "0xccc", 2, vp=2.0, timestamp=400),
    VoteRecord("demo-1", "0xddd", {1: 1.0, 2: 1.0}, vp=4.0, timestamp=500),
]
outcome = tally_outcome(proposal, votes)
print("tally over", len(votes), "ballots:")
for label, mass in zip(proposal.choices, outcome.per_option_vp):
    print(f"  {label:8} {mass:8.2f} VP  ({mass / outcome.total_vp:.1%})")
print(f"winner: option {outcome.final_option} "
      f"({proposal.choices[outcome.final_option - 1]}), tie={outcome.tie}")
