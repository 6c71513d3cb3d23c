"""Decision contexts and policies, including the LLM adapter.

A decision context collects everything a policy may see at its temporal
cutoff: visible ballots, forum sentiment, vote dynamics, and similar past
proposals with their market aftermath. Baselines decide deterministically;
the LLM policy renders the prompt templates and talks to any
chat-completion endpoint (here: the bundled mock). Run with:

    python3 demos/04_decision_policies.py
"""
from govbench.mockserver import MockHub
from govbench.policy import (
    LlmConfig,
    build_decision_context,
    decide_baseline,
    decide_llm,
)
from govbench.prompts import render_decision_prompt
from govbench.synth import ScenarioSpec, generate_dataset

dataset, _ = generate_dataset(
    ScenarioSpec(seed=88, n_proposals=6, votes_per_proposal=(10, 25))
)
pid = sorted(dataset.proposals)[4]
proposal = dataset.proposals[pid]
print(f"deciding: {proposal.title!r} with choices {proposal.choices}")
print()

for cutoff in ("ex_ante", "ex_post"):
    context = build_decision_context(pid, dataset, cutoff)
    print(f"-- cutoff {cutoff}: {len(context.votes_visible)} ballots visible, "
          f"{len(context.similar_proposals)} similar proposals")
    for name in ("token_majority", "headcount_majority", "seeded_random"):
        decision = decide_baseline(context, name, seed=1)
        label = proposal.choices[decision.selected_option - 1]
        flag = " [fallback]" if decision.fallback else ""
        print(f"   {name:20} -> {label}{flag}")
print()

context = build_decision_context(pid, dataset, "ex_post")
prompt = render_decision_prompt(context)
print("decision prompt (first 18 lines):")
print("\n".join("  " + line for line in prompt.splitlines()[:18]))
print("  ...")
print()

# the mock endpoint speaks the same chat-completion wire shape as any provider
with MockHub(dataset, llm_responder=lambda payload: proposal.choices[0]) as hub:
    decision = decide_llm(context, LlmConfig(url=hub.endpoints()["llm"], model="demo"))
print(f"llm policy selected: {proposal.choices[decision.selected_option - 1]!r} "
      f"(justification: {decision.justification!r})")
