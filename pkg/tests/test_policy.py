import json

import pytest

from govbench.core import ForumSignal
from govbench.errors import NotFound, PolicyFailure, PolicyInapplicable
from govbench.mockserver import MockHub
from govbench.policy import (
    AuditLog,
    LlmConfig,
    build_decision_context,
    context_max_timestamp,
    decide_baseline,
    decide_llm,
    decision_to_record,
    parse_option_reply,
    record_to_decision,
    restrict_forum_signal,
)
from govbench.prompts import render_decision_prompt, render_messages
from govbench.sources import HttpSource
from govbench.store import Dataset

from .conftest import make_proposal, make_vote


def two_proposal_dataset() -> Dataset:
    ds = Dataset()
    past = make_proposal(
        pid="past",
        created=0,
        start=1000,
        end=2000,
        choices=("For", "Against"),
        title="Treasury diversification plan",
    )
    current = make_proposal(
        pid="cur",
        created=800_000,
        start=900_000,
        end=1_000_000,
        choices=("For", "Against"),
        title="Treasury diversification plan part two",
    )
    ds.proposals["past"] = past
    ds.proposals["cur"] = current
    ds.votes["past"] = [make_vote(pid="past", voter="0x1", choice=2, vp=5, ts=1500)]
    ds.votes["cur"] = [
        make_vote(pid="cur", voter="0x1", choice=1, vp=5, ts=910_000),
        make_vote(pid="cur", voter="0x2", choice=2, vp=9, ts=950_000),
    ]
    ds.forum["cur"] = [
        ForumSignal(
            proposal_id="cur",
            url="https://forum/cur",
            stance_score=0.5,
            sentiment=0.5,
            comment_counts=(3, 1, 2),
            comment_timestamps=(905_000, 906_000, 920_000, 940_000, 960_000, 990_000),
        )
    ]
    return ds


class TestContextConstruction:
    def test_ex_ante_has_zero_votes(self, synth_dataset):
        for pid in sorted(synth_dataset.proposals)[:4]:
            context = build_decision_context(pid, synth_dataset, "ex_ante")
            assert context.votes_visible == ()
            assert context.cutoff_kind == "ex_ante"

    def test_ex_post_sees_every_ballot(self):
        ds = two_proposal_dataset()
        context = build_decision_context("cur", ds, "ex_post")
        assert len(context.votes_visible) == len(ds.votes["cur"])

    def test_mid_window_cutoff_filters(self):
        ds = two_proposal_dataset()
        context = build_decision_context("cur", ds, 920_000)
        assert [v.voter for v in context.votes_visible] == ["0x1"]
        assert context.cutoff_kind == "custom"

    def test_missing_proposal(self):
        with pytest.raises(NotFound):
            build_decision_context("ghost", two_proposal_dataset(), "ex_post")

    def test_similar_proposals_same_space_closed_before_cutoff(self):
        ds = two_proposal_dataset()
        context = build_decision_context("cur", ds, "ex_ante")
        assert [s.proposal.proposal_id for s in context.similar_proposals] == ["past"]
        assert context.similar_proposals[0].final_option == 2
        assert context.similar_proposals[0].overlap > 0

    def test_look_ahead_audit(self, synth_dataset):
        for pid in sorted(synth_dataset.proposals):
            for cutoff in ("ex_ante", "ex_post"):
                context = build_decision_context(pid, synth_dataset, cutoff)
                latest = context_max_timestamp(context, synth_dataset)
                assert latest is None or latest <= context.cutoff

    def test_forum_cutoff_restriction(self):
        ds = two_proposal_dataset()
        context = build_decision_context("cur", ds, 920_000)
        signal = context.forum_visible[0]
        assert signal.comment_timestamps == (905_000, 906_000, 920_000)
        assert sum(signal.comment_counts) == 3


class TestForumRestriction:
    SIGNAL = ForumSignal(
        proposal_id="p",
        url="u",
        stance_score=0.2,
        sentiment=0.1,
        comment_counts=(4, 2, 2),
        comment_timestamps=(10, 20, 30, 40, 50, 60, 70, 80),
    )

    def test_unrestricted_when_all_visible(self):
        assert restrict_forum_signal(self.SIGNAL, 80, 100) is self.SIGNAL

    def test_none_when_nothing_visible(self):
        assert restrict_forum_signal(self.SIGNAL, 5, 100) is None

    def test_counts_rescaled_to_visible_total(self):
        restricted = restrict_forum_signal(self.SIGNAL, 40, 100)
        assert restricted.comment_timestamps == (10, 20, 30, 40)
        assert sum(restricted.comment_counts) == 4
        assert restricted.comment_counts == (2, 1, 1)

    def test_without_timestamps_needs_elapsed_window(self):
        signal = ForumSignal("p", "u", 0.0, 0.0, comment_counts=(1, 1, 1))
        assert restrict_forum_signal(signal, 50, 100) is None
        assert restrict_forum_signal(signal, 100, 100) is signal


class TestBaselines:
    def test_ex_post_token_majority_matches_tally(self, synth_dataset):
        from govbench.core import dedupe_latest, tally_outcome

        for pid in sorted(synth_dataset.proposals):
            context = build_decision_context(pid, synth_dataset, "ex_post")
            decision = decide_baseline(context, "token_majority")
            outcome = tally_outcome(
                synth_dataset.proposals[pid],
                dedupe_latest(synth_dataset.votes[pid]),
            )
            if not outcome.tie:
                assert decision.selected_option == outcome.final_option

    def test_ex_ante_token_majority_falls_back_flagged(self):
        context = build_decision_context("cur", two_proposal_dataset(), "ex_ante")
        decision = decide_baseline(context, "token_majority")
        assert decision.selected_option == 1
        assert decision.fallback

    def test_headcount_differs_from_token_when_whale_disagrees(self):
        ds = two_proposal_dataset()
        ds.votes["cur"].append(
            make_vote(pid="cur", voter="0x3", choice=1, vp=1, ts=960_000)
        )
        context = build_decision_context("cur", ds, "ex_post")
        token = decide_baseline(context, "token_majority")
        head = decide_baseline(context, "headcount_majority")
        assert token.selected_option == 2  # 9 vp vs 6 vp
        assert head.selected_option == 1  # 2 voters vs 1

    def test_sentiment_sign_binary(self):
        ds = two_proposal_dataset()
        context = build_decision_context("cur", ds, "ex_post")
        decision = decide_baseline(context, "sentiment_sign")
        assert decision.selected_option == 1  # positive sentiment, "For"

    def test_sentiment_sign_negative_and_empty_pick_other(self):
        ds = two_proposal_dataset()
        ds.forum["cur"] = [
            ForumSignal("cur", "u", -0.5, -0.5, (0, 3, 0), (905_000, 906_000, 907_000))
        ]
        context = build_decision_context("cur", ds, "ex_post")
        assert decide_baseline(context, "sentiment_sign").selected_option == 2
        ds.forum["cur"] = []
        context = build_decision_context("cur", ds, "ex_post")
        assert decide_baseline(context, "sentiment_sign").selected_option == 2

    def test_sentiment_sign_never_selects_abstain(self):
        ds = Dataset()
        p = make_proposal(pid="abst", choices=("Abstain", "For", "Against"))
        ds.proposals["abst"] = p
        ds.votes["abst"] = [make_vote(pid="abst", voter="0x1", choice=1, ts=2500)]
        ds.forum["abst"] = [ForumSignal("abst", "u", 0.9, 0.9)]
        context = build_decision_context("abst", ds, "ex_post")
        decision = decide_baseline(context, "sentiment_sign")
        assert decision.selected_option == 2  # "For", not "Abstain"

    def test_sentiment_sign_rejects_multi(self, synth_dataset):
        multi = next(
            pid
            for pid, p in sorted(synth_dataset.proposals.items())
            if p.kind == "multi"
        )
        context = build_decision_context(multi, synth_dataset, "ex_post")
        with pytest.raises(PolicyInapplicable):
            decide_baseline(context, "sentiment_sign")

    def test_seeded_random_is_deterministic(self, synth_dataset):
        pid = sorted(synth_dataset.proposals)[0]
        context = build_decision_context(pid, synth_dataset, "ex_post")
        first = decide_baseline(context, "seeded_random", seed=42)
        second = decide_baseline(context, "seeded_random", seed=42)
        assert first == second
        options = {
            decide_baseline(context, "seeded_random", seed=s).selected_option
            for s in range(24)
        }
        assert len(options) > 1

    def test_decision_record_round_trip(self):
        context = build_decision_context("cur", two_proposal_dataset(), "ex_post")
        decision = decide_baseline(context, "token_majority")
        assert record_to_decision(decision_to_record(decision)) == decision


class TestPromptRendering:
    def test_contains_title_and_instruction_line(self):
        context = build_decision_context("cur", two_proposal_dataset(), "ex_post")
        system_text, user_text = render_messages(context)
        assert "Choose exactly one option from the available choices." in system_text
        assert (
            "## Objective: Choose exactly one option from the proposal's choices"
            in user_text
        )
        assert "Treasury diversification plan part two" in user_text

    def test_rendering_is_deterministic(self):
        a = render_decision_prompt(
            build_decision_context("cur", two_proposal_dataset(), "ex_post")
        )
        b = render_decision_prompt(
            build_decision_context("cur", two_proposal_dataset(), "ex_post")
        )
        assert a.encode() == b.encode()

    def test_sections_reflect_context(self):
        context = build_decision_context("cur", two_proposal_dataset(), "ex_post")
        text = render_decision_prompt(context)
        assert "### Vote progress" in text
        assert "### Historical lessons" in text
        assert "3 positive, 1 negative, 2 neutral" in text


class TestOptionParsing:
    CHOICES = ("For", "Against", "Abstain")

    def test_exact_match(self):
        assert parse_option_reply("Against", self.CHOICES) == 2

    def test_case_insensitive(self):
        assert parse_option_reply("against", self.CHOICES) == 2

    def test_unique_prefix(self):
        assert parse_option_reply("Abst", self.CHOICES) == 3

    def test_multiline_with_justification(self):
        reply = "For\nBecause the treasury needs diversification."
        assert parse_option_reply(reply, self.CHOICES) == 1

    def test_punctuation_stripped(self):
        assert parse_option_reply('"For".', self.CHOICES) == 1

    def test_ambiguous_prefix_fails(self):
        assert parse_option_reply("A", self.CHOICES) is None
        assert parse_option_reply("total gibberish", self.CHOICES) is None


class TestLlmPolicy:
    def run_llm(self, responder, tmp_path, dataset=None):
        ds = dataset or two_proposal_dataset()
        with MockHub(ds, llm_responder=responder) as hub:
            config = LlmConfig(url=hub.endpoints()["llm"], model="mock")
            audit = AuditLog(tmp_path / "audit.jsonl")
            context = build_decision_context("cur", ds, "ex_post")
            decision = decide_llm(
                context,
                config,
                source=HttpSource(backoff_base=0),
                audit=audit,
            )
        return decision, tmp_path / "audit.jsonl"

    def test_label_reply_selected(self, tmp_path):
        decision, audit_path = self.run_llm(lambda payload: "Against", tmp_path)
        assert decision.selected_option == 2
        assert decision.policy_id == "llm"
        records = [json.loads(line) for line in audit_path.read_text().splitlines()]
        assert len(records) == 1
        assert records[0]["parsed_option"] == 2
        assert records[0]["raw_reply"] == "Against"

    def test_gibberish_twice_fails_hard(self, tmp_path):
        with pytest.raises(PolicyFailure):
            self.run_llm(lambda payload: "beep boop", tmp_path)
        records = [
            json.loads(line) for line in (tmp_path / "audit.jsonl").read_text().splitlines()
        ]
        assert len(records) == 2
        assert records[1]["parsed_option"] is None

    def test_reask_recovers(self, tmp_path):
        calls = []

        def responder(payload):
            calls.append(payload)
            if len(calls) == 1:
                return "hmm let me think"
            assert "verbatim" in payload["messages"][-1]["content"]
            return "For"

        decision, audit_path = self.run_llm(responder, tmp_path)
        assert decision.selected_option == 1
        assert len(calls) == 2
        assert len(audit_path.read_text().splitlines()) == 2

    def test_justification_preserved(self, tmp_path):
        reply = "Against\nThe risk outweighs the benefit."
        decision, _ = self.run_llm(lambda payload: reply, tmp_path)
        assert decision.justification == reply
