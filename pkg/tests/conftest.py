from __future__ import annotations

import pytest

from govbench.core import Proposal, VoteRecord
from govbench.mockserver import MockHub
from govbench.synth import ScenarioSpec, generate_dataset


def make_proposal(
    pid="p1",
    choices=("Alpha", "Beta"),
    start=2000,
    end=10000,
    created=1000,
    space="dao.eth",
    title=None,
    **kwargs,
) -> Proposal:
    return Proposal(
        proposal_id=pid,
        space_id=space,
        title=title if title is not None else f"Proposal {pid}",
        choices=tuple(choices),
        created_at=created,
        start=start,
        end=end,
        **kwargs,
    )


def make_vote(pid="p1", voter="0xa", choice=1, vp=1.0, ts=2000) -> VoteRecord:
    return VoteRecord(
        proposal_id=pid, voter=voter, choice=choice, vp=vp, timestamp=ts
    )


@pytest.fixture
def proposal():
    return make_proposal()


@pytest.fixture(scope="session")
def synth_bundle():
    spec = ScenarioSpec(
        seed=42,
        n_proposals=10,
        voter_count=40,
        votes_per_proposal=(8, 30),
        contested_fraction=0.3,
        ballot_mix=(0.6, 0.2, 0.2),
    )
    return generate_dataset(spec)


@pytest.fixture(scope="session")
def synth_dataset(synth_bundle):
    return synth_bundle[0]


@pytest.fixture
def mock_hub(synth_dataset):
    with MockHub(synth_dataset) as hub:
        yield hub
