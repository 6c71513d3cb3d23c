import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from govbench.cli import main
from govbench.mockserver import MockHub
from govbench.synth import ScenarioSpec, generate_dataset

DATA_DIR = Path(__file__).parent / "data"

GOLDEN_SCENARIO = DATA_DIR / "golden_scenario.json"
GOLDEN_REPORT = DATA_DIR / "golden_report.json"


def write_config(path: Path, hub: MockHub, *, workers: int = 1, **extra) -> Path:
    config = {
        "dataset_root": "data",
        "output_root": "out",
        "spaces": ["synth.eth"],
        "sources": {
            "snapshot_endpoint": hub.endpoints()["snapshot"],
            "defillama_endpoint": hub.endpoints()["defillama"],
            "cmc_endpoint": hub.endpoints()["cmc"],
            "llm_endpoint": hub.endpoints()["llm"],
            "llm_model": "mock",
            "index_symbol": "MKT100",
            "requests_per_second": 1000,
        },
        "policy": "token_majority",
        "cutoff": "ex_post",
        "workers": workers,
        "seed": 7,
    }
    config.update(extra)
    target = path / "config.json"
    target.write_text(json.dumps(config, indent=2))
    return target


def invoke(config_path: Path, *args):
    runner = CliRunner()
    return runner.invoke(main, ["-c", str(config_path), *args], catch_exceptions=False)


def run_pipeline(tmp_path: Path, dataset, *, workers: int = 1) -> Path:
    """ingest -> features -> simulate x2 -> evaluate -> report."""
    tmp_path.mkdir(parents=True, exist_ok=True)
    with MockHub(dataset) as hub:
        config_path = write_config(tmp_path, hub, workers=workers)
        for args in (
            ("ingest",),
            ("features",),
            ("simulate", "--cutoff", "ex-post"),
            ("simulate", "--cutoff", "ex-ante"),
            (
                "evaluate",
                "--ex-ante-decisions",
                str(tmp_path / "out" / "decisions-token_majority-ex_ante.jsonl"),
            ),
            ("report",),
        ):
            result = invoke(config_path, *args)
            assert result.exit_code == 0, f"{args}: {result.output}"
    return tmp_path / "out" / "report.json"


@pytest.fixture(scope="module")
def golden_dataset():
    spec = ScenarioSpec.from_file(GOLDEN_SCENARIO)
    dataset, _ = generate_dataset(spec)
    return dataset


class TestExitCodes:
    def test_config_error_is_exit_2(self, tmp_path, synth_dataset):
        with MockHub(synth_dataset) as hub:
            config_path = write_config(tmp_path, hub, policy="clairvoyant")
            result = invoke(config_path, "ingest")
        assert result.exit_code == 2

    def test_missing_config_file_is_exit_2(self, tmp_path):
        runner = CliRunner()
        result = runner.invoke(
            main, ["-c", str(tmp_path / "nope.json"), "ingest"], catch_exceptions=False
        )
        assert result.exit_code == 2

    def test_upstream_failure_is_exit_3(self, tmp_path, synth_dataset):
        with MockHub(synth_dataset) as hub:
            config_path = write_config(tmp_path, hub)
            hub.fail_next(1000)
            result = invoke(
                config_path, "ingest"
            )
        assert result.exit_code == 3

    def test_evaluate_without_decisions_is_exit_4(self, tmp_path, synth_dataset):
        with MockHub(synth_dataset) as hub:
            config_path = write_config(tmp_path, hub)
            assert invoke(config_path, "ingest").exit_code == 0
            result = invoke(config_path, "evaluate")
        assert result.exit_code == 4
        assert "missing" in result.output

    def test_partial_decisions_is_exit_4(self, tmp_path, synth_dataset):
        with MockHub(synth_dataset) as hub:
            config_path = write_config(tmp_path, hub)
            assert invoke(config_path, "ingest").exit_code == 0
            assert invoke(config_path, "simulate").exit_code == 0
            decisions_path = (
                tmp_path / "out" / "decisions-token_majority-ex_post.jsonl"
            )
            lines = decisions_path.read_text().splitlines()
            decisions_path.write_text("\n".join(lines[:-2]) + "\n")
            result = invoke(config_path, "evaluate")
        assert result.exit_code == 4


class TestPipeline:
    def test_simulate_ex_post_token_majority_equals_final(
        self, tmp_path, synth_dataset
    ):
        from govbench.core import dedupe_latest, tally_outcome

        with MockHub(synth_dataset) as hub:
            config_path = write_config(tmp_path, hub)
            assert invoke(config_path, "ingest").exit_code == 0
            assert invoke(config_path, "simulate").exit_code == 0
        decisions = [
            json.loads(line)
            for line in (
                tmp_path / "out" / "decisions-token_majority-ex_post.jsonl"
            ).read_text().splitlines()
        ]
        for record in decisions:
            pid = record["proposal_id"]
            outcome = tally_outcome(
                synth_dataset.proposals[pid], dedupe_latest(synth_dataset.votes[pid])
            )
            if not outcome.tie:
                assert record["selected_option"] == outcome.final_option

    def test_features_outputs_exist_and_align(self, tmp_path, synth_dataset):
        with MockHub(synth_dataset) as hub:
            config_path = write_config(tmp_path, hub)
            assert invoke(config_path, "ingest").exit_code == 0
            assert invoke(config_path, "features").exit_code == 0
        csv_lines = (tmp_path / "out" / "dynamics.csv").read_text().splitlines()
        windows = (tmp_path / "out" / "market_windows.jsonl").read_text().splitlines()
        assert len(csv_lines) - 1 == len(synth_dataset.proposals)
        assert len(windows) == len(synth_dataset.proposals)

    def test_repeat_ingest_is_byte_identical(self, tmp_path, synth_dataset):
        with MockHub(synth_dataset) as hub:
            config_path = write_config(tmp_path, hub)
            assert invoke(config_path, "ingest").exit_code == 0
            files = sorted((tmp_path / "data").rglob("*"))
            snapshot = {
                p: p.read_bytes() for p in files if p.is_file()
            }
            assert invoke(config_path, "ingest").exit_code == 0
            for path, blob in snapshot.items():
                assert path.read_bytes() == blob

    def test_llm_policy_pipeline_with_audit(self, tmp_path, synth_dataset):
        with MockHub(synth_dataset) as hub:
            config_path = write_config(tmp_path, hub, policy="llm")
            assert invoke(config_path, "ingest").exit_code == 0
            result = invoke(config_path, "simulate")
            assert result.exit_code == 0
        audit = (tmp_path / "out" / "audit-llm.jsonl").read_text().splitlines()
        assert len(audit) == len(synth_dataset.proposals)
        record = json.loads(audit[0])
        assert {"proposal_id", "policy_id", "prompt", "raw_reply", "parsed_option",
                "timestamp"} <= set(record)


class TestGolden:
    def test_report_matches_golden_byte_for_byte(self, tmp_path, golden_dataset):
        report_path = run_pipeline(tmp_path / "run1", golden_dataset)
        assert report_path.read_bytes() == GOLDEN_REPORT.read_bytes()

    def test_two_runs_identical(self, tmp_path, golden_dataset):
        a = run_pipeline(tmp_path / "a", golden_dataset)
        b = run_pipeline(tmp_path / "b", golden_dataset)
        assert a.read_bytes() == b.read_bytes()

    def test_worker_degree_does_not_change_bytes(self, tmp_path, golden_dataset):
        one = run_pipeline(tmp_path / "w1", golden_dataset, workers=1)
        eight = run_pipeline(tmp_path / "w8", golden_dataset, workers=8)
        assert one.read_bytes() == eight.read_bytes()
        assert one.read_bytes() == GOLDEN_REPORT.read_bytes()

    def test_markdown_and_csv_render_deterministically(self, tmp_path, golden_dataset):
        run_pipeline(tmp_path / "r1", golden_dataset)
        run_pipeline(tmp_path / "r2", golden_dataset)
        for rel in ("report.md", "tables/aggregate.csv", "tables/buckets.csv"):
            assert (tmp_path / "r1" / "out" / rel).read_bytes() == (
                tmp_path / "r2" / "out" / rel
            ).read_bytes()
