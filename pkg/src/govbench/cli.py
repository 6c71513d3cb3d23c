"""Pipeline CLI: ingest, features, simulate, evaluate, report.

Each command is independently re-runnable and idempotent over unchanged
inputs; output files are written atomically. Exit codes: 2 for
configuration errors, 3 for upstream/source failures, 4 for partial
evaluation coverage, 1 for any other govbench error.
"""
from __future__ import annotations

import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import click

from . import evaluation, ingest, policy, report
from .config import RunConfig, load_config
from .core import dedupe_latest
from .dynamics import build_participation_series, features_bundle, features_csv_header, features_csv_row
from .errors import (
    ConfigError,
    CoverageError,
    GovbenchError,
    NoData,
    NotFound,
    PolicyFailure,
    SourceProtocolError,
    SourceUnavailable,
)
from .market import compute_market_window, record_to_window, window_to_record
from .sources import CmcClient, DefiLlamaClient, HttpSource, SnapshotClient, TokenBucket
from .store import DatasetStore, read_jsonl, write_jsonl


def log_event(event: str, **fields) -> None:
    """One structured log line per event, on stderr."""
    payload = {"event": event}
    payload.update(fields)
    click.echo(json.dumps(payload, sort_keys=True), err=True)


def _fail(code: int, message: str):
    log_event("error", message=message, exit_code=code)
    sys.exit(code)


def _run_guarded(fn):
    try:
        fn()
    except ConfigError as exc:
        _fail(2, str(exc))
    except (SourceUnavailable, SourceProtocolError, NotFound, NoData, PolicyFailure) as exc:
        _fail(3, str(exc))
    except CoverageError as exc:
        ids = ", ".join(exc.missing_ids[:20])
        more = "" if len(exc.missing_ids) <= 20 else f" (+{len(exc.missing_ids) - 20} more)"
        _fail(4, f"{exc} [missing: {ids}{more}]")
    except GovbenchError as exc:
        _fail(1, str(exc))


@click.group()
@click.option(
    "--config",
    "-c",
    "config_path",
    required=True,
    type=click.Path(path_type=Path),
    help="Path to the JSON run configuration.",
)
@click.option(
    "--set",
    "overrides",
    multiple=True,
    metavar="KEY=VALUE",
    help="Override a config entry (dotted keys, JSON values).",
)
@click.pass_context
def main(ctx, config_path: Path, overrides):
    """Governance policy benchmarking pipeline."""
    try:
        ctx.obj = load_config(config_path, overrides)
    except ConfigError as exc:
        _fail(2, str(exc))


def _snapshot_client(config: RunConfig) -> SnapshotClient:
    return SnapshotClient(
        config.sources.snapshot_endpoint,
        page_size=config.sources.page_size,
        rate_limiter=TokenBucket(config.sources.requests_per_second),
        max_attempts=config.sources.max_attempts,
    )


def _market_clients(config: RunConfig):
    llama = cmc = None
    if config.sources.defillama_endpoint:
        llama = DefiLlamaClient(
            config.sources.defillama_endpoint,
            rate_limiter=TokenBucket(config.sources.requests_per_second),
            max_attempts=config.sources.max_attempts,
        )
    if config.sources.cmc_endpoint:
        cmc = CmcClient(
            config.sources.cmc_endpoint,
            api_key_env=config.sources.cmc_api_key_env,
            rate_limiter=TokenBucket(config.sources.requests_per_second),
            max_attempts=config.sources.max_attempts,
        )
    return llama, cmc


@main.command("ingest")
@click.pass_obj
def cmd_ingest(config: RunConfig):
    """Fetch proposals, votes, forum signals, and market series."""

    def run():
        if not config.spaces:
            raise ConfigError("spaces must be non-empty for ingest")
        if not config.sources.snapshot_endpoint:
            raise ConfigError("sources.snapshot_endpoint must be set for ingest")
        counters: dict[str, int] = {}
        llama, cmc = _market_clients(config)
        dataset = ingest.ingest_spaces(
            snapshot=_snapshot_client(config),
            llama=llama,
            cmc=cmc,
            spaces=config.spaces,
            protocol_of=config.protocols,
            index_symbol=config.sources.index_symbol or None,
            forum_source=config.forum_source,
            window_days=config.thresholds.window_days,
            counters=counters,
        )
        endpoints = {
            "snapshot": config.sources.snapshot_endpoint,
            "defillama": config.sources.defillama_endpoint,
            "cmc": config.sources.cmc_endpoint,
        }
        ingest.persist_dataset(
            config.dataset_root,
            dataset,
            endpoints=endpoints,
            protocol_of=config.protocols,
        )
        log_event(
            "ingest.complete",
            proposals=len(dataset.proposals),
            votes=sum(len(v) for v in dataset.votes.values()),
            market_series=len(dataset.market),
            counters=counters,
        )

    _run_guarded(run)


def _load_dataset(config: RunConfig):
    config.validate(require_dataset=True)
    return DatasetStore(config.dataset_root).load(config.abstain_labels)


def _market_bundle_for(config: RunConfig, dataset, space_id: str):
    ids = config.protocols.get(space_id, ingest.ProtocolIds(space_id, space_id))
    index_name = config.sources.index_symbol or None
    if index_name is None:
        names = [proto for (proto, metric) in dataset.market if metric == "index"]
        index_name = names[0] if len(names) == 1 else None
    return {
        "price": dataset.market.get((ids.symbol, "price")),
        "index": dataset.market.get((index_name, "index")) if index_name else None,
        "tvl": dataset.market.get((ids.slug, "tvl")),
        "treasury": dataset.market.get((ids.slug, "treasury")),
    }


@main.command("features")
@click.pass_obj
def cmd_features(config: RunConfig):
    """Write vote-dynamics features (CSV) and market windows (JSONL)."""

    def run():
        dataset = _load_dataset(config)
        counters: dict[str, int] = {}
        pids = sorted(dataset.proposals)

        def one(pid: str):
            proposal = dataset.proposals[pid]
            ballots = dedupe_latest(dataset.votes.get(pid, ()))
            series = build_participation_series(proposal, ballots, counters)
            features = features_bundle(series)
            window = compute_market_window(
                proposal,
                _market_bundle_for(config, dataset, proposal.space_id),
                config.thresholds.window_days,
            )
            return features_csv_row(series, features), window_to_record(window)

        if config.workers > 1 and len(pids) > 1:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                results = list(pool.map(one, pids))
        else:
            results = [one(pid) for pid in pids]

        out = Path(config.output_root)
        out.mkdir(parents=True, exist_ok=True)
        csv_text = features_csv_header() + "\n" + "".join(
            row + "\n" for row, _ in results
        )
        report.write_text_atomic(out / "dynamics.csv", csv_text)
        write_jsonl(out / "market_windows.jsonl", [rec for _, rec in results])
        log_event("features.complete", proposals=len(pids), counters=counters)

    _run_guarded(run)


def _decisions_path(config: RunConfig, cutoff: str) -> Path:
    return Path(config.output_root) / f"decisions-{config.policy}-{cutoff}.jsonl"


@main.command("simulate")
@click.option("--policy", "policy_name", default=None, help="Policy override.")
@click.option(
    "--cutoff",
    type=click.Choice(["ex-ante", "ex-post"]),
    default=None,
    help="Temporal cutoff override.",
)
@click.option("--seed", type=int, default=None, help="Seed for seeded_random.")
@click.pass_obj
def cmd_simulate(config: RunConfig, policy_name, cutoff, seed):
    """Produce one decision per proposal at the configured cutoff."""

    def run():
        nonlocal policy_name, cutoff, seed
        if policy_name is not None or cutoff is not None or seed is not None:
            config_local = replace(
                config,
                policy=policy_name if policy_name is not None else config.policy,
                cutoff=(cutoff.replace("-", "_") if cutoff is not None else config.cutoff),
                seed=seed if seed is not None else config.seed,
            )
            config_local.validate()
        else:
            config_local = config
        dataset = _load_dataset(config_local)
        pids = sorted(dataset.proposals)
        thresholds = config_local.thresholds

        llm_config = None
        audit = None
        source = None
        if config_local.policy == "llm":
            if not config_local.sources.llm_endpoint:
                raise ConfigError("sources.llm_endpoint must be set for the llm policy")
            llm_config = policy.LlmConfig(
                url=config_local.sources.llm_endpoint,
                model=config_local.sources.llm_model,
                api_key_env=config_local.sources.llm_api_key_env,
            )
            audit = policy.AuditLog(
                Path(config_local.output_root) / f"audit-{config_local.policy}.jsonl"
            )
            source = HttpSource(
                rate_limiter=TokenBucket(config_local.sources.requests_per_second),
                max_attempts=config_local.sources.max_attempts,
            )

        def one(pid: str):
            context = policy.build_decision_context(
                pid,
                dataset,
                config_local.cutoff,
                similar_k=thresholds.similar_k,
                window_days=thresholds.window_days,
                protocol_of=config_local.protocols,
                index_protocol=config_local.sources.index_symbol or None,
            )
            if config_local.policy == "llm":
                return policy.decide_llm(context, llm_config, source=source, audit=audit)
            return policy.decide_baseline(
                context, config_local.policy, seed=config_local.seed
            )

        if config_local.workers > 1 and len(pids) > 1:
            with ThreadPoolExecutor(max_workers=config_local.workers) as pool:
                decisions = list(pool.map(one, pids))
        else:
            decisions = [one(pid) for pid in pids]

        path = _decisions_path(config_local, config_local.cutoff)
        path.parent.mkdir(parents=True, exist_ok=True)
        write_jsonl(path, [policy.decision_to_record(d) for d in decisions])
        log_event(
            "simulate.complete",
            decisions=len(decisions),
            policy=config_local.policy,
            cutoff=config_local.cutoff,
            path=str(path),
        )

    _run_guarded(run)


def _load_decisions(path: Path) -> dict[str, policy.PolicyDecision]:
    out = {}
    for rec in read_jsonl(path):
        decision = policy.record_to_decision(rec)
        out[decision.proposal_id] = decision
    return out


@main.command("evaluate")
@click.option(
    "--decisions",
    "decisions_file",
    type=click.Path(path_type=Path),
    default=None,
    help="Decisions JSONL (defaults to the configured policy/cutoff output).",
)
@click.option(
    "--ex-ante-decisions",
    "ex_ante_file",
    type=click.Path(path_type=Path),
    default=None,
    help="Optional ex-ante decisions for the cutoff comparison table.",
)
@click.option(
    "--market-windows",
    "windows_file",
    type=click.Path(path_type=Path),
    default=None,
    help="Market windows JSONL from the features step.",
)
@click.pass_obj
def cmd_evaluate(config: RunConfig, decisions_file, ex_ante_file, windows_file):
    """Score decisions against human outcomes into report.json."""

    def run():
        dataset = _load_dataset(config)
        path = decisions_file or _decisions_path(config, config.cutoff)
        if not Path(path).exists():
            evaluable = sorted(
                pid for pid in dataset.proposals if dataset.votes.get(pid)
            )
            raise CoverageError(
                f"no decisions at {path}", missing_ids=evaluable
            )
        decisions = _load_decisions(Path(path))
        ex_ante = _load_decisions(Path(ex_ante_file)) if ex_ante_file else None

        windows = None
        windows_path = windows_file or Path(config.output_root) / "market_windows.jsonl"
        if Path(windows_path).exists():
            windows = {
                rec["proposal_id"]: record_to_window(rec)
                for rec in read_jsonl(Path(windows_path))
            }

        counters: dict[str, int] = {}
        result = evaluation.evaluate_dataset(
            dataset,
            decisions,
            min_participation=config.thresholds.min_participation,
            contested_threshold=config.thresholds.contested,
            market_windows=windows,
            ex_ante_decisions=ex_ante,
            exclude_ties=config.exclude_ties,
            workers=config.workers,
            counters=counters,
        )
        out = Path(config.output_root)
        out.mkdir(parents=True, exist_ok=True)
        report.write_report_json(result, out / "report.json")
        log_event(
            "evaluate.complete",
            proposals=result.counts["proposals_evaluated"],
            report=str(out / "report.json"),
            counters=counters,
        )

    _run_guarded(run)


@main.command("report")
@click.option(
    "--report-json",
    "report_file",
    type=click.Path(path_type=Path),
    default=None,
    help="Report JSON to render (defaults to output_root/report.json).",
)
@click.pass_obj
def cmd_report(config: RunConfig, report_file):
    """Render the report JSON to Markdown and CSV tables."""

    def run():
        path = report_file or Path(config.output_root) / "report.json"
        if not Path(path).exists():
            raise ConfigError(f"no report at {path}; run evaluate first")
        doc = report.load_report(path)
        out = Path(config.output_root)
        report.write_text_atomic(out / "report.md", report.render_markdown(doc))
        tables_dir = out / "tables"
        for name, text in report.render_csv_tables(doc).items():
            report.write_text_atomic(tables_dir / name, text)
        log_event("report.complete", markdown=str(out / "report.md"))

    _run_guarded(run)


if __name__ == "__main__":
    main()
