"""Render alignment reports to JSON, Markdown, and CSV tables.

The JSON document is the canonical machine-readable artifact (schema
version inside); rendering is fully deterministic, so identical inputs
produce byte-identical files.
"""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Mapping

from .evaluation import AlignmentReport

_BUCKET_TITLES = {
    "binary_change": "Binary (change = yes)",
    "binary_no_change": "Binary (change = no)",
    "multi_change": "Multi-option (change = yes)",
    "multi_no_change": "Multi-option (change = no)",
    "unlabeled": "Unlabeled",
    "all": "All",
}

_METRIC_TITLES = {
    "token_alignment": "Token alignment",
    "headcount_alignment": "Headcount alignment",
    "majority_share": "Majority share",
    "n_voters": "Voters per proposal",
}


def report_json_text(report: AlignmentReport | Mapping) -> str:
    doc = report.to_json_dict() if isinstance(report, AlignmentReport) else report
    return json.dumps(
        doc, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False
    ) + "\n"


def write_text_atomic(path: Path | str, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_report_json(report: AlignmentReport | Mapping, path: Path | str) -> None:
    write_text_atomic(path, report_json_text(report))


def load_report(path: Path | str) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _num(value, digits: int = 4) -> str:
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, int):
        return str(value)
    return f"{value:.{digits}f}"


def render_markdown(doc: Mapping) -> str:
    lines: list[str] = ["# Alignment evaluation report", ""]
    policy = doc.get("policy", {})
    lines.append(f"Policy: {', '.join(policy.get('policy_id', []))}")
    lines.append(f"Cutoff: {', '.join(policy.get('cutoff', []))}")
    counts = doc.get("counts", {})
    lines.append(
        f"Proposals evaluated: {counts.get('proposals_evaluated', 0)} "
        f"(no ballots: {counts.get('proposals_without_ballots', 0)}, "
        f"degenerate: {counts.get('proposals_degenerate_tally', 0)}, "
        f"ties: {counts.get('ties', 0)})"
    )
    lines.append("")

    lines.append("## Aggregate statistics across proposals")
    lines.append("")
    lines.append("| Metric | Mean | Median | Std | Q25 | Q75 | Max |")
    lines.append("|---|---|---|---|---|---|---|")
    for key, title in _METRIC_TITLES.items():
        stats = doc.get("aggregate", {}).get(key)
        if not stats:
            continue
        lines.append(
            f"| {title} | {_num(stats['mean'])} | {_num(stats['median'])} | "
            f"{_num(stats['std'])} | {_num(stats['q25'])} | {_num(stats['q75'])} | "
            f"{_num(stats['max'])} |"
        )
    lines.append("")

    g = doc.get("global", {})
    lines.append(f"P(policy = final): {_num(g.get('p_ai_equals_final'))}")
    lines.append(
        "Median voter agreement (token / headcount, participation >= "
        f"{g.get('min_participation')}): "
        f"{_num(g.get('voter_token_agreement_median'))} / "
        f"{_num(g.get('voter_headcount_agreement_median'))}"
    )
    lines.append(
        "Policy beats the median voter (token / headcount): "
        f"{_num(g.get('ai_beats_median_token_voter'))} / "
        f"{_num(g.get('ai_beats_median_headcount_voter'))}"
    )
    lines.append("")

    lines.append("## Agreement with the final decision by bucket")
    lines.append("")
    lines.append("| Bucket | N | Humans | Policy | Difference (pp) |")
    lines.append("|---|---|---|---|---|")
    for key, row in doc.get("buckets", {}).get("rows", {}).items():
        lines.append(
            f"| {_BUCKET_TITLES.get(key, key)} | {row['n']} | {_num(row['humans'])} | "
            f"{_num(row['ai'])} | {_num(row['difference_pp'], 2)} |"
        )
    lines.append("")

    expost = doc.get("expost")
    if expost:
        lines.append("## Positive market responses after the vote")
        lines.append("")
        lines.append(
            "| Bucket | P(price>0 given policy) | n | P(price>0 given final) | n | "
            "P(TVL>0 given policy) | n | P(TVL>0 given final) | n |"
        )
        lines.append("|---|---|---|---|---|---|---|---|---|")
        for key, row in expost.get("rows", {}).items():
            price = row.get("price", {})
            tvl = row.get("tvl", {})
            lines.append(
                f"| {_BUCKET_TITLES.get(key, key)} | {_num(price.get('p_ai'), 3)} | "
                f"{price.get('n_ai', 0)} | {_num(price.get('p_final'), 3)} | "
                f"{price.get('n_final', 0)} | {_num(tvl.get('p_ai'), 3)} | "
                f"{tvl.get('n_ai', 0)} | {_num(tvl.get('p_final'), 3)} | "
                f"{tvl.get('n_final', 0)} |"
            )
        lines.append("")

    contested = doc.get("contested", {})
    lines.append(
        f"## Contested subset (majority share <= {_num(contested.get('threshold'), 2)})"
    )
    lines.append("")
    lines.append("| Metric | Estimate | N |")
    lines.append("|---|---|---|")
    n = contested.get("n", 0)
    lines.append(
        f"| P(policy = final) | {_num(contested.get('p_ai_equals_final'))} | {n} |"
    )
    lines.append(
        f"| Token alignment mean | {_num(contested.get('token_alignment_mean'))} | {n} |"
    )
    lines.append(
        f"| Headcount alignment mean | "
        f"{_num(contested.get('headcount_alignment_mean'))} | {n} |"
    )
    lines.append(
        f"| Majority share mean | {_num(contested.get('majority_share_mean'))} | {n} |"
    )
    by_kind = contested.get("by_kind", {})
    for kind in ("binary", "multi"):
        row = by_kind.get(kind, {})
        lines.append(
            f"| P(policy = final), {kind} | {_num(row.get('p_ai_equals_final'))} | "
            f"{row.get('n', 0)} |"
        )
    lines.append("")

    temporal = doc.get("temporal")
    if temporal:
        lines.append("## Cutoff comparison")
        lines.append("")
        lines.append(
            f"Decisions differing between cutoffs: "
            f"{_num(temporal.get('divergence_fraction'))} "
            f"(N = {temporal.get('n')})"
        )
        lines.append("")
        lines.append("| Metric (mean) | Ex-ante | Ex-post |")
        lines.append("|---|---|---|")
        ante = temporal.get("ex_ante", {})
        post = temporal.get("ex_post", {})
        for key, title in (
            ("p_ai_equals_final", "P(policy = final)"),
            ("token_alignment_mean", "Token alignment"),
            ("headcount_alignment_mean", "Headcount alignment"),
            ("majority_share_mean", "Majority share"),
        ):
            lines.append(f"| {title} | {_num(ante.get(key))} | {_num(post.get(key))} |")
        lines.append("")
    return "\n".join(lines)


def render_csv_tables(doc: Mapping) -> dict[str, str]:
    """One CSV per table; full float precision for downstream tooling."""
    tables: dict[str, str] = {}

    rows = ["metric,mean,median,std,q25,q75,max"]
    for key, stats in sorted(doc.get("aggregate", {}).items()):
        rows.append(
            f"{key},{stats['mean']!r},{stats['median']!r},{stats['std']!r},"
            f"{stats['q25']!r},{stats['q75']!r},{stats['max']!r}"
        )
    tables["aggregate.csv"] = "\n".join(rows) + "\n"

    rows = ["bucket,n,humans,ai,difference_pp"]
    for key, row in doc.get("buckets", {}).get("rows", {}).items():
        rows.append(
            f"{key},{row['n']},{_csv(row['humans'])},{_csv(row['ai'])},"
            f"{_csv(row['difference_pp'])}"
        )
    tables["buckets.csv"] = "\n".join(rows) + "\n"

    expost = doc.get("expost")
    if expost:
        rows = [
            "bucket,n,price_p_ai,price_n_ai,price_p_final,price_n_final,"
            "tvl_p_ai,tvl_n_ai,tvl_p_final,tvl_n_final"
        ]
        for key, row in expost.get("rows", {}).items():
            price = row.get("price", {})
            tvl = row.get("tvl", {})
            rows.append(
                f"{key},{row['n']},{_csv(price.get('p_ai'))},{price.get('n_ai', 0)},"
                f"{_csv(price.get('p_final'))},{price.get('n_final', 0)},"
                f"{_csv(tvl.get('p_ai'))},{tvl.get('n_ai', 0)},"
                f"{_csv(tvl.get('p_final'))},{tvl.get('n_final', 0)}"
            )
        tables["expost.csv"] = "\n".join(rows) + "\n"

    contested = doc.get("contested", {})
    rows = ["metric,estimate,n"]
    n = contested.get("n", 0)
    rows.append(f"p_ai_equals_final,{_csv(contested.get('p_ai_equals_final'))},{n}")
    rows.append(
        f"token_alignment_mean,{_csv(contested.get('token_alignment_mean'))},{n}"
    )
    rows.append(
        f"headcount_alignment_mean,"
        f"{_csv(contested.get('headcount_alignment_mean'))},{n}"
    )
    rows.append(
        f"majority_share_mean,{_csv(contested.get('majority_share_mean'))},{n}"
    )
    tables["contested.csv"] = "\n".join(rows) + "\n"

    temporal = doc.get("temporal")
    if temporal:
        rows = ["metric,ex_ante,ex_post"]
        ante = temporal.get("ex_ante", {})
        post = temporal.get("ex_post", {})
        for key in (
            "p_ai_equals_final",
            "token_alignment_mean",
            "headcount_alignment_mean",
            "majority_share_mean",
        ):
            rows.append(f"{key},{_csv(ante.get(key))},{_csv(post.get(key))}")
        rows.append(
            f"divergence_fraction,{_csv(temporal.get('divergence_fraction'))},"
            f"{_csv(temporal.get('divergence_fraction'))}"
        )
        tables["temporal.csv"] = "\n".join(rows) + "\n"
    return tables


def _csv(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)
