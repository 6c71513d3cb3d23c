"""Local dataset persistence: JSON-lines files per space plus a manifest.

Records are serialized with a fixed field order and compact separators so
that ``load(store(x)) == x`` holds byte-for-byte: re-storing a loaded
dataset produces identical files. The manifest's per-file ``as_of``
timestamps are derived from the stored records (not the wall clock) so
that re-running an unchanged fetch is byte-identical as well.
"""
from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .core import EvaluationSet, ForumSignal, Proposal, VoteRecord, normalize_choice
from .errors import InvalidArgument, LoadError

MANIFEST_NAME = "manifest.json"
SCHEMA_VERSION = 1

_EPOCH = date(1970, 1, 1)

MARKET_METRICS = ("price", "tvl", "treasury", "index")


def day_to_str(day: int) -> str:
    """Epoch day number to ISO date (UTC)."""
    return (_EPOCH + timedelta(days=day)).isoformat()


def str_to_day(text: str) -> int:
    return (date.fromisoformat(text) - _EPOCH).days


def timestamp_to_day(ts: int) -> int:
    """UTC seconds to epoch day number."""
    return ts // 86400


@dataclass(frozen=True)
class MarketSeries:
    """Daily samples of one market metric for one protocol."""

    protocol: str
    metric: str  # price | tvl | treasury | index
    samples: tuple[tuple[int, float], ...]  # (epoch day, value), gaps allowed

    def __post_init__(self):
        if self.metric not in MARKET_METRICS:
            raise InvalidArgument(f"unknown market metric {self.metric!r}")
        days = [d for d, _ in self.samples]
        if any(b <= a for a, b in zip(days, days[1:])):
            raise InvalidArgument(
                f"{self.protocol}/{self.metric}: days must strictly increase"
            )
        if self.metric in ("tvl", "treasury") and any(
            v < 0 for _, v in self.samples
        ):
            raise InvalidArgument(
                f"{self.protocol}/{self.metric}: values must be nonnegative"
            )

    def values_for_days(self, days: Iterable[int]) -> list[float]:
        """Values at the requested days; missing days are skipped."""
        lookup = dict(self.samples)
        return [lookup[d] for d in days if d in lookup]


@dataclass
class Dataset:
    """In-memory governance dataset; treated as immutable once built."""

    proposals: dict[str, Proposal] = field(default_factory=dict)
    votes: dict[str, list[VoteRecord]] = field(default_factory=dict)
    forum: dict[str, list[ForumSignal]] = field(default_factory=dict)
    market: dict[tuple[str, str], MarketSeries] = field(default_factory=dict)

    def spaces(self) -> list[str]:
        return sorted({p.space_id for p in self.proposals.values()})

    def proposals_for_space(self, space_id: str) -> list[Proposal]:
        out = [p for p in self.proposals.values() if p.space_id == space_id]
        out.sort(key=lambda p: (p.created_at, p.proposal_id))
        return out

    def evaluation_set(self) -> EvaluationSet:
        per_voter: dict[str, set[str]] = {}
        for pid, ballots in self.votes.items():
            if pid not in self.proposals:
                continue
            for ballot in ballots:
                per_voter.setdefault(ballot.voter, set()).add(pid)
        return EvaluationSet(
            proposals=frozenset(self.proposals),
            per_voter_index={v: frozenset(p) for v, p in per_voter.items()},
        )


# ---------------------------------------------------------------------------
# record codecs (fixed field order for byte-stable round trips)

def proposal_to_record(p: Proposal) -> dict:
    return {
        "proposal_id": p.proposal_id,
        "space_id": p.space_id,
        "title": p.title,
        "body": p.body,
        "choices": list(p.choices),
        "created_at": p.created_at,
        "start": p.start,
        "end": p.end,
        "calls_for_change": p.calls_for_change,
        "category": p.category,
    }


def record_to_proposal(rec: Mapping, abstain_labels: Sequence[str] | None = None) -> Proposal:
    kwargs = {}
    if abstain_labels is not None:
        kwargs["abstain_labels"] = tuple(abstain_labels)
    return Proposal(
        proposal_id=rec["proposal_id"],
        space_id=rec["space_id"],
        title=rec["title"],
        body=rec.get("body"),
        choices=tuple(rec["choices"]),
        created_at=int(rec["created_at"]),
        start=int(rec["start"]),
        end=int(rec["end"]),
        calls_for_change=rec.get("calls_for_change"),
        category=rec.get("category"),
        **kwargs,
    )


def _encode_choice(choice) -> object:
    if isinstance(choice, int):
        return choice
    if isinstance(choice, Mapping):
        return {str(k): float(v) for k, v in sorted(choice.items())}
    return [int(i) for i in choice]


def _decode_choice(raw) -> object:
    if isinstance(raw, int):
        return raw
    if isinstance(raw, dict):
        return {int(k): float(v) for k, v in raw.items()}
    if isinstance(raw, list):
        return tuple(int(i) for i in raw)
    raise LoadError(f"unsupported choice encoding: {raw!r}")


def vote_to_record(v: VoteRecord) -> dict:
    return {
        "proposal_id": v.proposal_id,
        "voter": v.voter,
        "choice": _encode_choice(v.choice),
        "vp": v.vp,
        "timestamp": v.timestamp,
    }


def record_to_vote(rec: Mapping) -> VoteRecord:
    return VoteRecord(
        proposal_id=rec["proposal_id"],
        voter=rec["voter"],
        choice=_decode_choice(rec["choice"]),
        vp=float(rec["vp"]),
        timestamp=int(rec["timestamp"]),
    )


def forum_to_record(f: ForumSignal) -> dict:
    counts = None
    if f.comment_counts is not None:
        counts = {
            "positive": f.comment_counts[0],
            "negative": f.comment_counts[1],
            "neutral": f.comment_counts[2],
        }
    return {
        "proposal_id": f.proposal_id,
        "url": f.url,
        "stance_score": f.stance_score,
        "sentiment": f.sentiment,
        "comment_counts": counts,
        "comment_timestamps": (
            list(f.comment_timestamps) if f.comment_timestamps is not None else None
        ),
    }


def record_to_forum(rec: Mapping) -> ForumSignal:
    counts = rec.get("comment_counts")
    timestamps = rec.get("comment_timestamps")
    return ForumSignal(
        proposal_id=rec["proposal_id"],
        url=rec["url"],
        stance_score=float(rec["stance_score"]),
        sentiment=float(rec["sentiment"]),
        comment_counts=(
            (counts["positive"], counts["negative"], counts["neutral"])
            if counts is not None
            else None
        ),
        comment_timestamps=(
            tuple(int(t) for t in timestamps) if timestamps is not None else None
        ),
    )


def market_to_record(s: MarketSeries) -> dict:
    return {
        "protocol": s.protocol,
        "metric": s.metric,
        "samples": [[day_to_str(d), v] for d, v in s.samples],
    }


def record_to_market(rec: Mapping) -> MarketSeries:
    return MarketSeries(
        protocol=rec["protocol"],
        metric=rec["metric"],
        samples=tuple((str_to_day(d), float(v)) for d, v in rec["samples"]),
    )


def _dumps(record: Mapping) -> str:
    return json.dumps(record, ensure_ascii=False, separators=(",", ":"))


def write_jsonl(path: Path, records: Iterable[Mapping]) -> int:
    """Atomically write records one per line; returns the record count."""
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            for rec in records:
                fh.write(_dumps(rec))
                fh.write("\n")
                count += 1
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return count


def read_jsonl(path: Path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                records.append(json.loads(stripped))
            except json.JSONDecodeError as exc:
                raise LoadError(
                    f"{path}:{lineno}: corrupt record ({exc.msg})",
                    path=str(path),
                    line=lineno,
                ) from exc
    return records


class DatasetStore:
    """Directory of per-space ``*.jsonl`` files plus ``manifest.json``.

    Layout::

        root/manifest.json
        root/spaces/<space>/proposals.jsonl
        root/spaces/<space>/votes.jsonl
        root/spaces/<space>/forum.jsonl
        root/spaces/<space>/market.jsonl

    Single writer, any number of concurrent readers; every write goes
    through a temp file and an atomic rename.
    """

    def __init__(self, root: Path | str):
        self.root = Path(root)

    def space_dir(self, space_id: str) -> Path:
        return self.root / "spaces" / space_id

    def save(self, dataset: Dataset, *, endpoints: Mapping[str, str] | None = None,
             protocol_of: Mapping[str, str] | None = None) -> None:
        """Persist the dataset and write the manifest.

        ``protocol_of`` maps space ids to market protocol ids; when absent
        the space id itself is used.
        """
        files: dict[str, dict] = {}
        protocol_of = dict(protocol_of or {})
        market_by_space: dict[str, list[MarketSeries]] = {}
        spaces = dataset.spaces()
        owned = {protocol_of.get(s, s): s for s in spaces}
        for (protocol, _metric), series in sorted(dataset.market.items()):
            space = owned.get(protocol, spaces[0] if spaces else protocol)
            market_by_space.setdefault(space, []).append(series)

        for space in spaces or sorted(market_by_space):
            sdir = self.space_dir(space)
            proposals = dataset.proposals_for_space(space)
            votes: list[VoteRecord] = []
            forum: list[ForumSignal] = []
            for p in proposals:
                votes.extend(dataset.votes.get(p.proposal_id, ()))
                forum.extend(dataset.forum.get(p.proposal_id, ()))
            market = sorted(
                market_by_space.get(space, []), key=lambda s: (s.protocol, s.metric)
            )
            plan = [
                ("proposals.jsonl", [proposal_to_record(p) for p in proposals],
                 max((p.created_at for p in proposals), default=None)),
                ("votes.jsonl", [vote_to_record(v) for v in votes],
                 max((v.timestamp for v in votes), default=None)),
                ("forum.jsonl", [forum_to_record(f) for f in forum], None),
                ("market.jsonl", [market_to_record(s) for s in market],
                 max((s.samples[-1][0] * 86400 for s in market if s.samples),
                     default=None)),
            ]
            for name, records, as_of in plan:
                path = sdir / name
                count = write_jsonl(path, records)
                rel = path.relative_to(self.root).as_posix()
                files[rel] = {
                    "records": count,
                    "sha256": _sha256_file(path),
                    "as_of": as_of,
                }

        manifest = {
            "schema_version": SCHEMA_VERSION,
            "endpoints": dict(sorted((endpoints or {}).items())),
            "files": {k: files[k] for k in sorted(files)},
        }
        self._write_manifest(manifest)

    def _write_manifest(self, manifest: Mapping) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        path = self.root / MANIFEST_NAME
        fd, tmp = tempfile.mkstemp(dir=self.root, prefix=MANIFEST_NAME, suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(manifest, indent=2, ensure_ascii=False, sort_keys=True))
            fh.write("\n")
        os.replace(tmp, path)

    def manifest(self) -> dict:
        path = self.root / MANIFEST_NAME
        if not path.exists():
            raise LoadError(f"no manifest at {path}", path=str(path))
        return json.loads(path.read_text(encoding="utf-8"))

    def load(self, abstain_labels: Sequence[str] | None = None) -> Dataset:
        """Load every file listed in the manifest back into a dataset.

        Loaded records are re-validated against the core invariants; a
        corrupt line raises :class:`LoadError` naming file and line.
        """
        manifest = self.manifest()
        dataset = Dataset()
        for rel in sorted(manifest.get("files", {})):
            path = self.root / rel
            if not path.exists():
                raise LoadError(f"manifest lists missing file {rel}", path=str(path))
            records = read_jsonl(path)
            name = path.name
            try:
                if name == "proposals.jsonl":
                    for rec in records:
                        p = record_to_proposal(rec, abstain_labels)
                        dataset.proposals[p.proposal_id] = p
                elif name == "votes.jsonl":
                    for rec in records:
                        v = record_to_vote(rec)
                        owner = dataset.proposals.get(v.proposal_id)
                        if owner is not None:
                            # proposals sort before votes within a space, so
                            # choice indices can be validated on load
                            normalize_choice(v.choice, owner.n_options)
                        dataset.votes.setdefault(v.proposal_id, []).append(v)
                elif name == "forum.jsonl":
                    for rec in records:
                        f = record_to_forum(rec)
                        dataset.forum.setdefault(f.proposal_id, []).append(f)
                elif name == "market.jsonl":
                    for rec in records:
                        s = record_to_market(rec)
                        dataset.market[(s.protocol, s.metric)] = s
            except (KeyError, TypeError, ValueError, InvalidArgument) as exc:
                raise LoadError(
                    f"{path}: invalid record ({exc})", path=str(path)
                ) from exc
        return dataset


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()
