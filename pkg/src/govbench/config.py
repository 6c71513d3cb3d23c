"""Run configuration: one structured file plus command-line overrides.

Threshold defaults are the reference values used throughout (contested
share 0.60, voter participation floor 5, a 3-day event window, 5 similar
proposals). Validation failures raise :class:`ConfigError`, which the
CLI maps to exit code 2.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .errors import ConfigError
from .ingest import ProtocolIds
from .policy import BASELINE_POLICIES

KNOWN_POLICIES = BASELINE_POLICIES + ("llm",)
KNOWN_CUTOFFS = ("ex_ante", "ex_post")


@dataclass(frozen=True)
class SourcesConfig:
    snapshot_endpoint: str = ""
    defillama_endpoint: str = ""
    cmc_endpoint: str = ""
    cmc_api_key_env: str = "GOVBENCH_CMC_API_KEY"
    llm_endpoint: str = ""
    llm_model: str = ""
    llm_api_key_env: str = "GOVBENCH_LLM_API_KEY"
    index_symbol: str = ""
    requests_per_second: float = 5.0
    max_attempts: int = 5
    page_size: int = 1000

    def validate(self) -> None:
        if self.requests_per_second <= 0:
            raise ConfigError("requests_per_second must be positive")
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")
        if self.page_size < 1:
            raise ConfigError("page_size must be >= 1")


@dataclass(frozen=True)
class Thresholds:
    contested: float = 0.60
    min_participation: int = 5
    window_days: int = 3
    similar_k: int = 5

    def validate(self) -> None:
        if self.contested <= 0:
            raise ConfigError("contested threshold must be positive")
        if self.min_participation < 1:
            raise ConfigError("min_participation must be >= 1")
        if self.window_days < 1:
            raise ConfigError("window_days must be >= 1")
        if self.similar_k < 0:
            raise ConfigError("similar_k must be >= 0")


@dataclass(frozen=True)
class RunConfig:
    dataset_root: Path
    output_root: Path
    spaces: tuple[str, ...] = ()
    sources: SourcesConfig = field(default_factory=SourcesConfig)
    thresholds: Thresholds = field(default_factory=Thresholds)
    protocols: Mapping[str, ProtocolIds] = field(default_factory=dict)
    forum_source: str | None = None
    policy: str = "token_majority"
    cutoff: str = "ex_post"
    seed: int = 0
    workers: int = 1
    abstain_labels: tuple[str, ...] = ("abstain",)
    exclude_ties: bool = False

    def validate(self, *, require_dataset: bool = False) -> None:
        self.sources.validate()
        self.thresholds.validate()
        if self.policy not in KNOWN_POLICIES:
            raise ConfigError(
                f"unknown policy {self.policy!r}; expected one of {KNOWN_POLICIES}"
            )
        if self.cutoff not in KNOWN_CUTOFFS:
            raise ConfigError(
                f"unknown cutoff {self.cutoff!r}; expected one of {KNOWN_CUTOFFS}"
            )
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not str(self.dataset_root):
            raise ConfigError("dataset_root must be set")
        if not str(self.output_root):
            raise ConfigError("output_root must be set")
        if require_dataset and not (self.dataset_root / "manifest.json").exists():
            raise ConfigError(f"no dataset at {self.dataset_root}")
        if (
            self.forum_source is not None
            and not self.forum_source.startswith(("http://", "https://"))
            and not Path(self.forum_source).exists()
        ):
            raise ConfigError(f"forum_source {self.forum_source} does not exist")


def _apply_overrides(raw: dict, overrides: Sequence[str]) -> dict:
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        dotted, value = item.split("=", 1)
        target = raw
        keys = dotted.split(".")
        for key in keys[:-1]:
            target = target.setdefault(key, {})
            if not isinstance(target, dict):
                raise ConfigError(f"override path {dotted!r} crosses a non-object")
        try:
            target[keys[-1]] = json.loads(value)
        except json.JSONDecodeError:
            target[keys[-1]] = value
    return raw


def _forum_source(raw: Mapping, base: Path) -> str | None:
    value = raw.get("forum_source")
    if not value:
        return None
    if value.startswith(("http://", "https://")):
        return value
    p = Path(value)
    return str(p if p.is_absolute() else base / p)


def load_config(
    path: Path | str, overrides: Sequence[str] = (), base_dir: Path | None = None
) -> RunConfig:
    """Parse and validate a JSON config file, applying dotted overrides.

    Relative paths resolve against the config file's directory.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    raw = _apply_overrides(raw, overrides)
    base = base_dir or path.parent

    def _resolve(key: str, default: str) -> Path:
        value = raw.get(key, default)
        p = Path(value)
        return p if p.is_absolute() else base / p

    try:
        sources = SourcesConfig(**raw.get("sources", {}))
        thresholds = Thresholds(**raw.get("thresholds", {}))
        protocols = {
            space: ProtocolIds(
                slug=ids.get("slug", space), symbol=ids.get("symbol", space)
            )
            for space, ids in raw.get("protocols", {}).items()
        }
        config = RunConfig(
            dataset_root=_resolve("dataset_root", "data"),
            output_root=_resolve("output_root", "out"),
            spaces=tuple(raw.get("spaces", ())),
            sources=sources,
            thresholds=thresholds,
            protocols=protocols,
            forum_source=_forum_source(raw, base),
            policy=raw.get("policy", "token_majority"),
            cutoff=raw.get("cutoff", "ex_post"),
            seed=int(raw.get("seed", 0)),
            workers=int(raw.get("workers", 1)),
            abstain_labels=tuple(raw.get("abstain_labels", ("abstain",))),
            exclude_ties=bool(raw.get("exclude_ties", False)),
        )
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    config.validate()
    return config
