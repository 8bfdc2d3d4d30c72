"""Runtime configuration: one flat document of tunable parameters.

Configs load from TOML or JSON.  Unknown keys are rejected at load time so a
typo cannot silently fall back to a default.  Provider credentials are
deliberately *not* configurable here: the HTTP provider reads its base URL
and key from environment variables only, and this loader refuses config files
that try to smuggle them in.
"""

from __future__ import annotations

import dataclasses
import json
import os

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

ENV_CONFIG_PATH = "LANGASSESS_CONFIG"

_FORBIDDEN_KEYS = ("provider_url", "provider_key")


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class AlertRuleConfig:
    name: str
    metric: str
    threshold: float
    direction: str = "above"
    open_review: bool = False


@dataclass(frozen=True)
class Config:
    # storage
    store_path: str | None = None
    deterministic_ids: bool = False

    # provider selection (endpoint + credential come from the environment)
    provider: str = "mock"
    provider_timeout: float = 30.0
    max_tokens: int = 512

    # passage generation
    passage_min_words: int = 80
    passage_max_words: int = 120
    passage_target_words: int = 100
    generation_retries: int = 5
    embedding_dim: int = 16
    ngram_order: int = 2

    # gap-fill derivation
    cloze_blanks: int = 9
    cloze_min_gap: int = 5
    cloze_band_low: float = 30.0
    cloze_band_high: float = 70.0
    cloze_min_tokens: int = 40
    cloze_distractors: int = 3
    cloze_semantic_weight: float = 0.5

    # sentence-completion and passage-level choice items
    completion_sim_floor: float = 0.10
    completion_sim_ceiling: float = 0.90
    choice_sim_floor: float = 0.05
    choice_sim_ceiling: float = 0.90
    comprehension_count: int = 5

    # draft filters
    filter_stem_min_tokens: int = 3
    filter_stem_max_tokens: int = 250
    filter_option_min_tokens: int = 1
    filter_option_max_tokens: int = 40

    # writing scorer
    scorer_trees: int = 200
    scorer_depth: int = 3
    scorer_learning_rate: float = 0.1
    scorer_min_leaf: int = 5
    scorer_seed: int = 0

    # fairness audits
    dif_alpha: float = 0.05
    dif_strata: int = 5
    drf_threshold: float = 0.10

    # plagiarism
    fingerprint_k: int = 25
    fingerprint_window: int = 16
    plagiarism_threshold: float = 0.30

    # review
    attention_threshold: float = 0.5

    # monitoring
    monitor_top_n: int = 10
    alert_rules: tuple[AlertRuleConfig, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["alert_rules"] = [dataclasses.asdict(r) for r in self.alert_rules]
        return out


_FIELDS = {f.name: f for f in dataclasses.fields(Config)}


def _coerce(name: str, value: Any) -> Any:
    if name == "alert_rules":
        if not isinstance(value, list):
            raise ConfigError("alert_rules must be a list of rule tables")
        rules = []
        known = {f.name for f in dataclasses.fields(AlertRuleConfig)}
        for i, raw in enumerate(value):
            if not isinstance(raw, dict):
                raise ConfigError(f"alert_rules[{i}] must be a table")
            unknown = sorted(set(raw) - known)
            if unknown:
                raise ConfigError(f"alert_rules[{i}]: unknown keys {unknown}")
            try:
                rules.append(AlertRuleConfig(**raw))
            except TypeError as exc:
                raise ConfigError(f"alert_rules[{i}]: {exc}") from exc
        return tuple(rules)
    return value


def from_dict(raw: dict) -> Config:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    for key in _FORBIDDEN_KEYS:
        if key in raw:
            raise ConfigError(
                f"{key!r} is not allowed in config files; provider endpoint and "
                "credential are read from environment variables only"
            )
    unknown = sorted(set(raw) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    values = {name: _coerce(name, value) for name, value in raw.items()}
    try:
        return Config(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None = None) -> Config:
    """Load a config file; falls back to $LANGASSESS_CONFIG, then defaults."""
    if path is None:
        path = os.environ.get(ENV_CONFIG_PATH) or None
    if path is None:
        return Config()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".toml":
        try:
            raw = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    elif path.suffix == ".json":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    else:
        raise ConfigError(f"unsupported config format {path.suffix!r} (use .toml or .json)")
    return from_dict(raw)
