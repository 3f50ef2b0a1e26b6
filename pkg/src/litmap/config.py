"""Flat key=value run configuration with documented defaults.

Lines look like `key = value`; `#` starts a comment.  Command-line flags
override file values.  Unknown keys and malformed values are usage errors
that name the offending key.  Behavior-profile effect sizes may be tuned
with `literate.<field>` / `illiterate.<field>` keys.
"""

from __future__ import annotations

from dataclasses import fields as dataclass_fields
from dataclasses import replace
from datetime import date
from pathlib import Path
from typing import Optional

from .learn import Hyperparams, SplitSpec
from .synthgen import (
    DEFAULT_ILLITERATE_PROFILE,
    DEFAULT_LITERATE_PROFILE,
    BehaviorProfile,
    PopulationConfig,
)


class ConfigError(Exception):
    """Bad configuration: unknown key, malformed value, missing input."""


def _parse_bool(text: str) -> bool:
    if text in ("1", "true", "yes"):
        return True
    if text in ("0", "false", "no"):
        return False
    raise ValueError("expected a boolean (0/1)")


def _parse_float_list(text: str) -> Optional[tuple[float, ...]]:
    text = text.strip()
    if not text:
        return None
    return tuple(float(v) for v in text.split(","))


def _parse_opt_float(text: str) -> Optional[float]:
    return float(text) if text.strip() else None


def _parse_opt_int(text: str) -> Optional[int]:
    return int(text) if text.strip() else None


# key -> (default string, parser, help)
DEFAULTS: dict[str, tuple[str, object, str]] = {
    # synthetic population
    "n_subscribers": ("5000", int, "synthetic population size"),
    "illiterate_prevalence": ("0.068", float, "positive-class fraction"),
    "observation_days": ("90", int, "observation window length in days"),
    "n_towers": ("200", int, "number of cell towers"),
    "n_zones": ("8", int, "number of spatial zones"),
    "zone_illiteracy_weights": ("", _parse_float_list,
                                "per-zone weights; empty = three 6x pockets"),
    "window_start": ("2016-01-04", date.fromisoformat, "window start (UTC date)"),
    "lon_min": ("90.25", float, "bounding box"),
    "lon_max": ("90.60", float, "bounding box"),
    "lat_min": ("23.60", float, "bounding box"),
    "lat_max": ("23.95", float, "bounding box"),
    # learner
    "train_fraction": ("0.75", float, "train split fraction"),
    "stratified": ("1", _parse_bool, "stratify the train/test split"),
    "n_trees": ("200", int, "boosting rounds"),
    "max_depth": ("3", int, "tree depth limit"),
    "learning_rate": ("0.1", float, "shrinkage"),
    "min_samples_leaf": ("20", int, "minimum samples per leaf"),
    "subsample": ("1.0", float, "per-tree row subsample fraction"),
    "threshold": ("0.5", float, "classification threshold"),
    "folds": ("0", int, "cross-validation folds for train --folds default (0 = off)"),
    # backward elimination
    "elim_trees": ("50", int, "reduced tree budget per candidate retrain"),
    "elim_penalty": ("3.0", float, "GCV complexity penalty per leaf"),
    "elim_tolerance": ("0.0", float, "stop when best GCV increase exceeds this"),
    "elim_max_steps": ("", _parse_opt_int, "cap on elimination steps (empty = none)"),
    # mapping
    "min_count": ("5", int, "suppress towers with fewer subscribers"),
    "cell_size_deg": ("", _parse_opt_float, "grid cell size (empty = span/80)"),
    "idw_power": ("2.0", float, "IDW distance exponent"),
    "idw_neighbors": ("8", int, "IDW neighbor count"),
    "exact_radius_km": ("0.001", float, "snap-to-tower radius"),
    "max_distance_km": ("", _parse_opt_float, "no-data beyond this (empty = unlimited)"),
    "margin_deg": ("0.01", float, "grid margin around towers"),
    # global
    "seed": ("42", int, "root seed; all stage seeds derive from it"),
    "threads": ("1", int, "worker threads for parallel sections"),
    "strict": ("0", _parse_bool, "abort on first malformed input row"),
}

_PROFILE_FIELDS = {f.name: f for f in dataclass_fields(BehaviorProfile)}


def _parse_profile_value(field_name: str, text: str):
    if field_name == "device_class_probs":
        probs = tuple(float(v) for v in text.split(","))
        if len(probs) != 3:
            raise ValueError("device_class_probs needs three comma-separated values")
        return probs
    if field_name in ("contact_pool_size", "place_pool_size"):
        return int(text)
    return float(text)


class RunConfig:
    """Typed view over the flat key=value mapping."""

    def __init__(self, values: Optional[dict] = None):
        self.values: dict[str, object] = {
            key: parser(default)  # type: ignore[operator]
            for key, (default, parser, _) in DEFAULTS.items()
        }
        self.profile_overrides: dict[str, dict[str, object]] = {
            "literate": {}, "illiterate": {},
        }
        if values:
            for key, value in values.items():
                self.set(key, value)

    def set(self, key: str, raw: str) -> None:
        if "." in key:
            prefix, _, field_name = key.partition(".")
            if prefix not in ("literate", "illiterate"):
                raise ConfigError(f"unknown config key {key!r}")
            if field_name not in _PROFILE_FIELDS:
                raise ConfigError(f"unknown profile field in config key {key!r}")
            try:
                self.profile_overrides[prefix][field_name] = _parse_profile_value(
                    field_name, raw
                )
            except ValueError as exc:
                raise ConfigError(f"bad value for config key {key!r}: {exc}") from exc
            return
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        _, parser, _ = DEFAULTS[key]
        try:
            self.values[key] = parser(raw)  # type: ignore[operator]
        except ValueError as exc:
            raise ConfigError(f"bad value for config key {key!r}: {exc}") from exc

    def __getitem__(self, key: str):
        return self.values[key]

    # ---- typed builders ----------------------------------------------------

    def population_config(self) -> PopulationConfig:
        v = self.values
        return PopulationConfig(
            n_subscribers=v["n_subscribers"],
            illiterate_prevalence=v["illiterate_prevalence"],
            observation_days=v["observation_days"],
            n_towers=v["n_towers"],
            n_zones=v["n_zones"],
            zone_illiteracy_weights=v["zone_illiteracy_weights"],
            seed=v["seed"],
            window_start=v["window_start"],
            lon_min=v["lon_min"],
            lon_max=v["lon_max"],
            lat_min=v["lat_min"],
            lat_max=v["lat_max"],
        )

    def profiles(self) -> dict[str, BehaviorProfile]:
        return {
            "literate": replace(DEFAULT_LITERATE_PROFILE, **self.profile_overrides["literate"]),
            "illiterate": replace(
                DEFAULT_ILLITERATE_PROFILE, **self.profile_overrides["illiterate"]
            ),
        }

    def hyperparams(self) -> Hyperparams:
        v = self.values
        try:
            return Hyperparams(
                n_trees=v["n_trees"],
                max_depth=v["max_depth"],
                learning_rate=v["learning_rate"],
                min_samples_leaf=v["min_samples_leaf"],
                subsample=v["subsample"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def split_spec(self) -> SplitSpec:
        v = self.values
        try:
            return SplitSpec(
                train_fraction=v["train_fraction"],
                stratified=v["stratified"],
                seed=v["seed"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def load_config_file(path: str | Path) -> RunConfig:
    config = RunConfig()
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    for line_no, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{p}:{line_no}: expected key = value")
        key, _, raw = text.partition("=")
        config.set(key.strip(), raw.strip())
    return config
