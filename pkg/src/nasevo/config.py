"""TOML config files for the search space and the search itself.

Space file (all keys optional)::

    num_slots = 6
    choices_per_slot = [5, 5, 5, 5, 5, 5]   # or a single integer for every slot
    forbidden_prefixes = [[0, 0]]
    quality_seed = 0
    quality_mean = 0.7
    quality_stddev = 0.1
    heritability = 0.99
    slot_decay = 0.5
    epoch_levels = [50, 150]

Search file (all keys optional)::

    total_candidates = 1000
    population_size = 100
    sample_size = 5
    num_workers = 25
    rng_seed = 0
    epochs = 50
    transfer_enabled = true
    donor_scope = "parent"       # parent | population | history
    transfer_bonus = 0.0
    debug = false

    [duration]
    kind = "normal"              # normal | lognormal
    mean = 60.0
    stddev = 10.0
    minimum = 1.0

    [scheduling]
    mode = "continuous"          # continuous | quanta
    s_wait = 5

    [cache]
    policy = "store-all"         # store-all | skip-bottom | prob:EPS | tier:MIN:WINDOW
    capacity = 0                 # 0 = unbounded
"""
from __future__ import annotations

import sys
from dataclasses import asdict

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .cache_sim import CachePolicy
from .engine import DurationModel, SearchConfig
from .space import SpaceSpec

_SPACE_KEYS = {
    "num_slots", "choices_per_slot", "forbidden_prefixes", "quality_seed", "quality_mean",
    "quality_stddev", "heritability", "slot_decay", "epoch_levels",
}
_SEARCH_KEYS = {
    "total_candidates", "population_size", "sample_size", "num_workers", "rng_seed", "epochs",
    "transfer_enabled", "donor_scope", "transfer_bonus", "debug", "duration", "scheduling", "cache",
}
_DURATION_KEYS = {"kind", "mean", "stddev", "minimum"}
_SCHEDULING_KEYS = {"mode", "s_wait"}
_CACHE_KEYS = {"policy", "capacity"}


class ConfigError(ValueError):
    pass


def _load(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _check_keys(d: dict, allowed: set, where: str):
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {', '.join(unknown)}")


def space_from_dict(d: dict, where: str = "space config") -> SpaceSpec:
    _check_keys(d, _SPACE_KEYS, where)
    kw = {}
    n = d.get("num_slots", 6)
    kw["num_slots"] = n
    choices = d.get("choices_per_slot", 5)
    kw["choices_per_slot"] = [choices] * n if isinstance(choices, int) else choices
    kw["validity_rules"] = d.get("forbidden_prefixes", [])
    for key in ("quality_seed", "quality_mean", "quality_stddev", "heritability", "slot_decay", "epoch_levels"):
        if key in d:
            kw[key] = d[key]
    try:
        return SpaceSpec(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def search_from_dict(d: dict, where: str = "search config") -> SearchConfig:
    _check_keys(d, _SEARCH_KEYS, where)
    kw = {k: d[k] for k in _SEARCH_KEYS - {"duration", "scheduling", "cache"} if k in d}
    try:
        dur = d.get("duration", {})
        _check_keys(dur, _DURATION_KEYS, f"{where} [duration]")
        kw["duration"] = DurationModel(**dur)
        sched = d.get("scheduling", {})
        _check_keys(sched, _SCHEDULING_KEYS, f"{where} [scheduling]")
        if "mode" in sched:
            kw["scheduling"] = sched["mode"]
        if "s_wait" in sched:
            kw["s_wait"] = sched["s_wait"]
        cache = d.get("cache", {})
        _check_keys(cache, _CACHE_KEYS, f"{where} [cache]")
        capacity = cache.get("capacity") or None
        kw["cache_policy"] = CachePolicy.parse(cache.get("policy", "store-all"), capacity)
        return SearchConfig(**kw)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where}: {exc}") from None


def load_space_spec(path) -> SpaceSpec:
    return space_from_dict(_load(path), str(path))


def load_search_config(path) -> SearchConfig:
    return search_from_dict(_load(path), str(path))


def space_to_dict(spec: SpaceSpec) -> dict:
    d = asdict(spec)
    d["forbidden_prefixes"] = [list(r) for r in d.pop("validity_rules")]
    d["choices_per_slot"] = list(d["choices_per_slot"])
    d["epoch_levels"] = list(d["epoch_levels"])
    return d


def search_to_dict(cfg: SearchConfig) -> dict:
    d = asdict(cfg)
    policy = cfg.cache_policy or CachePolicy()
    d["cache_policy"] = {"policy": policy.label.split("@")[0], "capacity": policy.capacity}
    return d
