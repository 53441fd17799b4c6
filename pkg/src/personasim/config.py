"""Run configuration: TOML file values overridden by command-line flags."""
from __future__ import annotations

import glob
from dataclasses import dataclass, field, fields
from pathlib import Path

import tomli

from .recommenders import KINDS as ALGORITHMS
from .simulate import POLICY_KINDS

BACKENDS = ("deterministic", "llm")
CASSETTE_MODES = ("live", "record", "replay")
MAX_SEED = 2**64 - 1


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class RunConfig:
    reviews: list[str] = field(default_factory=list)
    metadata: list[str] = field(default_factory=list)
    out: str = "runs/default"
    min_interactions: int = 20
    test_fraction: float = 0.2
    eta: int = 5
    cycles: list[int] = field(default_factory=lambda: [7, 365])
    token_budget: int = 3000
    backend: str = "deterministic"
    llm_base_url: str = ""
    llm_model: str = ""
    cassette: str = "cassettes/persona.jsonl"
    cassette_mode: str = "replay"
    llm_max_in_flight: int = 4
    llm_timeout: float = 60.0
    policies: list[str] = field(default_factory=lambda: [
        "personality-deterministic", "random", "markov", "ablation-random-personality"])
    algorithms: list[str] = field(default_factory=lambda: list(ALGORITHMS))
    susceptibility_algorithm: str = "markov-seq"
    k: int = 20
    seed: int = 0
    jobs: int = 1
    trait_weights: dict = field(default_factory=dict)
    hyperparams: dict = field(default_factory=dict)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def review_files(self) -> list[str]:
        return _expand(self.reviews)

    def metadata_files(self) -> list[str]:
        return _expand(self.metadata)

    def validate(self, check_inputs: bool = True) -> "RunConfig":
        if check_inputs:
            if not self.reviews:
                raise ConfigError("reviews", "no review files configured")
            for name in ("reviews", "metadata"):
                for pattern in getattr(self, name):
                    if not glob.glob(pattern):
                        raise ConfigError(name, f"path does not exist: {pattern}")
        if self.min_interactions < 1:
            raise ConfigError("min_interactions", "must be >= 1")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("test_fraction", "must lie in (0, 1)")
        if self.eta < 1:
            raise ConfigError("eta", "must be >= 1")
        if not self.cycles or any(int(c) < 1 for c in self.cycles):
            raise ConfigError("cycles", "cycle lengths must be positive day counts")
        if self.token_budget < 1:
            raise ConfigError("token_budget", "must be positive")
        if self.backend not in BACKENDS:
            raise ConfigError("backend", f"must be one of {BACKENDS}")
        if self.cassette_mode not in CASSETTE_MODES:
            raise ConfigError("cassette_mode", f"must be one of {CASSETTE_MODES}")
        bad = [p for p in self.policies if p not in POLICY_KINDS or p == "oracle"]
        if bad or not self.policies:
            raise ConfigError("policies", f"unknown or disallowed policies {bad}")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad or not self.algorithms:
            raise ConfigError("algorithms", f"unknown algorithms {bad}")
        if self.susceptibility_algorithm not in ALGORITHMS:
            raise ConfigError("susceptibility_algorithm", f"must be one of {ALGORITHMS}")
        if self.k < 1:
            raise ConfigError("k", "must be >= 1")
        if not 0 <= self.seed <= MAX_SEED:
            raise ConfigError("seed", "must be a 64-bit unsigned integer")
        if self.jobs < 1:
            raise ConfigError("jobs", "must be >= 1")
        if self.backend == "llm" and self.cassette_mode != "replay" and not self.llm_base_url:
            raise ConfigError("llm_base_url", "required for live or record mode")
        return self


def _expand(patterns) -> list[str]:
    out = []
    for p in patterns:
        out.extend(sorted(glob.glob(p)))
    return out


def _coerce(name: str, value, default):
    try:
        if isinstance(default, bool):
            return value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, list):
            if isinstance(value, str):
                value = [v.strip() for v in value.split(",") if v.strip()]
            if name == "cycles":
                return [int(v) for v in value]
            return list(value)
        if isinstance(default, dict):
            if not isinstance(value, dict):
                raise TypeError("expected a table")
            return value
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(name, f"cannot interpret {value!r}: {exc}") from None


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Build a config from an optional TOML file plus overrides (flags win).

    Relative input and cassette paths in the file resolve against the file's
    directory; relative paths given as overrides resolve against the cwd.
    """
    cfg = RunConfig()
    defaults = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    values = {}
    if path is not None:
        path = Path(path)
        try:
            with open(path, "rb") as fh:
                raw = tomli.load(fh)
        except FileNotFoundError:
            raise ConfigError("config", f"file not found: {path}") from None
        except tomli.TOMLDecodeError as exc:
            raise ConfigError("config", f"invalid TOML: {exc}") from None
        base = path.parent
        for key, value in raw.items():
            name = key.replace("-", "_")
            if name not in defaults:
                raise ConfigError(name, "unknown configuration key")
            values[name] = _coerce(name, value, defaults[name])
        for name in ("reviews", "metadata"):
            if name in values:
                values[name] = [str(base / p) for p in values[name]]
        for name in ("cassette",):
            if name in values and not Path(values[name]).is_absolute():
                values[name] = str(base / values[name])
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        name = key.replace("-", "_")
        if name not in defaults:
            raise ConfigError(name, "unknown configuration key")
        values[name] = _coerce(name, value, defaults[name])
    for name, value in values.items():
        setattr(cfg, name, value)
    return cfg
