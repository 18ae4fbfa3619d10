"""Run configuration: a single JSON file, validated up front.

Relative paths are resolved against the directory holding the config file.
Credentials never live in the file; remote providers name an environment
variable instead (``api_key_env``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping

from .dataset import DEFAULT_DISPLAY_FORMS, DEFAULT_OOD_STRATA, DEFAULT_TRAIN_STRATA, check_split_strata
from .errors import ConfigError, ValuescapeError
from .gateway import DEFAULT_MAX_RETRIES, DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE
from .landscape import DENOMINATORS, MIN_S_C
from .survey import AXES

PROVIDER_KINDS = ("openai", "mock")
MOCK_MODES = ("gold", "refuse", "tie", "first", "script")


@dataclass(frozen=True)
class ProviderConfig:
    kind: str = "mock"
    model: str = "mock"
    base_url: str | None = None
    api_key_env: str = "OPENAI_API_KEY"
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    max_retries: int = DEFAULT_MAX_RETRIES
    requests_per_minute: float | None = None
    timeout: float = 120.0
    mock_mode: str = "gold"
    script: str | None = None

    def validate(self, name: str) -> None:
        if self.kind not in PROVIDER_KINDS:
            raise ConfigError(f"provider {name}: kind must be one of {PROVIDER_KINDS}")
        if self.kind == "openai" and not self.base_url:
            raise ConfigError(f"provider {name}: base_url is required")
        if self.kind == "mock" and self.mock_mode not in MOCK_MODES:
            raise ConfigError(f"provider {name}: mock_mode must be one of {MOCK_MODES}")
        if self.kind == "mock" and self.mock_mode == "script" and not self.script:
            raise ConfigError(f"provider {name}: mock_mode 'script' needs a script file")
        if self.temperature < 0:
            raise ConfigError(f"provider {name}: temperature must be non-negative")

    def identity(self) -> dict:
        """Fields that determine the model's replies (used for run-log hashing)."""
        return {"kind": self.kind, "model": self.model, "base_url": self.base_url,
                "temperature": self.temperature, "max_tokens": self.max_tokens,
                "mock_mode": self.mock_mode if self.kind == "mock" else None,
                "script": self.script if self.kind == "mock" else None}


@dataclass(frozen=True)
class RunConfig:
    codebook: Path
    responses: Path
    output_dir: Path
    exclusions: tuple[str, ...] = ()
    min_n: int = 30
    train_strata: tuple[str, ...] = DEFAULT_TRAIN_STRATA
    ood_strata: tuple[str, ...] = DEFAULT_OOD_STRATA
    axes: tuple[str, ...] = AXES
    denominators: tuple[str, ...] = (MIN_S_C,)
    nationality: str = "Singaporean"
    display_forms: Mapping[str, Mapping[str, str]] = field(default_factory=lambda: DEFAULT_DISPLAY_FORMS)
    providers: Mapping[str, ProviderConfig] = field(default_factory=dict)
    parallelism: int = 4
    seed: int = 42
    resamples: int = 2000
    level: float = 0.95
    strict_parsing: bool = False
    refusals_count_as_incorrect: bool = True
    open_ended_limit: int | None = None
    exemplar_stratum: str = "sex_x_age"

    def validate(self) -> "RunConfig":
        for label, path in (("codebook", self.codebook), ("responses", self.responses)):
            if not Path(path).is_file():
                raise ConfigError(f"{label} file not found: {path}")
        if self.min_n < 1:
            raise ConfigError("min_n must be at least 1")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be at least 1")
        if self.resamples < 1 or not 0 < self.level < 1:
            raise ConfigError("bootstrap needs resamples >= 1 and 0 < level < 1")
        bad = [d for d in self.denominators if d not in DENOMINATORS]
        if bad:
            raise ConfigError(f"unknown denominators {bad}; choose from {DENOMINATORS}")
        try:
            check_split_strata(self.train_strata, self.ood_strata, self.axes)
        except ValuescapeError as exc:
            raise ConfigError(str(exc)) from exc
        for name, p in self.providers.items():
            p.validate(name)
        return self

    def provider(self, name: str) -> ProviderConfig:
        try:
            return self.providers[name]
        except KeyError:
            raise ConfigError(f"no provider named {name!r} in config") from None


def _resolve(base: Path, value) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def config_from_dict(data: Mapping, base_dir=".") -> RunConfig:
    base = Path(base_dir)
    known = {f.name for f in fields(RunConfig)}
    stray = sorted(set(data) - known)
    if stray:
        raise ConfigError(f"unknown config keys {stray}")
    for required in ("codebook", "responses"):
        if required not in data:
            raise ConfigError(f"config lacks {required!r}")
    kwargs = dict(data)
    kwargs["codebook"] = _resolve(base, data["codebook"])
    kwargs["responses"] = _resolve(base, data["responses"])
    kwargs["output_dir"] = _resolve(base, data.get("output_dir", "out"))
    for key in ("exclusions", "train_strata", "ood_strata", "axes", "denominators"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    provider_keys = {f.name for f in fields(ProviderConfig)}
    providers = {}
    for name, p in data.get("providers", {}).items():
        stray = sorted(set(p) - provider_keys)
        if stray:
            raise ConfigError(f"provider {name}: unknown keys {stray}")
        p = dict(p)
        if p.get("script"):
            p["script"] = str(_resolve(base, p["script"]))
        providers[name] = ProviderConfig(**p)
    kwargs["providers"] = providers
    return RunConfig(**kwargs)


def load_config(path, overrides: Mapping | None = None) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except ValueError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    cfg = config_from_dict(data, path.parent)
    if overrides:
        cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    return cfg.validate()
