import os
from pathlib import Path
from typing import Any, Mapping

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator

from dmvrpx.domain import PolicyName, enumerate_settings


ENV_PREFIX = "DMVRPX_"

DEFAULT_POLICIES = [PolicyName.DPC, PolicyName.MCTS, PolicyName.MYOPIC]

# fields that may not change a single output byte
RUNTIME_ONLY = frozenset({"out_dir", "workers"})


def _split_csv(value: Any) -> Any:
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


class StudyConfig(BaseModel):
    root_seed: int = Field(42, ge=0, lt=2**64)
    instances_per_setting: int = Field(50, ge=1)
    policies: list[PolicyName] = Field(default_factory=lambda: list(DEFAULT_POLICIES))
    out_dir: Path = Path("study")
    workers: int = Field(1, ge=1)
    # Monte-Carlo path count; None propagates decision rates exactly
    sampling_rates: int | None = Field(None, ge=1)
    figures: bool = True
    settings: list[int] | None = None
    dump_metrics: bool = False

    model_config = ConfigDict(extra="forbid")

    @field_validator("policies", mode="before")
    @classmethod
    def _split_policies(cls, value: Any) -> Any:
        return _split_csv(value)

    @field_validator("policies")
    @classmethod
    def _canonical_policies(cls, value: list[PolicyName]) -> list[PolicyName]:
        if not value:
            raise ValueError("at least one policy is required")
        return [p for p in PolicyName if p in set(value)]

    @field_validator("settings", mode="before")
    @classmethod
    def _split_settings(cls, value: Any) -> Any:
        return _split_csv(value)

    @field_validator("settings")
    @classmethod
    def _known_settings(cls, value: list[int] | None) -> list[int] | None:
        if value is None:
            return None
        n = len(enumerate_settings())
        unknown = [s for s in value if not 0 <= s < n]
        if unknown:
            raise ValueError(f"setting ordinals must be in 0..{n - 1}, got {unknown}")
        if not value:
            raise ValueError("settings subset must not be empty")
        return sorted(set(value))

    @field_validator("sampling_rates", mode="before")
    @classmethod
    def _none_marker(cls, value: Any) -> Any:
        if isinstance(value, str) and value.strip().lower() in ("", "none", "exact"):
            return None
        return value

    @classmethod
    def from_yaml(cls, path: str | Path) -> "StudyConfig":
        return cls.model_validate(cls._read_yaml(path))

    @staticmethod
    def _read_yaml(path: str | Path) -> dict:
        with open(path, "r") as f:
            data = yaml.safe_load(f) or {}
        if not isinstance(data, dict):
            raise ValueError(f"{path}: expected a mapping at the top level")
        return data

    @classmethod
    def from_env(cls, environ: Mapping[str, str] | None = None) -> dict[str, str]:
        """Raw overrides from ``DMVRPX_<FIELD>`` variables; validation happens on load."""
        environ = os.environ if environ is None else environ
        overrides = {}
        for name in cls.model_fields:
            key = ENV_PREFIX + name.upper()
            if key in environ:
                overrides[name] = environ[key]
        return overrides

    @classmethod
    def load(
        cls,
        config_path: str | Path | None = None,
        flags: Mapping[str, Any] | None = None,
        environ: Mapping[str, str] | None = None,
    ) -> "StudyConfig":
        """
        Merge configuration sources. Later sources win:
        defaults, YAML file, environment, command-line flags.
        """
        data: dict[str, Any] = {}
        if config_path is not None:
            data.update(cls._read_yaml(config_path))
        data.update(cls.from_env(environ))
        data.update({k: v for k, v in (flags or {}).items() if v is not None})
        return cls.model_validate(data)

    def manifest_view(self) -> dict:
        return self.model_dump(mode="json", exclude=set(RUNTIME_ONLY))
