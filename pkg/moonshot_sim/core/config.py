# moonshot_sim/core/config.py

"""
Default configuration constants and the simulation configuration model.

This module defines default values used throughout the application (output
locations, scheduler probabilities, exploration budgets) together with
``SimConfig``, the validated configuration of one simulation run, and the
loader for line-oriented ``key = value`` configuration files. Values in a
configuration file can be overridden by command-line arguments.
"""

import enum
import json
import os
from typing import Any, Dict, Mapping, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError

# --- Output Configuration ---
DEFAULT_OUTPUT_DIR: str = "./moonshot-out"
"""Default directory for trace and report files."""

OUTPUT_DIR_ENV_VAR: str = "MOONSHOT_SIM_OUT"
"""Environment variable overriding ``DEFAULT_OUTPUT_DIR``."""

TRACE_FILENAME_TEMPLATE: str = "trace-seed{seed}.log"
REPORT_FILENAME_TEMPLATE: str = "report-seed{seed}.txt"

# --- Scheduler Configuration ---
DEFAULT_F: int = 1
DEFAULT_MAX_STEPS: int = 2000

DEFAULT_TIMER_PROBABILITY: float = 0.02
"""Chance that a step fires a timer while deliveries are still pending."""

DEFAULT_INJECT_PROBABILITY: float = 0.25
"""Chance that a step executes a queued adversary injection."""

ADVERSARY_QUEUE_LIMIT: int = 64
"""Injections queued beyond this are discarded, oldest first."""

# --- Exploration Configuration ---
DEFAULT_EXPLORE_DEPTH: int = 8
DEFAULT_EXPLORE_STATE_BUDGET: int = 200_000
"""Distinct states visited before an exploration is reported incomplete."""

# --- Trace Format ---
TRACE_HEADER_PREFIX: str = "# moonshot-sim trace v1 config="
SCRIPT_LINE_PATTERN: str = r"^at_step=(\d+)\s+inject\s+(?:dst=(\d+)\s+)?(\{.*\})\s*$"
"""Scripted adversary line: ``at_step=<int> inject [dst=<int>] <canonical message>``."""


class AdversaryStrategy(str, enum.Enum):
    PASSIVE = "passive"
    RANDOM = "random"
    EQUIVOCATOR = "equivocator"
    VOTE_SPLITTER = "vote_splitter"
    SCRIPTED = "scripted"


class Mutation(str, enum.Enum):
    """Protocol mutations; each one disables a single guard or threshold."""

    WEAK_QUORUM = "WeakQuorum"
    NO_LOCK_CHECK = "NoLockCheck"
    MIXED_QC_KINDS = "MixedQcKinds"
    NO_EQUIVOCATION_GUARD = "NoEquivocationGuard"
    NO_TIMEOUT_GUARD = "NoTimeoutGuard"
    NON_ADJACENT_COMMIT = "NonAdjacentCommit"


def _squash(name: str) -> str:
    return name.replace("_", "").replace("-", "").lower()


def parse_enum(enum_cls: Any, raw: Any) -> Any:
    """Matches ``raw`` against enum values ignoring case, '_' and '-'."""
    if isinstance(raw, enum_cls):
        return raw
    wanted = _squash(str(raw))
    for member in enum_cls:
        if _squash(member.value) == wanted or _squash(member.name) == wanted:
            return member
    choices = ", ".join(m.value for m in enum_cls)
    raise ValueError(f"'{raw}' is not one of: {choices}")


class SimConfig(BaseModel):
    """Validated configuration of a single simulation run."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    f: int = Field(default=DEFAULT_F, ge=0)
    byzantine: Tuple[int, ...] = ()
    seed: int = Field(default=0, ge=0, lt=2**64)
    max_steps: int = Field(default=DEFAULT_MAX_STEPS, ge=0)
    drop_probability: float = Field(default=0.0, ge=0.0, le=1.0)
    duplicate_probability: float = Field(default=0.0, ge=0.0, le=1.0)
    adversary_strategy: AdversaryStrategy = AdversaryStrategy.PASSIVE
    script_path: Optional[str] = None
    mutation: Optional[Mutation] = None
    timer_probability: float = Field(default=DEFAULT_TIMER_PROBABILITY, ge=0.0, le=1.0)
    quiescent_timers: bool = False
    inject_probability: float = Field(default=DEFAULT_INJECT_PROBABILITY, ge=0.0, le=1.0)

    @field_validator("byzantine", mode="before")
    @classmethod
    def _parse_byzantine(cls, value: Any) -> Any:
        if isinstance(value, str):
            text = value.strip().strip("{}[]()")
            if not text:
                return ()
            return tuple(int(part) for part in text.split(",") if part.strip())
        if isinstance(value, int):
            return (value,)
        return value

    @field_validator("byzantine")
    @classmethod
    def _sort_byzantine(cls, value: Tuple[int, ...]) -> Tuple[int, ...]:
        if len(set(value)) != len(value):
            raise ValueError(f"byzantine ids must be distinct, got {list(value)}")
        return tuple(sorted(value))

    @field_validator("adversary_strategy", mode="before")
    @classmethod
    def _parse_strategy(cls, value: Any) -> Any:
        return parse_enum(AdversaryStrategy, value)

    @field_validator("mutation", mode="before")
    @classmethod
    def _parse_mutation(cls, value: Any) -> Any:
        if value is None or (isinstance(value, str) and value.strip().lower() in ("", "none")):
            return None
        return parse_enum(Mutation, value)

    @field_validator("script_path", mode="before")
    @classmethod
    def _parse_script_path(cls, value: Any) -> Any:
        if isinstance(value, str) and value.strip().lower() in ("", "none"):
            return None
        return value

    @model_validator(mode="after")
    def _check_fault_bound(self) -> "SimConfig":
        n = 3 * self.f + 1
        outside = [b for b in self.byzantine if not 0 <= b < n]
        if outside:
            raise ValueError(f"byzantine ids {outside} are outside [0, {n})")
        if len(self.byzantine) > self.f:
            raise ValueError(
                f"{len(self.byzantine)} byzantine validators exceed the fault bound f={self.f}"
            )
        if self.adversary_strategy is AdversaryStrategy.SCRIPTED and not self.script_path:
            raise ValueError("adversary_strategy = scripted requires script_path")
        return self

    @property
    def n(self) -> int:
        return 3 * self.f + 1

    @property
    def honest(self) -> Tuple[int, ...]:
        byz = set(self.byzantine)
        return tuple(i for i in range(self.n) if i not in byz)

    def with_overrides(self, **overrides: Any) -> "SimConfig":
        """Returns a re-validated copy; ``None`` override values are ignored."""
        data = self.model_dump()
        data.update({k: v for k, v in overrides.items() if v is not None})
        return build_config(data, source="overrides")

    def canonical(self) -> str:
        """Single-line JSON rendering used in trace headers."""
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


CONFIG_KEYS: Tuple[str, ...] = tuple(SimConfig.model_fields)


def build_config(data: Mapping[str, Any], source: str = "<config>") -> SimConfig:
    """
    Validates raw key/value data into a ``SimConfig``.

    Raises:
        ConfigError: On unknown keys or any invalid value.
    """
    unknown = sorted(set(data) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"{source}: unknown configuration key(s): {', '.join(unknown)}")
    try:
        return SimConfig.model_validate(dict(data))
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}"
            for err in e.errors()
        )
        raise ConfigError(f"{source}: {problems}") from e


def parse_config_text(text: str, source: str = "<config>") -> SimConfig:
    """
    Parses line-oriented ``key = value`` text.

    Blank lines and lines starting with ``#`` are ignored. Keys must match
    ``SimConfig`` fields exactly and may appear only once.
    """
    data: Dict[str, str] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got '{line}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in data:
            raise ConfigError(f"{source}:{lineno}: duplicate key '{key}'")
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown configuration key '{key}'")
        data[key] = value
    return build_config(data, source=source)


def load_config(path: Optional[str]) -> SimConfig:
    """Loads a config file, or returns the defaults when ``path`` is None."""
    if path is None:
        return SimConfig()
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"Cannot read config file '{path}': {e}") from e
    return parse_config_text(text, source=path)


def default_output_dir() -> str:
    return os.environ.get(OUTPUT_DIR_ENV_VAR) or DEFAULT_OUTPUT_DIR
