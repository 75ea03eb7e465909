"""Core domain types for the multilingual translation process.

A translation task moves a sentence between tagged languages; a trajectory is
a chain of sentences whose language changes at every hop.  ``SearchConfig``
carries every knob the search engine, extractor and trainer read, and
round-trips losslessly through a JSON file.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Sequence

__all__ = [
    "ConfigError",
    "Direction",
    "GateDecision",
    "LanguageTag",
    "Sentence",
    "SearchConfig",
    "SppoSign",
    "Trajectory",
    "config_digest",
    "load_config",
    "save_config",
    "validate_input",
    "validate_trajectory",
]


class ConfigError(ValueError):
    """Malformed domain value or configuration."""


# ------------------------------------------------------------------ values


@dataclass(frozen=True)
class LanguageTag:
    """Case-sensitive language identifier, e.g. ``en``, ``de`` or ``syn0``."""

    code: str

    def __post_init__(self) -> None:
        if not self.code or self.code != self.code.strip():
            raise ConfigError(f"invalid language tag: {self.code!r}")
        if any(ch.isspace() for ch in self.code):
            raise ConfigError(f"language tag contains whitespace: {self.code!r}")

    def __str__(self) -> str:
        return self.code


@dataclass(frozen=True)
class Sentence:
    """A piece of raw text in a known language.

    The text must be non-empty after trimming; it is stored untrimmed so that
    length checks see exactly what the caller provided.
    """

    text: str
    lang: LanguageTag

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ConfigError("sentence text is empty")


@dataclass(frozen=True)
class Direction:
    """An ordered translation direction; source and target must differ."""

    src: LanguageTag
    tgt: LanguageTag

    def __post_init__(self) -> None:
        if self.src == self.tgt:
            raise ConfigError(f"degenerate direction {self.src}->{self.tgt}")

    def reversed(self) -> "Direction":
        return Direction(self.tgt, self.src)

    def __str__(self) -> str:
        return f"{self.src}->{self.tgt}"


@dataclass(frozen=True)
class Trajectory:
    """A multi-hop chain of sentences with a language change at every hop."""

    steps: tuple[Sentence, ...]

    def __post_init__(self) -> None:
        if not validate_trajectory(self.steps):
            raise ConfigError("invalid trajectory: need >= 2 steps with a language change at every hop")

    @property
    def source_lang(self) -> LanguageTag:
        return self.steps[0].lang

    def reversed(self) -> "Trajectory":
        return Trajectory(tuple(reversed(self.steps)))

    def __len__(self) -> int:
        return len(self.steps)


def validate_trajectory(steps: Sequence[Sentence]) -> bool:
    """True iff `steps` is a well-formed trajectory.

    Requires at least two steps and a language change between every pair of
    consecutive steps.  Order-sensitive only in the trivial sense: reversing a
    valid trajectory keeps it valid.
    """
    if len(steps) == 0:
        raise ValueError("validate_trajectory called with no steps")
    if len(steps) < 2:
        return False
    return all(a.lang != b.lang for a, b in zip(steps, steps[1:]))


# ------------------------------------------------------------------ config


class SppoSign(str, Enum):
    """How the two squared terms of the preference loss are combined."""

    PAPER_DIFFERENCE = "paper_difference"
    SUM_OF_SQUARES = "sum_of_squares"


@dataclass(frozen=True)
class SearchConfig:
    """Every externally visible knob of a search / self-play run.

    ``languages`` is an ordered tuple; order matters for seeded draws and is
    preserved through serialization.  ``length_gate`` bounds are inclusive and
    measured in unicode scalar values of the raw text.
    """

    languages: tuple[LanguageTag, ...]
    width_b: int = 5
    sim_depth_n: int = 2
    node_budget: int = 20
    length_gate: tuple[int, int] = (30, 256)
    seed: int = 0
    detect_penalty: float = 0.5
    eta: float = 10.0
    sppo_sign: SppoSign = SppoSign.SUM_OF_SQUARES
    temperature: float = 1.0
    top_k: int = 50

    def __post_init__(self) -> None:
        if len(self.languages) < 2:
            raise ConfigError("need at least two languages")
        if len(set(self.languages)) != len(self.languages):
            raise ConfigError("duplicate language tags")
        if self.width_b < 1:
            raise ConfigError("width_b must be >= 1")
        if self.sim_depth_n < 1:
            raise ConfigError("sim_depth_n must be >= 1")
        if self.node_budget < 0:
            raise ConfigError("node_budget must be >= 0")
        lo, hi = self.length_gate
        if lo < 0 or hi < lo:
            raise ConfigError(f"bad length gate [{lo}, {hi}]")
        if not (0.0 < self.detect_penalty <= 1.0):
            raise ConfigError("detect_penalty must lie in (0, 1]")
        if self.eta <= 0.0:
            raise ConfigError("eta must be positive")
        if self.temperature < 0.0:
            raise ConfigError("temperature must be >= 0")
        if self.top_k < 1:
            raise ConfigError("top_k must be >= 1")

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "languages": [str(l) for l in self.languages],
            "width_b": self.width_b,
            "sim_depth_n": self.sim_depth_n,
            "node_budget": self.node_budget,
            "length_gate": list(self.length_gate),
            "seed": self.seed,
            "detect_penalty": self.detect_penalty,
            "eta": self.eta,
            "sppo_sign": self.sppo_sign.value,
            "temperature": self.temperature,
            "top_k": self.top_k,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SearchConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "languages" in kwargs:
            kwargs["languages"] = tuple(LanguageTag(c) for c in kwargs["languages"])
        if "length_gate" in kwargs:
            gate = kwargs["length_gate"]
            if len(gate) != 2:
                raise ConfigError("length_gate must hold exactly two bounds")
            kwargs["length_gate"] = (int(gate[0]), int(gate[1]))
        if "sppo_sign" in kwargs:
            kwargs["sppo_sign"] = SppoSign(kwargs["sppo_sign"])
        return cls(**kwargs)

    def with_seed(self, seed: int) -> "SearchConfig":
        return replace(self, seed=seed)


def save_config(config: SearchConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_config(path: str | Path) -> SearchConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return SearchConfig.from_dict(data)


def config_digest(config: SearchConfig) -> str:
    """Stable content hash of a config, used to stamp artifacts."""
    canonical = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# ------------------------------------------------------------------ gating


@dataclass(frozen=True)
class GateDecision:
    """Outcome of the input gate.  Rejection is a value, not an error."""

    accepted: bool
    reason: str | None = None

    REASON_TOO_SHORT = "too-short"
    REASON_TOO_LONG = "too-long"
    REASON_UNKNOWN_LANGUAGE = "unknown-language"


def validate_input(x: Sentence, config: SearchConfig) -> GateDecision:
    """Gate a candidate input sentence against language and length bounds.

    The language check runs first: a sentence outside the configured language
    set is rejected regardless of its length.
    """
    if x.lang not in config.languages:
        return GateDecision(False, GateDecision.REASON_UNKNOWN_LANGUAGE)
    lo, hi = config.length_gate
    n = len(x.text)
    if n < lo:
        return GateDecision(False, GateDecision.REASON_TOO_SHORT)
    if n > hi:
        return GateDecision(False, GateDecision.REASON_TOO_LONG)
    return GateDecision(True, None)
