"""Masking hyperparameters and the two-stage switch."""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

from ..errors import ConfigError, InputError

POLICY_FORMAT_VERSION = 1


class Stage(enum.Enum):
    WORD_ONLY = "word"
    WORD_AND_PHRASE = "word+phrase"


def round_half_up(x: float) -> int:
    """Nearest integer, .5 rounding away from zero (x is never negative here)."""
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class MaskingPolicy:
    """All masking hyperparameters.

    total_rate: fraction of tokens corrupted by word/span masking.
    fin_share: fraction of that budget drawn from single-word financial terms.
    phrase_rate: per-occurrence probability of collapsing a phrase (additive,
        outside the word budget).
    geo_p / max_span: truncated-geometric span length distribution.
    span_share: fraction of the budget given to geometric spans when
        use_spans is on; the remainder goes to word masks.
    replace_split: (mask, random, keep) corruption probabilities.
    """

    total_rate: float = 0.15
    fin_share: float = 0.30
    phrase_rate: float = 0.30
    geo_p: float = 0.2
    max_span: int = 10
    replace_split: tuple[float, float, float] = (0.8, 0.1, 0.1)
    stage: Stage = Stage.WORD_ONLY
    seed: int = 0
    use_spans: bool = False
    span_share: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.total_rate < 1.0:
            raise ConfigError(f"total_rate must be in (0,1), got {self.total_rate}")
        if not 0.0 <= self.fin_share <= 1.0:
            raise ConfigError(f"fin_share must be in [0,1], got {self.fin_share}")
        if not 0.0 <= self.phrase_rate <= 1.0:
            raise ConfigError(f"phrase_rate must be in [0,1], got {self.phrase_rate}")
        if not 0.0 < self.geo_p <= 1.0:
            raise ConfigError(f"geo_p must be in (0,1], got {self.geo_p}")
        if self.max_span < 1:
            raise ConfigError(f"max_span must be >= 1, got {self.max_span}")
        if len(self.replace_split) != 3 or any(p < 0 for p in self.replace_split):
            raise ConfigError(f"replace_split must be 3 non-negative values, got {self.replace_split}")
        if abs(sum(self.replace_split) - 1.0) > 1e-9:
            raise ConfigError(f"replace_split must sum to 1, got {self.replace_split}")
        if not 0.0 <= self.span_share <= 1.0:
            raise ConfigError(f"span_share must be in [0,1], got {self.span_share}")

    def with_stage(self, stage: Stage) -> "MaskingPolicy":
        return dataclasses.replace(self, stage=stage)

    def to_json(self) -> dict:
        d = asdict_plain(self)
        d["version"] = POLICY_FORMAT_VERSION
        return d

    @classmethod
    def from_json(cls, data: dict) -> "MaskingPolicy":
        if data.get("version") != POLICY_FORMAT_VERSION:
            raise ConfigError(f"unsupported policy version: {data.get('version')!r}")
        kwargs = {k: v for k, v in data.items() if k != "version"}
        if "replace_split" in kwargs:
            kwargs["replace_split"] = tuple(kwargs["replace_split"])
        if "stage" in kwargs:
            kwargs["stage"] = Stage(kwargs["stage"])
        return cls(**kwargs)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json(), sort_keys=True, separators=(",", ":")) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "MaskingPolicy":
        p = Path(path)
        try:
            data = json.loads(p.read_text(encoding="utf-8"))
        except OSError as exc:
            raise InputError("cannot read policy file", str(p)) from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"policy file is not valid JSON ({exc})", str(p)) from exc
        return cls.from_json(data)


def asdict_plain(policy: MaskingPolicy) -> dict:
    d = asdict(policy)
    d["stage"] = policy.stage.value
    d["replace_split"] = list(policy.replace_split)
    return d


def policy_digest(policy: MaskingPolicy) -> str:
    canon = json.dumps(policy.to_json(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()
