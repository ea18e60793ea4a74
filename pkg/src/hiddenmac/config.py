"""Protocol and traffic configuration plus the key = value config reader."""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field

from .errors import ConfigError
from .units import DEFAULT_SLOT_SECONDS


class QueuePolicy(enum.Enum):
    INFINITE_FIFO = "infinite_fifo"
    SINGLE_OVERWRITE = "single_overwrite"


@dataclass(frozen=True)
class ProtocolConfig:
    """MAC parameters in slot units.

    ``w`` is the contention window plus one; the Markov chain has ``w - 1``
    admissible initial counters because a zero initial counter is
    prohibited.  DIFS is already folded into ``frame_len_slots``.
    ``strict_draw`` restores the standard's [0, cw_min] initial draw
    (including immediate transmission); it is excluded from analytical
    comparisons.
    """

    cw_min: int
    frame_len_slots: int
    slot_seconds: float = DEFAULT_SLOT_SECONDS
    strict_draw: bool = False

    def __post_init__(self):
        if self.cw_min < 2:
            raise ConfigError(f"cw_min must be >= 2, got {self.cw_min}")
        if self.frame_len_slots < 1:
            raise ConfigError(f"frame_len_slots must be >= 1, got {self.frame_len_slots}")
        if self.slot_seconds <= 0:
            raise ConfigError(f"slot_seconds must be positive, got {self.slot_seconds}")

    @property
    def w(self) -> int:
        return self.cw_min + 1


@dataclass(frozen=True)
class TrafficConfig:
    """Poisson frame arrivals and the MAC queue discipline."""

    lambda_f: float  # frames per second
    queue_policy: QueuePolicy = QueuePolicy.INFINITE_FIFO

    def __post_init__(self):
        if not (self.lambda_f >= 0) or self.lambda_f != self.lambda_f or self.lambda_f == float("inf"):
            raise ConfigError(f"lambda_f must be finite and non-negative, got {self.lambda_f}")

    def lambda_per_slot(self, slot_seconds: float = DEFAULT_SLOT_SECONDS) -> float:
        return self.lambda_f * slot_seconds


def parse_config_text(text: str) -> dict:
    """Parse flat ``key = value`` configuration text.

    The grammar is the scalar subset of TOML: one assignment per line,
    ``#`` comments, numbers, booleans, quoted strings, and bracketed
    lists of scalars.
    """
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        try:
            out[key] = _parse_value(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    return out


def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def _parse_value(token: str):
    if token.startswith("[") and token.endswith("]"):
        inner = token[1:-1].strip()
        if not inner:
            return []
        return [_parse_scalar(part.strip()) for part in inner.split(",")]
    return _parse_scalar(token)


def _parse_scalar(token: str):
    if token in ("true", "True"):
        return True
    if token in ("false", "False"):
        return False
    if len(token) >= 2 and token[0] == token[-1] and token[0] in "\"'":
        return token[1:-1]
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        raise ValueError(f"cannot parse value {token!r}")


def config_digest(mapping: dict) -> str:
    """Stable short hash of a configuration mapping, for output headers."""
    canon = repr(sorted(mapping.items(), key=lambda kv: kv[0]))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]
