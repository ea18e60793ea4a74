"""Conversions between wall-clock time, backoff slots, and frame sizes."""

from __future__ import annotations

import enum

from .errors import ConfigError, UnsupportedModeError

# Backoff slot of a 10 MHz OFDM channel.
DEFAULT_SLOT_SECONDS = 13e-6


class PhyMode(enum.Enum):
    QPSK_HALF = "QPSK1/2"


# Calibrated (payload bytes, airtime slots) anchors for QPSK rate 1/2.
# Airtime is affine in payload, so intermediate sizes interpolate linearly
# and round up to whole slots.
_QPSK_HALF_ANCHORS = ((200, 32), (512, 64))


def seconds_to_slots(t: float, sigma: float = DEFAULT_SLOT_SECONDS) -> float:
    """Convert a duration in seconds to (possibly fractional) slots."""
    if sigma <= 0:
        raise ConfigError(f"slot duration must be positive, got {sigma}")
    q = t / sigma
    # Guard the integer round trip: if t is exactly k slots as stored, return k.
    r = round(q)
    if r * sigma == t:
        return float(r)
    return q


def slots_to_seconds(k: float, sigma: float = DEFAULT_SLOT_SECONDS) -> float:
    """Convert a slot count to seconds."""
    if sigma <= 0:
        raise ConfigError(f"slot duration must be positive, got {sigma}")
    return k * sigma


def frame_bytes_to_slots(payload_bytes: int, phy_mode: PhyMode = PhyMode.QPSK_HALF) -> int:
    """Map a payload size to its on-air length in whole slots.

    Only QPSK rate 1/2 is calibrated.  The mapping passes exactly through
    the (200 B, 32) and (512 B, 64) anchors and extends linearly outside
    them, rounding up.
    """
    if phy_mode is not PhyMode.QPSK_HALF:
        raise UnsupportedModeError(f"no slot calibration for PHY mode {phy_mode!r}")
    if payload_bytes <= 0:
        raise ConfigError(f"payload_bytes must be positive, got {payload_bytes}")
    (p0, l0), (p1, l1) = _QPSK_HALF_ANCHORS
    # L = l0 + (P - p0) * (l1 - l0) / (p1 - p0), kept in exact integer
    # arithmetic: with the anchors above this is 4 * (P + 112) / 39.
    num = l0 * (p1 - p0) + (payload_bytes - p0) * (l1 - l0)
    den = p1 - p0
    return max(1, -((-num) // den))
