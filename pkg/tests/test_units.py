import pytest
from hypothesis import given, strategies as st

from hiddenmac.errors import ConfigError, UnsupportedModeError
from hiddenmac.units import (
    DEFAULT_SLOT_SECONDS,
    PhyMode,
    frame_bytes_to_slots,
    seconds_to_slots,
    slots_to_seconds,
)


def test_seconds_to_slots_identity():
    assert seconds_to_slots(13e-6, 13e-6) == 1.0


def test_seconds_to_slots_table_constant():
    # 416 us is 32 backoff slots of 13 us
    assert seconds_to_slots(416e-6, 13e-6) == 32.0


def test_seconds_to_slots_zero():
    assert seconds_to_slots(0.0, 13e-6) == 0.0


def test_seconds_to_slots_rejects_bad_sigma():
    with pytest.raises(ConfigError):
        seconds_to_slots(1.0, 0.0)
    with pytest.raises(ConfigError):
        seconds_to_slots(1.0, -1e-6)


@given(st.integers(min_value=0, max_value=10**9))
def test_slot_round_trip_exact(k):
    assert seconds_to_slots(slots_to_seconds(k)) == k


def test_frame_bytes_anchors():
    assert frame_bytes_to_slots(200, PhyMode.QPSK_HALF) == 32
    assert frame_bytes_to_slots(512, PhyMode.QPSK_HALF) == 64


def test_frame_bytes_interpolation():
    # midpoint-ish: hand interpolation between the anchors, then ceiling
    assert frame_bytes_to_slots(356) == 48


@given(st.integers(min_value=1, max_value=4096))
def test_frame_bytes_monotone(p):
    assert frame_bytes_to_slots(p + 1) >= frame_bytes_to_slots(p) >= 1


def test_frame_bytes_rejects_unknown_mode():
    class FakeMode:
        pass

    with pytest.raises(UnsupportedModeError):
        frame_bytes_to_slots(200, FakeMode())


def test_frame_bytes_rejects_nonpositive():
    with pytest.raises(ConfigError):
        frame_bytes_to_slots(0)


def test_default_slot_matches_phy():
    assert DEFAULT_SLOT_SECONDS == 13e-6
