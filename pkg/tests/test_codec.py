"""Frame codec: payload packing, CMAC integrity, round trips, forgeries."""

import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loratherm import codec
from loratherm.codec import (
    FRAME_LEN,
    HEADER_LEN,
    MIC_LEN,
    SensorPayload,
    UplinkFrame,
    aes_cmac,
    decode_frame,
    decode_payload,
    derive_device_key,
    encode_frame,
    encode_payload,
)
from loratherm.errors import FramingError, IntegrityError, ParameterError, UnknownDeviceError

KEY = bytes(range(16))


def lookup(key):
    return lambda addr: key


# RFC 4493 appendix test vectors (AES-128-CMAC).
RFC4493_KEY = bytes.fromhex("2b7e151628aed2a6abf7158809cf4f3c")
RFC4493_MSG = bytes.fromhex(
    "6bc1bee22e409f96e93d7e117393172a"
    "ae2d8a571e03ac9c9eb76fac45af8e51"
    "30c81c46a35ce411e5fbc1191a0a52ef"
    "f69f2445df4f9b17ad2b417be66c3710"
)
RFC4493_CASES = [
    (b"", "bb1d6929e95937287fa37d129b756746"),
    (RFC4493_MSG[:16], "070a16b46b4d4144f79bdd9dd04a287c"),
    (RFC4493_MSG[:40], "dfa66747de9ae63030ca32611497c827"),
    (RFC4493_MSG[:64], "51f0bebf7e3b9d92fc49741779363cfe"),
]


class TestCmac:
    @pytest.mark.parametrize("message,want_hex", RFC4493_CASES)
    def test_rfc4493_vectors(self, message, want_hex):
        assert aes_cmac(RFC4493_KEY, message) == bytes.fromhex(want_hex)

    def test_rejects_short_key(self):
        with pytest.raises(ParameterError):
            aes_cmac(b"short", b"")

    def test_key_derivation_is_stable_and_distinct(self):
        k1 = derive_device_key(KEY, 0x01000001)
        k2 = derive_device_key(KEY, 0x01000002)
        assert len(k1) == 16
        assert k1 != k2
        assert k1 == derive_device_key(KEY, 0x01000001)


class TestPayload:
    def test_golden_bytes(self):
        cases = [
            (SensorPayload(2500, 4500, 3600, 3), "c4099411100e0300"),
            (SensorPayload(-1, 0, 0, 0), "ffff000000000000"),
            (SensorPayload(3210, 3855, 4125, 65535), "8a0c0f0f1d10ffff"),
        ]
        for payload, want_hex in cases:
            data = encode_payload(payload)
            assert data.hex() == want_hex
            assert decode_payload(data) == payload

    def test_from_physical_rounds(self):
        p = SensorPayload.from_physical(25.004, 45.006, 3600, 3)
        assert p.temp_centi_c == 2500
        assert p.rh_centi_pct == 4501
        assert p.temp_c == pytest.approx(25.0)
        assert p.rh_pct == pytest.approx(45.01)

    def test_physical_range_flag(self):
        assert SensorPayload(2500, 4500, 3600, 0).in_physical_range
        assert not SensorPayload(-4001, 4500, 3600, 0).in_physical_range
        assert not SensorPayload(2500, 10001, 3600, 0).in_physical_range
        assert not SensorPayload(2500, 4500, 1700, 0).in_physical_range

    def test_field_range_validation(self):
        with pytest.raises(ParameterError):
            SensorPayload(40000, 0, 0, 0)
        with pytest.raises(ParameterError):
            SensorPayload(0, -1, 0, 0)
        with pytest.raises(ParameterError):
            SensorPayload(0, 0, 70000, 0)

    def test_decode_rejects_wrong_length(self):
        with pytest.raises(FramingError):
            decode_payload(b"\x00" * 7)

    @given(
        temp=st.integers(-32768, 32767),
        rh=st.integers(0, 65535),
        mv=st.integers(0, 65535),
        conf=st.integers(0, 65535),
    )
    @settings(max_examples=300)
    def test_roundtrip_property(self, temp, rh, mv, conf):
        p = SensorPayload(temp, rh, mv, conf)
        assert decode_payload(encode_payload(p)) == p


class TestFrame:
    def test_wire_layout(self):
        payload = SensorPayload(2500, 4500, 3600, 3)
        frame = encode_frame(payload, 0x01000001, 0x1234, KEY, confirmed=True)
        assert len(frame) == FRAME_LEN == 21
        assert frame[0] == codec.MHDR_CONFIRMED_UP
        assert struct.unpack_from("<I", frame, 1)[0] == 0x01000001
        assert frame[5] == codec.FCTRL_UPLINK
        assert struct.unpack_from("<H", frame, 6)[0] == 0x1234
        assert frame[8] == codec.FPORT_SENSOR
        assert frame[HEADER_LEN : HEADER_LEN + 8] == encode_payload(payload)
        assert frame[-MIC_LEN:] == codec.compute_mic(KEY, frame[:-MIC_LEN])

    def test_unconfirmed_mhdr(self):
        frame = encode_frame(SensorPayload(0, 0, 0, 0), 1, 0, KEY, confirmed=False)
        assert frame[0] == codec.MHDR_UNCONFIRMED_UP

    def test_fcnt_wraps_to_wire_counter(self):
        frame = encode_frame(SensorPayload(0, 0, 0, 0), 1, 0x12345, KEY)
        assert struct.unpack_from("<H", frame, 6)[0] == 0x2345

    def test_decode_roundtrip(self):
        payload = SensorPayload(-512, 9999, 4200, 17)
        frame = encode_frame(payload, 0xDEADBEEF, 77, KEY, confirmed=True)
        got = decode_frame(frame, lookup(KEY))
        assert got == UplinkFrame(
            dev_addr=0xDEADBEEF, fcnt=77, confirmed=True, payload=payload, mic=frame[-4:]
        )

    def test_unknown_device(self):
        frame = encode_frame(SensorPayload(0, 0, 0, 0), 5, 0, KEY)
        with pytest.raises(UnknownDeviceError):
            decode_frame(frame, lambda addr: None)

    def test_wrong_key_rejected(self):
        frame = encode_frame(SensorPayload(0, 0, 0, 0), 5, 0, KEY)
        with pytest.raises(IntegrityError):
            decode_frame(frame, lookup(bytes(16)))

    def test_truncation_rejected(self):
        frame = encode_frame(SensorPayload(0, 0, 0, 0), 5, 0, KEY)
        for cut in (0, 1, 20):
            with pytest.raises(FramingError):
                decode_frame(frame[:cut], lookup(KEY))
        with pytest.raises(FramingError):
            decode_frame(frame + b"\x00", lookup(KEY))

    def test_bad_header_fields_rejected(self):
        frame = bytearray(encode_frame(SensorPayload(0, 0, 0, 0), 5, 0, KEY))
        for idx, bad in ((0, 0x20), (5, 0x01), (8, 0x02)):
            mutated = bytearray(frame)
            mutated[idx] = bad
            with pytest.raises(FramingError):
                decode_frame(bytes(mutated), lookup(KEY))

    def test_roundtrip_10k(self):
        import random

        rng = random.Random(0xC0DEC)
        for _ in range(10_000):
            payload = SensorPayload(
                rng.randint(-32768, 32767),
                rng.randint(0, 65535),
                rng.randint(0, 65535),
                rng.randint(0, 65535),
            )
            addr = rng.randint(0, 0xFFFFFFFF)
            fcnt = rng.randint(0, 0xFFFF)
            confirmed = rng.random() < 0.5
            key = rng.randbytes(16)
            frame = encode_frame(payload, addr, fcnt, key, confirmed=confirmed)
            got = decode_frame(frame, lookup(key))
            assert (got.dev_addr, got.fcnt, got.confirmed, got.payload) == (
                addr,
                fcnt,
                confirmed,
                payload,
            )

    def test_forgeries_rejected_10k(self):
        """Random single-bit flips must never verify."""
        import random

        rng = random.Random(0xF0463)
        frame = encode_frame(SensorPayload(2500, 4500, 3600, 3), 0x01000001, 9, KEY)
        accepted = 0
        for _ in range(10_000):
            mutated = bytearray(frame)
            bit = rng.randrange(FRAME_LEN * 8)
            mutated[bit // 8] ^= 1 << (bit % 8)
            try:
                got = decode_frame(bytes(mutated), lookup(KEY))
            except (FramingError, IntegrityError):
                continue
            # A flip inside dev_addr changes which key applies; treat a
            # successful decode as a forgery only if the MIC still binds
            # the original device's key.
            if got.dev_addr == 0x01000001:
                accepted += 1
        assert accepted == 0
