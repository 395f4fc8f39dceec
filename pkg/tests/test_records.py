import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from quakeloc.records import (
    EventMeta, ManifestEntry, ManifestError, MissingWaveformError, StationMeta, StrongMotionRecord,
    WaveformFormatError, format_time, load_manifest, parse_time, read_waveform, write_manifest,
    write_waveform,
)

EVENT = EventMeta("e1", 1400000000, 38.5, 43.2, 10.0, 4.1)
STATION = StationMeta("VAN", 38.0, 43.0)


def _dataset(tmp_path, n=3):
    entries = []
    for i in range(n):
        path = tmp_path / "wf" / f"r{i}.smr"
        path.parent.mkdir(exist_ok=True)
        write_waveform(path, np.zeros((3, 600), dtype=np.float32) + i)
        station = StationMeta(f"S{i}", 38.0 + i * 0.1, 43.0)
        entries.append(ManifestEntry(f"r{i}", EVENT, station, path))
    manifest = tmp_path / "manifest.jsonl"
    write_manifest(manifest, entries)
    return manifest


def test_waveform_round_trip_is_bitwise(tmp_path, rng):
    x = rng.standard_normal((3, 1500)).astype(np.float32)
    write_waveform(tmp_path / "a.smr", x)
    y = read_waveform(tmp_path / "a.smr")
    assert y.shape == (3, 1500)
    assert y.tobytes() == x.tobytes()


@settings(max_examples=25, deadline=None)
@given(hnp.arrays(np.float32, st.tuples(st.just(3), st.integers(1, 300)),
                  elements=st.floats(-1e6, 1e6, width=32)))
def test_waveform_round_trip_property(tmp_path_factory, x):
    path = tmp_path_factory.mktemp("wf") / "x.smr"
    write_waveform(path, x)
    assert np.array_equal(read_waveform(path), x)


def test_waveform_header_layout(tmp_path):
    write_waveform(tmp_path / "a.smr", np.ones((3, 7), dtype=np.float32))
    raw = (tmp_path / "a.smr").read_bytes()
    assert raw[:4] == b"SMR1"
    assert struct.unpack("<II", raw[4:12]) == (3, 7)
    assert len(raw) == 12 + 3 * 7 * 4


def test_bad_magic(tmp_path):
    path = tmp_path / "a.smr"
    write_waveform(path, np.zeros((3, 10), dtype=np.float32))
    raw = bytearray(path.read_bytes())
    raw[:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    with pytest.raises(WaveformFormatError, match="magic"):
        read_waveform(path)


@pytest.mark.parametrize("delta, message", [(-4, "truncated"), (4, "mismatch")])
def test_payload_size_errors(tmp_path, delta, message):
    path = tmp_path / "a.smr"
    write_waveform(path, np.zeros((3, 10), dtype=np.float32))
    raw = path.read_bytes()
    path.write_bytes(raw[:delta] if delta < 0 else raw + b"\0" * delta)
    with pytest.raises(WaveformFormatError, match=message):
        read_waveform(path)


def test_manifest_round_trip(tmp_path):
    manifest = load_manifest(_dataset(tmp_path))
    assert len(manifest) == 3
    assert [e.record_id for e in manifest] == ["r0", "r1", "r2"]
    rec = manifest.entries[2].load()
    assert rec.channels.shape == (3, 600)
    assert float(rec.channels[0, 0]) == 2.0
    # paths are stored relative to the manifest directory
    line = json.loads((tmp_path / "manifest.jsonl").read_text().splitlines()[1])
    assert line["waveform_path"] == "wf/r0.smr"


def test_missing_waveform_names_path(tmp_path):
    path = _dataset(tmp_path)
    (tmp_path / "wf" / "r1.smr").unlink()
    with pytest.raises(MissingWaveformError) as err:
        load_manifest(path)
    assert "r1.smr" in str(err.value)
    assert err.value.line == 3


def _rewrite(path, line_no, mutate):
    lines = path.read_text().splitlines()
    obj = json.loads(lines[line_no])
    mutate(obj)
    lines[line_no] = json.dumps(obj)
    path.write_text("\n".join(lines) + "\n")


def test_out_of_range_latitude(tmp_path):
    path = _dataset(tmp_path)
    _rewrite(path, 1, lambda o: o["event"].__setitem__("lat", 95.0))
    with pytest.raises(ManifestError, match="latitude") as err:
        load_manifest(path)
    assert err.value.line == 2


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda o: o.__setitem__("record_id", "r0"), "duplicate"),
        (lambda o: o["event"].__setitem__("magnitude", 5.0), "conflicting"),
        (lambda o: o.__setitem__("sample_rate_hz", 50), "sample_rate"),
        (lambda o: o.pop("station"), "missing field"),
    ],
)
def test_manifest_validation_errors(tmp_path, mutate, message):
    path = _dataset(tmp_path)
    _rewrite(path, 2, mutate)
    with pytest.raises(ManifestError, match=message):
        load_manifest(path)


def test_manifest_requires_header(tmp_path):
    path = _dataset(tmp_path)
    path.write_text("\n".join(path.read_text().splitlines()[1:]) + "\n")
    with pytest.raises(ManifestError, match="schema_version"):
        load_manifest(path)


def test_record_validation():
    with pytest.raises(ValueError, match="3 channels"):
        StrongMotionRecord("x", EVENT, STATION, np.zeros((2, 1000)))
    with pytest.raises(ValueError, match="shorter"):
        StrongMotionRecord("x", EVENT, STATION, np.zeros((3, 499)))
    with pytest.raises(ValueError, match="longer"):
        StrongMotionRecord("x", EVENT, STATION, np.zeros((3, 30001)))
    with pytest.raises(ValueError, match="sample rate"):
        StrongMotionRecord("x", EVENT, STATION, np.zeros((3, 1000)), sample_rate_hz=200)
    rec = StrongMotionRecord("x", EVENT, STATION, np.zeros((3, 1500)))
    assert rec.duration_s == 15.0


def test_time_parsing():
    assert parse_time("2017-08-31T23:59:59Z") == 1504223999
    assert parse_time(1504223999) == 1504223999
    assert format_time(1504223999) == "2017-08-31T23:59:59Z"


def test_sorted_manifest_is_chronological(small_dataset):
    keys = [e.sort_key() for e in small_dataset.sorted()]
    assert keys == sorted(keys)
