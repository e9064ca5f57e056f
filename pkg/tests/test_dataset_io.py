import json
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lidarsynth.dataset_io import (Dataset, DatasetWriter, SampleMeta, SyntheticSample, config_digest,
                                   decode_sample, encode_sample, export_ply, match_predictions, read_heatmap_dump,
                                   read_ply, read_predictions, read_sample, write_heatmap_dump, write_predictions,
                                   write_sample)
from lidarsynth.errors import (ConfigHashMismatch, FormatError, InputError, MagicError, TruncatedError,
                               VersionError)
from lidarsynth.heatmap import HeatmapSpec, encode

HASH = bytes(range(16))


def make_sample(n=5, k=24, seed=0):
    rng = np.random.default_rng(seed)
    return SyntheticSample(rng.normal(size=(n, 3)), rng.integers(0, k + 1, n), rng.normal(size=(k, 3)),
                           rng.integers(0, 2, k), SampleMeta(2**63 + 5, 7.5, -1.25, 42, 9, HASH))


def test_record_golden_bytes():
    s = SyntheticSample(np.array([[1.0, 2.0, 3.0], [-0.5, 0.25, 8.0]]), np.array([1, 2]),
                        np.array([[0.0, 1.0, 2.0], [4.0, 5.0, 6.0]]), np.array([1, 0]),
                        SampleMeta(12345678901, 4.5, 0.125, 7, 3, HASH))
    expected = b"".join([
        b"LHS1", struct.pack("<III", 1, 2, 2),
        struct.pack("<6f", 1.0, 2.0, 3.0, -0.5, 0.25, 8.0),
        struct.pack("<2H", 1, 2),
        struct.pack("<6f", 0.0, 1.0, 2.0, 4.0, 5.0, 6.0),
        bytes([1, 0]),
        struct.pack("<QffII", 12345678901, 4.5, 0.125, 7, 3), HASH,
    ])
    assert encode_sample(s) == expected


@given(st.integers(0, 300), st.integers(1, 30), st.integers(0, 2**32 - 1))
def test_record_roundtrip(n, k, seed):
    s = make_sample(n, k, seed)
    data = encode_sample(s)
    back, size = decode_sample(data)
    assert size == len(data)
    assert back.same_as(s)
    assert back.meta == s.meta
    assert np.array_equal(back.points, s.points) and np.array_equal(back.labels, s.labels)


def test_record_errors():
    data = encode_sample(make_sample())
    with pytest.raises(MagicError):
        decode_sample(b"XXXX" + data[4:])
    with pytest.raises(VersionError):
        decode_sample(data[:4] + struct.pack("<I", 9) + data[8:])
    with pytest.raises(TruncatedError):
        decode_sample(data[:-1])
    with pytest.raises(TruncatedError):
        decode_sample(data[:10])
    with pytest.raises(ConfigHashMismatch):
        decode_sample(data, expected_hash=bytes(16))
    bad = bytearray(data)
    struct.pack_into("<H", bad, 16 + 12 * 5, 99)  # label > K
    with pytest.raises(FormatError):
        decode_sample(bytes(bad))


def test_sample_validation():
    with pytest.raises(InputError):
        SyntheticSample(np.zeros((2, 3)), [0], np.zeros((24, 3)), np.zeros(24))
    with pytest.raises(InputError):
        SyntheticSample(np.zeros((1, 3)), [25], np.zeros((24, 3)), np.zeros(24))


def test_write_read_file(tmp_path):
    s = make_sample()
    write_sample(tmp_path / "s.lhs", s)
    assert read_sample(tmp_path / "s.lhs", expected_hash=HASH).same_as(s)


def test_config_digest_is_canonical():
    assert config_digest({"a": 1, "b": [1, 2]}) == config_digest({"b": [1, 2], "a": 1})
    assert config_digest({"a": 1}) != config_digest({"a": 2})
    assert len(config_digest({})) == 16


def test_dataset_roundtrip_with_sharding(tmp_path):
    samples = {i * 3: make_sample(i + 1, seed=i) for i in range(10)}
    with DatasetWriter(tmp_path / "d", {"x": 1}, 5, {"note": "hi"}, shard_size=4, config_hash=HASH) as w:
        for sid, s in samples.items():
            w.add(sid, s)
    ds = Dataset(tmp_path / "d")
    assert len(ds) == 10 and ds.ids == list(samples)
    assert ds.manifest["note"] == "hi" and ds.manifest["master_seed"] == 5
    assert len({r["file"] for r in ds.records}) == 3
    for sid, s in ds:
        assert s.same_as(samples[sid])
    assert ds.raw(3) == encode_sample(samples[3])
    with pytest.raises(InputError):
        ds.get(1)


def test_writer_requires_increasing_ids(tmp_path):
    w = DatasetWriter(tmp_path / "d", {}, 0, config_hash=HASH)
    w.add(5, make_sample())
    with pytest.raises(InputError):
        w.add(5, make_sample())
    w.close()


def test_dataset_errors(tmp_path):
    with pytest.raises(InputError):
        Dataset(tmp_path / "missing")
    (tmp_path / "d").mkdir()
    with pytest.raises(FormatError):
        Dataset(tmp_path / "d")
    (tmp_path / "d" / "manifest.json").write_text("{not json")
    with pytest.raises(FormatError):
        Dataset(tmp_path / "d")
    (tmp_path / "d" / "manifest.json").write_text(json.dumps({"schema_version": 99}))
    with pytest.raises(VersionError):
        Dataset(tmp_path / "d")


def test_dataset_detects_foreign_records(tmp_path):
    with DatasetWriter(tmp_path / "d", {}, 0, config_hash=bytes(16)) as w:
        w.add(0, make_sample())
    with pytest.raises(ConfigHashMismatch):
        Dataset(tmp_path / "d").get(0)


def test_predictions_roundtrip_and_golden(tmp_path):
    p = {2: np.arange(6.0).reshape(2, 3), 1: np.ones((2, 3))}
    write_predictions(tmp_path / "p.bin", p)
    data = (tmp_path / "p.bin").read_bytes()
    assert data[:8] == struct.pack("<II", 2, 2)
    assert data[8:16] == struct.pack("<Q", 1)
    back = read_predictions(tmp_path / "p.bin")
    assert list(back) == [1, 2] and np.array_equal(back[2], p[2])


def test_predictions_errors(tmp_path):
    rec = struct.pack("<Q", 4) + np.zeros(3, "<f4").tobytes()
    (tmp_path / "dup.bin").write_bytes(struct.pack("<II", 1, 2) + rec + rec)
    with pytest.raises(FormatError, match="4"):
        read_predictions(tmp_path / "dup.bin")
    (tmp_path / "short.bin").write_bytes(struct.pack("<II", 1, 2) + rec)
    with pytest.raises(TruncatedError):
        read_predictions(tmp_path / "short.bin")


def test_match_predictions():
    common, missing = match_predictions({1: 0, 3: 0, 9: 0}, [1, 2, 3])
    assert common == [1, 3] and missing == [2]
    with pytest.raises(InputError):
        match_predictions({7: 0}, [1, 2])


def test_heatmap_dump_roundtrip(tmp_path):
    spec = HeatmapSpec(((0, 3), (-1, 2), (1, 4)), (16, 8, 4), 1.0)
    hm = encode(np.random.default_rng(0).uniform(0.5, 1.5, (24, 3)), spec)
    write_heatmap_dump(tmp_path / "h.lhh", [(7, spec.range, hm)], spec.bins, spec.sigma)
    bins, sigma, recs = read_heatmap_dump(tmp_path / "h.lhh")
    assert bins == (16, 8, 4) and sigma == 1.0
    sid, rng, axes = recs[0]
    assert sid == 7 and rng == spec.range
    for c in range(3):
        assert np.allclose(axes[c], hm.axis(c), atol=1e-7)
    data = (tmp_path / "h.lhh").read_bytes()
    assert data[:32] == struct.pack("<4sIIIIIIf", b"LHH1", 1, 24, 16, 8, 4, 1, 1.0)
    (tmp_path / "bad.lhh").write_bytes(b"NOPE" + data[4:])
    with pytest.raises(MagicError):
        read_heatmap_dump(tmp_path / "bad.lhh")
    (tmp_path / "cut.lhh").write_bytes(data[:-4])
    with pytest.raises(TruncatedError):
        read_heatmap_dump(tmp_path / "cut.lhh")


def test_ply_export(tmp_path):
    s = make_sample(7)
    export_ply(s, tmp_path / "s.ply")
    el = read_ply(tmp_path / "s.ply")
    assert el["vertex"].shape == (7, 4) and el["joint"].shape == (24, 4)
    assert np.allclose(el["vertex"][:, :3], s.points, atol=1e-6)
    assert np.array_equal(el["vertex"][:, 3], s.labels)
    assert np.array_equal(el["joint"][:, 3], s.visibility)
    text = (tmp_path / "s.ply").read_text()
    assert text.startswith("ply\nformat ascii 1.0\nelement vertex 7\n")
