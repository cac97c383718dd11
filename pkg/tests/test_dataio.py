import json
import struct

import numpy as np
import pytest

from cost_st.dataio import (
    Layout,
    SpatioTemporalSeries,
    decode_stbin,
    encode_stbin,
    gen_synthetic,
    load_series,
    make_windows,
    split,
)
from cost_st.dataio.formats import EnsembleFile, decode_ensemble, encode_ensemble
from cost_st.errors import DataError, FormatError, InvalidArgument


def series_of(T, V=2, C=1, interval=60, start=0):
    vals = np.arange(T * V * C, dtype=np.float64).reshape(T, V, C)
    return SpatioTemporalSeries(vals, interval, start, Layout.graph(V))


def stbin_bytes(header, payload):
    head = json.dumps(header).encode()
    return b"STB1" + struct.pack("<I", len(head)) + head + np.asarray(payload, "<f4").tobytes()


def test_decode_minimal_stbin():
    payload = np.arange(8, dtype=np.float32)
    blob = stbin_bytes(
        {"shape": [4, 2, 1], "layout": {"graph": 2}, "interval_minutes": 5,
         "start_epoch_seconds": 0, "dtype": "f32le", "order": "TVC"},
        payload,
    )
    s = decode_stbin(blob)
    assert s.values.shape == (4, 2, 1)
    assert np.array_equal(s.values.reshape(-1), payload.astype(np.float64))
    assert s.interval_minutes == 5


def test_stbin_shape_mismatch_is_format_error():
    blob = stbin_bytes(
        {"shape": [4, 2, 1], "layout": {"graph": 2}, "interval_minutes": 5,
         "start_epoch_seconds": 0, "dtype": "f32le", "order": "TVC"},
        np.zeros(7),
    )
    with pytest.raises(FormatError):
        decode_stbin(blob)


@pytest.mark.parametrize("blob", [b"", b"XXXX\x00\x00\x00\x00", b"STB1\x05\x00\x00\x00{bad}"])
def test_stbin_malformed_header(blob):
    with pytest.raises(FormatError):
        decode_stbin(blob)


def test_stbin_rejects_nan_with_location():
    vals = np.zeros((3, 2, 1), dtype=np.float32)
    vals[2, 1, 0] = np.nan
    blob = stbin_bytes(
        {"shape": [3, 2, 1], "layout": {"graph": 2}, "interval_minutes": 60,
         "start_epoch_seconds": 0, "dtype": "f32le", "order": "TVC"},
        vals,
    )
    with pytest.raises(DataError, match=r"t=2, v=1, c=0"):
        decode_stbin(blob)


def test_stbin_round_trip_byte_identical():
    s, _ = gen_synthetic("grid_periodic", {"H": 3, "W": 2, "T": 50}, seed=4)
    blob = encode_stbin(s)
    assert encode_stbin(decode_stbin(blob)) == blob
    assert decode_stbin(blob).layout == Layout.grid(3, 2)


def test_stbin_byte_length_arithmetic():
    s, _ = gen_synthetic("grid_periodic", {"H": 8, "W": 8, "T": 4096}, seed=0)
    blob = encode_stbin(s)
    (hlen,) = struct.unpack("<I", blob[4:8])
    assert len(blob) == 4 + 4 + hlen + 4096 * 64 * 4


def test_csv_long_format(tmp_path):
    p = tmp_path / "d.csv"
    rows = ["t,v,c,value"] + [f"{t},{v},0,{10 * t + v}" for t in range(3) for v in range(2)]
    p.write_text("\n".join(rows) + "\n")
    s = load_series(p, "csv")
    assert s.values.shape == (3, 2, 1)
    assert s.values[2, 1, 0] == 21


def test_csv_sparse_is_format_error(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("t,v,c,value\n0,0,0,1\n1,1,0,2\n")
    with pytest.raises(FormatError):
        load_series(p, "csv")


def test_grid_layout_must_match_units():
    with pytest.raises(InvalidArgument):
        SpatioTemporalSeries(np.zeros((4, 5, 1)), 60, 0, Layout.grid(2, 2))


@pytest.mark.parametrize("T,expected", [(100, (60, 20, 20)), (10, (6, 2, 2)), (11, (6, 2, 3))])
def test_split_lengths(T, expected):
    parts = split(series_of(T))
    assert tuple(p.T for p in parts) == expected


def test_split_keeps_calendar_and_order():
    s = series_of(100, start=3600)
    tr, va, te = split(s)
    assert va.start_epoch_seconds == 3600 + 60 * 3600
    assert np.array_equal(np.concatenate([tr.values, va.values, te.values]), s.values)


def test_split_too_short():
    with pytest.raises(InvalidArgument):
        split(series_of(3))


@pytest.mark.parametrize("T,count", [(24, 1), (26, 3)])
def test_window_counts(T, count):
    w = make_windows(series_of(T), 12, 12)
    assert len(w) == count
    assert w.starts.tolist() == list(range(count))


def test_window_contiguity():
    s = series_of(40)
    b = make_windows(s, 5, 3).batch([0, 7])
    assert np.array_equal(b.x_co[1], s.values[7:12])
    assert np.array_equal(b.x_ta[1], s.values[12:15])


def test_calendar_arithmetic_hourly_from_epoch():
    s = series_of(40)
    # window starting at 0 with M=12: time index 25 is position 25 in the span
    b = make_windows(s, 12, 14).batch([0])
    assert b.tod_index[0, 25] == 1
    assert b.dow_index[0, 25] == 1
    tod, dow = s.calendar(np.arange(40))
    assert np.all(tod == np.arange(40) % 24)
    assert np.all(dow == np.arange(40) // 24)


def test_stride_p_targets_tile_series():
    s = series_of(50)
    M, P = 4, 6
    w = make_windows(s, M, P, stride=P)
    targets = np.concatenate([b.x_ta[0] for b in w])
    assert np.array_equal(targets, s.values[M : M + P * len(w)])


def test_no_leakage_across_split():
    s = series_of(200)
    tr, va, _ = split(s)
    w = make_windows(tr, 12, 12)
    assert w.starts.max() + 24 <= tr.T  # ends inside train, i.e. before val begins


def test_synthetic_noise_free_is_exact():
    s, truth = gen_synthetic("grid_periodic", {"H": 2, "W": 2, "T": 100, "sigma": 0.0}, seed=1)
    assert np.array_equal(s.values, truth.mean)
    assert np.all(truth.sigma == 0)


def test_synthetic_noise_variance():
    s, truth = gen_synthetic(
        "grid_periodic", {"H": 1, "W": 2, "T": 10_000, "amp1": (0, 0), "amp2": (0, 0), "sigma": 0.7}, seed=2
    )
    var = s.values.var(axis=0)
    assert np.all(np.abs(var / 0.49 - 1) < 0.05)


def test_synthetic_deterministic_bytes():
    a, _ = gen_synthetic("grid_periodic", {"H": 2, "W": 3, "T": 64}, seed=9)
    b, _ = gen_synthetic("grid_periodic", {"H": 2, "W": 3, "T": 64}, seed=9)
    assert encode_stbin(a) == encode_stbin(b)


def test_synthetic_rejects_bad_period():
    with pytest.raises(InvalidArgument):
        gen_synthetic("grid_periodic", {"period1": 0}, seed=0)


def test_graph_diffusive_generator():
    s, truth = gen_synthetic("graph_diffusive", {"V": 6, "T": 200}, seed=3)
    assert s.layout.kind == "graph" and s.V == 6
    assert s.layout.adjacency.shape == (6, 6)
    resid = s.values - truth.mean
    assert np.all(np.abs(resid.std(axis=0) / truth.sigma - 1) < 0.25)


def test_ensemble_file_round_trip():
    samples = np.random.default_rng(0).normal(size=(3, 2, 4, 5, 1)).astype(np.float32).astype(np.float64)
    ens = EnsembleFile(samples, np.array([12, 24]), 12, {"k": 1})
    blob = encode_ensemble(ens)
    back = decode_ensemble(blob)
    assert np.array_equal(back.samples, samples)
    assert back.window_starts.tolist() == [12, 24]
    assert encode_ensemble(back) == blob
