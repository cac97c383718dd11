from .formats import (
    EnsembleFile,
    decode_stbin,
    encode_stbin,
    load_series,
    read_ensemble,
    write_ensemble,
    write_stbin,
)
from .series import Layout, SpatioTemporalSeries, WindowBatch, Windows, make_windows, split
from .synthetic import GroundTruth, gen_synthetic

__all__ = [
    "EnsembleFile",
    "GroundTruth",
    "Layout",
    "SpatioTemporalSeries",
    "WindowBatch",
    "Windows",
    "decode_stbin",
    "encode_stbin",
    "gen_synthetic",
    "load_series",
    "make_windows",
    "read_ensemble",
    "split",
    "write_ensemble",
    "write_stbin",
]
