import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coulomb_ot import dgf1
from coulomb_ot import grid as G
from coulomb_ot.exceptions import InvalidDataError


def test_header_layout(tmp_path):
    path = dgf1.write_dgf1(tmp_path / "a.dgf1", np.arange(8.0), 3, 1, 2)
    raw = path.read_bytes()
    assert raw[:4] == b"DGF1"
    assert struct.unpack("<III", raw[4:16]) == (3, 1, 2)
    assert np.frombuffer(raw[16:], "<f8").tolist() == list(range(8))


def test_row_major_last_axis_fastest(tmp_path):
    arr = np.arange(9.0).reshape(3, 3)
    dgf1.write_dgf1(tmp_path / "b.dgf1", arr, 1, 2, 3)
    raw = (tmp_path / "b.dgf1").read_bytes()
    assert np.frombuffer(raw[16:], "<f8")[1] == arr[0, 1]


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 2), st.integers(1, 2), st.integers(2, 4), st.integers(0, 2**32 - 1))
def test_round_trip_bit_exact(d, N, n, seed):
    import tempfile
    from pathlib import Path

    rng = np.random.default_rng(seed)
    vals = rng.standard_normal((n,) * (d * N)) * 10.0 ** rng.integers(-300, 300)
    with tempfile.TemporaryDirectory() as tmp:
        p = dgf1.write_dgf1(Path(tmp) / "x.dgf1", vals, d, N, n)
        d2, N2, n2, back = dgf1.read_dgf1(p)
    assert (d2, N2, n2) == (d, N, n)
    assert back.tobytes() == np.ascontiguousarray(vals, dtype="<f8").tobytes()


def test_density_round_trip_and_checks(tmp_path):
    g = G.build_grid(2, 0, 1, 4)
    rho = G.ingest_density(g, G.uniform([0, 0], [0.5, 1]))
    p = dgf1.write_density(tmp_path / "rho.dgf1", rho)
    back = dgf1.read_density(p, g)
    assert back.values.tobytes() == rho.values.tobytes()
    with pytest.raises(InvalidDataError):
        dgf1.read_density(p, G.build_grid(2, 0, 1, 5))
    dgf1.write_dgf1(tmp_path / "neg.dgf1", -np.ones(16), 2, 1, 4)
    with pytest.raises(InvalidDataError):
        G.ingest_density(g, tmp_path / "neg.dgf1")


def test_corrupt_files(tmp_path):
    (tmp_path / "short").write_bytes(b"DGF")
    with pytest.raises(InvalidDataError):
        dgf1.read_dgf1(tmp_path / "short")
    (tmp_path / "magic").write_bytes(b"XXXX" + struct.pack("<III", 1, 1, 2) + b"\0" * 16)
    with pytest.raises(InvalidDataError):
        dgf1.read_dgf1(tmp_path / "magic")
    (tmp_path / "len").write_bytes(b"DGF1" + struct.pack("<III", 1, 1, 2) + b"\0" * 8)
    with pytest.raises(InvalidDataError):
        dgf1.read_dgf1(tmp_path / "len")


def test_field_round_trip(tmp_path):
    g = G.build_grid(1, 0, 1, 3)
    P = G.ProductField(g, 2, np.arange(9.0))
    back = dgf1.read_field(dgf1.write_field(tmp_path / "p.dgf1", P), g)
    assert back.arity == 2
    assert back.values.tobytes() == P.values.tobytes()
