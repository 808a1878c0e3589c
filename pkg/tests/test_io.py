import io as _stdio

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import pathqv as pq
from pathqv import io as pio


class TestBinaryPathFile:
    def test_roundtrip_brownian(self, tmp_path):
        path = pq.gen_brownian(42, 6, 2.0, 3)
        target = tmp_path / "w.pqv"
        pio.write_path_binary(path, str(target))
        back = pio.read_path_binary(str(target))
        assert back.master_level == 6 and back.dim == 3 and back.horizon == 2.0
        assert back.meta.kind == "brownian" and back.meta.seed == 42
        assert np.array_equal(back.samples, path.samples)

    def test_roundtrip_params(self, tmp_path):
        path = pq.gen_mixed(7, 5, 1.0, 0.75, 0.5)
        target = tmp_path / "m.pqv"
        pio.write_path_binary(path, str(target))
        back = pio.read_path_binary(str(target))
        assert back.meta.params == {"H": 0.75, "delta": 0.5}

    def test_magic_guard(self, tmp_path):
        bad = tmp_path / "bad.pqv"
        bad.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(pq.ParameterError):
            pio.read_path_binary(str(bad))

    def test_header_layout(self):
        path = pq.gen_brownian(1, 4, 1.0, 1)
        buf = _stdio.BytesIO()
        pio.write_path_binary(path, buf)
        raw = buf.getvalue()
        assert raw[:4] == b"PQV1"
        assert int.from_bytes(raw[4:8], "little") == 4       # M
        assert int.from_bytes(raw[8:12], "little") == 1      # d
        assert np.frombuffer(raw[12:20], dtype="<f8")[0] == 1.0  # T


@given(seed=st.integers(0, 2**32 - 1), M=st.integers(4, 6))
@settings(max_examples=15)
def test_binary_roundtrip_property(tmp_path_factory, seed, M):
    path = pq.gen_brownian(seed, M, 1.0, 1)
    buf = _stdio.BytesIO()
    pio.write_path_binary(path, buf)
    buf.seek(0)
    back = pio.read_path_binary(buf)
    assert np.array_equal(back.samples, path.samples)


class TestCsv:
    def test_path_csv_roundtrips_exactly(self, tmp_path):
        path = pq.gen_brownian(3, 5, 1.0, 2)
        target = tmp_path / "p.csv"
        pio.write_path_csv(path, str(target))
        lines = target.read_text().strip().splitlines()
        assert lines[0] == "t,x1,x2"
        vals = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
        assert np.array_equal(vals[:, 1:], path.samples)
        assert np.array_equal(vals[:, 0], path.times)

    def test_partition_roundtrip(self, tmp_path):
        seq = pq.gen_random_balanced(3, range(2, 6), 10, 1.0, 2.0)
        csvf, sidecar = tmp_path / "part.csv", tmp_path / "part.json"
        pio.write_partition_csv(seq, str(csvf), str(sidecar))
        back = pio.read_partition_csv(str(csvf), 10, 1.0)
        assert back.level_ids == seq.level_ids
        for a, b in zip(seq, back):
            assert np.array_equal(a.indices, b.indices)
        assert sidecar.exists()

    def test_qv_csv_column_order_and_roundtrip(self, tmp_path):
        w = pq.gen_brownian(1, 8, 1.0, 2)
        part = pq.gen_dyadic([4], 8, 1.0).level(4)
        curve = pq.qv_matrix(w, part, part.times)
        target = tmp_path / "qv.csv"
        pio.write_qv_csv([(4, curve)], str(target))
        header = target.read_text().splitlines()[0]
        assert header == "t,i,j,value,level"
        back = pio.read_qv_csv(str(target))
        level, times, vals = back[0]
        assert level == 4
        assert np.array_equal(times, curve.eval_times)
        assert np.array_equal(vals, curve.values)

    def test_empty_results_header_only(self, tmp_path):
        target = tmp_path / "empty.csv"
        pio.write_qv_csv([], str(target))
        assert target.read_text() == "t,i,j,value,level\n"

    def test_float_formatting_is_bit_exact(self):
        vals = [1 / 3, np.pi, 2.0**-52, 1e300, -0.0]
        for v in vals:
            assert float(pio.fmt_float(v)) == v

    def test_localtime_and_residual_headers(self, tmp_path):
        w = pq.gen_brownian(2, 10, 1.0)
        part = pq.gen_dyadic([5], 10, 1.0).level(5)
        fld = pq.local_time_discrete(w, part, t_grid=[1.0])
        f1 = tmp_path / "lt.csv"
        pio.write_localtime_csv(fld, str(f1))
        assert f1.read_text().splitlines()[0] == "t,u,L"

        seq = pq.gen_dyadic([4, 5], 10, 1.0)
        resid = pq.ito_residual(w, pq.function_catalogue("square"), seq)
        f2 = tmp_path / "resid.csv"
        pio.write_residual_csv(resid, str(f2))
        assert f2.read_text().splitlines()[0] == "level,t,residual"
