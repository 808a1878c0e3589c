"""File formats: binary path files, CSV tables, JSON sidecars.

Floats are serialised with 17 significant digits so CSV round-trips are
bit-exact; column orders are fixed so identical runs produce byte-identical
files.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from .errors import ParameterError
from .partitions import PartitionSequence
from .paths import PATH_KINDS, PathMeta, SampledPath

MAGIC = b"PQV1"

_KIND_CODE = {k: i for i, k in enumerate(PATH_KINDS)}
_CODE_KIND = {i: k for k, i in _KIND_CODE.items()}


def fmt_float(v: float) -> str:
    return f"{v:.17g}"


def write_path_binary(path: SampledPath, file) -> None:
    """magic, u32 M, u32 d, f64 T, u64 seed, u32 kind, params, f64 samples."""
    own = isinstance(file, (str, bytes, os.PathLike))
    fh = open(file, "wb") if own else file
    try:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIdQI", path.master_level, path.dim, path.horizon,
                             path.meta.seed, _KIND_CODE[path.meta.kind]))
        items = sorted(path.meta.params.items())
        fh.write(struct.pack("<I", len(items)))
        for name, value in items:
            raw = name.encode()
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<d", float(value)))
        fh.write(np.ascontiguousarray(path.samples, dtype="<f8").tobytes())
    finally:
        if own:
            fh.close()


def read_path_binary(file) -> SampledPath:
    own = isinstance(file, (str, bytes, os.PathLike))
    fh = open(file, "rb") if own else file
    try:
        if fh.read(4) != MAGIC:
            raise ParameterError("not a PQV1 path file")
        m, d, T, seed, kind_code = struct.unpack("<IIdQI", fh.read(28))
        (n_params,) = struct.unpack("<I", fh.read(4))
        params = {}
        for _ in range(n_params):
            (nlen,) = struct.unpack("<I", fh.read(4))
            name = fh.read(nlen).decode()
            (value,) = struct.unpack("<d", fh.read(8))
            params[name] = value
        count = ((1 << m) + 1) * d
        samples = np.frombuffer(fh.read(count * 8), dtype="<f8").reshape(-1, d)
        kind = _CODE_KIND.get(kind_code, "custom")
        return SampledPath(T, m, d, samples.copy(), PathMeta(kind, seed, params))
    finally:
        if own:
            fh.close()


def write_path_csv(path: SampledPath, file) -> None:
    """Columns t, x1..xd."""
    own = isinstance(file, (str, bytes, os.PathLike))
    fh = open(file, "w") if own else file
    try:
        cols = ",".join(f"x{i + 1}" for i in range(path.dim))
        fh.write(f"t,{cols}\n")
        for t, row in zip(path.times, path.samples):
            fh.write(fmt_float(t) + "," + ",".join(fmt_float(v) for v in row) + "\n")
    finally:
        if own:
            fh.close()


def write_partition_csv(seq: PartitionSequence, csv_file, sidecar_file=None) -> None:
    """Columns level, index; JSON sidecar with generator metadata."""
    own = isinstance(csv_file, (str, bytes, os.PathLike))
    fh = open(csv_file, "w") if own else csv_file
    try:
        fh.write("level,index\n")
        for n, part in zip(seq.level_ids, seq):
            for i in part.indices:
                fh.write(f"{n},{i}\n")
    finally:
        if own:
            fh.close()
    if sidecar_file is not None:
        meta = {
            "generator": seq.generator_meta,
            "params": dict(seq.generator_params),
            "M": seq.master_level,
            "T": seq.horizon,
            "levels": list(seq.level_ids),
        }
        with open(sidecar_file, "w") as sfh:
            json.dump(meta, sfh, indent=2, sort_keys=True)
            sfh.write("\n")


def read_partition_csv(csv_file, M: int, T: float) -> PartitionSequence:
    from .partitions import Partition

    by_level: dict = {}
    with open(csv_file) as fh:
        header = fh.readline().strip()
        if header != "level,index":
            raise ParameterError(f"unexpected partition CSV header {header!r}")
        for line in fh:
            lev, idx = line.strip().split(",")
            by_level.setdefault(int(lev), []).append(int(idx))
    levels = sorted(by_level)
    parts = tuple(Partition(np.array(by_level[n]), M, T) for n in levels)
    return PartitionSequence(parts, tuple(levels), "from_csv")


def write_qv_csv(curves, file) -> None:
    """Columns t, i, j, value, level (component indices are 1-based)."""
    own = isinstance(file, (str, bytes, os.PathLike))
    fh = open(file, "w") if own else file
    try:
        fh.write("t,i,j,value,level\n")
        for level, curve in curves:
            d = curve.dim
            for row, t in enumerate(curve.eval_times):
                if d == 1:
                    fh.write(f"{fmt_float(t)},1,1,{fmt_float(curve.values[row])},{level}\n")
                else:
                    for i in range(d):
                        for j in range(d):
                            fh.write(
                                f"{fmt_float(t)},{i + 1},{j + 1},"
                                f"{fmt_float(curve.values[row, i, j])},{level}\n"
                            )
    finally:
        if own:
            fh.close()


def read_qv_csv(file):
    """Inverse of write_qv_csv: list of (level, eval_times, values) tuples."""
    rows: dict = {}
    with open(file) as fh:
        header = fh.readline().strip()
        if header != "t,i,j,value,level":
            raise ParameterError(f"unexpected QV CSV header {header!r}")
        for line in fh:
            t, i, j, v, level = line.strip().split(",")
            rows.setdefault(int(level), []).append((float(t), int(i), int(j), float(v)))
    out = []
    for level in sorted(rows):
        recs = rows[level]
        d = max(r[1] for r in recs)
        times = sorted({r[0] for r in recs})
        tpos = {t: k for k, t in enumerate(times)}
        if d == 1:
            vals = np.zeros(len(times))
            for t, i, j, v in recs:
                vals[tpos[t]] = v
        else:
            vals = np.zeros((len(times), d, d))
            for t, i, j, v in recs:
                vals[tpos[t], i - 1, j - 1] = v
        out.append((level, np.asarray(times), vals))
    return out


def write_localtime_csv(field, file) -> None:
    """Columns t, u, L."""
    own = isinstance(file, (str, bytes, os.PathLike))
    fh = open(file, "w") if own else file
    try:
        fh.write("t,u,L\n")
        for ti, t in enumerate(field.t_grid):
            for ui, u in enumerate(field.u_grid):
                fh.write(f"{fmt_float(t)},{fmt_float(u)},{fmt_float(field.values[ti, ui])}\n")
    finally:
        if own:
            fh.close()


def write_residual_csv(residual, file) -> None:
    """Columns level, t, residual."""
    own = isinstance(file, (str, bytes, os.PathLike))
    fh = open(file, "w") if own else file
    try:
        fh.write("level,t,residual\n")
        for li, level in enumerate(residual.level_ids):
            for t, r in zip(residual.eval_times, residual.residuals[li]):
                fh.write(f"{level},{fmt_float(t)},{fmt_float(r)}\n")
    finally:
        if own:
            fh.close()


def write_roughness_csv(records, file) -> None:
    """Columns level, seed, S, fine_level, cells."""
    own = isinstance(file, (str, bytes, os.PathLike))
    fh = open(file, "w") if own else file
    try:
        fh.write("level,seed,S,fine_level,cells\n")
        for level, seed, stat in records:
            fh.write(
                f"{level},{seed},{fmt_float(stat.S)},{stat.fine_level},{stat.n_cells}\n"
            )
    finally:
        if own:
            fh.close()


def write_json(obj, file) -> None:
    with open(file, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
