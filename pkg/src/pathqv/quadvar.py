"""Quadratic variation along a partition level and across-level diagnostics.

The running quadratic variation is the exact sum of squared (outer-product)
increments over partition intervals, truncated at the evaluation time, so the
interval straddling t contributes (x(t) - x(t_j)) squared.  The matrix-valued
version is obtained by polarisation of component sums and cross-checked
against the direct cross-product sum, which is algebraically identical at any
finite level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IdentityCheckError, PairingError, ParameterError
from .partitions import Partition, PartitionSequence
from .paths import SampledPath, master_index_of


def default_eval_indices(path: SampledPath, part: Partition | None = None) -> np.ndarray:
    """Evaluation grid: a uniform 2^8 grid plus the partition's own points."""
    M = path.master_level
    coarse = 1 << (M - min(M, 8))
    idx = np.arange(0, (1 << M) + 1, coarse, dtype=np.int64)
    if part is not None:
        idx = np.union1d(idx, part.indices)
    return idx


def _resolve_eval(path: SampledPath, part: Partition | None, eval_times) -> np.ndarray:
    if eval_times is None:
        return default_eval_indices(path, part)
    idx = master_index_of(eval_times, path.master_level, path.horizon)
    idx = np.union1d(idx, [0, 1 << path.master_level])
    return idx.astype(np.int64)


@dataclass(frozen=True)
class QVCurve:
    eval_times: np.ndarray
    values: np.ndarray            # (n,) when dim == 1, else (n, d, d)
    source: tuple = ("", -1)      # (path id, partition level)

    @property
    def dim(self) -> int:
        return 1 if self.values.ndim == 1 else self.values.shape[1]

    def trace(self) -> np.ndarray:
        if self.values.ndim == 1:
            return self.values
        return np.trace(self.values, axis1=1, axis2=2)

    def at(self, times) -> np.ndarray:
        """Linear interpolation between evaluation nodes (exact on nodes)."""
        t = np.atleast_1d(np.asarray(times, dtype=np.float64))
        if self.values.ndim == 1:
            return np.interp(t, self.eval_times, self.values)
        d = self.values.shape[1]
        out = np.empty((len(t), d, d))
        for i in range(d):
            for j in range(d):
                out[:, i, j] = np.interp(t, self.eval_times, self.values[:, i, j])
        return out


def _qv_values(path: SampledPath, part: Partition, eval_idx: np.ndarray) -> np.ndarray:
    """Exact truncated-increment QV at the given master indices."""
    x = path.samples
    pidx = part.indices
    dx = x[pidx[1:]] - x[pidx[:-1]]                     # (N, d)
    d = path.dim
    if d == 1:
        sq = dx[:, 0] ** 2
        cum = np.concatenate([[0.0], np.cumsum(sq)])
    else:
        sq = dx[:, :, None] * dx[:, None, :]            # (N, d, d)
        cum = np.concatenate([np.zeros((1, d, d)), np.cumsum(sq, axis=0)])
    k = np.searchsorted(pidx, eval_idx, side="right") - 1
    inside = (k >= 0) & (k < len(pidx) - 1)
    kin = np.where(inside, k, 0)
    straddle = np.where(inside[:, None], x[eval_idx] - x[pidx[kin]], 0.0)
    base = np.where(k < 0, 0, np.where(inside, kin, len(pidx) - 1))
    if d == 1:
        vals = cum[base] + straddle[:, 0] ** 2
    else:
        vals = cum[base] + straddle[:, :, None] * straddle[:, None, :]
    return vals


def qv_level(path: SampledPath, part: Partition, eval_times=None) -> QVCurve:
    """Running quadratic variation of the path along one partition level."""
    if part.master_level != path.master_level or part.horizon != path.horizon:
        raise ParameterError("partition and path must share the master grid")
    eval_idx = _resolve_eval(path, part, eval_times)
    vals = _qv_values(path, part, eval_idx)
    return QVCurve(eval_idx * path.master_step, vals, (path.meta.kind, -1))


def qv_matrix(path: SampledPath, part: Partition, eval_times=None) -> QVCurve:
    """Matrix QV by polarisation of component sums.

    Off-diagonals are (QV(x_i + x_j) - QV(x_i) - QV(x_j)) / 2; the result is
    asserted equal, to rounding, to the direct cross-product sum.
    """
    if path.dim < 2:
        raise ParameterError("qv_matrix needs dim >= 2")
    eval_idx = _resolve_eval(path, part, eval_times)
    d = path.dim
    x = path.samples

    def scalar_qv(series):
        p = SampledPath(path.horizon, path.master_level, 1, series[:, None],
                        path.meta)
        return _qv_values(p, part, eval_idx)

    comp = [scalar_qv(x[:, i]) for i in range(d)]
    vals = np.empty((len(eval_idx), d, d))
    for i in range(d):
        vals[:, i, i] = comp[i]
        for j in range(i + 1, d):
            pol = (scalar_qv(x[:, i] + x[:, j]) - comp[i] - comp[j]) / 2.0
            vals[:, i, j] = pol
            vals[:, j, i] = pol
    direct = _qv_values(path, part, eval_idx)
    scale = max(float(np.abs(direct).max()), 1.0)
    if not np.allclose(vals, direct, rtol=1e-9, atol=1e-12 * scale):
        raise IdentityCheckError("polarisation does not match the direct cross sum")
    return QVCurve(eval_idx * path.master_step, vals, (path.meta.kind, -1))


@dataclass(frozen=True)
class QVConvergence:
    level_ids: tuple
    eval_times: np.ndarray
    sup_to_finest: np.ndarray     # sup |curve_n - curve_finest| per level
    cauchy: np.ndarray            # sup |curve_{n+1} - curve_n| per adjacent pair
    tol: float
    cauchy_at_tol: bool           # last two adjacent gaps below tol


def qv_limit_diagnostic(
    path: SampledPath, seq: PartitionSequence, eval_times=None, tol: float = 0.05
) -> QVConvergence:
    """Across-level sup distances as a finite-level convergence diagnostic."""
    if len(seq) < 3:
        raise ParameterError("need at least 3 levels")
    eval_idx = _resolve_eval(path, None, eval_times)
    curves = [_qv_values(path, p, eval_idx) for p in seq]
    if path.dim > 1:
        curves = [np.abs(c).reshape(len(eval_idx), -1).max(axis=1) for c in curves]
    finest = curves[-1]
    sup = np.array([np.abs(c - finest).max() for c in curves])
    cauchy = np.array([np.abs(b - a).max() for a, b in zip(curves, curves[1:])])
    return QVConvergence(
        level_ids=seq.level_ids,
        eval_times=eval_idx * path.master_step,
        sup_to_finest=sup,
        cauchy=cauchy,
        tol=float(tol),
        cauchy_at_tol=bool(np.all(cauchy[-2:] < tol)),
    )


@dataclass(frozen=True)
class InvarianceReport:
    pairs: tuple                  # (level_a, level_b) mesh-matched pairs
    mesh_a: np.ndarray
    mesh_b: np.ndarray
    sup_distances: np.ndarray
    tol: float
    passed: bool                  # verdict at the finest matched pair


def default_qv_tol(mesh: float) -> float:
    """CLT-scaled default tolerance for Brownian-class paths."""
    return 3.0 * np.sqrt(2.0 * mesh)


def invariance_check(
    path: SampledPath,
    seq_a: PartitionSequence,
    seq_b: PartitionSequence,
    eval_times=None,
    tol: float | None = None,
    balance_threshold: float = 8.0,
    mesh_match_cap: float = 4.0,
) -> InvarianceReport:
    """Sup distance between QV curves along two balanced sequences.

    Levels are paired by nearest log-mesh; a pair is admissible when the mesh
    ratio stays within mesh_match_cap.  The verdict compares the finest
    admissible pair against tol (default CLT-scaled in the finest mesh).
    """
    for name, s in (("A", seq_a), ("B", seq_b)):
        worst = max(p.ratio for p in s)
        if worst > balance_threshold:
            raise ParameterError(
                f"sequence {name} is not balanced at tested levels "
                f"(ratio {worst:g} > {balance_threshold:g})"
            )
    mesh_b = seq_b.meshes()
    pairs, ma, mb = [], [], []
    for na, pa in zip(seq_a.level_ids, seq_a):
        j = int(np.argmin(np.abs(np.log(mesh_b / pa.mesh))))
        ratio = mesh_b[j] / pa.mesh
        if 1.0 / mesh_match_cap <= ratio <= mesh_match_cap:
            pairs.append((na, seq_b.level_ids[j]))
            ma.append(pa.mesh)
            mb.append(mesh_b[j])
    if not pairs:
        raise PairingError(
            f"no level of B has mesh within x{mesh_match_cap:g} of any level of A"
        )
    eval_idx = _resolve_eval(path, None, eval_times)
    sup = []
    for (na, nb) in pairs:
        ca = _qv_values(path, seq_a.level(na), eval_idx)
        cb = _qv_values(path, seq_b.level(nb), eval_idx)
        diff = np.abs(ca - cb)
        sup.append(diff.reshape(len(eval_idx), -1).max() if diff.ndim > 1 else diff.max())
    sup = np.asarray(sup)
    finest = int(np.argmin(ma))
    if tol is None:
        tol = default_qv_tol(min(ma[finest], mb[finest]))
    return InvarianceReport(
        pairs=tuple(pairs),
        mesh_a=np.asarray(ma),
        mesh_b=np.asarray(mb),
        sup_distances=sup,
        tol=float(tol),
        passed=bool(sup[finest] < tol),
    )
