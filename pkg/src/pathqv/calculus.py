"""Pathwise integration, change-of-variable residuals and discrete local time.

The pathwise integral is the left Riemann sum of a gradient evaluated at
partition points against truncated path increments.  Second-order terms are
Stieltjes left sums against a quadratic-variation curve.  The discrete local
time is a field of tent functions, one per partition interval, supported on
the half-open band swept by the path over that interval.

Normalisation note: integrating the discrete local time over the whole level
range reproduces the quadratic variation exactly (each tent integrates to the
squared increment), while the classical occupation identity carries a factor
1/2.  The occupation check therefore reports both normalisations and flags
which one matches, rather than silently choosing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .partitions import Partition, PartitionSequence
from .paths import PathMeta, SampledPath, master_index_of
from .quadvar import QVCurve, _qv_values, default_eval_indices

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


# ---------------------------------------------------------------------------
# function catalogue
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FunctionTriple:
    """A function with first and second derivative evaluators (vectorised)."""

    name: str
    f: callable
    f1: callable
    f2: callable


def _abs_smooth(center: float, eps: float) -> FunctionTriple:
    def f(x):
        return np.sqrt((x - center) ** 2 + eps**2)

    def f1(x):
        return (x - center) / np.sqrt((x - center) ** 2 + eps**2)

    def f2(x):
        return eps**2 / ((x - center) ** 2 + eps**2) ** 1.5

    return FunctionTriple(f"abs_smooth(a={center:g},eps={eps:g})", f, f1, f2)


def function_catalogue(name: str, **params) -> FunctionTriple:
    """Named C^2 test functions: square, cubic, sin, exp, abs_smooth."""
    if name == "square":
        return FunctionTriple("square", lambda x: x**2, lambda x: 2.0 * x,
                              lambda x: 2.0 * np.ones_like(x))
    if name == "cubic":
        return FunctionTriple("cubic", lambda x: x**3, lambda x: 3.0 * x**2,
                              lambda x: 6.0 * x)
    if name == "sin":
        return FunctionTriple("sin", np.sin, np.cos, lambda x: -np.sin(x))
    if name == "exp":
        return FunctionTriple("exp", np.exp, np.exp, np.exp)
    if name == "identity":
        return FunctionTriple("identity", lambda x: np.asarray(x, dtype=float),
                              lambda x: np.ones_like(x), lambda x: np.zeros_like(x))
    if name == "abs_smooth":
        return _abs_smooth(float(params.get("a", 0.0)), float(params.get("eps", 0.1)))
    raise ParameterError(f"unknown catalogue function {name!r}")


def tabulated_function(name, u_grid, f_vals, f1_vals, f2_vals) -> FunctionTriple:
    """Function triple backed by linear interpolation of tabulated values."""
    u = np.asarray(u_grid, dtype=np.float64)
    fv, f1v, f2v = (np.asarray(a, dtype=np.float64) for a in (f_vals, f1_vals, f2_vals))
    return FunctionTriple(
        name,
        lambda x: np.interp(x, u, fv),
        lambda x: np.interp(x, u, f1v),
        lambda x: np.interp(x, u, f2v),
    )


# ---------------------------------------------------------------------------
# pathwise integral
# ---------------------------------------------------------------------------

def _eval_grad(f1, xleft, dim):
    g = np.asarray(f1(xleft[:, 0] if dim == 1 else xleft))
    if dim == 1:
        return g[:, None]
    return g


def follmer_integral(path: SampledPath, f1, part: Partition, t: float) -> float:
    """Left Riemann sum of f1 along the partition, truncated at t."""
    e = int(master_index_of([t], path.master_level, path.horizon)[0])
    x = path.samples
    pidx = part.indices
    k = int(np.searchsorted(pidx, e, side="right")) - 1
    if k < 0:
        return 0.0
    # intervals 0..k-1 are complete; interval k (if any) straddles e
    xl = x[pidx[:k]]
    g = _eval_grad(f1, xl, path.dim)
    dx = x[pidx[1 : k + 1]] - xl
    total = float(np.einsum("ij,ij->", g, dx))
    if k < part.n_intervals and e > pidx[k]:
        anchor = x[pidx[k]]
        gl = _eval_grad(f1, anchor[None, :], path.dim)[0]
        total += float(np.dot(gl, x[e] - anchor))
    return total


def follmer_path(path: SampledPath, f1, part: Partition) -> SampledPath:
    """The running pathwise integral sampled on the whole master grid."""
    x = path.samples
    pidx = part.indices
    xl = x[pidx[:-1]]
    g = _eval_grad(f1, xl, path.dim)                   # (N, d)
    dx = x[pidx[1:]] - xl
    terms = np.einsum("ij,ij->i", g, dx)
    cum = np.concatenate([[0.0], np.cumsum(terms)])    # value at each partition point
    n_pts = path.n_points
    all_idx = np.arange(n_pts)
    k = np.searchsorted(pidx, all_idx, side="right") - 1
    inside = (k >= 0) & (k < len(pidx) - 1)
    kin = np.where(inside, k, 0)
    anchor = x[pidx[kin]]
    gk = g[np.minimum(kin, len(pidx) - 2)]
    straddle = np.where(inside, np.einsum("ij,ij->i", gk, x[all_idx] - anchor), 0.0)
    base = np.where(k < 0, 0, np.where(inside, kin, len(pidx) - 1))
    vals = cum[base] + straddle
    meta = PathMeta("custom", path.meta.seed, {})
    return SampledPath(path.horizon, path.master_level, 1, vals[:, None], meta)


def _stieltjes_against_curve(f2_at_left, part_times, curve: QVCurve, eval_times):
    """Left sums of f2 against curve increments over partition intervals, truncated."""
    q_at_part = curve.at(part_times)
    out = np.empty(len(eval_times))
    terms = f2_at_left * np.diff(q_at_part)
    cum = np.concatenate([[0.0], np.cumsum(terms)])
    k = np.searchsorted(part_times, eval_times, side="right") - 1
    q_at_eval = curve.at(eval_times)
    for i, t in enumerate(eval_times):
        kk = k[i]
        if kk < 0:
            out[i] = 0.0
        elif kk >= len(part_times) - 1:
            out[i] = cum[-1]
        else:
            out[i] = cum[kk] + f2_at_left[kk] * (q_at_eval[i] - q_at_part[kk])
    return out


@dataclass(frozen=True)
class ItoResidual:
    level_ids: tuple
    eval_times: np.ndarray
    residuals: np.ndarray         # (n_levels, n_eval)
    sup: np.ndarray               # per level


def ito_residual_level(
    path: SampledPath,
    fn: FunctionTriple,
    part: Partition,
    qv: QVCurve | None = None,
    eval_times=None,
) -> np.ndarray:
    """Change-of-variable residual along one partition level.

    residual(t) = f(x(t)) - f(x(0)) - left-sum integral - (1/2) Stieltjes sum
    of f'' against the QV curve (the same-level exact curve when qv is None).
    Supports one-dimensional paths; scalar f, f1, f2 evaluators.
    """
    if path.dim != 1:
        raise ParameterError("ito_residual_level supports one-dimensional paths")
    x = path.scalar()
    pidx = part.indices
    eval_idx = default_eval_indices(path, part) if eval_times is None else \
        np.union1d(master_index_of(eval_times, path.master_level, path.horizon),
                   [0, 1 << path.master_level])
    et = eval_idx * path.master_step

    xl = x[pidx[:-1]]
    g = np.asarray(fn.f1(xl))
    dx = x[pidx[1:]] - xl
    cum_int = np.concatenate([[0.0], np.cumsum(g * dx)])

    f2l = np.asarray(fn.f2(xl))
    if qv is None:
        cum_st = np.concatenate([[0.0], np.cumsum(f2l * dx**2)])
    k = np.searchsorted(pidx, eval_idx, side="right") - 1
    inside = (k >= 0) & (k < len(pidx) - 1)
    kin = np.where(inside, k, 0)
    anchor = x[pidx[kin]]
    stra = np.where(inside, x[eval_idx] - anchor, 0.0)
    base = np.where(k < 0, 0, np.where(inside, kin, len(pidx) - 1))
    integral = cum_int[base] + np.where(inside, g[np.minimum(kin, len(g) - 1)] * stra, 0.0)
    if qv is None:
        stieltjes = cum_st[base] + np.where(
            inside, f2l[np.minimum(kin, len(f2l) - 1)] * stra**2, 0.0
        )
    else:
        stieltjes = _stieltjes_against_curve(f2l, part.times, qv, et)
    resid = np.asarray(fn.f(x[eval_idx])) - float(fn.f(x[0])) - integral - 0.5 * stieltjes
    return et, resid


def ito_residual(
    path: SampledPath,
    fn: FunctionTriple,
    seq: PartitionSequence,
    qv: QVCurve | None = None,
    eval_times=None,
) -> ItoResidual:
    """Per-level change-of-variable residuals on a shared evaluation grid."""
    if eval_times is None:
        eval_times = default_eval_indices(path, None) * path.master_step
    rows, times = [], None
    for part in seq:
        times, r = ito_residual_level(path, fn, part, qv, eval_times)
        rows.append(r)
    res = np.vstack(rows)
    return ItoResidual(
        level_ids=seq.level_ids,
        eval_times=times,
        residuals=res,
        sup=np.abs(res).max(axis=1),
    )


@dataclass(frozen=True)
class IsometryReport:
    level_ids: tuple
    eval_times: np.ndarray
    sup_distances: np.ndarray
    integral_values: np.ndarray   # I(T) per level


def isometry_check(
    path: SampledPath,
    fn: FunctionTriple,
    seq: PartitionSequence,
    qv: QVCurve | None = None,
    eval_times=None,
) -> IsometryReport:
    """QV of the running integral against the Stieltjes sum of f1 squared.

    The integral path is precomputed on the full master grid (so it always
    refines the partition), its QV is taken along the same level, and the
    right-hand side is the left Stieltjes sum of f1(x)^2 against the supplied
    QV curve (same-level exact when qv is None, under which the two sides
    agree to rounding).
    """
    if path.dim != 1:
        raise ParameterError("isometry_check supports one-dimensional paths")
    x = path.scalar()
    sups, ivals = [], []
    times = None
    for part in seq:
        ipath = follmer_path(path, fn.f1, part)
        eval_idx = default_eval_indices(path, part) if eval_times is None else \
            np.union1d(master_index_of(eval_times, path.master_level, path.horizon),
                       [0, 1 << path.master_level])
        et = eval_idx * path.master_step
        lhs = _qv_values(ipath, part, eval_idx)
        f1l = np.asarray(fn.f1(x[part.indices[:-1]])) ** 2
        if qv is None:
            dx = np.diff(x[part.indices])
            cum = np.concatenate([[0.0], np.cumsum(f1l * dx**2)])
            k = np.searchsorted(part.indices, eval_idx, side="right") - 1
            inside = (k >= 0) & (k < len(part.indices) - 1)
            kin = np.where(inside, k, 0)
            stra = np.where(inside, x[eval_idx] - x[part.indices[kin]], 0.0)
            base = np.where(k < 0, 0, np.where(inside, kin, len(part.indices) - 1))
            rhs = cum[base] + np.where(inside, f1l[np.minimum(kin, len(f1l) - 1)] * stra**2, 0.0)
        else:
            rhs = _stieltjes_against_curve(f1l, part.times, qv, et)
        sups.append(float(np.abs(lhs - rhs).max()))
        ivals.append(float(ipath.scalar()[-1]))
        times = et
    return IsometryReport(
        level_ids=seq.level_ids,
        eval_times=times,
        sup_distances=np.asarray(sups),
        integral_values=np.asarray(ivals),
    )


# ---------------------------------------------------------------------------
# discrete local time
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LocalTimeField:
    u_grid: np.ndarray
    t_grid: np.ndarray
    values: np.ndarray            # (n_t, n_u), non-negative
    level: int = -1

    @property
    def du(self) -> float:
        return float(self.u_grid[1] - self.u_grid[0])

    def integrate(self, weight=None) -> np.ndarray:
        """Trapezoid integral over u of L (optionally times a weight), per t."""
        w = self.values if weight is None else self.values * weight[None, :]
        return _trapezoid(w, self.u_grid, axis=1)


def default_u_grid(path: SampledPath, n_u: int = 512, margin: float = 0.05) -> np.ndarray:
    x = path.scalar()
    lo, hi = float(x.min()), float(x.max())
    pad = margin * max(hi - lo, 1e-12)
    return np.linspace(lo - pad, hi + pad, n_u)


def local_time_discrete(
    path: SampledPath,
    part: Partition,
    t_grid=None,
    u_grid=None,
    level: int = -1,
) -> LocalTimeField:
    """Tent-function local time field on a rectangular (t, u) grid.

    Each partition interval [t_j, t_{j+1}] with t_j < t contributes
    2 |x(t_{j+1} and t) - u| on the half-open band between x(t_j) and
    x(t_{j+1}) (closed at the lower value).  At partition points every
    contributing tent is complete and integrates to the squared increment.
    """
    x = path.scalar()
    u = default_u_grid(path) if u_grid is None else np.asarray(u_grid, dtype=np.float64)
    if len(u) < 256:
        raise ParameterError(f"u_grid needs at least 2^8 points, got {len(u)}")
    du = np.diff(u)
    if np.any(du <= 0) or np.ptp(du) > 1e-9 * (u[-1] - u[0]):
        raise ParameterError("u_grid must be uniform and increasing")
    if u[0] > x.min() or u[-1] < x.max():
        raise ParameterError("u_grid does not cover the path range")
    if t_grid is None:
        t_idx = part.indices.copy()
    else:
        t_idx = master_index_of(t_grid, path.master_level, path.horizon)
        if np.any(np.diff(t_idx) < 0):
            raise ParameterError("t_grid must be sorted")
    pidx = part.indices

    acc = np.zeros(len(u))
    values = np.empty((len(t_idx), len(u)))
    j = 0  # next partition interval not yet accumulated
    for row, e in enumerate(t_idx):
        while j < len(pidx) - 1 and pidx[j + 1] <= e:
            _add_tent(acc, u, x[pidx[j]], x[pidx[j + 1]], x[pidx[j + 1]])
            j += 1
        if j < len(pidx) - 1 and pidx[j] < e:
            row_vals = acc.copy()
            _add_tent(row_vals, u, x[pidx[j]], x[pidx[j + 1]], x[e])
            values[row] = row_vals
        else:
            values[row] = acc
    return LocalTimeField(u, t_idx * path.master_step, values, level)


def _add_tent(acc, u, a, b, peak):
    lo, hi = (a, b) if a <= b else (b, a)
    i0 = np.searchsorted(u, lo, side="left")
    i1 = np.searchsorted(u, hi, side="left")
    if i1 > i0:
        acc[i0:i1] += 2.0 * np.abs(peak - u[i0:i1])


@dataclass(frozen=True)
class OccupationReport:
    sets: tuple                   # (lo, hi) bands, plus the full range last
    t_grid: np.ndarray
    lhs: np.ndarray               # (n_sets, n_t) quadrature of L over the band
    rhs_full: np.ndarray          # indicator-weighted QV increments, factor 1
    rhs_half: np.ndarray          # same with the classical 1/2
    matched: tuple                # which normalisation is closer, per set


def occupation_check(
    field: LocalTimeField, path: SampledPath, part: Partition, sets_a
) -> OccupationReport:
    """Band integrals of local time against indicator-weighted QV increments.

    Both the factor-1 and the factor-1/2 normalisations of the right side are
    reported; the full level range is always appended as a consistency row
    (its factor-1 value is the plain quadratic variation).
    """
    x = path.scalar()
    u = field.u_grid
    bands = [(float(lo), float(hi)) for lo, hi in sets_a]
    bands.append((-math.inf, math.inf))
    t_idx = master_index_of(field.t_grid, path.master_level, path.horizon)
    pidx = part.indices
    xl = x[pidx[:-1]]

    lhs = np.empty((len(bands), len(t_idx)))
    rhs = np.empty_like(lhs)
    dx = np.diff(x[pidx])
    k = np.searchsorted(pidx, t_idx, side="right") - 1
    inside = (k >= 0) & (k < len(pidx) - 1)
    kin = np.where(inside, k, 0)
    stra = np.where(inside, x[t_idx] - x[pidx[kin]], 0.0)
    base = np.where(k < 0, 0, np.where(inside, kin, len(pidx) - 1))
    for si, (lo, hi) in enumerate(bands):
        mask = (u >= lo) & (u < hi)
        if mask.sum() < 2:
            raise ParameterError(f"band [{lo}, {hi}) covers fewer than 2 u nodes")
        lhs[si] = _trapezoid(field.values[:, mask], u[mask], axis=1)
        ind = ((xl >= lo) & (xl < hi)).astype(np.float64)
        cum = np.concatenate([[0.0], np.cumsum(ind * dx**2)])
        rhs[si] = cum[base] + np.where(inside, ind[kin] * stra**2, 0.0)
    matched = tuple(
        "full" if np.abs(lhs[i] - rhs[i]).sum() <= np.abs(lhs[i] - 0.5 * rhs[i]).sum()
        else "half"
        for i in range(len(bands))
    )
    return OccupationReport(
        sets=tuple(bands),
        t_grid=field.t_grid,
        lhs=lhs,
        rhs_full=rhs,
        rhs_half=0.5 * rhs,
        matched=matched,
    )


def tanaka_residual(
    path: SampledPath, fn: FunctionTriple, part: Partition, field: LocalTimeField, t: float
) -> float:
    """Residual of the local-time change-of-variable formula at time t.

    residual = f(x(t)) - f(x(0)) - left-sum integral of f1
               - (1/2) quadrature of L_t * f'' over the level range.
    """
    rows = np.nonzero(np.isclose(field.t_grid, t, rtol=0, atol=1e-12 * path.horizon))[0]
    if len(rows) == 0:
        raise ParameterError(f"t={t} is not a row of the local time field")
    row = field.values[rows[0]]
    x = path.scalar()
    integral = follmer_integral(path, fn.f1, part, t)
    quad = float(_trapezoid(row * np.asarray(fn.f2(field.u_grid)), field.u_grid))
    e = int(master_index_of([t], path.master_level, path.horizon)[0])
    return float(fn.f(x[e]) - fn.f(x[0]) - integral - 0.5 * quad)


def default_test_bank(u_grid) -> list:
    """Indicator, Gaussian-bump and clipped-polynomial test functions on u_grid."""
    u = np.asarray(u_grid, dtype=np.float64)
    lo, hi = u[0], u[-1]
    span = hi - lo
    bank = [("one", np.ones_like(u))]
    for k, parts in (("half", 2), ("quarter", 4)):
        for i in range(parts):
            a = lo + span * i / parts
            b = lo + span * (i + 1) / parts
            bank.append((f"ind_{k}_{i}", ((u >= a) & (u < b)).astype(float)))
    for i, c in enumerate((lo + 0.25 * span, lo + 0.5 * span, lo + 0.75 * span)):
        bank.append((f"bump_{i}", np.exp(-0.5 * ((u - c) / (span / 8.0)) ** 2)))
    centered = (u - (lo + hi) / 2.0) / span
    bank.append(("lin", centered))
    bank.append(("quad", centered**2))
    return bank


@dataclass(frozen=True)
class WeakL2Report:
    names: tuple
    level_ids: tuple
    pairings: np.ndarray          # (n_h, n_levels)
    cauchy: np.ndarray            # (n_h, n_levels - 1)
    tol: float
    passed: bool                  # all last-pair differences below tol


def weak_l2_convergence(fields, bank=None, tol: float = 0.05, levels=None) -> WeakL2Report:
    """Pairings of the final-time local time rows against a test-function bank.

    All fields must share the u grid; the pairing at each level is the
    quadrature of L_T * h, and convergence is judged by the gap between
    consecutive levels, with the verdict taken at the last pair.
    """
    if len(fields) < 3:
        raise ParameterError("need at least 3 levels")
    u = fields[0].u_grid
    for f in fields[1:]:
        if len(f.u_grid) != len(u) or not np.allclose(f.u_grid, u):
            raise ParameterError("all fields must share the same u_grid")
    if bank is None:
        bank = default_test_bank(u)
    names = tuple(n for n, _ in bank)
    rows = np.vstack([f.values[-1] for f in fields])   # (n_levels, n_u)
    pair = np.empty((len(bank), len(fields)))
    for i, (_, h) in enumerate(bank):
        pair[i] = _trapezoid(rows * h[None, :], u, axis=1)
    cauchy = np.abs(np.diff(pair, axis=1))
    ids = tuple(levels) if levels is not None else tuple(f.level for f in fields)
    return WeakL2Report(
        names=names,
        level_ids=ids,
        pairings=pair,
        cauchy=cauchy,
        tol=float(tol),
        passed=bool(np.all(cauchy[:, -1] < tol)),
    )
