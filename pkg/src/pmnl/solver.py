"""Regularized double iteration for the nonlocal porous medium problem.

For each regularization level ``m`` the problem

    u_t = Lap(u^mu) - a u^nu + a/m^nu,   du/dn = int k u_prev^l dy,
    u(., 0) = max(u0, 1/m)

is solved repeatedly, ``u_prev`` being the previous inner iterate (seeded
with zero), until the inner iterates stop moving; the outer loop then walks
the ``m`` schedule until successive limits agree.  Every inner solve is an
explicit conservative finite-volume march.

Past a blow-up time the inner iterates are finite but grow without bound
in ``j``, which makes marching the whole horizon hopeless.  The horizon is
therefore split into windows: a window is cut where the first flux-driven
iterate has grown by ``window_growth`` over its starting level, and the
ladder restarts from the zero seed inside every window.  Bounded runs with
modest growth use a single window.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize_scalar

from . import _march
from .errors import CflViolation, NoConvergence, NotBlowingUp, OrderViolationInInputs
from .geometry import Ball, Grid, GridField, build_grid, kernel_matrix, measures
from .model import ProblemSpec, ValidatedSpec, validate

logger = logging.getLogger(__name__)

COMPLETED = "CompletedBounded"
BLOWUP = "BlowUpDetected"
INCONCLUSIVE = "InconclusiveResolutionLimit"

_BUFFER = 65536


@dataclass(frozen=True)
class SolverConfig:
    n_cells: int = 100
    cfl_safety: float = 0.9
    dt_min: float = 1e-16
    u_max_threshold: float = 1e8
    m_schedule: tuple[int, ...] = (16, 32, 64, 128)
    j_tol: float = 1e-6
    m_tol: float = 1e-4
    horizon: float | None = None
    j_max: int = 200
    n_output: int = 100
    growth_cap: float = 0.05
    window_growth: float = 10.0
    t_tol: float = 1e-3
    max_steps: int = 50_000_000

    def __post_init__(self):
        for name in ("cfl_safety", "dt_min", "u_max_threshold", "j_tol", "m_tol",
                     "growth_cap", "window_growth", "t_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.cfl_safety > 1:
            raise ValueError("cfl_safety must not exceed 1")
        if self.horizon is not None and not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if not self.m_schedule or any(m < 1 for m in self.m_schedule):
            raise ValueError("m_schedule needs positive entries")
        if self.window_growth <= 1:
            raise ValueError("window_growth must exceed 1")


@dataclass
class Series:
    """Per-step diagnostics; ``influx`` is the boundary mass inflow rate."""

    t: np.ndarray
    sup_norm: np.ndarray
    l1_norm: np.ndarray
    boundary_influx: np.ndarray

    @classmethod
    def empty(cls) -> Series:
        e = np.empty(0)
        return cls(e, e.copy(), e.copy(), e.copy())

    @classmethod
    def concat(cls, parts: list[Series]) -> Series:
        if not parts:
            return cls.empty()
        return cls(*(np.concatenate([getattr(p, f) for p in parts])
                     for f in ("t", "sup_norm", "l1_norm", "boundary_influx")))

    def __len__(self) -> int:
        return len(self.t)

    def decimate(self, max_rows: int = 20000, keep_tail: int = 1000) -> Series:
        n = len(self)
        if n <= max_rows:
            return self
        head = np.arange(0, n - keep_tail, max(1, (n - keep_tail) // (max_rows - keep_tail)))
        idx = np.unique(np.concatenate([head, np.arange(n - keep_tail, n)]))
        return Series(self.t[idx], self.sup_norm[idx], self.l1_norm[idx], self.boundary_influx[idx])


@dataclass(frozen=True)
class BlowUpEstimate:
    t_star: float
    exponent: float
    r_squared: float
    n_samples: int

    @property
    def conclusive(self) -> bool:
        return self.r_squared >= 0.95


@dataclass
class IterationTrace:
    """``inner`` rows: one per (m, window, j); ``outer`` rows: one per m after the first."""

    inner: list[dict] = field(default_factory=list)
    outer: list[dict] = field(default_factory=list)


@dataclass
class Trajectory:
    """Snapshots of a solution at fixed output times (plus window ends)."""

    t: np.ndarray
    u: np.ndarray

    def at_common_times(self, other: Trajectory, rtol: float = 0.0):
        common, ia, ib = np.intersect1d(self.t, other.t, return_indices=True)
        return common, self.u[ia], other.u[ib]


@dataclass
class InnerResult:
    m: int
    status: str
    trajectory: Trajectory
    series: Series
    trace: list[dict]
    t_cross: float | None = None
    iterates: list[Trajectory] | None = None


@dataclass
class SimulationOutcome:
    status: str
    series: Series
    final_field: GridField
    trajectory: Trajectory
    trace: IterationTrace
    grid: Grid
    m_final: int
    blowup: BlowUpEstimate | None = None
    t_cross: float | None = None
    m_converged: bool = False
    message: str = ""
    inner_results: list[InnerResult] = field(default_factory=list, repr=False)
    spec: ProblemSpec | None = field(default=None, repr=False)

    @property
    def t_star(self) -> float | None:
        if self.blowup is not None:
            return self.blowup.t_star
        return self.t_cross


# --------------------------------------------------------------------------
# single explicit step
# --------------------------------------------------------------------------

def _arrays(grid: Grid):
    links = grid.face_areas[1:-1] / grid.h
    bcell = np.asarray(grid.boundary_cells, dtype=np.int64)
    barea = np.asarray(grid.boundary_areas, dtype=float)
    return links, bcell, barea


def stable_timestep(field: GridField | np.ndarray, spec: ValidatedSpec | ProblemSpec,
                    grid: Grid, cfl_safety: float = 1.0) -> float:
    u = field.values if isinstance(field, GridField) else np.asarray(field, dtype=float)
    mu, nu, a = float(spec.mu), float(spec.nu), float(spec.a)
    return float(_march.stable_dt(u, mu, nu, a, grid.stability_factor(), cfl_safety))


def step_explicit(field: GridField, spec: ValidatedSpec | ProblemSpec, grid: Grid, dt: float,
                  m_reg: float, boundary_source, cfl_safety: float = 1.0) -> GridField:
    """One explicit conservative Euler step of the regularized problem.

    ``boundary_source`` holds the nonlocal integral per boundary face.  The
    result is projected onto ``u >= 1/m_reg``.
    """
    u = np.asarray(field.values, dtype=float)
    if np.any(u < 0):
        raise ValueError("field must be nonnegative")
    limit = stable_timestep(u, spec, grid, cfl_safety)
    if dt > limit * (1 + 1e-12):
        raise CflViolation(f"dt={dt:.3e} exceeds the stability limit {limit:.3e}", limit=limit)
    mu, nu, a = float(spec.mu), float(spec.nu), float(spec.a)
    links, bcell, barea = _arrays(grid)
    fb = np.broadcast_to(np.asarray(boundary_source, dtype=float), (len(bcell),)).copy()
    r = _march.rates(u, grid.weights, links, bcell, barea, mu, nu, a, a / m_reg**nu, fb)
    new = np.maximum(u + dt * r, 1.0 / m_reg)
    return GridField(new, field.time + dt)


# --------------------------------------------------------------------------
# marching one inner iterate
# --------------------------------------------------------------------------

@dataclass
class _March:
    snaps_t: np.ndarray
    snaps: np.ndarray
    series: Series
    flux_t: np.ndarray
    flux: np.ndarray
    status: int
    t_end: float
    steps: int


class _Marcher:
    def __init__(self, vspec: ValidatedSpec, grid: Grid, cfg: SolverConfig, m: int):
        self.spec, self.grid, self.cfg, self.m = vspec, grid, cfg, m
        self.mu, self.nu, self.a, self.l = vspec.floats()
        self.links, self.bcell, self.barea = _arrays(grid)
        self.wk = kernel_matrix(grid, vspec.kernel) * grid.weights[None, :]
        self.stab = grid.stability_factor()
        self.src = self.a / float(m) ** self.nu
        self.floor = 1.0 / m
        nbf = len(self.bcell)
        self.bufs = (np.empty(_BUFFER), np.empty(_BUFFER), np.empty(_BUFFER),
                     np.empty(_BUFFER), np.empty((_BUFFER, nbf)))

    def march(self, u0: np.ndarray, t0: float, t1: float, out_times: np.ndarray,
              prev: _March | None, stop_value: float) -> _March:
        cfg = self.cfg
        u = u0.copy()
        t = t0
        snaps_t, snaps = [t0], [u.copy()]
        parts, ft, fv = [], [np.array([t0])], [_march.own_flux(u, self.wk, self.l)[None, :]]
        if prev is None:
            pt, pf, has_prev = np.zeros(1), np.zeros((1, len(self.bcell))), False
        else:
            pt, pf, has_prev = prev.flux_t, prev.flux, True
        status = _march.REACHED
        steps = 0
        targets = [x for x in out_times if t0 < x < t1] + [t1]
        for target in targets:
            while True:
                w, t, status = _march.advance(
                    u, t, target, self.grid.weights, self.links, self.bcell, self.barea,
                    self.mu, self.nu, self.a, self.src, self.floor, self.wk, self.l,
                    pt, pf, has_prev, self.stab, cfg.cfl_safety, cfg.growth_cap,
                    cfg.dt_min, stop_value, *self.bufs)
                bt, bs, bl, bi, bf = self.bufs
                parts.append(Series(bt[:w].copy(), bs[:w].copy(), bl[:w].copy(), bi[:w].copy()))
                ft.append(bt[:w].copy())
                fv.append(bf[:w].copy())
                steps += w
                if steps > cfg.max_steps:
                    status = -1
                    break
                if status != _march.BUFFER_FULL:
                    break
            if status != _march.REACHED:
                break
            snaps_t.append(t)
            snaps.append(u.copy())
        if status != _march.REACHED and (not snaps_t or snaps_t[-1] != t):
            snaps_t.append(t)
            snaps.append(u.copy())
        return _March(np.array(snaps_t), np.array(snaps), Series.concat(parts),
                      np.concatenate(ft), np.concatenate(fv), status, t, steps)


def _lifted_initial(vspec: ValidatedSpec, grid: Grid, m: int) -> np.ndarray:
    return np.maximum(vspec.initial(grid.centers), 1.0 / m)


def _output_times(horizon: float, n_output: int) -> np.ndarray:
    return np.linspace(0.0, horizon, n_output + 1)


def _compare(a: _March, b: _March) -> tuple[float, float]:
    """(max |a-b|, min (a-b)) over the snapshot times both iterates share."""
    common, ia, ib = np.intersect1d(a.snaps_t, b.snaps_t, return_indices=True)
    if len(common) == 0:
        return math.inf, -math.inf
    d = a.snaps[ia] - b.snaps[ib]
    return float(np.max(np.abs(d))), float(np.min(d))


def _sustained_growth(series: Series, reference: float, window: int = 20, least: int = 6) -> bool:
    s = series.sup_norm
    if len(s) < least:
        return False
    tail = s[-(window + 1):]
    return bool(np.all(np.diff(tail) > 0) and tail[-1] > 100 * reference)


def solve_inner(spec: ProblemSpec | ValidatedSpec, grid: Grid | None, m: int,
                config: SolverConfig = SolverConfig(), keep_iterates: bool = False) -> InnerResult:
    """Inner ladder ``j = 1, 2, ...`` at fixed regularization ``m``.

    Each window runs in two phases.  While cutting, an iterate that grows
    past the window budget shortens the window.  Once the end stops moving
    the window is frozen, checkpoints are laid inside it, and the ladder
    runs until successive iterates agree there (bounded case) or cross the
    blow-up threshold at the same time (blow-up case).
    """
    vspec = validate(spec)
    cfg = config
    grid = grid or build_grid(vspec.domain, cfg.n_cells)
    horizon = cfg.horizon if cfg.horizon is not None else float(vspec.horizon)
    outs = _output_times(horizon, cfg.n_output)
    marcher = _Marcher(vspec, grid, cfg, m)

    u_start = _lifted_initial(vspec, grid, m)
    reference = max(float(u_start.max()), 1.0)
    t_start = 0.0
    span = horizon
    pieces: list[_March] = []
    trace: list[dict] = []
    iterates = [] if keep_iterates else None
    window = 0
    status = None
    while status is None:
        t_end = min(horizon, t_start + span)
        growth_stop = cfg.window_growth * max(float(u_start.max()), 1.0)
        frozen = growth_stop >= cfg.u_max_threshold
        stop = cfg.u_max_threshold if frozen else growth_stop
        targets = outs
        checkpointed = False
        prev = last = None
        last_ckpt = False
        crossed_prev = None
        for j in range(1, cfg.j_max + 1):
            cur = marcher.march(u_start, t_start, t_end, targets, prev, stop)
            ckpt = checkpointed
            if cur.status == -1:
                status, last = INCONCLUSIVE, cur
                break
            crossed = None
            if cur.status == _march.DT_FLOOR:
                if not _sustained_growth(cur.series, reference):
                    status, last = INCONCLUSIVE, cur
                    break
                crossed = cur.t_end
            elif cur.status in (_march.THRESHOLD, _march.SOURCE_EXHAUSTED):
                if stop >= cfg.u_max_threshold:
                    crossed = cur.t_end
                else:
                    # the iterate outgrew the window budget: shorten the window
                    frozen = t_end - cur.t_end <= cfg.t_tol * (t_end - t_start)
                    t_end = cur.t_end
            elif prev is not None:
                # a flux-driven iterate fits in the window: the end is settled
                frozen = True
            if last is None:
                delta, mind = float(np.max(cur.snaps)), 0.0  # the seed iterate is identically zero
            else:
                delta, mind = _compare(cur, last)
            scale = max(1.0, float(cur.snaps.max()))
            trace.append(dict(m=m, window=window, j=j, delta=delta, min_diff=mind,
                              t_end=cur.t_end, crossed=crossed is not None, steps=cur.steps,
                              march_status=cur.status, sup=float(cur.snaps.max())))
            if keep_iterates:
                iterates.append(Trajectory(cur.snaps_t, cur.snaps))
            logger.debug("m=%d window=%d j=%d delta=%.3e t_end=%.6g", m, window, j, delta, cur.t_end)
            if crossed is not None and crossed_prev is not None \
                    and abs(crossed_prev - crossed) <= cfg.t_tol * crossed:
                status, last = BLOWUP, cur
                break
            if last is not None and crossed is None and cur.t_end == last.t_end and delta < cfg.j_tol * scale:
                # agreement counts once both iterates share enough interior sample times
                shared = np.intersect1d(cur.snaps_t, last.snaps_t)
                if (ckpt and last_ckpt) or (frozen and ckpt == last_ckpt and np.sum(shared > t_start) >= 2):
                    last = cur
                    break
            if frozen and not checkpointed:
                # checkpoints inside the fixed window make successive iterates comparable
                targets = np.union1d(outs, np.linspace(t_start, t_end, 9)[1:-1])
                stop = cfg.u_max_threshold
                checkpointed = True
            last_ckpt = ckpt
            crossed_prev = crossed
            prev = last = cur
        else:
            raise NoConvergence(f"inner iteration did not converge in {cfg.j_max} steps (m={m})",
                                m=m, trace=trace)
        pieces.append(last)
        if status is None and last.t_end >= horizon:
            status = COMPLETED
        elif status is None:
            span = 4.0 * (last.t_end - t_start)
            u_start = last.snaps[-1].copy()
            t_start = last.t_end
            window += 1
    tt = np.concatenate([pieces[0].snaps_t] + [p.snaps_t[1:] for p in pieces[1:]])
    uu = np.concatenate([pieces[0].snaps] + [p.snaps[1:] for p in pieces[1:]])
    keep = np.isin(tt, outs) | (np.arange(len(tt)) == len(tt) - 1)
    return InnerResult(m, status, Trajectory(tt[keep], uu[keep]),
                       Series.concat([p.series for p in pieces]), trace,
                       t_cross=pieces[-1].t_end if status == BLOWUP else None, iterates=iterates)


# --------------------------------------------------------------------------
# outer loop
# --------------------------------------------------------------------------

def solve(spec: ProblemSpec | ValidatedSpec, config: SolverConfig = SolverConfig(),
          keep_iterates: bool = False) -> SimulationOutcome:
    vspec = validate(spec)
    grid = build_grid(vspec.domain, config.n_cells)
    trace = IterationTrace()
    results: list[InnerResult] = []
    estimate = None
    prev_est = None
    converged = False
    for m in config.m_schedule:
        res = solve_inner(vspec, grid, m, config, keep_iterates)
        results.append(res)
        trace.inner.extend(res.trace)
        if res.status == INCONCLUSIVE:
            out = _outcome(INCONCLUSIVE, res, grid, trace, results, None, False,
                           "time step fell below dt_min without sustained growth")
            out.spec = vspec.spec
            return out
        est = None
        if res.status == BLOWUP:
            try:
                est = detect_blowup(res.series)
            except NotBlowingUp:
                est = None
        if len(results) > 1:
            before = results[-2]
            row = dict(m_prev=before.m, m=m, status=res.status)
            if res.status == COMPLETED and before.status == COMPLETED:
                _, ua, ub = res.trajectory.at_common_times(before.trajectory)
                row["max_increase"] = float(np.max(ua - ub))
                row["delta"] = float(np.max(np.abs(ua - ub)))
                trace.outer.append(row)
                if row["delta"] < config.m_tol:
                    converged = True
                    break
            elif res.status == BLOWUP and before.status == BLOWUP:
                t_now = est.t_star if est else res.t_cross
                t_old = prev_est.t_star if prev_est else before.t_cross
                row["t_star"], row["t_star_prev"] = t_now, t_old
                trace.outer.append(row)
                if abs(t_now - t_old) <= 0.1 * t_now:
                    converged = True
                    break
            else:
                trace.outer.append(row)
        prev_est = est
        estimate = est
    res = results[-1]
    estimate = estimate if res.status == BLOWUP else None
    if res.status == BLOWUP and estimate is None:
        try:
            estimate = detect_blowup(res.series)
        except NotBlowingUp:
            estimate = None
    out = _outcome(res.status, res, grid, trace, results, estimate, converged)
    out.spec = vspec.spec
    return out


def _outcome(status, res: InnerResult, grid, trace, results, estimate, converged, message=""):
    final = GridField(res.trajectory.u[-1].copy(), float(res.trajectory.t[-1]))
    return SimulationOutcome(status, res.series, final, res.trajectory, trace, grid, res.m,
                             estimate, res.t_cross, converged, message, results)


# --------------------------------------------------------------------------
# blow-up fit
# --------------------------------------------------------------------------

def detect_blowup(series, min_samples: int = 8) -> BlowUpEstimate:
    """Fit ``sup u ~ C (T* - t)^(-p)`` over the last decade of growth.

    ``series`` is a :class:`Series` or a ``(t, sup_norm)`` pair.  The blow-up
    time is chosen to maximize the coefficient of determination of the
    log-log fit; an optimum that runs off to the far end of the search
    bracket means exponential-type growth, reported as ``NotBlowingUp``.
    """
    if isinstance(series, Series):
        t, s = series.t, series.sup_norm
    else:
        t, s = (np.asarray(x, dtype=float) for x in series)
    if len(t) < min_samples:
        raise NotBlowingUp(f"need at least {min_samples} samples, got {len(t)}")
    if not s[-1] >= 100 * s[0] * (1 - 1e-9):
        raise NotBlowingUp("sup-norm did not grow by a factor of 100")
    sel = s >= s[-1] / 10.0
    first = int(np.argmax(sel))
    tt, ss = t[first:], s[first:]
    if len(tt) < min_samples:
        tt, ss = t[-min_samples:], s[-min_samples:]
    if np.any(np.diff(ss) <= 0):
        raise NotBlowingUp("sup-norm is not increasing over the fit window")
    y = np.log(ss)
    back = tt[-1] - tt  # distances to the last sample, exact for nearby floats
    span = back[0]
    gap = np.diff(tt).min()
    if not gap > 0:
        raise NotBlowingUp("sample times must be strictly increasing")

    def r2_and_fit(log_gap):
        x = np.log(np.exp(log_gap) + back)
        A = np.vstack([np.ones_like(x), x]).T
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        resid = y - A @ coef
        tot = np.sum((y - y.mean()) ** 2)
        return 1.0 - np.sum(resid**2) / tot if tot > 0 else 0.0, coef

    lo, hi = math.log(gap * 1e-6), math.log(10.0 * span)
    grid_pts = np.linspace(lo, hi, 400)
    vals = np.array([r2_and_fit(g)[0] for g in grid_pts])
    best = int(np.argmax(vals))
    if best == len(grid_pts) - 1:
        raise NotBlowingUp("no finite-time singularity fits the growth")
    a_, b_ = grid_pts[max(best - 1, 0)], grid_pts[min(best + 1, len(grid_pts) - 1)]
    opt = minimize_scalar(lambda g: -r2_and_fit(g)[0], bounds=(a_, b_), method="bounded",
                          options={"xatol": 1e-10})
    log_gap = opt.x if -opt.fun >= vals[best] else grid_pts[best]
    r2, coef = r2_and_fit(log_gap)
    return BlowUpEstimate(float(tt[-1] + math.exp(log_gap)), float(-coef[1]), float(r2), len(tt))


# --------------------------------------------------------------------------
# comparison harness
# --------------------------------------------------------------------------

@dataclass
class OrderingReport:
    min_gap: float
    sup_scale: float
    relative_violation: float
    t_compared: float
    status_low: str
    status_high: str
    tolerance: float = 1e-6

    @property
    def passed(self) -> bool:
        return self.min_gap >= -self.tolerance * self.sup_scale


def _extent(domain):
    if isinstance(domain, Ball):
        return 0.0, domain.radius
    return domain.x_left, domain.x_right


def compare_evolutions(spec: ProblemSpec | ValidatedSpec, u0_low, u0_high,
                       config: SolverConfig = SolverConfig(), tolerance: float = 1e-6):
    """Evolve two ordered data with identical settings and report the smallest gap."""
    base = spec.spec if isinstance(spec, ValidatedSpec) else spec
    x = np.linspace(*_extent(base.domain), 2049)
    excess = np.asarray(u0_low(x)) - np.asarray(u0_high(x))
    if np.any(excess > 0):
        k = int(np.argmax(excess))
        raise OrderViolationInInputs(f"u0_low exceeds u0_high by {excess[k]:.3g} at x={x[k]:.6g}")
    low = solve(replace(base, initial=u0_low), config)
    high = solve(replace(base, initial=u0_high), config)
    _, ul, uh = low.trajectory.at_common_times(high.trajectory)
    gap = uh - ul
    scale = float(max(np.max(np.abs(uh)), np.max(np.abs(ul)), 1e-300))
    min_gap = float(gap.min())
    common = np.intersect1d(low.trajectory.t, high.trajectory.t)
    return OrderingReport(min_gap, scale, max(0.0, -min_gap) / scale, float(common[-1]),
                          low.status, high.status, tolerance), low, high
