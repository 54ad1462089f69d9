"""Radial semilinear heat flow v_t = Delta v + |v|^(p-1) v with Dirichlet data.

Time stepping is implicit in the diffusion and explicit in the reaction:

    (W/dt + K) v_new = W v/dt + W f(v).

The Dirichlet energy is convex and -int |v|^(p+1)/(p+1) is concave, so this
is a convex splitting and the discrete energy cannot increase for any step
size; the stationary profile from :mod:`stationary` is an exact fixed point.

Runs from theta u_p are made in the blow-up frame (radius Z, u(0) = 1,
time tau = M_p^(p-1) t).  The equation is invariant under that zoom, and it
keeps the unstable growth rate of order one instead of |lambda_1p| ~ 1e6,
which would amplify round-off past any drift tolerance within microseconds
of physical time.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np
from scipy.linalg import solveh_banded

from .grid import (
    RadialGrid,
    RadialProfile,
    build_clustered_mesh,
    build_graded_mesh,
    resample,
    stiffness,
)
from .stationary import (
    ProblemParams,
    StationarySolution,
    Trajectory,
    discrete_solution,
    knodal_solution,
    nonlinearity,
    shoot_unit,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class EvolutionConfig:
    horizon: float = 200.0
    sup_cap: float = 1e6
    decay_floor: float = 1e-3
    dt_init: float = 1e-3
    dt_min: float = 1e-20
    dt_max: float = 1.0
    mesh: RadialGrid | None = None
    reaction_fraction: float = 0.05
    growth: float = 1.25
    stationary_check_time: float = 1.0
    drift_tol: float = 1e-4
    energy_tol: float = 1e-6
    min_cells: int = 4
    reaction: bool = True
    max_steps: int = 500_000

    def __post_init__(self):
        if not self.sup_cap > self.decay_floor > 0:
            raise ValueError("need sup_cap > decay_floor > 0")
        if not 0 < self.dt_min <= self.dt_init:
            raise ValueError("need 0 < dt_min <= dt_init")
        if self.dt_max < self.dt_init:
            raise ValueError("dt_max must be >= dt_init")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if not 0 < self.reaction_fraction < 1:
            raise ValueError("reaction_fraction must be in (0, 1)")

    def refined(self) -> "EvolutionConfig":
        """2x mesh and halved step controls, for verdict-stability checks."""
        return replace(
            self,
            mesh=None if self.mesh is None else self.mesh.refined(2),
            dt_init=self.dt_init / 2,
            dt_max=self.dt_max / 2,
            reaction_fraction=self.reaction_fraction / 2,
        )


@dataclass(frozen=True)
class BlowUp:
    t_estimate: float
    exponent_fit: float
    t_cap: float
    t_windows: tuple[float, float]
    location: float
    kind: str = "BlowUp"


@dataclass(frozen=True)
class Global:
    final_sup: float
    decay_rate: float | None
    kind: str = "Global"


@dataclass(frozen=True)
class NearStationary:
    max_drift: float
    kind: str = "NearStationary"


@dataclass(frozen=True)
class Undetermined:
    reason: str
    kind: str = "Undetermined"


Outcome = Union[BlowUp, Global, NearStationary, Undetermined]


@dataclass(frozen=True, eq=False)
class BlowupVerdict:
    outcome: Outcome
    times: np.ndarray
    sup_trace: np.ndarray
    energy_trace: np.ndarray
    steps: int
    max_energy_increase: float
    time_scale: float = 1.0
    final: RadialProfile | None = field(default=None, repr=False)

    @property
    def kind(self) -> str:
        return self.outcome.kind

    @property
    def energy_ok(self) -> bool:
        return self.max_energy_increase <= 1e-6

    def physical_time(self, tau):
        """Convert a frame time to the unit-ball time ``tau / M_p^(p-1)``."""
        return tau / self.time_scale

    def decimated(self, limit: int = 2000):
        idx = decimate_index(self.times.size, limit)
        return self.times[idx], self.sup_trace[idx], self.energy_trace[idx]


def decimate_index(size: int, limit: int = 2000) -> np.ndarray:
    """At most ``limit`` evenly spread indices, always keeping both ends."""
    if size <= limit:
        return np.arange(size)
    return np.unique(np.linspace(0, size - 1, limit).round().astype(int))


def discrete_energy(grid: RadialGrid, v, p, reaction: bool = True) -> tuple[float, float]:
    """``(E, scale)``: ``E = sum c (dv)^2 / 2 - sum W |v|^(p+1)/(p+1)`` over interior nodes.

    The gradient part is summed cell by cell, which keeps full relative
    accuracy on strongly graded meshes.
    """
    full = np.append(v, 0.0)
    grad = 0.5 * float(grid.conductance @ np.diff(full) ** 2)
    if not reaction:
        return grad, grad
    pot = float(grid.weights[:-1] @ np.abs(v) ** (p + 1)) / (p + 1)
    return grad - pot, grad + pot


def _fit_blowup_time(lag, s):
    """Zero of the least-squares line through ``(lag, s)``; None if not decreasing."""
    if lag.size < 3 or np.ptp(lag) <= 0:
        return None
    slope, icpt = np.polyfit(lag, s, 1)
    if not slope < 0:
        return None
    return -icpt / slope


def analyze_blowup(steps, sups, p, cap):
    """Remaining time to T from two decade windows, plus the growth exponent.

    ``steps[i]`` is the step that produced ``sups[i]``.  Times are measured
    backwards from the last sample by summing steps, since absolute times of
    order 1e4 cannot resolve steps of order 1e-15 near the singularity.
    ``sup^-(p-1)`` is linear in t for a type-I singularity; the line is
    fitted on ``[cap/10, cap]`` and ``[cap/100, cap/10]``.  The exponent
    comes from regressing log sup on log(T - t) in the last decade.
    Returns ``(remaining, exponent, (rem_1, rem_2))`` with remaining times
    counted from the last sample.
    """
    # lag[i] = t_i - t_last <= 0
    lag = -np.concatenate((np.cumsum(steps[::-1][:-1])[::-1], [0.0]))
    s = sups ** (-(p - 1))
    wins = [(cap / 10, np.inf), (cap / 100, cap / 10)]
    est = []
    for lo, hi in wins:
        m = (sups >= lo) & (sups < hi)
        est.append(_fit_blowup_time(lag[m], s[m]))
    if est[0] is None or est[1] is None:
        return None
    rem_end = est[0]
    m = (sups >= cap / 10) & (lag < rem_end)
    rem = rem_end - lag[m]
    if rem.size < 3:
        return None
    slope = np.polyfit(np.log(rem), np.log(sups[m]), 1)[0]
    return rem_end, -slope, (est[0], est[1])


def _decay_rate(times, sups):
    """Exponential rate fitted on the last decade of decay."""
    m = sups <= 10 * sups[-1]
    if np.count_nonzero(m) < 3:
        return None
    i0 = np.argmax(m)  # first time the last decade is entered
    t, s = times[i0:], sups[i0:]
    if t[-1] - t[0] <= 0:
        return None
    return float(-np.polyfit(t, np.log(s), 1)[0])


def evolve(initial: RadialProfile, params: ProblemParams, config: EvolutionConfig,
           time_scale: float = 1.0) -> BlowupVerdict:
    """Integrate until blow-up, decay, near-stationarity or the horizon.

    ``config.mesh``, when set, replaces the initial profile's grid (the data
    are resampled).  ``time_scale`` only labels the verdict: it is the
    factor that converts frame time to unit-ball time.
    """
    v0 = initial
    if config.mesh is not None and config.mesh is not initial.grid:
        v0 = resample(initial, config.mesh)
    grid = v0.grid
    if grid.dim != params.dim:
        raise ValueError("mesh dimension does not match params.dim")
    scale0 = float(np.max(np.abs(v0.values)))
    if abs(v0.values[-1]) > 1e-12 * max(scale0, 1.0):
        raise ValueError("initial datum must vanish at the outer boundary")
    p = params.p
    diag, off = stiffness(grid)
    w = grid.weights[:-1]
    r = grid.nodes
    v = v0.values[:-1].copy()
    start = v.copy()

    def finish(outcome, steps, times, sups, energies, max_inc, vec):
        return BlowupVerdict(
            outcome, np.asarray(times), np.asarray(sups), np.asarray(energies), steps,
            max_inc, time_scale, RadialProfile(grid, np.append(vec, 0.0)),
        )

    e0, _ = discrete_energy(grid, v, p, config.reaction)
    times, sups, energies = [0.0], [scale0], [e0]
    dts = [0.0]
    if scale0 == 0.0:
        return finish(Global(0.0, None), 0, times, sups, energies, 0.0, v)

    t, dt = 0.0, config.dt_init
    max_drift, max_inc = 0.0, 0.0
    dt_peak = dt
    ab = np.zeros((2, v.size))
    ab[0, 1:] = off
    steps = 0
    while True:
        sup = float(np.max(np.abs(v)))
        limit = config.dt_max
        if config.reaction and sup > 0:
            limit = min(limit, config.reaction_fraction / (p * sup ** (p - 1)))
        dt = min(dt * config.growth, limit, config.horizon - t)
        if t < config.stationary_check_time:
            dt = min(dt, config.stationary_check_time - t)
        if dt < config.dt_min:
            if config.horizon - t <= config.dt_min:
                break
            return finish(Undetermined("step-size underflow before sup_cap"), steps,
                          times, sups, energies, max_inc, v)
        ab[1] = w / dt + diag
        rhs = w * v / dt
        if config.reaction:
            rhs += w * nonlinearity(v, p)
        v_new = solveh_banded(ab, rhs, lower=False, check_finite=False)
        t += dt
        steps += 1
        dt_peak = max(dt_peak, dt)
        e1, mag = discrete_energy(grid, v_new, p, config.reaction)
        inc = (e1 - energies[-1]) / max(mag, abs(energies[-1]), 1e-300)
        max_inc = max(max_inc, inc)
        v = v_new
        sup = float(np.max(np.abs(v)))
        if not np.isfinite(sup):
            return finish(Undetermined("non-finite state"), steps, times, sups, energies,
                          max_inc, v)
        times.append(t)
        dts.append(dt)
        sups.append(sup)
        energies.append(e1)

        if t <= config.stationary_check_time + 1e-12:
            max_drift = max(max_drift, float(np.max(np.abs(v - start))) / scale0)
            if abs(t - config.stationary_check_time) <= 1e-12 and max_drift < config.drift_tol:
                return finish(NearStationary(max_drift), steps, times, sups, energies,
                              max_inc, v)

        if config.reaction:
            width = sup ** (-(p - 1) / 2.0)
            i_max = int(np.argmax(np.abs(v)))
            near = np.abs(r - r[i_max]) < width
            if np.count_nonzero(near) < config.min_cells:
                return finish(Undetermined("mesh-resolution"), steps, times, sups,
                              energies, max_inc, v)
        if sup >= config.sup_cap:
            fit = analyze_blowup(np.asarray(dts), np.asarray(sups), p, config.sup_cap)
            collapsed = dt <= 1e-3 * dt_peak
            if fit is None or not collapsed:
                return finish(Undetermined("sup_cap reached without finite-time fit"),
                              steps, times, sups, energies, max_inc, v)
            rem, expo, rems = fit
            # the two windows' T estimates, compared relative to T itself
            wins = (t + rems[0], t + rems[1])
            t_est = t + rem
            if abs(rems[0] - rems[1]) > 0.1 * abs(t_est):
                return finish(Undetermined("unstable blow-up time extrapolation"),
                              steps, times, sups, energies, max_inc, v)
            loc = float(r[int(np.argmax(np.abs(v)))])
            return finish(BlowUp(t_est, expo, t, wins, loc), steps, times, sups,
                          energies, max_inc, v)
        if sup < config.decay_floor:
            rate = _decay_rate(np.asarray(times), np.asarray(sups))
            return finish(Global(sup, rate), steps, times, sups, energies, max_inc, v)
        if t >= config.horizon - 1e-12:
            break
        if steps >= config.max_steps:
            return finish(Undetermined("step budget"), steps, times, sups, energies,
                          max_inc, v)
    return finish(Undetermined("horizon"), steps, times, sups, energies, max_inc, v)


def evolution_mesh(traj: Trajectory, n_nodes: int = 4097, sup_cap: float = 1e6,
                   cells_at_cap: int = 16) -> RadialGrid:
    """Graded mesh on the frame ball that keeps ``cells_at_cap`` nodes inside
    the blow-up width ``sup_cap^(-(p-1)/2)`` at each concentration point.

    For n > 2 the only concentration point is the origin.  On the interval
    every extremum of the stationary profile has the same height, so each one
    is a candidate blow-up point and gets its own grading.
    """
    z = float(traj.zeros[-1])
    p = traj.params.p
    centers = [0.0]
    if traj.params.dim == 1:
        centers = list(traj.extrema[traj.extrema < z])
    halves = 2 * len(centers) - 1
    per_half = (n_nodes - 1) // halves
    reach = z / halves
    width = sup_cap ** (-(p - 1) / 2.0)
    frac = cells_at_cap / per_half
    q = max(1.0, np.log(width / reach) / np.log(frac)) if width < reach else 1.0
    return build_clustered_mesh(centers, z, traj.params.dim, n_nodes, q - 1.0)


@dataclass(frozen=True, eq=False)
class FrameData:
    """Stationary profile in the blow-up frame on an evolution mesh."""

    params: ProblemParams
    profile: RadialProfile
    time_scale: float
    newton_residual: float


def frame_profile(traj: Trajectory, mesh: RadialGrid, m_p: float | None = None) -> FrameData:
    u, res, _ = discrete_solution(traj, mesh, frame="rescaled")
    z = float(traj.zeros[-1])
    p = traj.params.p
    m = z ** (2.0 / (p - 1)) if m_p is None else m_p
    return FrameData(traj.params, RadialProfile(mesh, u), m ** (p - 1), res)


def prepare_frame(sol_or_params, config: EvolutionConfig, n_nodes: int = 4097) -> FrameData:
    """Frame profile for a solution (or bare params) on the configured or automatic mesh."""
    if isinstance(sol_or_params, StationarySolution):
        traj, m = sol_or_params.trajectory, sol_or_params.m_p
    else:
        traj, m = shoot_unit(sol_or_params), None
    mesh = config.mesh if config.mesh is not None else evolution_mesh(traj, n_nodes, config.sup_cap)
    if not np.isclose(mesh.r_max, traj.zeros[-1], rtol=1e-12):
        raise ValueError("evolution mesh must span the frame ball of radius Z")
    return frame_profile(traj, mesh, m)


def evolve_theta(frame: FrameData, theta: float, config: EvolutionConfig) -> BlowupVerdict:
    init = frame.profile.map(lambda u: theta * u)
    return evolve(init, frame.params, replace(config, mesh=None), frame.time_scale)


@dataclass(frozen=True, eq=False)
class ThetaSweep:
    verdicts: dict
    window: tuple[float, float] | None
    errors: dict


def blowup_window(verdicts: dict) -> tuple[float, float] | None:
    """Extremes of the contiguous run of blown-up theta != 1 around theta = 1."""
    thetas = sorted(verdicts)
    below = [t for t in thetas if t < 1][::-1]
    above = [t for t in thetas if t > 1]
    lo = hi = None
    for t in below:
        if verdicts[t].kind != "BlowUp":
            break
        lo = t
    for t in above:
        if verdicts[t].kind != "BlowUp":
            break
        hi = t
    if lo is None and hi is None:
        return None
    return (lo if lo is not None else 1.0, hi if hi is not None else 1.0)


def _theta_task(args):
    frame, theta, config = args
    return evolve_theta(frame, theta, config)


def theta_sweep(sol: StationarySolution | ProblemParams, theta_list: Sequence[float], config: EvolutionConfig,
                n_nodes: int = 4097, mapper=map) -> ThetaSweep:
    """One verdict per theta, all from the same frame profile."""
    thetas = [float(t) for t in theta_list]
    if any(t < 0 for t in thetas):
        raise ValueError("theta values must be >= 0 (-v solves the same equation)")
    frame = prepare_frame(sol, config, n_nodes)
    verdicts, errors = {}, {}
    results = mapper(_safe_theta, [(frame, t, config) for t in thetas])
    for t, res in zip(thetas, results):
        if isinstance(res, BlowupVerdict):
            verdicts[t] = res
        else:
            errors[t] = res
    return ThetaSweep(verdicts, blowup_window(verdicts), errors)


def _safe_theta(args):
    try:
        return _theta_task(args)
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        log.warning("theta=%g failed: %s", args[1], exc)
        return f"{type(exc).__name__}: {exc}"


def one_d_contrast(p: float, theta: float, config: EvolutionConfig,
                   n_nodes: int = 2049) -> BlowupVerdict:
    """theta u_p for the 2-nodal stationary solution of the interval problem."""
    params = ProblemParams(1, p, 2)
    frame = prepare_frame(params, config, n_nodes)
    return evolve_theta(frame, theta, config)


def heat_decay_rate(dim: int = 3, n_nodes: int = 1025, horizon: float = 2.0) -> float:
    """Sup-norm decay rate of the pure heat flow on the unit ball (reaction off)."""
    grid = build_graded_mesh(n_nodes, 1.0, dim)
    init = RadialProfile(grid, 1.0 - grid.nodes**2)
    cfg = EvolutionConfig(horizon=horizon, decay_floor=1e-6, dt_init=1e-4, dt_max=1e-3,
                          reaction=False)
    verdict = evolve(init, ProblemParams(dim, 1.5 if dim > 2 else 2.0, 2), cfg)
    return verdict.outcome.decay_rate if isinstance(verdict.outcome, Global) else float("nan")
