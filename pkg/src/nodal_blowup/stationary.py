"""Radial k-nodal solutions of -Delta u = |u|^(p-1) u in the unit ball.

The unit-amplitude trajectory ``w'' + (n-1)/r w' + |w|^(p-1) w = 0`` with
``w(0) = 1`` is integrated once; the equation's scaling invariance maps the
k-th zero to r = 1 exactly, so no outer iteration on u(0) is needed.  The
sampled profile is then Newton-polished on the finite-volume mesh so that it
solves the discrete equations to round-off; every downstream identity
(Nehari, the linearized eigenproblem, the parabolic fixed point) is exact at
the discrete level.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import cho_solve_banded, cholesky_banded

from .eigen import solve_scaled
from .grid import (
    RadialGrid,
    RadialProfile,
    build_graded_mesh,
    cell_energy_below,
    concentration_cluster,
    dirichlet_energy,
    integrate_radial,
    split_dirichlet_energy,
    stiffness,
    stiffness_apply,
)
from .limit import sobolev_level

log = logging.getLogger(__name__)

DEFAULT_P_MARGIN = 1e-3
START_RADIUS = 1e-4


class ShootingError(RuntimeError):
    """The trajectory did not produce the requested number of zeros."""


class ResolutionWarning(UserWarning):
    """p is closer to p_S than the default mesh resolution is calibrated for."""


@dataclass(frozen=True)
class ProblemParams:
    dim: int
    p: float
    k: int = 2

    def __post_init__(self):
        if self.dim == 2 or self.dim < 1:
            raise ValueError(f"dimension must be 1 or > 2, got {self.dim}")
        if not self.p > 1:
            raise ValueError(f"exponent must exceed 1, got p={self.p}")
        if self.dim > 2 and self.p >= self.p_s:
            raise ValueError(
                f"p={self.p} is not subcritical: p_S = {self.p_s} for n={self.dim}"
            )
        if self.k < 2:
            raise ValueError(f"sign-changing solutions need k >= 2 nodal regions, got {self.k}")

    @property
    def p_s(self) -> float:
        return np.inf if self.dim <= 2 else (self.dim + 2) / (self.dim - 2)


def nonlinearity(u, p):
    return np.abs(u) ** (p - 1) * u


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Unit-amplitude shooting trajectory ``w`` with its first k zeros."""

    params: ProblemParams
    zeros: np.ndarray
    extrema: np.ndarray
    r_end: float
    _dense: Callable = field(repr=False)

    def __call__(self, r):
        """``(w(r), w'(r))`` for radii in ``[0, r_end]``; series below the start radius."""
        r = np.asarray(r, dtype=float)
        n, p = self.params.dim, self.params.p
        w = np.empty_like(r)
        dw = np.empty_like(r)
        near = r < START_RADIUS
        rn = r[near]
        w[near], dw[near] = _series(rn, n, p)
        if np.any(~near):
            y = self._dense(r[~near])
            w[~near], dw[~near] = y[0], y[1]
        return w, dw


def _series(r, n, p):
    c2 = 1.0 / (2 * n)
    c4 = p / (8.0 * n * (n + 2))
    return 1.0 - c2 * r**2 + c4 * r**4, -2 * c2 * r + 4 * c4 * r**3


def shoot_unit(
    params: ProblemParams,
    r_span: float | None = None,
    rtol: float = 1e-12,
    max_extensions: int = 12,
    w0: float = 1.0,
) -> Trajectory:
    """Integrate the unit trajectory until its k-th positive zero.

    ``w0`` other than 1 perturbs the initial amplitude (conditioning checks).
    The span grows by 4x per extension until k zeros are found.
    """
    n, p, k = params.dim, params.p, params.k

    def rhs(r, y):
        w, v = y
        return [v, -(n - 1) / r * v - np.abs(w) ** (p - 1) * w]

    def zero(r, y):
        return y[0]

    def turn(r, y):
        return y[1]

    zero.terminal = k
    r0 = START_RADIUS
    # scaling: w(r; w0) = w0 * w(w0^((p-1)/2) r; 1), same series
    a = w0 ** ((p - 1) / 2.0)
    s_w, s_dw = _series(np.array([a * r0]), n, p)
    y0 = [w0 * s_w[0], w0 * a * s_dw[0]]
    span = r_span if r_span is not None else 20.0 * k
    for _ in range(max_extensions + 1):
        sol = solve_ivp(
            rhs, (r0, span), y0, method="DOP853", rtol=rtol, atol=rtol * 1e-3,
            events=(zero, turn), dense_output=True,
        )
        if len(sol.t_events[0]) >= k:
            break
        span *= 4.0
    else:
        raise ShootingError(
            f"found {len(sol.t_events[0])} of {k} zeros up to r={span:.3g} "
            f"(n={n}, p={p}); p may be too close to p_S or k too large"
        )
    dense = sol.sol
    # event location already runs a bracketing solve on the dense output
    zeros = np.array(sol.t_events[0][:k])
    extrema = np.concatenate(([0.0], sol.t_events[1][sol.t_events[1] < zeros[-1]]))
    return Trajectory(params, zeros, extrema, float(sol.t[-1]), dense)


@dataclass(frozen=True, eq=False)
class StationarySolution:
    params: ProblemParams
    profile: RadialProfile
    nodal_radii: np.ndarray
    m_p: float
    m_p_plus: float
    m_p_minus: float
    residual: float
    center_positive: bool
    newton_residual: float
    discretization_gap: float
    trajectory: Trajectory = field(repr=False)

    @property
    def grid(self) -> RadialGrid:
        return self.profile.grid

    @property
    def scale(self) -> float:
        """``M_p^((p-1)/2)``: the blow-up zoom factor."""
        return self.m_p ** ((self.params.p - 1) / 2.0)

    @property
    def outer_zero(self) -> float:
        return float(self.trajectory.zeros[-1])

    def continuum(self, r):
        """The shooting solution mapped to the unit ball, ``(u, u')``."""
        z = self.outer_zero
        amp = z ** (2.0 / (self.params.p - 1))
        w, dw = self.trajectory(np.asarray(r) * z)
        return amp * w, amp * z * dw


def dual_residual(grid: RadialGrid, u: np.ndarray, p: float, factor=None) -> float:
    """``||K^-1 F||_K / ||u||_K`` for ``F = K u - W |u|^(p-1) u`` (all nodes of u).

    The dual energy norm is the natural size of an elliptic residual; it stays
    meaningful on cells so small that nodal differences fall below round-off,
    where a pointwise residual only measures rounding noise.
    """
    if factor is None:
        factor = _stiffness_factor(grid)
    w = grid.weights[:-1]
    f = stiffness_apply(grid, u) - w * nonlinearity(u[:-1], p)
    y = cho_solve_banded((factor, False), f, check_finite=False)
    return float(np.sqrt(max(f @ y, 0.0) / dirichlet_energy(RadialProfile(grid, u))))


def _stiffness_factor(grid: RadialGrid):
    diag, off = stiffness(grid)
    ab = np.zeros((2, diag.size))
    ab[0, 1:] = off
    ab[1] = diag
    return cholesky_banded(ab, lower=False, check_finite=False)


def newton_polish(
    grid: RadialGrid,
    guess: np.ndarray,
    p: float,
    tol: float = 1e-13,
    max_iter: int = 30,
):
    """Solve ``K u = W |u|^(p-1) u`` (Dirichlet at r_max) from ``guess``.

    Returns the full nodal vector and its :func:`dual_residual`.
    """
    diag, off = stiffness(grid)
    factor = _stiffness_factor(grid)
    w = grid.weights[:-1]
    u = np.array(guess, dtype=float)
    u[-1] = 0.0
    res = dual_residual(grid, u, p, factor)
    best = (res, u)
    for _ in range(max_iter):
        if res < tol:
            break
        f = stiffness_apply(grid, u) - w * nonlinearity(u[:-1], p)
        du = solve_scaled(diag - w * p * np.abs(u[:-1]) ** (p - 1), off, w, -f)
        u = u.copy()
        u[:-1] += du
        res = dual_residual(grid, u, p, factor)
        if res < best[0]:
            best = (res, u)
        elif res > 1e3 * best[0]:
            break
    res, u = best
    return u, res


def ode_defect(traj: Trajectory, radii: np.ndarray) -> float:
    """Scaled defect of the integrated radial equation on consecutive cells.

    For a true solution ``[r^(n-1) w']_a^b + int_a^b s^(n-1) f(w) ds = 0``;
    the dense output is checked against that balance with 5-point Gauss
    quadrature on every cell, relative to ``int_a^b s^(n-1) |f(w)| ds``
    plus the flux magnitude.
    """
    n, p = traj.params.dim, traj.params.p
    a, b = radii[:-1], radii[1:]
    x, wq = np.polynomial.legendre.leggauss(5)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    s = mid[:, None] + half[:, None] * x[None, :]
    ws, _ = traj(s.ravel())
    fs = nonlinearity(ws.reshape(s.shape), p) * s ** (n - 1)
    source = half * (fs @ wq)
    scale = half * (np.abs(fs) @ wq)
    _, dwa = traj(a)
    _, dwb = traj(b)
    flux = b ** (n - 1) * dwb - a ** (n - 1) * dwa
    denom = scale + np.abs(b ** (n - 1) * dwb) + np.abs(a ** (n - 1) * dwa)
    return float(np.max(np.abs(flux + source) / np.maximum(denom, 1e-300)))


def sample_profile(traj: Trajectory, grid: RadialGrid, frame: str = "physical") -> np.ndarray:
    """Shooting solution sampled on ``grid`` in the unit-ball or rescaled frame.

    ``"physical"``: ``u(r) = Z^(2/(p-1)) w(Z r)`` on the unit ball.
    ``"rescaled"``: ``w`` itself on the ball of radius ``Z`` (u(0) = 1).
    """
    z = traj.zeros[-1]
    p = traj.params.p
    if frame == "physical":
        if not np.isclose(grid.r_max, 1.0):
            raise ValueError("physical frame lives on the unit ball")
        w, _ = traj(grid.nodes * z)
        u = z ** (2.0 / (p - 1)) * w
    elif frame == "rescaled":
        if not np.isclose(grid.r_max, z, rtol=1e-12):
            raise ValueError(f"rescaled frame lives on the ball of radius {z}")
        u, _ = traj(np.minimum(grid.nodes, z))
    else:
        raise ValueError(f"unknown frame {frame!r}")
    u[-1] = 0.0
    return u


def discrete_solution(traj: Trajectory, grid: RadialGrid, frame: str = "physical"):
    """Newton-polished discrete stationary profile on ``grid``."""
    guess = sample_profile(traj, grid, frame)
    u, res = newton_polish(grid, guess, traj.params.p)
    gap = float(np.max(np.abs(u - guess)) / np.max(np.abs(u)))
    return u, res, gap


def solution_mesh(params: ProblemParams, scale: float, n_nodes: int, cluster_strength=None,
                  r_max: float = 1.0) -> RadialGrid:
    cluster = concentration_cluster(scale) if cluster_strength is None else cluster_strength
    return build_graded_mesh(n_nodes, r_max, params.dim, cluster)


def knodal_solution(
    params: ProblemParams,
    n_nodes: int = 4097,
    cluster_strength: float | None = None,
    p_margin: float = DEFAULT_P_MARGIN,
    trajectory: Trajectory | None = None,
) -> StationarySolution:
    """k-nodal radial solution on the unit ball, center-positive.

    The mesh grading defaults to :func:`concentration_cluster` of the zoom
    factor, so the central bubble of width ``1/Z`` stays resolved as p
    approaches p_S.  Exponents within ``p_margin`` of p_S are rejected;
    lowering the margin below the default emits a :class:`ResolutionWarning`.
    """
    if params.dim > 2:
        if params.p > params.p_s - p_margin:
            raise ValueError(
                f"p={params.p} is within {p_margin} of p_S={params.p_s}; "
                "lower p_margin to proceed"
            )
        if p_margin < DEFAULT_P_MARGIN and params.p > params.p_s - DEFAULT_P_MARGIN:
            warnings.warn(
                f"p={params.p} is closer than {DEFAULT_P_MARGIN} to p_S; the central "
                "bubble may be under-resolved", ResolutionWarning, stacklevel=2,
            )
    traj = trajectory if trajectory is not None else shoot_unit(params)
    z = traj.zeros[-1]
    grid = solution_mesh(params, z, n_nodes, cluster_strength)
    u, newton_res, gap = discrete_solution(traj, grid)
    fine = grid.refined(4)
    residual = ode_defect(traj, fine.nodes * z)
    profile = RadialProfile(grid, u)
    sign_changes = int(np.sum(u[:-2] * u[1:-1] < 0))
    if sign_changes != params.k - 1:
        raise ShootingError(
            f"discrete profile has {sign_changes} sign changes, expected {params.k - 1}"
        )
    log.debug("n=%d p=%g k=%d Z=%.6g newton=%.2e defect=%.2e", params.dim, params.p,
              params.k, z, newton_res, residual)
    return StationarySolution(
        params=params,
        profile=profile,
        nodal_radii=traj.zeros[:-1] / z,
        m_p=float(np.max(np.abs(u))),
        m_p_plus=float(max(np.max(u), 0.0)),
        m_p_minus=float(max(np.max(-u), 0.0)),
        residual=residual,
        center_positive=bool(u[0] > 0),
        newton_residual=newton_res,
        discretization_gap=gap,
        trajectory=traj,
    )


@dataclass(frozen=True)
class EnergyReport:
    grad_sq_total: float
    grad_sq_plus: float
    grad_sq_minus: float
    lp1_norm: float
    crit_plus: float | None
    crit_minus: float | None
    e_p: float
    inner_grad_sq: float
    inner_sup_ratio: float


def energy_report(sol: StationarySolution) -> EnergyReport:
    n, p = sol.params.dim, sol.params.p
    u = sol.profile
    total = dirichlet_energy(u)
    plus, minus = split_dirichlet_energy(u)
    lp1 = integrate_radial(u.map(lambda v: np.abs(v) ** (p + 1)))
    if n > 2:
        q = 2.0 * n / (n - 2)
        crit_plus = integrate_radial(u.map(lambda v: np.maximum(v, 0) ** q))
        crit_minus = integrate_radial(u.map(lambda v: np.maximum(-v, 0) ** q))
    else:
        crit_plus = crit_minus = None
    # innermost nodal region: up to the first discrete sign change
    v = u.values
    i = int(np.argmax(v[:-1] * v[1:] < 0))
    r0, r1 = u.r[i], u.r[i + 1]
    rho = r0 + (r1 - r0) * v[i] / (v[i] - v[i + 1])
    inner = cell_energy_below(u, rho)
    outer_sup = float(np.max(np.abs(v[i + 1:])))
    return EnergyReport(
        grad_sq_total=total,
        grad_sq_plus=plus,
        grad_sq_minus=minus,
        lp1_norm=lp1,
        crit_plus=crit_plus,
        crit_minus=crit_minus,
        e_p=0.5 * total - lp1 / (p + 1),
        inner_grad_sq=inner,
        inner_sup_ratio=float(abs(v[0]) / outer_sup),
    )


def _strictly_increasing(x) -> bool:
    return bool(np.all(np.diff(x) > 0))


def _approaching(x, target) -> bool:
    return bool(np.all(np.diff(np.abs(np.asarray(x) - target)) < 0))


@dataclass(frozen=True)
class TrendRow:
    p: float
    energy_ratio: float
    plus_ratio: float
    minus_ratio: float
    sup_ratio: float
    m_p_plus: float
    inner_energy_ratio: float
    inner_sup_ratio: float
    grad_sq_total: float


@dataclass(frozen=True)
class TrendReport:
    n: int
    k: int
    rows: list[TrendRow]
    tail: int
    flags: dict[str, bool]


def condition_diagnostics(sols: Sequence[StationarySolution], tail: int = 3) -> TrendReport:
    """Trend evidence for the structural conditions as p increases.

    Flags are evaluated on the last ``tail`` solutions.  For k = 2: total
    energy over ``2 S^(n/2)`` and each sign's energy over ``S^(n/2)``
    approaching 1, and ``M_+`` and ``M_+/M_-`` strictly increasing.  For
    k > 2: the innermost region's energy approaching ``S^(n/2)``, the ratio
    of its sup to the sup outside it increasing, and the largest total energy
    in the list reported as the boundedness certificate.
    """
    if len(sols) < 3:
        raise ValueError("condition diagnostics need at least 3 solutions")
    dims = {s.params.dim for s in sols}
    ks = {s.params.k for s in sols}
    if len(dims) != 1 or len(ks) != 1:
        raise ValueError("all solutions must share n and k")
    n, k = dims.pop(), ks.pop()
    if n <= 2:
        raise ValueError("condition diagnostics are defined for n > 2")
    return trend_report(n, k, [trend_row(s) for s in sols], tail)


def trend_row(sol: StationarySolution) -> TrendRow:
    level = sobolev_level(sol.params.dim)
    e = energy_report(sol)
    return TrendRow(
        p=sol.params.p,
        energy_ratio=e.grad_sq_total / (2 * level),
        plus_ratio=e.grad_sq_plus / level,
        minus_ratio=e.grad_sq_minus / level,
        sup_ratio=sol.m_p_plus / sol.m_p_minus,
        m_p_plus=sol.m_p_plus,
        inner_energy_ratio=e.inner_grad_sq / level,
        inner_sup_ratio=e.inner_sup_ratio,
        grad_sq_total=e.grad_sq_total,
    )


def trend_report(n: int, k: int, rows: Sequence[TrendRow], tail: int = 3) -> TrendReport:
    """Flags over the last ``tail`` rows (see :func:`condition_diagnostics`)."""
    rows = list(rows)
    if len(rows) < 3:
        raise ValueError("condition diagnostics need at least 3 solutions")
    if not _strictly_increasing([r.p for r in rows]):
        raise ValueError("solutions must be ordered by strictly increasing p")
    t = rows[-tail:]
    col = lambda name: [getattr(r, name) for r in t]
    if k == 2:
        flags = {
            "energy_to_2S": _approaching(col("energy_ratio"), 1.0),
            "plus_energy_to_S": _approaching(col("plus_ratio"), 1.0),
            "minus_energy_to_S": _approaching(col("minus_ratio"), 1.0),
            "m_plus_increasing": _strictly_increasing(col("m_p_plus")),
            "sup_ratio_increasing": _strictly_increasing(col("sup_ratio")),
        }
    else:
        flags = {
            "inner_energy_to_S": _approaching(col("inner_energy_ratio"), 1.0),
            "inner_sup_ratio_increasing": _strictly_increasing(col("inner_sup_ratio")),
            "energy_bounded": bool(np.isfinite(max(r.grad_sq_total for r in rows))),
        }
    return TrendReport(n=n, k=k, rows=rows, tail=tail, flags=flags)
