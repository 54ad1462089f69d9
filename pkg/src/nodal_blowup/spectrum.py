"""First eigenpair of L_p = -Delta - p|u_p|^(p-1) and its blow-up rescaling."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .eigen import backward_residual, lowest_eigenpair, rayleigh_quotient
from .grid import (
    RadialGrid,
    RadialProfile,
    dirichlet_energy,
    integrate_radial,
    interpolate,
    stiffness,
)
from .limit import LimitEigenpair, bubble_value, critical_exponent, limit_eigenpair
from .stationary import ProblemParams, StationarySolution, knodal_solution, shoot_unit

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class LinearizedOperator:
    """``A = K - diag(P W)`` on the interior nodes, paired with the weights ``W``.

    ``A x = lam W x`` is the discrete form of ``-Delta phi - P phi = lam phi``
    with phi(r_max) = 0; regularity at the origin comes from the control
    volume around r = 0.
    """

    grid: RadialGrid
    diag: np.ndarray
    off: np.ndarray
    weights: np.ndarray
    potential: np.ndarray

    def apply(self, x):
        y = self.diag * x
        y[:-1] += self.off * x[1:]
        y[1:] += self.off * x[:-1]
        return y

    def symmetry_defect(self, trials: int = 4, seed: int = 0) -> float:
        """Relative ``|<A x, y> - <x, A y>|`` over random probes."""
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(trials):
            x, y = rng.standard_normal((2, self.diag.size))
            ax, ay = self.apply(x), self.apply(y)
            scale = np.abs(ax) @ np.abs(y) + np.abs(x) @ np.abs(ay)
            worst = max(worst, abs(ax @ y - x @ ay) / scale)
        return worst


def linearized_from_values(grid: RadialGrid, u: np.ndarray, p: float, potential: bool = True):
    diag, off = stiffness(grid)
    w = grid.weights[:-1]
    pot = p * np.abs(u[:-1]) ** (p - 1) if potential else np.zeros(w.size)
    return LinearizedOperator(grid, diag - pot * w, off, w, pot)


def assemble_linearized(sol: StationarySolution, potential: bool = True) -> LinearizedOperator:
    """``potential=False`` gives the plain Dirichlet Laplacian (calibration mode)."""
    return linearized_from_values(sol.grid, sol.profile.values, sol.params.p, potential)


@dataclass(frozen=True, eq=False)
class EigenPair:
    lam: float
    phi: RadialProfile
    iterations: int
    residual: float


def operator_eigenpair(op: LinearizedOperator, upper: float | None = None) -> EigenPair:
    """Lowest eigenpair; phi is L2-normalized with the shared quadrature and positive."""
    lower = -float(op.potential.max()) - 1.0
    lam, x, its = lowest_eigenpair(op.diag, op.off, op.weights, lower, upper)
    res = backward_residual(op.diag, op.off, op.weights, lam, x)
    return EigenPair(lam, RadialProfile(op.grid, np.append(x, 0.0)), its, res)


def first_eigenpair(sol: StationarySolution, potential: bool = True) -> EigenPair:
    """First eigenpair of L_p on the solution's own mesh.

    The Rayleigh quotient of ``u_p`` itself is an upper bound (it is
    negative by the stationary identity) and caps the bisection bracket.
    """
    op = assemble_linearized(sol, potential)
    upper = None
    if potential:
        upper = rayleigh_quotient(op.diag, op.off, op.weights, sol.profile.values[:-1])
    return operator_eigenpair(op, upper)


def trial_rayleigh(sol: StationarySolution) -> float:
    """Rayleigh quotient of L_p at ``u_p / ||u_p||``."""
    op = assemble_linearized(sol)
    return rayleigh_quotient(op.diag, op.off, op.weights, sol.profile.values[:-1])


@dataclass(frozen=True, eq=False)
class RescaledFrame:
    scale: float
    m_p: float
    u_tilde: RadialProfile
    phi_tilde: RadialProfile
    lambda_tilde: float
    potential: RadialProfile
    p: float

    @property
    def dirichlet_energy_phi(self) -> float:
        return dirichlet_energy(self.phi_tilde)

    @property
    def grid(self) -> RadialGrid:
        return self.u_tilde.grid

    def operator(self) -> LinearizedOperator:
        return linearized_from_values(self.grid, self.u_tilde.values, self.p)

    def recompute_lambda(self) -> float:
        """First eigenvalue of ``-Delta - V_p`` solved directly on the rescaled grid."""
        return operator_eigenpair(self.operator()).lam


def rescale_frame(sol: StationarySolution, eig: EigenPair) -> RescaledFrame:
    """Zoom by ``M_p^((p-1)/2)`` around the origin.

    The mesh is stretched with the solution, so the change of variables maps
    nodes onto nodes and the L2 isometry holds to round-off.
    """
    u = sol.profile.values
    if eig.phi.grid is not sol.grid:
        raise ValueError("eigenpair and solution must share the same grid")
    # flat top: nodes within round-off of the origin may tie with u(0)
    if np.max(np.abs(u)) > abs(u[0]) * (1 + 1e-10):
        raise ValueError(
            "max |u_p| is not at the origin; off-center concentration is not supported radially"
        )
    p, n = sol.params.p, sol.params.dim
    m = sol.m_p
    scale = m ** ((p - 1) / 2.0)
    grid = sol.grid.scaled(scale)
    u_t = u / m
    phi_t = eig.phi.values * scale ** (-n / 2.0)
    return RescaledFrame(
        scale=scale,
        m_p=m,
        u_tilde=RadialProfile(grid, u_t),
        phi_tilde=RadialProfile(grid, phi_t),
        lambda_tilde=eig.lam / m ** (p - 1),
        potential=RadialProfile(grid, p * np.abs(u_t) ** (p - 1)),
        p=p,
    )


def bubble_distance(frame: RescaledFrame, n: int, radius: float = 5.0) -> float:
    """``max |u_tilde - U|`` over nodes with ``r <= radius``."""
    r = frame.grid.nodes
    inside = r <= radius
    return float(np.max(np.abs(frame.u_tilde.values[inside] - bubble_value(n, r[inside]))))


def comparison_grid(n: int, r_cmp: float = 20.0, n_nodes: int = 4001) -> RadialGrid:
    return RadialGrid(np.linspace(0.0, r_cmp, n_nodes), n)


def profile_gap(a: RadialProfile, b: RadialProfile, grid: RadialGrid):
    """L2 distance of two radial profiles on ``grid``, plus each one's mass beyond it."""
    r = grid.nodes
    va = _sample(a, r)
    vb = _sample(b, r)
    gap = np.sqrt(max(integrate_radial(RadialProfile(grid, (va - vb) ** 2)), 0.0))
    return gap, _tail_mass(a, grid.r_max), _tail_mass(b, grid.r_max)


def _sample(f: RadialProfile, r):
    out = np.zeros_like(r)
    inside = r <= f.grid.r_max
    out[inside] = interpolate(f, r[inside])
    return out


def _tail_mass(f: RadialProfile, radius: float) -> float:
    beyond = f.grid.nodes > radius
    return float(np.dot(f.grid.weights[beyond], f.values[beyond] ** 2))


@dataclass(frozen=True)
class StudyRow:
    p: float
    lam: float | None = None
    lambda_tilde: float | None = None
    lambda_gap: float | None = None
    l2_gap_phi: float | None = None
    tail_mass_tilde: float | None = None
    tail_mass_star: float | None = None
    h1_energy: float | None = None
    h1_bound_ok: bool | None = None
    bubble_gap: float | None = None
    error: str | None = None


@dataclass(frozen=True)
class SpectralStudy:
    n: int
    k: int
    lambda_star: float
    lambda_star_radius: float
    rows: list[StudyRow]
    tail: int
    lambda_gap_shrinking: bool
    phi_gap_shrinking: bool


def reference_radius(scale: float) -> float:
    return max(50.0, 2.0 * scale)


def study_row(params: ProblemParams, limit: LimitEigenpair, r_cmp: float = 20.0,
              n_nodes: int = 4097) -> StudyRow:
    try:
        sol = knodal_solution(params, n_nodes=n_nodes)
        return study_row_for(sol, first_eigenpair(sol), limit, r_cmp)
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        log.warning("spectral row p=%g failed: %s", params.p, exc)
        return StudyRow(p=params.p, error=f"{type(exc).__name__}: {exc}")


def study_row_for(sol: StationarySolution, eig: EigenPair, limit: LimitEigenpair,
                  r_cmp: float = 20.0) -> StudyRow:
    """Rescaled eigenpair of one solution compared with the limit pair."""
    frame = rescale_frame(sol, eig)
    n = sol.params.dim
    gap, tail_t, tail_s = profile_gap(frame.phi_tilde, limit.phi_star, comparison_grid(n, r_cmp))
    energy = frame.dirichlet_energy_phi
    return StudyRow(
        p=sol.params.p,
        lam=eig.lam,
        lambda_tilde=frame.lambda_tilde,
        lambda_gap=abs(frame.lambda_tilde - limit.best_lambda),
        l2_gap_phi=gap,
        tail_mass_tilde=tail_t,
        tail_mass_star=tail_s,
        h1_energy=energy,
        h1_bound_ok=bool(energy < critical_exponent(n)),
        bubble_gap=bubble_distance(frame, n),
    )


def _shrinking(values) -> bool:
    v = np.asarray(values, dtype=float)
    return bool(v.size >= 2 and np.all(np.isfinite(v)) and np.all(np.diff(v) < 0))


def spectral_convergence_study(
    n: int,
    k: int,
    p_list: Sequence[float],
    tail: int = 3,
    r_cmp: float = 20.0,
    n_nodes: int = 4097,
    limit: LimitEigenpair | None = None,
    mapper=map,
) -> SpectralStudy:
    """Gaps ``|lambda_tilde - lambda_1^*|`` and ``||phi_tilde - phi_1^*||`` along p.

    The reference pair is solved on a ball of radius ``max(50, 2 scale)``
    for the largest zoom factor in the study, so every rescaled ball fits
    inside it.  ``mapper`` lets callers run the rows on a worker pool.
    """
    ps = [float(p) for p in p_list]
    if len(ps) < 3:
        raise ValueError("a convergence study needs at least 3 exponents")
    if not np.all(np.diff(ps) > 0):
        raise ValueError("p_list must be strictly increasing")
    params = [ProblemParams(n, p, k) for p in ps]
    if limit is None:
        limit = study_reference(n, k, ps[-1])
    rows = list(mapper(study_row, params, [limit] * len(ps), [r_cmp] * len(ps),
                       [n_nodes] * len(ps)))
    return assemble_study(n, k, limit, rows, tail)


def assemble_study(n: int, k: int, limit: LimitEigenpair, rows: Sequence[StudyRow],
                   tail: int = 3) -> SpectralStudy:
    """Trend flags over the last ``tail`` rows; a failed row breaks the trend."""
    rows = list(rows)
    t = rows[-tail:]
    return SpectralStudy(
        n=n,
        k=k,
        lambda_star=limit.best_lambda,
        lambda_star_radius=limit.trunc_radius,
        rows=rows,
        tail=tail,
        lambda_gap_shrinking=_shrinking([r.lambda_gap for r in t]),
        phi_gap_shrinking=_shrinking([r.l2_gap_phi for r in t]),
    )


def study_reference(n: int, k: int, p_max: float) -> LimitEigenpair:
    """Reference limit pair on a ball large enough for the zoom at ``p_max``."""
    z = shoot_unit(ProblemParams(n, p_max, k)).zeros[-1]
    return reference_limit_for(n, reference_radius(z))


_REFERENCE_CACHE: dict = {}


def reference_limit_for(n: int, radius: float, n_nodes: int = 8193) -> LimitEigenpair:
    """Extrapolated limit eigenpair on a ball of the given radius (cached)."""
    key = (n, float(radius), n_nodes)
    if key not in _REFERENCE_CACHE:
        cluster = max(1.0, np.log10(radius))
        _REFERENCE_CACHE[key] = limit_eigenpair(n, radius, n_nodes, cluster_strength=cluster)
    return _REFERENCE_CACHE[key]
