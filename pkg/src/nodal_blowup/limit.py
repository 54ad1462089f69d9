"""The critical problem on R^n: the bubble U, the Sobolev level, and L*."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from .eigen import ConvergenceError, is_positive_definite, lowest_eigenpair, rayleigh_iteration
from .grid import (
    RadialGrid,
    RadialProfile,
    build_graded_mesh,
    dirichlet_energy,
    integrate_radial,
    sphere_area,
    stiffness,
)


def critical_exponent(n: int) -> float:
    if n <= 2:
        raise ValueError(f"critical exponent needs n > 2, got n={n}")
    return (n + 2) / (n - 2)


def bubble_value(n: int, r):
    """``U(r) = (n(n-2) / (n(n-2) + r^2))^((n-2)/2)``, so U(0) = 1."""
    if n <= 2:
        raise ValueError(f"the bubble needs n > 2, got n={n}")
    a = n * (n - 2.0)
    r = np.asarray(r, dtype=float)
    out = (a / (a + r * r)) ** ((n - 2) / 2.0)
    return float(out) if out.ndim == 0 else out


def bubble_derivative(n: int, r):
    a = n * (n - 2.0)
    r = np.asarray(r, dtype=float)
    return -(n - 2.0) * r / (a + r * r) * bubble_value(n, r)


def sobolev_constant(n: int) -> float:
    """Closed form ``S = pi n (n-2) (Gamma(n/2)/Gamma(n))^(2/n)``."""
    if n <= 2:
        raise ValueError(f"Sobolev constant needs n > 2, got n={n}")
    return np.pi * n * (n - 2) * np.exp((2.0 / n) * (gammaln(n / 2) - gammaln(n)))


def sobolev_level_exact(n: int) -> float:
    """``S^(n/2)`` from the closed form, the energy of one bubble."""
    return sobolev_constant(n) ** (n / 2.0)


def _tail_amplitude(n: int) -> float:
    # U ~ A r^(2-n) for large r
    return (n * (n - 2.0)) ** ((n - 2) / 2.0)


def _whole_space_grid(n: int, radius: float, n_nodes: int) -> RadialGrid:
    return build_graded_mesh(n_nodes, radius, n, cluster_strength=np.log10(radius))


def _richardson(coarse: float, fine: float) -> float:
    return (4.0 * fine - coarse) / 3.0


def bubble_integrals(n: int, trunc_radius: float = 1e4, n_nodes: int = 8193) -> tuple[float, float]:
    """``(int |grad U|^2, int U^(2n/(n-2)))`` over R^n.

    Both come from the shared quadrature on nested meshes with Richardson
    extrapolation, plus the closed-form integral of the leading asymptotic
    term beyond ``trunc_radius``.
    """
    crit = 2.0 * n / (n - 2)
    amp = _tail_amplitude(n)
    omega = sphere_area(n)
    tail_grad = omega * ((n - 2) * amp) ** 2 * trunc_radius ** (2 - n) / (n - 2)
    tail_crit = omega * amp**crit * trunc_radius ** (-n) / n
    out = []
    for nodes in (n_nodes, 2 * n_nodes - 1):
        grid = _whole_space_grid(n, trunc_radius, nodes)
        u = RadialProfile(grid, bubble_value(n, grid.nodes))
        out.append((dirichlet_energy(u), integrate_radial(u.map(lambda v: v**crit))))
    grad = _richardson(out[0][0], out[1][0]) + tail_grad
    crit_int = _richardson(out[0][1], out[1][1]) + tail_crit
    return grad, crit_int


@lru_cache(maxsize=None)
def sobolev_level(n: int, trunc_radius: float = 1e4, n_nodes: int = 8193) -> float:
    """``S^(n/2)`` from quadrature of ``U^(2n/(n-2))`` with tail correction."""
    if n <= 2:
        raise ValueError(f"Sobolev level needs n > 2, got n={n}")
    return bubble_integrals(n, trunc_radius, n_nodes)[1]


def derrick_residual(n: int, trunc_radius: float = 1e4, n_nodes: int = 8193) -> float:
    grad, crit = bubble_integrals(n, trunc_radius, n_nodes)
    return abs(grad - crit) / crit


def bubble_potential(n: int, r) -> np.ndarray:
    """``p_S U^(p_S - 1)``, the potential of the linearized limit operator."""
    ps = critical_exponent(n)
    return ps * bubble_value(n, r) ** (ps - 1)


def rayleigh(v: RadialProfile, n: int | None = None, potential: bool = True) -> float:
    """``int |grad v|^2 - p_S U^(p_S-1) v^2`` on the truncated ball (no normalization).

    ``potential=False`` drops the bubble term (diagnostic mode).
    """
    n = v.grid.dim if n is None else n
    if n != v.grid.dim:
        raise ValueError("profile grid dimension does not match n")
    energy = dirichlet_energy(v)
    if not potential:
        return energy
    return energy - integrate_radial(
        RadialProfile(v.grid, bubble_potential(n, v.r) * v.values**2)
    )


@dataclass(frozen=True)
class LimitEigenpair:
    n: int
    lambda_star: float
    phi_star: RadialProfile
    trunc_radius: float
    extrapolated: bool
    lambda_extrapolated: float
    iterations: int

    @property
    def best_lambda(self) -> float:
        return self.lambda_extrapolated if self.extrapolated else self.lambda_star


def _limit_solve(grid: RadialGrid, n: int, potential: bool, shift: float, max_iter: int):
    diag, off = stiffness(grid)
    w = grid.weights[:-1]
    pot = bubble_potential(n, grid.nodes[:-1]) if potential else np.zeros(w.size)
    a = diag - pot * w
    lam, x, its = rayleigh_iteration(a, off, w, shift, tol=1e-10, max_iter=max_iter)
    # confirm it is the lowest eigenvalue: no Sturm count below lam - margin
    margin = 1e-8 * max(abs(lam), 1.0)
    if not is_positive_definite(a - (lam - margin) * w, off):
        lam, x, more = lowest_eigenpair(a, off, w, lower=-float(pot.max()) - 1.0)
        its += more
    return lam, np.append(x, 0.0), its


def limit_eigenpair(
    n: int,
    trunc_radius: float = 50.0,
    n_nodes: int = 2049,
    potential: bool = True,
    extrapolate: bool = True,
    shift: float = -10.0,
    max_iter: int = 200,
    cluster_strength: float = 1.0,
) -> LimitEigenpair:
    """First eigenpair of ``-Delta - p_S U^(p_S-1)`` on the ball of radius R.

    Dirichlet truncation gives an upper bound for lambda_1^* that decreases
    with R.  With ``extrapolate`` the eigenvalue is also computed on the
    2x nested mesh and Richardson-extrapolated in the mesh spacing.
    """
    if n <= 2:
        raise ValueError(f"limit problem needs n > 2, got n={n}")
    if potential and trunc_radius < 20:
        raise ValueError("trunc_radius must be >= 20 for the whole-space problem")
    grid = build_graded_mesh(n_nodes, trunc_radius, n, cluster_strength)
    try:
        lam, phi, its = _limit_solve(grid, n, potential, shift, max_iter)
        lam_ext = lam
        if extrapolate:
            fine = build_graded_mesh(2 * n_nodes - 1, trunc_radius, n, cluster_strength)
            lam_fine, _, more = _limit_solve(fine, n, potential, shift, max_iter)
            lam_ext = _richardson(lam, lam_fine)
            its += more
    except ConvergenceError as exc:
        raise ConvergenceError(f"limit eigenpair n={n}, R={trunc_radius}: {exc}") from exc
    return LimitEigenpair(
        n=n,
        lambda_star=lam,
        phi_star=RadialProfile(grid, phi),
        trunc_radius=trunc_radius,
        extrapolated=extrapolate,
        lambda_extrapolated=lam_ext,
        iterations=its,
    )


@lru_cache(maxsize=None)
def reference_limit(n: int, trunc_radius: float = 50.0, n_nodes: int = 8193) -> LimitEigenpair:
    """Cached, extrapolated lambda_1^* and phi_1^* shared by studies and sweeps."""
    cluster = max(1.0, np.log10(trunc_radius))
    return limit_eigenpair(n, trunc_radius, n_nodes, cluster_strength=cluster)


@lru_cache(maxsize=None)
def limit_target(n: int, trunc_radius: float = 50.0, n_nodes: int = 8193) -> float:
    """``int_{R^n} U^(p_S) phi_1^*`` with the reference eigenfunction."""
    ref = reference_limit(n, trunc_radius, n_nodes)
    ps = critical_exponent(n)
    u = bubble_value(n, ref.phi_star.r)
    return integrate_radial(RadialProfile(ref.phi_star.grid, u**ps * ref.phi_star.values))
