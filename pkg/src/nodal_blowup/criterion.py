"""The criterion integral i_p = int u_p phi_1p and its limit behaviour."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grid import integrate_radial
from .limit import limit_target as _limit_target
from .spectrum import EigenPair, RescaledFrame, first_eigenpair
from .stationary import ProblemParams, StationarySolution, knodal_solution, nonlinearity

log = logging.getLogger(__name__)

POSITIVE = "positive"
NEGATIVE = "negative"
INDETERMINATE = "indeterminate"
NOISE_FACTOR = 10.0


@dataclass(frozen=True)
class CriterionReport:
    n: int
    p: float
    k: int
    lam: float
    i_p: float
    j_p: float
    identity_residual: float
    rescaled_j: float
    limit_target: float | None
    noise_floor: float
    sign: str
    i_p_coarse: float | None = None

    @property
    def limit_gap(self) -> float | None:
        if self.limit_target is None:
            return None
        return abs(self.rescaled_j - self.limit_target) / self.limit_target


def _integrals(sol: StationarySolution, eig: EigenPair):
    u, phi = sol.profile, eig.phi
    p = sol.params.p
    i_p = integrate_radial(phi.map(lambda v: v * u.values))
    j_p = integrate_radial(phi.map(lambda v: v * nonlinearity(u.values, p)))
    return i_p, j_p


def classify_sign(value: float, noise_floor: float) -> str:
    if not np.isfinite(noise_floor) or abs(value) <= noise_floor:
        return INDETERMINATE
    return POSITIVE if value > 0 else NEGATIVE


def quadrature_error(sol: StationarySolution, i_p: float):
    """Richardson error estimate for i_p from a re-solve on the half mesh.

    Returns ``(error, i_p_coarse)``.  The coarse mesh keeps the grading and
    halves the node count, so the scheme's second order gives
    ``|i_fine - i_coarse| / 3``.
    """
    grid = sol.grid
    coarse_nodes = (grid.size - 1) // 2 + 1
    coarse = knodal_solution(sol.params, n_nodes=coarse_nodes, cluster_strength=grid.grading,
                             trajectory=sol.trajectory)
    i_c, _ = _integrals(coarse, first_eigenpair(coarse))
    return abs(i_p - i_c) / 3.0, i_c


def criterion_integral(
    sol: StationarySolution,
    eig: EigenPair,
    target: float | None = None,
    estimate_noise: bool = True,
) -> CriterionReport:
    """i_p, j_p and the identity tying them to lambda_1p.

    Testing the stationary equation against phi and the eigen-equation
    against u_p gives ``lam i_p = (1 - p) j_p``; on the shared discretization
    this holds to round-off, so its residual certifies all three solvers at
    once.  ``target`` defaults to the cached limit integral for n > 2.
    The sign is declared only when |i_p| exceeds ten times the Richardson
    error estimate; ``estimate_noise=False`` skips the re-solve and leaves
    the sign indeterminate.
    """
    if eig.phi.grid is not sol.grid:
        raise ValueError("eigenpair and solution must share the same grid")
    if not eig.lam < 0:
        raise ValueError(f"criterion needs a negative first eigenvalue, got {eig.lam}")
    n, p, k = sol.params.dim, sol.params.p, sol.params.k
    i_p, j_p = _integrals(sol, eig)
    lam = eig.lam
    residual = abs(lam * i_p - (1 - p) * j_p) / abs(lam * i_p)
    scale_exp = ((p - 1) / 2.0) * (n / 2.0) - p
    rescaled = sol.m_p**scale_exp * j_p
    if target is None and n > 2:
        target = _limit_target(n)
    if estimate_noise:
        err, i_c = quadrature_error(sol, i_p)
        floor = NOISE_FACTOR * err
    else:
        floor, i_c = np.inf, None
    return CriterionReport(
        n=n, p=p, k=k, lam=lam, i_p=i_p, j_p=j_p,
        identity_residual=residual,
        rescaled_j=rescaled,
        limit_target=target,
        noise_floor=floor,
        sign=classify_sign(i_p, floor),
        i_p_coarse=i_c,
    )


def rescaled_j_direct(frame: RescaledFrame) -> float:
    """``int |u_tilde|^(p-1) u_tilde phi_tilde`` over the rescaled ball."""
    return integrate_radial(
        frame.phi_tilde.map(lambda v: v * nonlinearity(frame.u_tilde.values, frame.p))
    )


@dataclass(frozen=True)
class Prediction:
    outcome: str
    epsilon: str = "unknown"


BOTH_SIDED = "both-sided blow-up near theta=1"
INCONCLUSIVE = "inconclusive"


def blowup_prediction(report: CriterionReport) -> Prediction:
    """Any determined nonzero sign predicts blow-up on both sides of theta = 1."""
    if report.sign == INDETERMINATE:
        return Prediction(INCONCLUSIVE)
    return Prediction(BOTH_SIDED)


@dataclass(frozen=True)
class SweepRow:
    p: float
    report: CriterionReport | None = None
    error: str | None = None


@dataclass(frozen=True)
class CriterionSweep:
    n: int
    k: int
    rows: list[SweepRow]
    p_hat: float | None


def criterion_row(params: ProblemParams, n_nodes: int = 4097) -> SweepRow:
    try:
        sol = knodal_solution(params, n_nodes=n_nodes)
        report = criterion_integral(sol, first_eigenpair(sol))
        return SweepRow(params.p, report)
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        log.warning("criterion row p=%g failed: %s", params.p, exc)
        return SweepRow(params.p, error=f"{type(exc).__name__}: {exc}")


def positivity_onset(rows: Sequence[SweepRow]) -> float | None:
    """Smallest p from which every later row has a strictly positive sign."""
    p_hat = None
    for row in reversed(rows):
        if row.report is None or row.report.sign != POSITIVE:
            break
        p_hat = row.p
    return p_hat


def criterion_sweep(n: int, k: int, p_list: Sequence[float], n_nodes: int = 4097,
                    mapper=map) -> CriterionSweep:
    ps = sorted(float(p) for p in p_list)
    if not ps:
        raise ValueError("p_list must not be empty")
    params = [ProblemParams(n, p, k) for p in ps]
    if n > 2:
        _limit_target(n)  # warm the cache before any fan-out
    rows = list(mapper(criterion_row, params, [n_nodes] * len(ps)))
    return CriterionSweep(n, k, rows, positivity_onset(rows))
