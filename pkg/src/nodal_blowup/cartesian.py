"""Exploratory stationary solutions on masked 3-D grids.

Cells are the unknowns of a 7-point finite-difference Laplacian; cells outside
the mask carry the Dirichlet value 0.  Nothing here is an acceptance gate for
the concentration conditions: grids this coarse cannot follow p -> p_S.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy import ndimage
from scipy.sparse.linalg import LinearOperator, cg, eigsh, minres

from .criterion import NOISE_FACTOR, CriterionReport, classify_sign
from .eigen import ConvergenceError
from .limit import bubble_value, limit_target

log = logging.getLogger(__name__)

MAX_CELLS_PER_AXIS = 64
EXPLORATORY = "exploratory"
ROUNDOFF_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class MaskedGrid:
    """Box of cells with spacing h; ``mask`` marks the cells inside Omega.

    Cell (i, j, k) sits at ``origin + h (i, j, k)``.
    """

    mask: np.ndarray
    spacing: float
    origin: tuple = (0.0, 0.0, 0.0)
    allow_large: bool = False

    def __post_init__(self):
        mask = np.array(self.mask, dtype=bool)
        if mask.ndim != 3:
            raise ValueError("mask must be a 3-D array")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        if not self.allow_large and max(mask.shape) > MAX_CELLS_PER_AXIS + 2:
            raise ValueError(
                f"grid exceeds {MAX_CELLS_PER_AXIS} cells per axis; pass allow_large=True"
            )
        if not mask.any():
            raise ValueError("mask selects no cells")
        edge = np.zeros_like(mask)
        edge[[0, -1], :, :] = edge[:, [0, -1], :] = edge[:, :, [0, -1]] = True
        if np.any(mask & edge):
            raise ValueError("mask touches the box edge; a Dirichlet ring of outside cells is required")
        _, count = ndimage.label(mask)
        if count != 1:
            raise ValueError(f"mask must be connected, found {count} components")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @property
    def shape(self):
        return self.mask.shape

    @property
    def cell_volume(self) -> float:
        return self.spacing**3

    @cached_property
    def index(self) -> np.ndarray:
        idx = -np.ones(self.shape, dtype=np.int64)
        idx[self.mask] = np.arange(int(self.mask.sum()))
        return idx

    @property
    def size(self) -> int:
        return int(self.mask.sum())

    @cached_property
    def coords(self) -> np.ndarray:
        """Positions of the inside cells, shape (size, 3)."""
        pos = np.argwhere(self.mask).astype(float)
        return np.asarray(self.origin) + self.spacing * pos

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        """``-Delta_h`` on inside cells with zero values outside (SPD)."""
        idx = self.index
        rows, cols = [], []
        inside = np.argwhere(self.mask)
        me = idx[self.mask]
        for axis in range(3):
            for step in (-1, 1):
                nb = inside.copy()
                nb[:, axis] += step
                other = idx[nb[:, 0], nb[:, 1], nb[:, 2]]
                ok = other >= 0
                rows.append(me[ok])
                cols.append(other[ok])
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        n = self.size
        h2 = self.spacing**2
        off = sp.csr_matrix((-np.ones(r.size) / h2, (r, c)), shape=(n, n))
        return (off + sp.identity(n, format="csr") * (6.0 / h2)).tocsr()

    @property
    def center(self) -> tuple:
        """Centre of the bounding box, ring included."""
        mid = np.asarray(self.origin) + self.spacing * (np.asarray(self.mask.shape) - 1) / 2.0
        return tuple(float(c) for c in mid)

    def integrate(self, values) -> float:
        return float(self.cell_volume * np.sum(values))

    def reflected(self, axis: int) -> "MaskedGrid":
        return MaskedGrid(np.flip(self.mask, axis), self.spacing, self.origin, self.allow_large)

    def to_field(self, values) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.mask] = values
        return out


def cube_grid(cells: int, side: float = 1.0) -> MaskedGrid:
    """The cube ``[0, side]^3`` with ``cells`` unknowns per axis."""
    h = side / (cells + 1)
    mask = np.zeros((cells + 2,) * 3, dtype=bool)
    mask[1:-1, 1:-1, 1:-1] = True
    return MaskedGrid(mask, h, (0.0, 0.0, 0.0))


def ball_grid(cells: int, radius: float = 1.0) -> MaskedGrid:
    """Cells of a ``(cells+2)^3`` box whose centres lie inside the ball."""
    h = 2.0 * radius / (cells + 1)
    ax = -radius + h * np.arange(cells + 2)
    x, y, z = np.meshgrid(ax, ax, ax, indexing="ij")
    mask = x**2 + y**2 + z**2 < radius**2
    return MaskedGrid(mask, h, (-radius,) * 3)


def load_voxels(path) -> MaskedGrid:
    """Plain-text voxel file.

    First non-comment line: ``nx ny nz spacing``; then nx*ny*nz tokens 0/1 in
    C order (last index fastest).  ``#`` starts a comment.
    """
    tokens = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            tokens.extend(line.split())
    if len(tokens) < 4:
        raise ValueError("voxel file needs a header 'nx ny nz spacing'")
    try:
        nx, ny, nz = (int(t) for t in tokens[:3])
        h = float(tokens[3])
    except ValueError as exc:
        raise ValueError(f"bad voxel header: {tokens[:4]}") from exc
    body = tokens[4:]
    if len(body) != nx * ny * nz:
        raise ValueError(f"voxel body has {len(body)} cells, header says {nx * ny * nz}")
    if any(t not in ("0", "1") for t in body):
        raise ValueError("voxel body must contain only 0 and 1")
    mask = np.array([t == "1" for t in body]).reshape(nx, ny, nz)
    return MaskedGrid(mask, h)


def save_voxels(grid: MaskedGrid, path) -> None:
    nx, ny, nz = grid.shape
    lines = [f"{nx} {ny} {nz} {grid.spacing!r}"]
    flat = grid.mask.astype(int).reshape(nx * ny, nz)
    lines += [" ".join(map(str, row)) for row in flat]
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class TwoBubbleSeed:
    """Positive bubble of width mu_plus minus a negative one of width mu_minus.

    Both sit at ``center`` by default.  A nonzero ``offset`` moves the
    positive bubble to ``center + offset e_x`` and the negative one to
    ``center - offset e_x``; with equal widths in a box symmetric about
    ``center`` this gives an odd seed.
    """

    center: tuple
    mu_plus: float
    mu_minus: float
    amplitude: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        if not (self.mu_plus > 0 and self.mu_minus > 0):
            raise ValueError("bubble widths must be positive")
        if self.amplitude == 0 or (self.offset == 0 and self.mu_plus == self.mu_minus):
            raise ValueError("a zero seed is a fixed point; the seed must be nontrivial")

    def evaluate(self, grid: MaskedGrid, p: float) -> np.ndarray:
        c = np.asarray(self.center, dtype=float)
        shift = np.array([self.offset, 0.0, 0.0])
        e = 2.0 / (p - 1)
        r_pos = np.linalg.norm(grid.coords - (c + shift), axis=1)
        r_neg = np.linalg.norm(grid.coords - (c - shift), axis=1)
        pos = self.mu_plus ** (-e) * bubble_value(3, r_pos / self.mu_plus)
        neg = self.mu_minus ** (-e) * bubble_value(3, r_neg / self.mu_minus)
        return self.amplitude * (pos - neg)


SIGN_CHANGING = "sign-changing"
POSITIVE_ONLY = "positive"
NEGATIVE_ONLY = "negative"
ZERO = "zero"


@dataclass(frozen=True, eq=False)
class FieldSolution:
    grid: MaskedGrid
    values: np.ndarray
    p: float
    residual: float
    m_p: float
    a_p: np.ndarray
    positive_at_max: bool
    outcome: str
    iterations: int
    residual_history: list = field(default_factory=list)
    label: str = EXPLORATORY

    @property
    def converged(self) -> bool:
        return self.residual < 1e-6

    @property
    def nodal_regions(self) -> int:
        full = self.grid.to_field(self.values)
        return int(ndimage.label(full > 0)[1] + ndimage.label(full < 0)[1])

    def reflected(self, axis: int) -> "FieldSolution":
        g = self.grid.reflected(axis)
        vals = np.flip(self.grid.to_field(self.values), axis)[g.mask]
        return FieldSolution(g, vals, self.p, self.residual, self.m_p, self.a_p,
                             self.positive_at_max, self.outcome, self.iterations,
                             list(self.residual_history))


def _relative_residual(grid, u, p):
    f = grid.laplacian @ u - np.abs(u) ** (p - 1) * u
    scale = np.linalg.norm(np.abs(u) ** p) + np.linalg.norm(grid.laplacian @ u)
    return float(np.linalg.norm(f) / max(scale, 1e-300)), f


def _classify(u, tol=1e-8):
    m = np.max(np.abs(u))
    if m == 0:
        return ZERO
    pos = np.any(u > tol * m)
    neg = np.any(u < -tol * m)
    if pos and neg:
        return SIGN_CHANGING
    return POSITIVE_ONLY if pos else NEGATIVE_ONLY


def newton_stationary(
    grid: MaskedGrid,
    p: float,
    seed: TwoBubbleSeed | np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 60,
    linear_tol: float = 1e-10,
) -> FieldSolution:
    """Damped Newton for ``-Delta u = |u|^(p-1) u`` from a two-bubble seed.

    The Jacobian ``-Delta - p|u|^(p-1)`` is symmetric indefinite at a
    sign-changing solution, so the inner solves use MINRES preconditioned by
    the (positive) Laplacian diagonal.  Backtracking halves the step until
    the residual norm decreases.
    """
    if not p > 1:
        raise ValueError("p must exceed 1")
    u = seed.evaluate(grid, p) if isinstance(seed, TwoBubbleSeed) else np.asarray(seed, float)
    if u.shape != (grid.size,):
        raise ValueError("seed does not match the grid")
    if not np.any(u):
        raise ValueError("zero seed: the zero solution is a fixed point")
    lap = grid.laplacian
    diag_inv = 1.0 / lap.diagonal()
    prec = LinearOperator(lap.shape, matvec=lambda x: diag_inv * x, dtype=float)
    res, f = _relative_residual(grid, u, p)
    history = [res]
    it = 0
    for it in range(1, max_iter + 1):
        if res < tol:
            it -= 1
            break
        jac = lap - sp.diags(p * np.abs(u) ** (p - 1))
        du, info = minres(jac, -f, M=prec, rtol=linear_tol, maxiter=20 * grid.size)
        if info < 0:
            raise ConvergenceError(f"MINRES breakdown (info={info}) at Newton step {it}")
        step = 1.0
        while step > 1e-6:
            trial = u + step * du
            new_res, new_f = _relative_residual(grid, trial, p)
            if new_res < res * (1 - 1e-4 * step) or new_res < tol:
                break
            step *= 0.5
        else:
            raise ConvergenceError(f"line search failed at Newton step {it}; residual {res:.3e}")
        u, res, f = trial, new_res, new_f
        history.append(res)
        if np.max(np.abs(u)) < 1e-12:
            break
    else:
        raise ConvergenceError(f"Newton did not converge in {max_iter} steps; residual {res:.3e}")
    i_max = int(np.argmax(np.abs(u)))
    outcome = _classify(u)
    if outcome != SIGN_CHANGING:
        log.warning("Newton converged to a %s solution, not a sign-changing one", outcome)
    return FieldSolution(
        grid=grid, values=u, p=p, residual=res, m_p=float(np.abs(u[i_max])),
        a_p=grid.coords[i_max], positive_at_max=bool(u[i_max] > 0), outcome=outcome,
        iterations=it, residual_history=history,
    )


@dataclass(frozen=True, eq=False)
class FieldEigenPair:
    lam: float
    phi: np.ndarray
    iterations: int
    residual: float
    label: str = EXPLORATORY


def field_eigenpair(grid: MaskedGrid, potential: np.ndarray | None = None,
                    tol: float = 1e-10) -> FieldEigenPair:
    """Lowest eigenpair of ``-Delta_h - diag(potential)``.

    Shift-and-invert Lanczos below the spectrum: the shift ``-max V - 1``
    keeps the shifted operator SPD, so each inverse application is a CG
    solve with Jacobi preconditioning.
    """
    lap = grid.laplacian
    pot = np.zeros(grid.size) if potential is None else np.asarray(potential, float)
    op = lap - sp.diags(pot)
    sigma = -float(pot.max()) - 1.0
    shifted = (op - sigma * sp.identity(grid.size)).tocsr()
    dinv = 1.0 / shifted.diagonal()
    prec = LinearOperator(shifted.shape, matvec=lambda x: dinv * x, dtype=float)
    count = [0]

    def solve(b):
        count[0] += 1
        x, info = cg(shifted, b, M=prec, rtol=tol, maxiter=10 * grid.size)
        if info != 0:
            raise ConvergenceError(f"CG did not converge in inverse iteration (info={info})")
        return x

    opinv = LinearOperator(shifted.shape, matvec=solve, dtype=float)
    v0 = np.ones(grid.size)
    vals, vecs = eigsh(op, k=1, sigma=sigma, which="LM", OPinv=opinv, v0=v0, tol=tol)
    lam = float(vals[0])
    phi = vecs[:, 0]
    if phi[np.argmax(np.abs(phi))] < 0:
        phi = -phi
    phi = phi / np.sqrt(grid.integrate(phi**2))
    res = float(np.linalg.norm(op @ phi - lam * phi) / (abs(lam) * np.linalg.norm(phi)))
    return FieldEigenPair(lam, phi, count[0], res)


def first_eigenpair_3d(sol: FieldSolution, potential: bool = True) -> FieldEigenPair:
    pot = sol.p * np.abs(sol.values) ** (sol.p - 1) if potential else None
    return field_eigenpair(sol.grid, pot)


def field_rayleigh(sol: FieldSolution) -> float:
    """Rayleigh quotient of the linearized operator at ``u_p / ||u_p||``."""
    u = sol.values
    lin = sol.grid.laplacian @ u - sol.p * np.abs(u) ** (sol.p - 1) * u
    return float(u @ lin / (u @ u))


def criterion_integral_3d(sol: FieldSolution, eig: FieldEigenPair,
                          coarse: tuple | None = None,
                          target: float | None = None) -> CriterionReport:
    """i_p, j_p and the identity residual on the grid.

    ``coarse`` optionally holds a ``(FieldSolution, FieldEigenPair)`` pair on a
    2x coarser grid; the Richardson difference then sets the noise floor.
    Without it the floor comes from the identity defect, never below a
    round-off level of ``1e-12 int |u phi|``.
    """
    if not eig.lam < 0:
        raise ValueError(f"criterion needs a negative first eigenvalue, got {eig.lam}")
    g, p, u = sol.grid, sol.p, sol.values
    i_p = g.integrate(u * eig.phi)
    j_p = g.integrate(np.abs(u) ** (p - 1) * u * eig.phi)
    # normalized by int |u phi| so odd solutions (i_p = 0 by symmetry) stay well posed
    mass = g.integrate(np.abs(u * eig.phi))
    defect = abs(eig.lam * i_p - (1 - p) * j_p) / abs(eig.lam)
    resid = defect / mass
    err = max(defect, ROUNDOFF_FLOOR * mass)
    if coarse is not None:
        cs, ce = coarse
        i_c = cs.grid.integrate(cs.values * ce.phi)
        err = max(err, abs(i_p - i_c) / 3.0)
    else:
        i_c = None
    floor = NOISE_FACTOR * err
    m = sol.m_p
    rescaled = m ** (((p - 1) / 2.0) * 1.5 - p) * j_p
    if target is None:
        target = limit_target(3)
    return CriterionReport(
        n=3, p=p, k=sol.nodal_regions, lam=eig.lam, i_p=i_p, j_p=j_p,
        identity_residual=resid, rescaled_j=rescaled, limit_target=target,
        noise_floor=floor, sign=classify_sign(i_p, floor), i_p_coarse=i_c,
    )
