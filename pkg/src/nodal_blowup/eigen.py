"""Lowest eigenpair of a symmetric tridiagonal pencil ``(A, diag(w))``.

The radial operators all have the form ``A = K - diag(P w)`` with ``K`` the
finite-volume stiffness matrix and ``w`` the control volumes.  On strongly
graded meshes ``w`` spans many orders of magnitude, so the pencil is never
symmetrized explicitly: the Sturm count of ``A - x W`` is read off its
``LDL^T`` pivots, and the zero-count test is a banded Cholesky attempt.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded, solve_banded


class ConvergenceError(RuntimeError):
    """An iterative solver ran out of budget."""


def _upper_band(diag, off):
    ab = np.zeros((2, diag.size))
    ab[0, 1:] = off
    ab[1] = diag
    return ab


def is_positive_definite(diag: np.ndarray, off: np.ndarray) -> bool:
    try:
        cholesky_banded(_upper_band(diag, off), lower=False, check_finite=False)
    except LinAlgError:
        return False
    return True


def sturm_count(diag, off, weights, x: float) -> int:
    """Number of eigenvalues of the pencil strictly below ``x``."""
    d = diag - x * weights
    count = 0
    piv = d[0]
    for i in range(d.size):
        if i > 0:
            piv = d[i] - off[i - 1] ** 2 / piv
        if piv == 0.0:
            piv = -1e-300
        if piv < 0:
            count += 1
    return count


def quadratic_form(diag, off, x) -> float:
    return float(np.dot(diag, x * x) + 2.0 * np.dot(off, x[:-1] * x[1:]))


def rayleigh_quotient(diag, off, weights, x) -> float:
    return quadratic_form(diag, off, x) / float(np.dot(weights, x * x))


def rayleigh_noise(diag, off, weights, x) -> float:
    """Rounding level of :func:`rayleigh_quotient` at ``x``."""
    mag = np.dot(np.abs(diag), x * x) + 2.0 * np.dot(np.abs(off), np.abs(x[:-1] * x[1:]))
    return float(np.finfo(float).eps * mag / np.dot(weights, x * x))


def backward_residual(diag, off, weights, lam, x) -> float:
    """``||(A - lam W) x|| / (||A - lam W||_inf ||x||)`` in the W-scaled norm."""
    s = 1.0 / np.sqrt(weights)
    y = x / s
    d = (diag - lam * weights) * s * s
    o = off * s[:-1] * s[1:]
    r = d * y
    r[:-1] += o * y[1:]
    r[1:] += o * y[:-1]
    norm = np.max(np.abs(d) + np.append(np.abs(o), 0) + np.insert(np.abs(o), 0, 0))
    return float(np.linalg.norm(r) / (norm * np.linalg.norm(y)))


def lowest_eigenpair(
    diag: np.ndarray,
    off: np.ndarray,
    weights: np.ndarray,
    lower: float,
    upper: float | None = None,
    rtol: float = 1e-14,
    max_bisect: int = 200,
    max_inverse: int = 20,
):
    """Bisection on the zero Sturm count, then inverse iteration.

    ``lower`` must be a lower bound for the spectrum (``-max P`` for
    ``A = K - P W`` with ``K`` positive semidefinite).  Returns
    ``(lam, x, iterations)`` with ``x`` W-normalized and positive at its
    largest entry.
    """
    if not is_positive_definite(diag - lower * weights, off):
        raise ValueError("lower bound is not below the spectrum")
    if upper is None:
        upper = rayleigh_quotient(diag, off, weights, np.ones(diag.size))
    lo, hi = lower, upper
    it = 0
    while hi - lo > rtol * max(abs(lo), abs(hi), 1e-300):
        if it >= max_bisect:
            raise ConvergenceError(f"bisection stalled at [{lo}, {hi}]")
        mid = 0.5 * (lo + hi)
        if is_positive_definite(diag - mid * weights, off):
            lo = mid
        else:
            hi = mid
        it += 1

    # reuse the exact factorization the bisection accepted
    factor = cholesky_banded(_upper_band(diag - lo * weights, off), lower=False)
    x = np.ones(diag.size)
    lam_prev = np.inf
    for k in range(max_inverse):
        x = cho_solve_banded((factor, False), weights * x, check_finite=False)
        x /= np.sqrt(np.dot(weights, x * x))
        lam = rayleigh_quotient(diag, off, weights, x)
        step = abs(lam - lam_prev)
        if step <= max(4 * rtol * abs(lam), 64 * rayleigh_noise(diag, off, weights, x)):
            break
        lam_prev = lam
    else:
        raise ConvergenceError(f"inverse iteration did not settle; last increment {step:.3e}")
    if not lo <= lam <= hi:
        lam = 0.5 * (lo + hi)
    if x[np.argmax(np.abs(x))] < 0:
        x = -x
    return lam, x, it + k + 1


def rayleigh_iteration(
    diag,
    off,
    weights,
    shift: float,
    tol: float = 1e-10,
    max_iter: int = 200,
):
    """Shifted inverse iteration with Rayleigh-quotient shift updates.

    Plain inverse iteration at ``shift`` runs until the eigenvalue estimate
    moves by less than 1e-3 relative, then the shift follows the Rayleigh
    quotient.  Returns ``(lam, x, iterations)``.  The caller decides whether
    the converged eigenvalue is the one it wanted.
    """
    n = diag.size
    x = np.ones(n) / np.sqrt(np.sum(weights))
    sigma = shift
    lam = rayleigh_quotient(diag, off, weights, x)
    follow = False
    for it in range(1, max_iter + 1):
        try:
            y = solve_scaled(diag - sigma * weights, off, weights, weights * x)
        except LinAlgError:
            # shift hit an eigenvalue exactly: the current vector is converged
            return lam, x, it
        x = y / np.sqrt(np.dot(weights, y * y))
        new = rayleigh_quotient(diag, off, weights, x)
        step = abs(new - lam)
        lam = new
        if follow and step <= tol * max(abs(lam), 1.0):
            break
        if not follow and step <= 1e-3 * max(abs(lam), 1.0):
            follow = True
        if follow:
            sigma = lam
    else:
        raise ConvergenceError(
            f"Rayleigh iteration exceeded {max_iter} iterations (last step {step:.3e})"
        )
    if x[np.argmax(np.abs(x))] < 0:
        x = -x
    return lam, x, it


def solve_scaled(diag, off, weights, rhs):
    """Solve ``A y = rhs`` for symmetric tridiagonal ``A`` after W^(-1/2) scaling.

    The scaling equilibrates rows whose magnitudes differ by the mesh grading;
    without it partial pivoting loses all accuracy near the origin.
    """
    s = 1.0 / np.sqrt(weights)
    ab = np.zeros((3, diag.size))
    o = off * s[:-1] * s[1:]
    ab[0, 1:] = o
    ab[1] = diag * s * s
    ab[2, :-1] = o
    return solve_banded((1, 1), ab, rhs * s, check_finite=False) * s
