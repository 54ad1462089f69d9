import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import eigh_tridiagonal

from nodal_blowup.eigen import (
    backward_residual,
    is_positive_definite,
    lowest_eigenpair,
    rayleigh_iteration,
    rayleigh_quotient,
    solve_scaled,
    sturm_count,
)
from nodal_blowup.grid import build_graded_mesh, stiffness


def pencil(n, nodes, c, amp, seed):
    g = build_graded_mesh(nodes, 1.0, n, c)
    diag, off = stiffness(g)
    w = g.weights[:-1]
    rng = np.random.default_rng(seed)
    pot = amp * np.exp(-((g.nodes[:-1] / 0.2) ** 2)) * (1 + 0.1 * rng.random(w.size))
    return diag - pot * w, off, w, pot


def symmetric_oracle(a, off, w):
    s = 1.0 / np.sqrt(w)
    d, o = a * s * s, off * s[:-1] * s[1:]
    vals = eigh_tridiagonal(d, o, eigvals_only=True, select="i", select_range=(0, 2))
    # the symmetrized matrix has norm ~ 1/min(w); its eigenvalues are only that accurate
    err = 100 * np.finfo(float).eps * np.max(np.abs(d) + 2 * np.append(np.abs(o), 0))
    return vals, err


@given(st.sampled_from([1, 3, 4, 5]), st.integers(65, 300), st.floats(0.0, 1.5),
       st.floats(0.0, 500.0), st.integers(0, 10))
def test_lowest_eigenvalue_matches_symmetric_solver(n, nodes, c, amp, seed):
    a, off, w, pot = pencil(n, nodes, c, amp, seed)
    lam, x, _ = lowest_eigenpair(a, off, w, lower=-pot.max() - 1.0)
    ref, err = symmetric_oracle(a, off, w)
    assert abs(lam - ref[0]) <= err
    assert np.dot(w, x * x) == pytest.approx(1.0)
    assert np.all(x > 0)  # ground state of a Jacobi matrix with negative off-diagonal
    assert backward_residual(a, off, w, lam, x) < 1e-12


@given(st.integers(65, 200), st.floats(0.0, 300.0))
def test_sturm_count_against_oracle(nodes, amp):
    a, off, w, _ = pencil(3, nodes, 1.0, amp, 0)
    ref, err = symmetric_oracle(a, off, w)
    assert sturm_count(a, off, w, ref[0] - 2 * err) == 0
    mid = 0.5 * (ref[1] + ref[2])
    assert sturm_count(a, off, w, mid) == 2


def test_positive_definite_test():
    assert is_positive_definite(np.array([2.0, 2.0]), np.array([-1.0]))
    assert not is_positive_definite(np.array([1.0, 1.0]), np.array([-2.0]))


def test_lower_bound_checked():
    a, off, w, pot = pencil(3, 129, 1.0, 100.0, 0)
    with pytest.raises(ValueError):
        lowest_eigenpair(a, off, w, lower=0.0)


def test_rayleigh_iteration_agrees_with_bisection():
    a, off, w, pot = pencil(3, 257, 1.0, 200.0, 1)
    ref, _, _ = lowest_eigenpair(a, off, w, lower=-pot.max() - 1.0)
    lam, x, _ = rayleigh_iteration(a, off, w, shift=ref - 1.0)
    assert lam == pytest.approx(ref, rel=1e-10)
    assert rayleigh_quotient(a, off, w, x) == pytest.approx(lam, rel=1e-12)


def test_solve_scaled_on_graded_mesh():
    a, off, w, _ = pencil(4, 513, 2.0, 0.0, 0)
    rng = np.random.default_rng(3)
    y = rng.standard_normal(a.size)
    rhs = a * y
    rhs[:-1] += off * y[1:]
    rhs[1:] += off * y[:-1]
    assert np.allclose(solve_scaled(a, off, w, rhs), y, rtol=1e-6, atol=1e-8)
