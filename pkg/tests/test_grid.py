import numpy as np
import pytest
from hypothesis import given, strategies as st

from nodal_blowup.grid import (
    RadialGrid,
    RadialProfile,
    build_clustered_mesh,
    build_graded_mesh,
    concentration_cluster,
    dirichlet_energy,
    integrate_radial,
    interpolate,
    radial_laplacian_apply,
    resample,
    sphere_area,
    split_dirichlet_energy,
    stiffness,
    stiffness_apply,
    tridiag_apply,
)

dims = st.sampled_from([1, 3, 4, 5, 6])


def ball_volume(n, r):
    return sphere_area(n) * r**n / n


@given(dims, st.integers(65, 400), st.floats(0.0, 3.0), st.floats(0.1, 60.0))
def test_weights_are_exact_shell_volumes(n, nodes, c, r_max):
    g = build_graded_mesh(nodes, r_max, n, c)
    assert np.all(g.weights > 0)
    assert integrate_radial(np.ones(g.size), g) == pytest.approx(ball_volume(n, r_max), rel=1e-12)


@given(dims, st.integers(65, 300), st.floats(0.0, 2.0))
def test_stiffness_symmetric_and_annihilates_constants(n, nodes, c):
    g = build_graded_mesh(nodes, 1.0, n, c)
    diag, off = stiffness(g, dirichlet=False)
    assert np.allclose(tridiag_apply(diag, off, np.ones(g.size)), 0.0, atol=1e-9 * diag.max())
    rng = np.random.default_rng(0)
    x, y = rng.standard_normal((2, g.size))
    lhs = tridiag_apply(diag, off, x) @ y
    rhs = x @ tridiag_apply(diag, off, y)
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10 * diag.max())


@given(dims, st.integers(65, 300), st.floats(0.0, 2.0))
def test_flux_form_matches_matrix(n, nodes, c):
    g = build_graded_mesh(nodes, 1.0, n, c)
    v = np.cos(3 * g.nodes)
    v[-1] = 0.0
    diag, off = stiffness(g)
    ref = tridiag_apply(diag, off, v[:-1])
    assert np.allclose(stiffness_apply(g, v), ref, rtol=1e-9, atol=1e-9 * np.abs(ref).max())


def test_quadrature_second_order():
    # int_B |x|^2 dx over the unit 3-ball is 4 pi / 5
    errs = []
    for nodes in (257, 513, 1025):
        g = build_graded_mesh(nodes, 1.0, 3, 1.0)
        errs.append(abs(integrate_radial(RadialProfile(g, g.nodes**2)) - 4 * np.pi / 5))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.8)


def test_dirichlet_energy_converges():
    # |grad(1 - r^2)|^2 = 4 r^2 on the unit 3-ball: 16 pi / 5
    g = build_graded_mesh(2049, 1.0, 3, 0.5)
    e = dirichlet_energy(RadialProfile(g, 1 - g.nodes**2))
    assert e == pytest.approx(16 * np.pi / 5, rel=1e-5)


def test_split_energy_adds_up():
    g = build_graded_mesh(513, 1.0, 3, 0.5)
    f = RadialProfile(g, np.cos(4 * g.nodes))
    plus, minus = split_dirichlet_energy(f)
    assert plus > 0 and minus > 0
    assert plus + minus == pytest.approx(dirichlet_energy(f), rel=1e-13)


def test_laplacian_of_quadratic():
    g = build_graded_mesh(513, 1.0, 4, 1.0)
    lap = radial_laplacian_apply(RadialProfile(g, 1 - g.nodes**2))
    assert np.allclose(lap.values[:-1], -8.0, rtol=1e-8)


def test_laplacian_rejects_nonzero_boundary():
    g = build_graded_mesh(129, 1.0, 3)
    with pytest.raises(ValueError):
        radial_laplacian_apply(RadialProfile(g, np.ones(g.size)))
    out = radial_laplacian_apply(RadialProfile(g, np.ones(g.size)), outer="free")
    assert np.allclose(out.values, 0.0, atol=1e-8)


def test_grid_validation():
    with pytest.raises(ValueError):
        RadialGrid(np.array([0.0, 0.5, 0.5, 1.0]), 3)
    with pytest.raises(ValueError):
        RadialGrid(np.array([0.1, 0.5, 1.0]), 3)
    with pytest.raises(ValueError):
        build_graded_mesh(10, 1.0, 3)
    with pytest.raises(ValueError):
        RadialProfile(build_graded_mesh(65, 1.0, 3), np.zeros(3))


def test_scaled_and_refined():
    g = build_graded_mesh(65, 1.0, 3, 1.0)
    s = g.scaled(10.0)
    assert s.r_max == pytest.approx(10.0)
    assert np.allclose(s.weights, g.weights * 1e3)
    f = g.refined(2)
    assert f.size == 2 * g.size - 1 and np.all(np.isin(g.nodes, f.nodes))


def test_clustered_mesh_nodes_and_volume():
    g = build_clustered_mesh([0.0, 3.7], 5.0, 1, 1025, 2.0)
    assert 3.7 in g.nodes
    assert integrate_radial(np.ones(g.size), g) == pytest.approx(10.0)
    with pytest.raises(ValueError):
        build_clustered_mesh([1.0], 5.0, 1, 1025, 2.0)


@given(st.floats(1.0, 1e8))
def test_concentration_cluster_monotone(scale):
    c = concentration_cluster(scale)
    assert c >= 0 and concentration_cluster(scale * 10) >= c


def test_interpolation_exact_for_cubics_and_resample():
    g = build_graded_mesh(129, 2.0, 3, 1.0)
    f = RadialProfile(g, g.nodes**3 - g.nodes)
    r = np.linspace(0, 2, 17)
    assert np.allclose(interpolate(f, r), r**3 - r, atol=1e-12)
    with pytest.raises(ValueError):
        interpolate(f, 2.5)
    big = build_graded_mesh(65, 3.0, 3)
    out = resample(f, big)
    assert np.all(out.values[big.nodes > 2.0] == 0.0)
