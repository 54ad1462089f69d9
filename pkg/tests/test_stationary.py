import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nodal_blowup.grid import integrate_radial, sphere_area
from nodal_blowup.limit import sobolev_level
from nodal_blowup.stationary import (
    ProblemParams,
    ResolutionWarning,
    condition_diagnostics,
    energy_report,
    knodal_solution,
    shoot_unit,
)


def test_params_validation():
    with pytest.raises(ValueError):
        ProblemParams(4, 3.1, 2)
    with pytest.raises(ValueError):
        ProblemParams(4, 3.0, 2)
    with pytest.raises(ValueError):
        ProblemParams(2, 2.0, 2)
    with pytest.raises(ValueError):
        ProblemParams(3, 2.0, 1)
    with pytest.raises(ValueError):
        ProblemParams(3, 1.0, 2)
    assert ProblemParams(1, 3.0, 2).p_s == np.inf


@pytest.mark.parametrize("case", range(4))
def test_against_amplitude_shooting_oracle(case, oracles):
    ref = oracles["stationary"][case]
    sol = knodal_solution(ProblemParams(ref["n"], ref["p"], ref["k"]), n_nodes=4097)
    assert sol.m_p == pytest.approx(ref["u0"], rel=1e-5)
    assert sol.m_p_minus == pytest.approx(ref["m_minus"], rel=1e-5)
    assert np.allclose(sol.nodal_radii, ref["nodal_radii"], rtol=1e-8)
    assert sol.center_positive


def test_one_dimensional_nodal_radius_is_exact():
    # the 1-D profile is periodic: zeros at odd multiples of the first one
    sol = knodal_solution(ProblemParams(1, 3.0, 2), n_nodes=2049)
    assert sol.nodal_radii[0] == pytest.approx(1.0 / 3.0, rel=1e-10)


@pytest.mark.parametrize("n,p,k", [(3, 3.0, 2), (3, 4.5, 3), (4, 2.5, 2), (5, 2.2, 4)])
def test_solution_invariants(n, p, k, solution_cache):
    sol, _ = solution_cache(n, p, k)
    u = sol.profile.values
    assert u[-1] == 0.0
    assert np.sum(u[:-2] * u[1:-1] < 0) == k - 1
    assert sol.residual < 1e-6
    assert sol.newton_residual < 1e-10
    assert np.all(np.diff(sol.nodal_radii) > 0) and 0 < sol.nodal_radii[0]
    # Nehari identity: int |grad u|^2 = int |u|^(p+1)
    e = energy_report(sol)
    assert e.grad_sq_total == pytest.approx(e.lp1_norm, rel=1e-10)
    assert e.grad_sq_plus + e.grad_sq_minus == pytest.approx(e.grad_sq_total, rel=1e-12)
    assert e.e_p == pytest.approx((0.5 - 1 / (p + 1)) * e.lp1_norm, rel=1e-9)


@given(st.floats(2.0, 4.9), st.integers(2, 4))
def test_shooting_zero_count_and_scaling(p, k):
    traj = shoot_unit(ProblemParams(3, p, k))
    assert len(traj.zeros) == k
    w, _ = traj(traj.zeros)
    assert np.allclose(w, 0.0, atol=1e-9)
    # alternating extrema
    ext = np.array([traj(r)[0] for r in traj.extrema])
    assert np.all(ext[:-1] * ext[1:] < 0)


def test_margin_and_warning():
    with pytest.raises(ValueError):
        knodal_solution(ProblemParams(4, 2.9995, 2), n_nodes=513)
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        knodal_solution(ProblemParams(4, 2.9995, 2), n_nodes=513, p_margin=1e-4)
    assert any(issubclass(w.category, ResolutionWarning) for w in rec)


def test_conditions_trend_n4():
    sols = [knodal_solution(ProblemParams(4, p, 2)) for p in (2.5, 2.7, 2.85, 2.95)]
    rep = condition_diagnostics(sols)
    assert all(rep.flags.values()), rep.flags
    # energies decrease toward 2 S^2 from above
    ratios = [r.energy_ratio for r in rep.rows]
    assert np.all(np.diff(ratios) < 0) and ratios[-1] > 1


def test_conditions_trend_higher_k():
    sols = [knodal_solution(ProblemParams(4, p, 3)) for p in (2.5, 2.7, 2.85, 2.95)]
    rep = condition_diagnostics(sols)
    assert all(rep.flags.values()), rep.flags


def test_conditions_validation(solution_cache):
    a, _ = solution_cache(4, 2.5)
    b, _ = solution_cache(4, 2.7)
    with pytest.raises(ValueError):
        condition_diagnostics([a, b])
    with pytest.raises(ValueError):
        condition_diagnostics([b, a, b])


def test_energy_per_sign_approaches_level_monotonically():
    level = sobolev_level(4)
    e = [energy_report(knodal_solution(ProblemParams(4, p, 2))) for p in (2.85, 2.95, 2.99)]
    ratio = np.array([x.e_p / (0.5 * level) for x in e])
    assert np.all(np.diff(ratio) < 0) and np.all(ratio > 1)


@pytest.mark.xfail(strict=True, reason="e_p at p=2.95 is still 37% above (2/n) S^(n/2); "
                   "the approach is monotone but slow at desk-scale p")
def test_energy_within_fifteen_percent_of_two_bubbles():
    sol = knodal_solution(ProblemParams(4, 2.95, 2))
    target = 2 * sobolev_level(4) / 4
    assert energy_report(sol).e_p == pytest.approx(target, rel=0.15)


def test_volume_form_consistency(solution_cache):
    sol, _ = solution_cache(3, 3.0)
    g = sol.grid
    assert integrate_radial(np.ones(g.size), g) == pytest.approx(sphere_area(3) / 3)
