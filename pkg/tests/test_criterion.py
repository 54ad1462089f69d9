import numpy as np
import pytest
from hypothesis import given, strategies as st

from nodal_blowup.criterion import (
    BOTH_SIDED,
    INCONCLUSIVE,
    INDETERMINATE,
    NEGATIVE,
    POSITIVE,
    blowup_prediction,
    classify_sign,
    criterion_integral,
    criterion_sweep,
    positivity_onset,
    rescaled_j_direct,
    SweepRow,
)
from nodal_blowup.spectrum import first_eigenpair, rescale_frame
from nodal_blowup.stationary import ProblemParams, knodal_solution

MATRIX = [(n, k, p) for n, ps in [(3, (3.0, 4.0, 4.5, 4.8)), (4, (2.2, 2.5, 2.7, 2.9))]
          for k in (2, 3) for p in ps]


@pytest.mark.parametrize("n,k,p", MATRIX)
def test_identity_holds(n, k, p, solution_cache):
    sol, eig = solution_cache(n, p, k)
    rep = criterion_integral(sol, eig, estimate_noise=False)
    assert rep.identity_residual < 1e-10
    assert rep.sign == INDETERMINATE  # no noise estimate requested


@pytest.mark.parametrize("n,p", [(3, 4.5), (4, 2.9)])
def test_rescaled_integral_two_routes(n, p, solution_cache):
    sol, eig = solution_cache(n, p)
    rep = criterion_integral(sol, eig, estimate_noise=False)
    frame = rescale_frame(sol, eig)
    assert rep.rescaled_j == pytest.approx(rescaled_j_direct(frame), rel=1e-12)


@pytest.mark.parametrize("n,p", [(3, 4.8), (4, 2.95)])
def test_sign_positive_above_floor(n, p):
    sol = knodal_solution(ProblemParams(n, p, 2))
    rep = criterion_integral(sol, first_eigenpair(sol))
    assert rep.sign == POSITIVE and rep.i_p > rep.noise_floor
    assert blowup_prediction(rep).outcome == BOTH_SIDED
    assert blowup_prediction(rep).epsilon == "unknown"


def test_limit_gap_decreases():
    gaps = [criterion_integral(s, first_eigenpair(s), estimate_noise=False).limit_gap
            for s in (knodal_solution(ProblemParams(4, p, 2)) for p in (2.7, 2.85, 2.95))]
    assert np.all(np.diff(gaps) < 0)


@given(st.floats(-1e3, 1e3), st.floats(1e-6, 1e2))
def test_classify_sign(value, floor):
    s = classify_sign(value, floor)
    if abs(value) <= floor:
        assert s == INDETERMINATE
    else:
        assert s == (POSITIVE if value > 0 else NEGATIVE)
    assert classify_sign(value, np.inf) == INDETERMINATE


def test_prediction_inconclusive_without_sign(solution_cache):
    sol, eig = solution_cache(4, 2.5)
    rep = criterion_integral(sol, eig, estimate_noise=False)
    assert blowup_prediction(rep).outcome == INCONCLUSIVE


def test_positivity_onset():
    class R:
        def __init__(self, sign):
            self.sign = sign

    rows = [SweepRow(2.0, R(NEGATIVE)), SweepRow(2.5, R(POSITIVE)), SweepRow(2.9, R(POSITIVE))]
    assert positivity_onset(rows) == 2.5
    assert positivity_onset(rows[:1]) is None
    assert positivity_onset([SweepRow(2.0, error="x")]) is None


def test_sweep_rows_and_p_hat():
    sweep = criterion_sweep(4, 2, [2.9, 2.5, 2.7], n_nodes=1025)
    assert [r.p for r in sweep.rows] == [2.5, 2.7, 2.9]
    assert all(r.report.sign == POSITIVE for r in sweep.rows)
    assert sweep.p_hat == 2.5


def test_requires_negative_eigenvalue(solution_cache):
    sol, _ = solution_cache(3, 3.0)
    calib = first_eigenpair(sol, potential=False)
    with pytest.raises(ValueError):
        criterion_integral(sol, calib)
