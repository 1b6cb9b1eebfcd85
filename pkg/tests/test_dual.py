import io

import numpy as np
import pytest

from canodual import (
    FixedPointProblem,
    GClass,
    LogQuadraticTerm,
    PoleError,
    QuarticTerm,
    ScanGrid,
    build_G,
    classify_G,
    eval_Pid,
    find_dual_stationary_points,
    grad_Pid,
    hess_Pid,
    locate_poles,
)
from canodual.dual import default_grid, newton_bisection, scan, write_scan_csv
from canodual.exceptions import DomainError


def _fd(fun, s, h=1e-6):
    s = np.asarray(s, dtype=float)
    return np.array([(fun(s + h * e) - fun(s - h * e)) / (2 * h) for e in np.eye(s.size)]).T


def test_build_G_examples(ex2, ex3):
    assert np.allclose(build_G(ex2, [0.969642]), np.diag([16.453556, 30.028544]), atol=1e-3)
    assert np.allclose(build_G(ex3, [1.0]), [[0.0, 1.28], [1.28, 0.78]], atol=1e-12)
    assert np.allclose(build_G(ex2, [0.0]), -np.eye(2))


def test_reference_dual_values(ex1, ex3):
    assert eval_Pid(ex1, [7.38697, -1.39206]) == pytest.approx(6.78671, abs=1e-4)
    assert eval_Pid(ex3, [20.396]) == pytest.approx(-190.381, abs=1e-3)


def test_dual_value_matches_hand_derived_closed_form(ex1, ex2, rng):
    # closed forms expanded by hand for the two families
    for _ in range(5):
        s1, s2 = rng.uniform(1, 9), rng.uniform(-5, 5)
        expected = (-0.5 * (4 / (4 * s1 + 16 * s2 - 1) + 1 / (9 * s1 + 25 * s2 - 1))
                   - s1 * (np.log(s1 / 6) - 1) - (s2**2 / 16 + s2))
        assert eval_Pid(ex1, [s1, s2]) == pytest.approx(expected, rel=1e-12)
        s = rng.uniform(-50, -1)
        expected = -0.5 * (25 / (18 * s - 1) + 4 / (32 * s - 1)) - 10 * np.exp(0.1 * (s + 8) - 1)
        assert eval_Pid(ex2, [s]) == pytest.approx(expected, rel=1e-12)


def test_zero_input_dual_is_minus_conjugate(rng):
    p = FixedPointProblem([0.0, 0.0], [QuarticTerm(np.eye(2), 2.0, 1.5)])
    s = np.array([-3.3])
    assert eval_Pid(p, s) == pytest.approx(-p.terms[0].Vstar(-3.3))
    assert np.allclose(hess_Pid(p, s), -p.terms[0].d2Vstar(-3.3))


def test_dual_gradient_at_reference_points(ex2, ex3):
    assert abs(grad_Pid(ex2, [0.969642])[0]) <= 1e-4
    assert abs(grad_Pid(ex3, [-52.7144])[0]) <= 1e-3


def test_dual_hessian_negative_at_global_point(ex2):
    assert hess_Pid(ex2, [0.969642])[0, 0] < 0


@pytest.mark.parametrize("name, lo, hi", [("ex1", (0.5, -9.0), (10.0, 9.0)), ("ex2", (-100.0,), (30.0,)),
                                          ("ex3", (-100.0,), (30.0,))])
def test_dual_derivatives_against_finite_differences(request, rng, name, lo, hi):
    p = request.getfixturevalue(name)
    checked = 0
    while checked < 10:
        s = rng.uniform(lo, hi)
        cls, eigs = classify_G(p, s)
        if np.min(np.abs(eigs)) < 0.2:
            continue
        g = grad_Pid(p, s)
        assert np.allclose(_fd(lambda z: eval_Pid(p, z), s), g, rtol=1e-6, atol=1e-6 * (1 + np.abs(g).max()))
        H = hess_Pid(p, s)
        assert np.allclose(_fd(lambda z: grad_Pid(p, z), s), H, rtol=1e-4, atol=1e-4 * (1 + np.abs(H).max()))
        checked += 1


def test_pole_and_domain_errors(ex1, ex3):
    with pytest.raises(PoleError):
        eval_Pid(ex3, locate_poles(ex3)[:1])
    with pytest.raises(DomainError):
        eval_Pid(ex1, [-1.0, 0.0])


def test_classification(ex3, ex1):
    assert classify_G(ex3, [20.396])[0] is GClass.POS_DEF
    assert classify_G(ex3, [-0.881733])[0] is GClass.NEG_DEF
    assert classify_G(ex1, [0.0, 0.0])[0] is GClass.NEG_DEF
    assert classify_G(ex3, [5.0])[0] is GClass.INDEFINITE
    assert classify_G(ex3, locate_poles(ex3)[:1])[0] is GClass.NEAR_SINGULAR


def test_poles_are_reciprocal_eigenvalues(ex2, ex3):
    for p in (ex2, ex3):
        expected = sorted(1 / np.linalg.eigvalsh(p.A[0]))
        assert np.allclose(locate_poles(p), expected, rtol=0, atol=1e-9)
    assert np.allclose(locate_poles(ex3), [0.367, 19.266], atol=1e-3)


def test_example2_stationary_points(ex2):
    diag = {}
    pts = find_dual_stationary_points(ex2, default_grid(ex2), diagnostics=diag)
    assert [p.sigma[0] for p in pts] == pytest.approx([0.969642, -0.955077, -91.0174], abs=1e-3)
    assert all(p.grad_norm <= 1e-10 for p in pts)
    assert len(diag["poles"]) == 2


def test_example3_stationary_points(ex3):
    pts = find_dual_stationary_points(ex3)
    assert [p.sigma[0] for p in pts] == pytest.approx([20.396, 17.9735, 1.46219, -0.881733, -52.7144], abs=1e-3)
    assert sum(p.g_class is GClass.POS_DEF for p in pts) == 1


def test_example1_stationary_points_contain_reference_points(ex1):
    grid = default_grid(ex1, (-10, 10), 201)
    pts = find_dual_stationary_points(ex1, grid)
    sig = np.array([p.sigma for p in pts])
    for target in [(7.38697, -1.39206), (6.00566, -7.97189), (7.3106, -2.23695)]:
        assert np.min(np.linalg.norm(sig - target, axis=1)) <= 1e-3
    values = [p.value for p in pts]
    assert values == sorted(values, reverse=True)
    assert sum(p.g_class is GClass.POS_DEF for p in pts) == 1


def test_empty_box_returns_nothing(ex2):
    grid = ScanGrid(((2.0, 5.0, 11),))
    assert find_dual_stationary_points(ex2, grid) == []


def test_grid_validation(ex1):
    with pytest.raises(ValueError):
        ScanGrid(((1.0, 0.0, 10),))
    with pytest.raises(ValueError):
        ScanGrid(((0.0, 1.0, 1),))
    with pytest.raises(ValueError):
        find_dual_stationary_points(ex1, ScanGrid(((0.0, 1.0, 10),)))


def test_concavity_on_positive_definite_region(ex1, ex3, rng):
    for p, lo, hi in [(ex1, (7.0, -1.0), (12.0, 3.0)), (ex3, (19.5,), (60.0,))]:
        tested = 0
        while tested < 20:
            a, b = rng.uniform(lo, hi), rng.uniform(lo, hi)
            mid = 0.5 * (a + b)
            if any(classify_G(p, s)[0] is not GClass.POS_DEF for s in (a, b, mid)):
                continue
            assert eval_Pid(p, mid) >= 0.5 * (eval_Pid(p, a) + eval_Pid(p, b)) - 1e-10
            tested += 1


def test_newton_bisection_simple_root():
    root = newton_bisection(lambda x: (x**3 - 2.0, 3 * x**2), 0.0, 3.0)
    assert root == pytest.approx(2 ** (1 / 3), rel=1e-15)
    with pytest.raises(ValueError):
        newton_bisection(lambda x: (x**2 + 1, 2 * x), -1.0, 1.0)


def test_scan_masks_poles(ex3):
    grid = ScanGrid(((-100.0, 30.0, 2001),))
    S, values, mask = scan(ex3, grid)
    masked = S[mask, 0]
    for pole in (0.367, 19.266):
        assert np.min(np.abs(masked - pole)) < 0.1
    assert np.all(np.isnan(values[mask]))
    assert np.all(np.isfinite(values[~mask]))


def test_scan_csv_header_and_extrema(ex1, ex2):
    buf = io.StringIO()
    write_scan_csv(buf, ex1, ScanGrid(((-10, 10, 5), (-10, 10, 5))))
    lines = buf.getvalue().splitlines()
    assert lines[0] == "sigma_1,sigma_2,pid,mask"
    assert len(lines) == 26
    # negative sigma_1 is outside the exponential dual domain: masked, empty pid
    assert lines[1].split(",")[2:] == ["", "1"]

    buf = io.StringIO()
    write_scan_csv(buf, ex2, ScanGrid(((-100.0, 5.0, 2001),)))
    rows = [r.split(",") for r in buf.getvalue().splitlines()[1:]]
    s = np.array([float(r[0]) for r in rows])
    v = np.array([float(r[1]) if r[1] else np.nan for r in rows])
    ext = [s[i] for i in range(1, len(s) - 1)
           if np.isfinite(v[i - 1:i + 2]).all() and (v[i] - v[i - 1]) * (v[i + 1] - v[i]) < 0]
    for target in (-91.0174, -0.955077, 0.969642):
        assert np.min(np.abs(np.array(ext) - target)) <= 105 / 2000
