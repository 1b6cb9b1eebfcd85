import numpy as np
import pytest

from canodual import (
    GClass,
    PoleError,
    SolveOptions,
    Stability,
    StabilitySource,
    duality_gap,
    label_stability,
    locate_poles,
    recover_primal,
    solve,
)
from canodual.dual import find_dual_stationary_points
from canodual.problem import eval_Pi, grad_Pi, residual
from canodual.recovery import assess_stability

EX1_OPTS = SolveOptions(box=(-10, 10), grid_steps=201)


@pytest.fixture(scope="module")
def ex1_records(ex1):
    return solve(ex1, EX1_OPTS)


@pytest.fixture(scope="module")
def ex2_records(ex2):
    return solve(ex2)


@pytest.fixture(scope="module")
def ex3_records(ex3):
    return solve(ex3)


def test_recover_primal_examples(ex1, ex3):
    assert np.allclose(recover_primal(ex1, [7.38697, -1.39206]), [0.318731, 0.0325932], atol=1e-4)
    assert np.allclose(recover_primal(ex3, [20.396]), [-21.57, 16.065], atol=5e-2)
    assert np.allclose(recover_primal(ex3, [0.0]), -ex3.f)


def test_recover_primal_refuses_poles(ex3):
    with pytest.raises(PoleError):
        recover_primal(ex3, locate_poles(ex3)[:1])


def test_duality_gap(ex1, ex2, ex2_records, ex1_records):
    r1 = ex2_records[0]
    assert duality_gap(ex2, r1.x, r1.sigma) <= 1e-6
    assert r1.pi_value == pytest.approx(-9.84726, abs=1e-5)
    r3 = next(r for r in ex1_records if abs(r.sigma[0] - 7.3106) < 1e-3)
    assert duality_gap(ex1, r3.x, r3.sigma) <= 1e-6
    assert r3.pi_value == pytest.approx(7.99906, abs=1e-5)
    # mismatched pair
    assert duality_gap(ex2, r1.x, ex2_records[1].sigma) > 1


def test_example2_labels(ex2, ex2_records):
    by_sigma = {round(r.sigma[0], 3): r for r in ex2_records}
    assert by_sigma[0.970].stability is Stability.GLOBAL_STABLE
    assert by_sigma[-91.017].stability is Stability.LOCAL_UNSTABLE
    assert label_stability(ex2, by_sigma[0.970]) == (Stability.GLOBAL_STABLE, StabilitySource.TRIALITY_MIN_MAX)


def test_example3_fourth_point_uses_fallback(ex3, ex3_records):
    r4 = next(r for r in ex3_records if abs(r.sigma[0] + 0.881733) < 1e-3)
    assert r4.triality_verdict == "not applicable (n ≠ m)"
    assert r4.stability_source is StabilitySource.PRIMAL_HESSIAN
    # hess_Pi(x4) has eigenvalues of both signs, so the fallback cannot decide
    assert r4.stability is Stability.INDETERMINATE


def test_example3_value_chain(ex3_records):
    values = [r.pi_value for r in ex3_records]
    assert values == pytest.approx([-190.381, -110.759, -21.7036, -12.5735, 0.332915], abs=1e-3)


def test_example1_values(ex1_records):
    values = [r.pi_value for r in ex1_records]
    for v in (6.78671, 7.99906, 10.0225):
        assert min(abs(np.array(values) - v)) <= 1e-3
    assert values == sorted(values)


@pytest.mark.parametrize("fixture", ["ex1_records", "ex2_records", "ex3_records"])
def test_record_invariants(request, fixture):
    records = request.getfixturevalue(fixture)
    p = request.getfixturevalue(fixture.split("_")[0])
    for r in records:
        assert r.gap <= 1e-10 * (1 + abs(r.pi_value))
        assert r.recovered_gap <= 1e-6
        assert r.fp_residual <= 1e-8
        assert residual(p, r.x) == pytest.approx(r.fp_residual, abs=1e-15)
        if r.stability is Stability.GLOBAL_STABLE:
            assert r.g_class is GClass.POS_DEF
    by_pi = sorted(range(len(records)), key=lambda i: records[i].pi_value)
    by_pid = sorted(range(len(records)), key=lambda i: records[i].pid_value)
    assert by_pi == by_pid
    glob = [r for r in records if r.stability is Stability.GLOBAL_STABLE]
    assert len(glob) == 1 and glob[0] is records[0]


def _dense_roots_1d(p, lo, hi, n=1_000_000):
    x = np.linspace(lo, hi, n)
    g = grad_Pi(p, x[:, None])[:, 0]
    roots = list(x[np.flatnonzero(g == 0)])
    for i in np.flatnonzero(g[:-1] * g[1:] < 0):
        roots.append(x[i] - g[i] * (x[i + 1] - x[i]) / (g[i + 1] - g[i]))
    return np.sort(roots)


def test_zero_input_quartic_matches_dense_scan(quartic_1d):
    expected = _dense_roots_1d(quartic_1d, -10.0, 10.0)
    assert expected == pytest.approx([-np.sqrt(6), 0.0, np.sqrt(6)], abs=1e-4)
    records = solve(quartic_1d)
    xs = np.sort([r.x[0] for r in records])
    assert xs == pytest.approx(expected, abs=1e-4)
    on_pole = [r for r in records if r.on_pole]
    assert len(on_pole) == 2
    assert all(r.stability is Stability.LOCAL_STABLE for r in on_pole)
    origin = next(r for r in records if not r.on_pole)
    assert origin.stability is Stability.LOCAL_UNSTABLE
    assert origin.stability_source is StabilitySource.TRIALITY_DOUBLE_MAX


def test_pole_recovery_can_be_disabled(quartic_1d):
    records = solve(quartic_1d, SolveOptions(pole_recovery=False))
    assert [r.x[0] for r in records] == pytest.approx([0.0])


def test_fallback_overrides_contradicting_triality(ex2, ex2_records, caplog):
    r1 = ex2_records[0]
    # pretend sigma1 were NegDef: the dual Hessian is negative there, so the
    # double-max rule would call x1 unstable although it is a strict minimum
    with caplog.at_level("WARNING"):
        a = assess_stability(ex2, r1.x, r1.sigma, GClass.NEG_DEF)
    assert a.disagreement
    assert a.stability is Stability.LOCAL_STABLE
    assert a.source is StabilitySource.PRIMAL_HESSIAN
    assert "triality says" in caplog.text


def test_solve_empty_box(ex2):
    diag = {}
    assert solve(ex2, SolveOptions(box=(2.0, 5.0)), diag) == []
    assert diag["failures"] == []


def test_polish_reduces_residual(ex2):
    from canodual.recovery import polish

    x0 = np.array([-0.303886, 0.0666033])
    assert residual(ex2, polish(ex2, x0)) < 1e-12 < residual(ex2, x0)


def test_global_record_is_global_minimum(ex3, ex3_records, rng):
    best = ex3_records[0].pi_value
    X = rng.uniform(-40, 40, (20000, 2))
    assert np.min(eval_Pi(ex3, X)) >= best
