import numpy as np
import pytest
from scipy.stats import special_ortho_group

from canodual import DomainError, FixedPointProblem, LogQuadraticTerm, QuarticTerm
from canodual.problem import eval_F, eval_F_direct, eval_Pi, grad_Pi, hess_Pi, residual


def _fd_grad(fun, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


def _fd_jac(fun, x, h=1e-6):
    return np.column_stack([(fun(x + h * e) - fun(x - h * e)) / (2 * h) for e in np.eye(x.size)])


def test_reference_values(ex1, ex2):
    assert eval_Pi(ex1, [0.318731, 0.0325932]) == pytest.approx(6.78671, abs=1e-4)
    assert eval_Pi(ex2, [-0.303886, 0.0666033]) == pytest.approx(-9.84726, abs=1e-4)


def test_quartic_1d_substitution():
    p = FixedPointProblem([0.0], [QuarticTerm([[1.0]], beta=1, lam=1)])
    assert eval_Pi(p, [0.0]) == pytest.approx(0.5)
    assert hess_Pi(p, [0.0]) == pytest.approx(np.array([[-2.0]]))
    assert eval_F(p, [0.0]) == pytest.approx([0.0])


def test_reference_solutions_are_near_fixed_points(ex1, ex2, ex3):
    assert np.linalg.norm(grad_Pi(ex1, [0.318731, 0.0325932])) <= 1e-3
    assert np.linalg.norm(grad_Pi(ex3, [0.323, -0.272])) <= 5e-2
    x1 = np.array([-0.303886, 0.0666033])
    assert np.allclose(eval_F(ex2, x1), x1, atol=1e-3)
    x2 = np.array([-0.0191337, -0.00683777])
    assert np.allclose(eval_F(ex1, x2), x2, atol=1e-3)
    assert residual(ex3, [2.130, 0.008]) <= 5e-2


def test_residual_far_from_solutions(ex2):
    assert residual(ex2, [10.0, 10.0]) > 1


def test_log_domain_error_names_term(ex3):
    with pytest.raises(DomainError) as info:
        eval_Pi(ex3, [0.0, 0.0])
    assert info.value.term_index == 0


def test_hessian_positive_definite_at_global_min(ex2):
    # x1 is the global minimizer, so Pi is locally convex there
    assert np.all(np.linalg.eigvalsh(hess_Pi(ex2, [-0.303886, 0.0666033])) > 0)


@pytest.mark.parametrize("name, scale", [("ex1", 0.4), ("ex2", 1.0), ("ex3", 5.0)])
def test_derivatives_against_finite_differences(request, rng, name, scale):
    p = request.getfixturevalue(name)
    for _ in range(10):
        x = rng.uniform(-scale, scale, p.n)
        g = grad_Pi(p, x)
        assert np.allclose(_fd_grad(lambda z: eval_Pi(p, z), x), g, rtol=1e-5, atol=1e-5 * (1 + np.abs(g).max()))
        H = hess_Pi(p, x)
        assert np.allclose(_fd_jac(lambda z: grad_Pi(p, z), x), H, rtol=1e-4, atol=1e-4 * (1 + np.abs(H).max()))


@pytest.mark.parametrize("name", ["ex1", "ex2", "ex3"])
def test_two_operator_paths_agree(request, rng, name):
    p = request.getfixturevalue(name)
    X = rng.uniform(-0.5, 0.5, (20, p.n))
    a, b = eval_F(p, X), eval_F_direct(p, X)
    assert np.allclose(a, b, rtol=1e-10, atol=1e-10)


@pytest.mark.parametrize("name", ["ex1", "ex2", "ex3"])
def test_stationarity_is_fixed_point(request, rng, name):
    p = request.getfixturevalue(name)
    for x in rng.uniform(-0.5, 0.5, (10, p.n)):
        assert residual(p, x) == pytest.approx(np.linalg.norm(grad_Pi(p, x)), rel=1e-12)


@pytest.mark.parametrize("name", ["ex1", "ex2", "ex3"])
def test_objectivity_under_rotation(request, rng, name):
    p = request.getfixturevalue(name)
    rotated = p.with_terms(
        [t.with_D(special_ortho_group.rvs(t.D.shape[0], random_state=rng) @ t.D) for t in p.terms]
    )
    X = rng.uniform(-0.5, 0.5, (10, p.n))
    assert np.allclose(eval_Pi(rotated, X), eval_Pi(p, X), rtol=0, atol=1e-10)


def test_batched_and_single_evaluation_agree(ex3, rng):
    X = rng.uniform(-3, 3, (5, 2))
    assert np.allclose(eval_Pi(ex3, X), [eval_Pi(ex3, x) for x in X])
    assert np.allclose(hess_Pi(ex3, X), [hess_Pi(ex3, x) for x in X])


def test_problem_validation():
    with pytest.raises(ValueError):
        FixedPointProblem([1.0, 2.0], [LogQuadraticTerm([[1.0, 0, 0]], 1, 1)])
    with pytest.raises(ValueError):
        FixedPointProblem([1.0], [])
    p = FixedPointProblem([1.0, 2.0], [LogQuadraticTerm(np.eye(2), 1, 1)])
    with pytest.raises(ValueError):
        eval_Pi(p, [1.0, 2.0, 3.0])
    assert (p.n, p.m) == (2, 1)
