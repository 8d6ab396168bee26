import numpy as np
import pytest

from linkmi.optimize import OptimizerConfig, nelder_mead, numerical_hessian


def test_quadratic_1d():
    x, fx = nelder_mead(lambda v: (v[0] - 3.0) ** 2, np.array([0.0]))
    assert abs(x[0] - 3.0) < 1e-5
    assert fx < 1e-9


def test_quadratic_2d():
    x, _ = nelder_mead(lambda v: v[0] ** 2 + v[1] ** 2, np.array([1.0, -2.0]))
    assert np.all(np.abs(x) < 1e-5)


def test_rosenbrock():
    def rosen(v):
        return (1 - v[0]) ** 2 + 100.0 * (v[1] - v[0] ** 2) ** 2

    x, _ = nelder_mead(rosen, np.array([-1.2, 1.0]))
    assert np.all(np.abs(x - 1.0) < 1e-3)


def test_never_worse_than_start():
    # A nasty objective: the start is already the global minimum.
    def f(v):
        return float(np.cos(v[0]) + abs(v[0]))

    x0 = np.array([0.0])
    _, fx = nelder_mead(f, x0)
    assert fx <= f(x0)


def test_budget_respected():
    calls = []

    def f(v):
        calls.append(1)
        return float((v**2).sum())

    cfg = OptimizerConfig(max_evals=50, f_tol=1e-300)
    nelder_mead(f, np.array([5.0, 5.0, 5.0]), cfg)
    assert len(calls) <= 50 + 5  # one expansion step may straddle the cap


def test_nonfinite_start_rejected():
    with pytest.raises(ValueError):
        nelder_mead(lambda v: float("nan"), np.array([0.0]))


def test_hessian_diagonal_quadratic():
    H = numerical_hessian(lambda v: v[0] ** 2 + 3.0 * v[1] ** 2, np.array([0.7, -1.3]))
    assert np.allclose(H, np.diag([2.0, 6.0]), atol=1e-4)


def test_hessian_linear_is_zero():
    H = numerical_hessian(lambda v: 2.0 * v[0] - 5.0 * v[1], np.array([1.0, 1.0]))
    assert np.allclose(H, 0.0, atol=1e-6)


def test_hessian_mixed_partial():
    H = numerical_hessian(lambda v: v[0] * v[1], np.array([0.3, 0.9]))
    assert abs(H[0, 1] - 1.0) < 1e-4
    assert abs(H[1, 0] - 1.0) < 1e-4
    assert np.allclose(H, H.T)


def test_hessian_nonfinite_probe():
    def f(v):
        return float("inf") if v[0] > 0.5 else float(v[0])

    with pytest.raises(ValueError):
        numerical_hessian(f, np.array([0.5]))
