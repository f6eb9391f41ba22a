import numpy as np
import pytest

from rbdderiv.dynamics import rnea
from rbdderiv.model import RobotState, pendulum
from rbdderiv.oracle import FdConfig, compare, compare_scaled, fd_hessian, fd_jacobian


def test_linear_map_exact(rng):
    A = rng.normal(size=(4, 3))
    np.testing.assert_allclose(fd_jacobian(lambda x: A @ x, rng.normal(size=3)), A, atol=1e-9)


def test_sine_derivative_at_zero():
    d = fd_jacobian(lambda x: np.sin(x), np.zeros(1))
    assert abs(d[0, 0] - 1.0) <= 1e-10


def test_four_point_stencil_beats_two_point():
    x = np.array([0.7])
    exact = np.cos(0.7)
    two = fd_jacobian(np.sin, x, FdConfig(), h=1e-2)[0, 0]
    four = fd_jacobian(np.sin, x, FdConfig(points=4), h=1e-2)[0, 0]
    assert abs(four - exact) < 1e-3 * abs(two - exact)


def test_pendulum_gradient_and_hessian():
    tree = pendulum()
    z = np.zeros(1)

    def tau(q):
        return rnea(tree, RobotState(q, z, z))[0]

    for q in (0.0, 0.4, np.pi / 2):
        g = fd_jacobian(tau, np.array([q]))[0, 0]
        assert abs(g + 9.81 * np.sin(q)) <= 1e-8
        h = fd_hessian(tau, np.array([q]))[0, 0, 0]
        assert abs(h + 9.81 * np.cos(q)) <= 1e-6


def test_quadratic_hessian_constant(rng):
    Q = rng.normal(size=(3, 3))
    H = fd_hessian(lambda x: np.array([x @ Q @ x]), rng.normal(size=3))[0]
    np.testing.assert_allclose(H, Q + Q.T, atol=1e-8)


def test_raw_hessian_nearly_symmetric(rng):
    f = lambda x: np.array([np.sin(x[0] * x[1]) + np.exp(0.3 * x[2]) * x[0]])
    H = fd_hessian(f, rng.normal(size=3), symmetrize=False)[0]
    assert np.abs(H - H.T).max() <= 1e-5


def test_matrix_valued_direction_on_last_axis(rng):
    x = rng.normal(size=2)
    J = fd_jacobian(lambda y: np.outer(y, y), x)
    assert J.shape == (2, 2, 2)
    np.testing.assert_allclose(J[:, :, 0], np.outer([1, 0], x) + np.outer(x, [1, 0]), atol=1e-9)


def test_compare_identical():
    a = np.arange(6.0).reshape(2, 3)
    rep = compare(a, a, 1e-9)
    assert rep.passed and rep.max_abs_err == 0


def test_compare_points_at_bad_entry():
    a = np.ones((3, 4, 2))
    b = a.copy()
    b[2, 1, 0] += 1e-3
    rep = compare(a, b, 1e-6)
    assert not rep.passed and rep.argmax == (2, 1, 0)


def test_compare_boundary_inclusive():
    assert compare(np.array([1.0]), np.array([1.5]), 0.0, 0.5).passed
    assert not compare(np.array([1.0]), np.array([1.5000001]), 0.0, 0.5).passed


def test_compare_scaled_uses_tensor_scale():
    b = np.array([1e3, 1e-9])
    a = b + np.array([0.0, 1e-4])
    assert not compare(a, b, 1e-6).passed
    assert compare_scaled(a, b, 1e-6).passed


def test_non_finite_function_raises():
    with pytest.raises(FloatingPointError):
        fd_jacobian(lambda x: np.full(2, np.nan), np.ones(2))


def test_config_rejects_bad_values():
    with pytest.raises(ValueError):
        FdConfig(h_fo=0.0)
    with pytest.raises(ValueError):
        FdConfig(scheme="forward")
    with pytest.raises(ValueError):
        FdConfig(points=3)
