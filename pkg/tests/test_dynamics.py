import numpy as np
import pytest

from conftest import body_frame_rnea
from rbdderiv.dynamics import accumulate_composites, bias_forces, crba, dynamics_cache, rnea
from rbdderiv.kinematics import forward_pass
from rbdderiv.model import RobotState, pendulum, random_model, random_state
from rbdderiv.oracle import FdConfig, compare_scaled, fd_jacobian
from rbdderiv.spatial_tensor import coriolis_matrix


@pytest.mark.parametrize("q", [0.0, 0.3, 1.2, np.pi / 2])
def test_pendulum_torque(q):
    z = np.zeros(1)
    assert abs(rnea(pendulum(), RobotState([q], z, z))[0][0] - 9.81 * np.cos(q)) <= 1e-12


def test_pendulum_mass_matrix():
    assert abs(crba(pendulum(), np.array([0.8]))[0, 0] - 1.0) <= 1e-15


def test_no_gravity_at_rest_gives_zero():
    tree = random_model(7, 3, 0.4)
    z = np.zeros(tree.nv)
    tau, _ = rnea(tree, RobotState(random_state(tree, 3).q, z, z), gravity=np.zeros(3))
    np.testing.assert_allclose(tau, 0, atol=1e-15)


def test_matches_body_frame_rnea(tree_and_state, rng):
    tree, state = tree_and_state
    fext = rng.normal(size=(tree.N, 6))
    assert np.abs(rnea(tree, state, fext)[0] - body_frame_rnea(tree, state, fext)).max() <= 1e-11


def test_matches_lagrangian_oracle():
    tree = random_model(8, 21, 0.3, kinds=("revolute", "prismatic"))
    rng = np.random.default_rng(0)
    state = random_state(tree, rng)
    fext = rng.normal(size=(tree.N, 6))
    q, qd, qdd = state.q, state.qd, state.qdd
    g = tree.gravity

    def potential(x):
        kin = forward_pass(tree, RobotState(x, np.zeros_like(qd), np.zeros_like(qd)))
        coms = kin.origins + np.einsum("bij,bj->bi", kin.rotations, np.array(tree.coms))
        return np.array([-np.dot(tree.masses, coms @ g)])

    def power(x_dot):
        kin = forward_pass(tree, RobotState(q, x_dot, np.zeros_like(qd)))
        return np.array([np.sum(kin.v * fext)])

    h = 1e-5
    Mdot = (crba(tree, q + h * qd) - crba(tree, q - h * qd)) / (2 * h)
    dT_dq = fd_jacobian(lambda x: np.array([qd @ crba(tree, x) @ qd]), q, FdConfig(points=4), h=1e-3)[0] / 2
    dV_dq = fd_jacobian(potential, q, FdConfig(points=4), h=1e-3)[0]
    Q_ext = fd_jacobian(power, qd, h=0.5)[0]
    tau_lagrange = crba(tree, q) @ qdd + Mdot @ qd - dT_dq + dV_dq - Q_ext
    assert compare_scaled(rnea(tree, state, fext)[0], tau_lagrange, 1e-6).passed


def test_mass_matrix_is_zero_velocity_inverse_dynamics(tree_and_state):
    tree, state = tree_and_state
    z = np.zeros(tree.nv)
    M = crba(tree, state.q)
    tau, _ = rnea(tree, RobotState(state.q, z, state.qdd), gravity=np.zeros(3))
    assert np.abs(M @ state.qdd - tau).max() <= 1e-12
    assert np.abs(M - M.T).max() <= 1e-12
    assert np.linalg.eigvalsh(M).min() > 0


def test_composite_sums():
    tree = random_model(3, 5, 0.0)
    cache = dynamics_cache(forward_pass(tree, random_state(tree, 5)))
    np.testing.assert_allclose(cache.IC[2], cache.I[2], atol=0)
    np.testing.assert_allclose(cache.IC[0], cache.I.sum(axis=0), atol=1e-14)


def test_coriolis_composites_by_direct_summation():
    tree = random_model(9, 12, 0.5)
    cache = dynamics_cache(forward_pass(tree, random_state(tree, 12)))
    for i in range(1, tree.N + 1):
        sub = [k - 1 for k in tree.subtree(i)]
        B = sum(coriolis_matrix(cache.I[k], cache.kin.v[k]) for k in sub)
        np.testing.assert_allclose(cache.BC[i - 1], B, atol=1e-12)
        np.testing.assert_allclose(cache.fC[i - 1], cache.f[sub].sum(axis=0), atol=1e-12)


def test_accumulate_composites_is_idempotent():
    tree = random_model(5, 2, 0.5)
    cache = dynamics_cache(forward_pass(tree, random_state(tree, 2)))
    again = accumulate_composites(cache)
    np.testing.assert_array_equal(again.IC, cache.IC)
    np.testing.assert_array_equal(again.BC, cache.BC)


def test_bias_forces_are_zero_acceleration_torques(tree_and_state):
    tree, state = tree_and_state
    tau, _ = rnea(tree, state)
    np.testing.assert_allclose(bias_forces(tree, state.q, state.qd), tau - crba(tree, state.q) @ state.qdd,
                               atol=1e-11)


def test_fext_size_checked():
    tree = random_model(3, 1)
    with pytest.raises(ValueError):
        rnea(tree, random_state(tree, 1), np.zeros((2, 6)))
