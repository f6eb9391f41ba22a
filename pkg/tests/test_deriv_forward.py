import numpy as np
import pytest

from helpers import case, close, fd_cfg
from rbdderiv.deriv_forward import VARS, SingularMassMatrix, fd_fo, fd_so, forward_dynamics
from rbdderiv.dynamics import rnea
from rbdderiv.model import RobotState, pendulum
from rbdderiv.oracle import FdConfig, fd_jacobian
from rbdderiv.spatial_tensor import mtprod, rot23, tmprod

H_SOLVE, H_POLY = 2e-3, 0.5


def directional(tree, f, args, u):
    """FD of f(q, qd, tau) along u, with the stencil used for solve-layer quantities."""
    q, qd, tau = args
    if u == "q":
        return fd_jacobian(lambda x: f(x, qd, tau), q, fd_cfg(tree, 4), ndir=tree.nv, h=H_SOLVE)
    if u == "qd":
        return fd_jacobian(lambda x: f(q, x, tau), qd, h=H_POLY)
    return fd_jacobian(lambda x: f(q, qd, x), tau, h=H_POLY)


def test_pendulum_equilibrium_and_gradients():
    tree = pendulum()
    z = np.zeros(1)
    for q in (0.2, 1.1):
        tau = np.array([9.81 * np.cos(q)])
        assert abs(forward_dynamics(tree, np.array([q]), z, tau)[0]) <= 1e-12
        fo = fd_fo(tree, np.array([q]), z, z)
        assert abs(fo.dqdd_dq[0, 0] - 9.81 * np.sin(q)) <= 1e-12
        so = fd_so(tree, np.array([q]), z, z)
        assert abs(so.d2qdd["q", "q"][0, 0, 0] - 9.81 * np.cos(q)) <= 1e-12


def test_round_trip(tree_and_state):
    tree, s = tree_and_state
    tau, _ = rnea(tree, s)
    assert np.abs(forward_dynamics(tree, s.q, s.qd, tau) - s.qdd).max() <= 1e-10


@pytest.mark.parametrize("seed", [2, 5])
def test_first_order_matches_fd(seed):
    tree, s, _, _, tau = case(8, seed)
    fo = fd_fo(tree, s.q, s.qd, tau)
    args = (s.q, s.qd, tau)
    for u in VARS:
        close(fo.first(u), directional(tree, lambda *a: forward_dynamics(tree, *a), args, u), 1e-6)


def test_velocity_gradient_zero_at_rest():
    tree, s, _, _, tau = case(6, 1)
    np.testing.assert_allclose(fd_fo(tree, s.q, np.zeros(tree.nv), tau).dqdd_dqd, 0, atol=1e-13)


@pytest.mark.parametrize("seed", [3, 8])
def test_second_order_matches_fd_of_first(seed):
    tree, s, _, _, tau = case(7, seed)
    so = fd_so(tree, s.q, s.qd, tau)
    args = (s.q, s.qd, tau)
    for w in VARS:
        F = directional(tree, lambda *a: fd_fo(tree, *a).dqdd_du, args, w)
        for k, u in enumerate(VARS):
            close(so.d2qdd[u, w], F[:, k * tree.nv:(k + 1) * tree.nv], 1e-6)
    np.testing.assert_array_equal(so.d2qdd["tau", "tau"], 0)


def test_relation_to_inverse_dynamics_hessian():
    from rbdderiv.deriv_second import id_so
    tree, s, _, _, tau = case(9, 4)
    so = fd_so(tree, s.q, s.qd, tau)
    ids = id_so(tree, RobotState(s.q, s.qd, so.qdd))
    dM = ids.dM_dq
    from rbdderiv.dynamics import crba
    R = (ids.d2tau_dq2 + rot23(tmprod(dM, so.dqdd_dq)) + tmprod(dM, so.dqdd_dq)
         + mtprod(crba(tree, s.q), so.d2qdd["q", "q"]))
    assert np.abs(R).max() <= 1e-8


def test_singular_mass_matrix():
    from rbdderiv.model import parse_model, dump_model
    import json
    data = json.loads(dump_model(pendulum()))
    data["joints"][0]["inertia"]["mass"] = 0.0
    with pytest.raises(SingularMassMatrix):
        forward_dynamics(parse_model(json.dumps(data)), np.zeros(1), np.zeros(1), np.zeros(1))
