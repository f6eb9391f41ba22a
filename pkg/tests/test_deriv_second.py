import os
import subprocess
import sys

import numpy as np
import pytest

from helpers import case, close, fd_cfg
from rbdderiv import deriv_second
from rbdderiv.deriv_first import dMdq_times, id_fo, id_fo_constrained
from rbdderiv.deriv_second import id_so, id_so_constrained, idsoza_c, triple_visits
from rbdderiv.dynamics import crba, rnea
from rbdderiv.model import RobotState, pendulum
from rbdderiv.oracle import FdConfig, fd_hessian, fd_jacobian
from rbdderiv.spatial_tensor import rot23


def test_pendulum_hessian():
    z = np.zeros(1)
    for q in (0.0, 0.7):
        so = id_so(pendulum(), RobotState([q], z, z))
        assert abs(so.d2tau_dq2[0, 0, 0] + 9.81 * np.cos(q)) <= 1e-12
        assert so.dM_dq[0, 0, 0] == 0


@pytest.mark.parametrize("seed", [1, 7])
def test_matches_fd_of_first_order(seed):
    tree, s, *_ = case(8, seed)
    so = id_so(tree, s)
    cfg = fd_cfg(tree)
    Hq = fd_jacobian(lambda q: id_fo(tree, RobotState(q, s.qd, s.qdd)).dtau_dq, s.q, cfg, ndir=tree.nv)
    Hqd = fd_jacobian(lambda qd: id_fo(tree, RobotState(s.q, qd, s.qdd)).dtau_dqd, s.qd)
    Hx = fd_jacobian(lambda q: id_fo(tree, RobotState(q, s.qd, s.qdd)).dtau_dqd, s.q, cfg, ndir=tree.nv)
    dM = fd_jacobian(lambda q: crba(tree, q), s.q, cfg, ndir=tree.nv)
    close(so.d2tau_dq2, Hq, 1e-7)
    close(so.d2tau_dqd2, Hqd, 1e-7)
    close(so.d2tau_cross, Hx, 1e-7)
    close(so.dM_dq, dM, 1e-6)


def test_double_fd_sanity():
    tree, s, *_ = case(4, 3)
    H = fd_hessian(lambda qd: rnea(tree, RobotState(s.q, qd, s.qdd))[0], s.qd, FdConfig())
    close(id_so(tree, s).d2tau_dqd2, H, 5e-4)


def test_symmetric_copies_are_exact():
    tree, s, *_ = case(9, 2)
    so = id_so(tree, s)
    jnt = tree.dof_joint
    distinct = jnt[None, :, None] != jnt[None, None, :]
    for T in (so.d2tau_dq2, so.d2tau_dqd2):
        np.testing.assert_array_equal(np.where(distinct, T, 0), np.where(distinct, rot23(T), 0))


def test_velocity_hessian_independent_of_velocity(rng):
    tree, s, *_ = case(9, 4)
    a = id_so(tree, s).d2tau_dqd2
    b = id_so(tree, RobotState(s.q, rng.normal(size=tree.nv) * 5, s.qdd)).d2tau_dqd2
    assert np.abs(a - b).max() <= 1e-14


def test_mass_derivative_zero_blocks():
    tree, s, *_ = case(10, 5, branch=0.4)
    dM = id_so(tree, s).dM_dq
    jnt = tree.dof_joint
    for r, c, k in np.ndindex(dM.shape):
        j, i, kk = jnt[r] + 1, jnt[c] + 1, jnt[k] + 1
        if kk in tree.ancestors(j) and j in tree.ancestors(i):
            assert dM[r, c, k] == 0.0


def test_dMdq_times_equals_dense_contraction(rng):
    tree, s, *_ = case(7, 6)
    m = rng.normal(size=tree.nv)
    dense = np.einsum("ijk,j->ik", id_so(tree, s).dM_dq, m)
    assert np.abs(dMdq_times(tree, s.q, m) - dense).max() <= 1e-10


def test_constrained_variant():
    tree, s, spec, lam, _ = case(7, 8)
    zero = id_so_constrained(tree, s, spec, np.zeros_like(lam))
    np.testing.assert_array_equal(zero.d2tau_dq2, id_so(tree, s).d2tau_dq2)
    so = id_so_constrained(tree, s, spec, lam)
    np.testing.assert_array_equal(so.d2tau_dqd2, zero.d2tau_dqd2)
    H = fd_jacobian(lambda q: id_fo_constrained(tree, RobotState(q, s.qd, s.qdd), spec, lam).dtau_dq, s.q,
                    fd_cfg(tree), ndir=tree.nv)
    close(so.d2tau_dq2, H, 1e-7)


def test_zero_algorithm_tensor(rng):
    tree, s, spec, lam, _ = case(6, 10)
    m = rng.normal(size=tree.nv)
    np.testing.assert_array_equal(idsoza_c(tree, s.q, np.zeros(tree.nv), spec, np.zeros_like(lam)), 0)
    free = fd_jacobian(lambda q: dMdq_times(tree, q, m), s.q, fd_cfg(tree), ndir=tree.nv)
    close(idsoza_c(tree, s.q, m, spec, np.zeros_like(lam)), free, 1e-7)
    z = np.zeros(tree.nv)
    with_c = fd_jacobian(lambda q: id_fo_constrained(tree, RobotState(q, z, m), spec, lam, gravity=np.zeros(3)).dtau_dq,
                         s.q, fd_cfg(tree), ndir=tree.nv)
    close(idsoza_c(tree, s.q, m, spec, lam), with_c, 1e-7)


@pytest.mark.skipif(deriv_second.KERNEL != "cython", reason="compiled kernel not built")
@pytest.mark.parametrize("seed", [0, 3, 9])
def test_kernels_agree(seed):
    tree, s, *_ = case(12, seed, branch=0.4)
    a = id_so(tree, s, kernel="numpy")
    b = id_so(tree, s, kernel="cython")
    for x, y in zip((a.d2tau_dq2, a.d2tau_dqd2, a.d2tau_cross, a.dM_dq), (b.d2tau_dq2, b.d2tau_dqd2, b.d2tau_cross, b.dM_dq)):
        assert np.abs(x - y).max() <= 1e-12 * max(1.0, np.abs(x).max())
    assert a.visits == b.visits


def test_pure_python_switch():
    env = dict(os.environ, RBDDERIV_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from rbdderiv import deriv_second; print(deriv_second.KERNEL)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


def test_triple_visits_on_chain():
    for N in (1, 4, 10):
        tree, *_ = case(N, 2, branch=0.0, kinds=("revolute",))
        assert triple_visits(tree) == N * (N + 1) * (N + 2) // 6


def test_small_tree_raw_double_fd():
    tree, s, *_ = case(3, 11, kinds=("revolute", "prismatic"))
    H = fd_hessian(lambda q: rnea(tree, RobotState(q, s.qd, s.qdd))[0], s.q, FdConfig())
    close(id_so(tree, s).d2tau_dq2, H, 5e-4)
