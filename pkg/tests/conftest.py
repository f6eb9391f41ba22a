import numpy as np
import pytest

from rbdderiv.model import joint_kinematics, random_model, random_state
from rbdderiv.spatial_algebra import SpatialTransform, compose, crf, crm, inverse, spatial_inertia, xform_force


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=[(6, 3, 0.0), (8, 11, 0.4), (5, 17, 1.0)], ids=["chain6", "tree8", "star5"])
def tree_and_state(request):
    N, seed, branch = request.param
    tree = random_model(N, seed, branch)
    return tree, random_state(tree, seed + 1)


def body_frame_pass(tree, state, gravity=None):
    """Textbook body-frame recursion: per body (X from world to body, v, a) in body coordinates."""
    g = tree.gravity if gravity is None else np.asarray(gravity, dtype=float)
    out = []
    for i in range(1, tree.N + 1):
        j = tree.joints[i - 1]
        XJ, S = joint_kinematics(j, tree.joint_q(state.q, i))
        X_up = compose(tree.placement(i), XJ)
        cols = tree.dofs(i)
        qd, qdd = state.qd[cols.start:cols.stop], state.qdd[cols.start:cols.stop]
        p = tree.parent(i)
        if p:
            X0p, vp, ap = out[p - 1][:3]
        else:
            X0p, vp, ap = SpatialTransform.identity(), np.zeros(6), np.concatenate((np.zeros(3), -g))
        Xm = X_up.motion_matrix()
        v = Xm @ vp + S @ qd
        a = Xm @ ap + S @ qdd + crm(v) @ (S @ qd)
        out.append((compose(X0p, X_up), v, a, X_up, S))
    return out


def body_frame_rnea(tree, state, fext=None, gravity=None):
    """Joint forces from the body-frame recursion; fext are world-frame spatial forces."""
    bodies = body_frame_pass(tree, state, gravity)
    f = []
    for i, (X0, v, a, _, _) in enumerate(bodies, start=1):
        I = spatial_inertia(tree.masses[i - 1], tree.coms[i - 1], _rot_inertia(tree, i))
        fi = I @ a + crf(v) @ I @ v
        if fext is not None:
            fi = fi - xform_force(X0, fext[i - 1])
        f.append(fi)
    tau = np.zeros(tree.nv)
    for i in range(tree.N, 0, -1):
        X_up, S = bodies[i - 1][3], bodies[i - 1][4]
        cols = tree.dofs(i)
        tau[cols.start:cols.stop] = S.T @ f[i - 1]
        p = tree.parent(i)
        if p:
            f[p - 1] = f[p - 1] + xform_force(inverse(X_up), f[i - 1])
    return tau


def _rot_inertia(tree, i):
    ixx, iyy, izz, ixy, ixz, iyz = tree.inertia_params[i - 1]
    return np.array([[ixx, ixy, ixz], [ixy, iyy, iyz], [ixz, iyz, izz]])
