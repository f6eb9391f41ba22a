"""Forward kinematics pass; every per-body quantity is in the ground frame."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import KinematicTree, RobotState
from .spatial_algebra import SpatialTransform, cross3, cross_motion_rows


@dataclass(frozen=True, eq=False)
class KinematicsCache:
    """Ground-frame kinematics of one state.

    Column-indexed arrays (``S``, ``Phid``, ``Psid``, ``Psidd``) are 6 x nv and
    share the velocity layout of the tree; body-indexed arrays are N x 6.
    """

    tree: KinematicTree
    rotations: np.ndarray    # N x 3 x 3, body axes in world coordinates
    origins: np.ndarray      # N x 3, body origin in world coordinates
    S: np.ndarray
    v: np.ndarray
    a: np.ndarray
    Phid: np.ndarray
    Psid: np.ndarray
    Psidd: np.ndarray
    a0: np.ndarray

    def X0(self, i: int) -> SpatialTransform:
        """Body-to-world transform of body i (1-based)."""
        R, p = self.rotations[i - 1], self.origins[i - 1]
        return SpatialTransform(R, -R.T @ p)

    def cols(self, i: int) -> slice:
        o = self.tree.dof_offset(i)
        return slice(o, o + self.tree.joints[i - 1].nv)

    def v_parent(self, i: int) -> np.ndarray:
        p = self.tree.parent(i)
        return self.v[p - 1] if p else np.zeros(6)

    def a_parent(self, i: int) -> np.ndarray:
        p = self.tree.parent(i)
        return self.a[p - 1] if p else self.a0


def forward_pass(tree: KinematicTree, state: RobotState, gravity: np.ndarray | None = None) -> KinematicsCache:
    """Velocities, accelerations and motion-subspace rates of every body.

    Gravity enters as the base acceleration ``a0 = -g``; pass ``gravity`` to
    override the model's vector (zeros for the gravity-free variants).
    """
    state.check(tree)
    if not (np.all(np.isfinite(state.q)) and np.all(np.isfinite(state.qd)) and np.all(np.isfinite(state.qdd))):
        raise ValueError("non-finite state")
    g = tree.gravity if gravity is None else np.asarray(gravity, dtype=float)
    a0 = np.concatenate((np.zeros(3), -g))
    N = tree.N
    rotations = np.empty((N, 3, 3))
    origins = np.empty((N, 3))
    Rl, pl = tree.local_poses(state.q)
    for b, par in enumerate(tree.parent_index.tolist()):
        if par < 0:
            rotations[b], origins[b] = Rl[b], pl[b]
        else:
            R_par = rotations[par]
            rotations[b] = R_par @ Rl[b]
            origins[b] = origins[par] + R_par @ pl[b]

    # world-frame subspaces, one row per DoF
    jnt = tree.dof_joint
    body_S = tree.subspaces
    R_col = rotations[jnt]
    ang = np.einsum("cij,jc->ci", R_col, body_S[:3])
    lin = np.einsum("cij,jc->ci", R_col, body_S[3:]) + cross3(origins[jnt], ang)
    rows = np.hstack((ang, lin))

    # v_i and a_i are sums of joint terms over the root path
    A = tree.ancestor_matrix
    vJ = np.zeros((N, 6))
    np.add.at(vJ, jnt, rows * state.qd[:, None])
    v = A.T @ vJ
    aJ = np.zeros((N, 6))
    np.add.at(aJ, jnt, rows * state.qdd[:, None])
    a = a0 + A.T @ (aJ + cross_motion_rows(v, vJ))

    par = tree.parent_index[jnt]
    v_par = np.where(par[:, None] >= 0, v[par], 0.0)
    a_par = np.where(par[:, None] >= 0, a[par], a0)
    psid = cross_motion_rows(v_par, rows)
    S = np.ascontiguousarray(rows.T)
    Phid = np.ascontiguousarray(cross_motion_rows(v[jnt], rows).T)
    Psidd = np.ascontiguousarray((cross_motion_rows(a_par, rows) + cross_motion_rows(v_par, psid)).T)
    Psid = np.ascontiguousarray(psid.T)
    return KinematicsCache(tree, rotations, origins, S, v, a, Phid, Psid, Psidd, a0)
