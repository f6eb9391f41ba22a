"""First-order partial derivatives of inverse dynamics, free and with point contacts.

Rows index the output joint force, columns the perturbed coordinate. Each
body i visits its ancestors j <= i once and fills both the (i, j) and the
(j, i) blocks.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contact import ContactSpec, _pt, contact_wrenches
from .dynamics import DynamicsCache, dynamics_cache
from .kinematics import forward_pass
from .model import KinematicTree, RobotState
from .spatial_algebra import crf_bar, crf_bar_batch, cross3


@dataclass(frozen=True)
class FirstOrderDerivs:
    dtau_dq: np.ndarray
    dtau_dqd: np.ndarray
    visits: int = 0


def fo_from_cache(dyn: DynamicsCache, with_fext: bool = False) -> FirstOrderDerivs:
    kin = dyn.kin
    tree = kin.tree
    nv = tree.nv
    S, Psid, Psidd, Phid = kin.S, kin.Psid, kin.Psidd, kin.Phid
    jnt = tree.dof_joint
    IC, BC = dyn.IC[jnt], dyn.BC[jnt]
    # per-column operands, so each body only needs one product per block
    St = S.T
    SB = np.einsum("rc,cri->ci", S, BC)
    SI = np.einsum("rc,cri->ci", S, IC)
    left_q = np.hstack((SB, SI))
    right_q = np.vstack((2 * Psid, Psidd))
    if with_fext:
        left_q = np.hstack((left_q, np.einsum("rc,cri->ci", S, crf_bar_batch(dyn.fextC)[jnt])))
        right_q = np.vstack((right_q, S))
    left_qd = np.hstack((2 * SB, SI))
    right_qd = np.vstack((S, Psid + Phid))
    fCS = np.einsum("cij,jc->ic", crf_bar_batch(dyn.fC)[jnt], S)
    down_q = (np.einsum("cij,jc->ic", 2 * BC, Psid) + np.einsum("cij,jc->ic", IC, Psidd) + fCS)
    down_qd = np.einsum("cij,jc->ic", 2 * BC, S) + np.einsum("cij,jc->ic", IC, Psid + Phid)

    dq = np.zeros((nv, nv))
    dqd = np.zeros((nv, nv))
    visits = 0
    for b in range(tree.N):
        cols = kin.cols(b + 1)
        anc = tree.ancestor_dofs[b]
        ni = cols.stop - cols.start
        sanc = anc[:-ni]
        visits += len(tree.ancestors(b + 1))
        # j <= i: d tau_i / d q_j and d tau_i / d qd_j
        dq[cols, anc] = left_q[cols] @ right_q[:, anc]
        dqd[cols, anc] = left_qd[cols] @ right_qd[:, anc]
        if len(sanc):
            # j < i: d tau_j / d q_i and d tau_j / d qd_i
            Sj = St[sanc]
            dq[sanc, cols] = Sj @ down_q[:, cols]
            dqd[sanc, cols] = Sj @ down_qd[:, cols]
    return FirstOrderDerivs(dq, dqd, visits)


def id_fo(tree: KinematicTree, state: RobotState, fext: np.ndarray | None = None,
          gravity: np.ndarray | None = None) -> FirstOrderDerivs:
    """d tau / d q and d tau / d qd at a state.

    ``fext`` are world-frame forces fixed in the ground frame (they do not
    move with the bodies).
    """
    dyn = dynamics_cache(forward_pass(tree, state, gravity), fext)
    return fo_from_cache(dyn, with_fext=fext is not None)


def _contact_terms(tree: KinematicTree, kin, spec: ContactSpec, lam: np.ndarray):
    """Per contact: (path columns, world point, force, Jacobian columns)."""
    F3 = spec.full_forces(lam)
    out = []
    for c, f in zip(spec.contacts, F3):
        b = c.body - 1
        point = kin.origins[b] + kin.rotations[b] @ np.asarray(c.point, dtype=float)
        A = tree.ancestor_dofs[b]
        out.append((A, point, f, _pt(kin.S[:, A], point)))
    return out


def fext_cumulative_fo(tree: KinematicTree, q: np.ndarray, spec: ContactSpec, lam: np.ndarray) -> np.ndarray:
    """d fextC_i / d q for every body i, shape (N, 6, nv); only the moment rows are nonzero."""
    spec.validate(tree)
    zeros = np.zeros(tree.nv)
    kin = forward_pass(tree, RobotState(q, zeros, zeros))
    out = np.zeros((tree.N, 6, tree.nv))
    for (A, point, f, J), c in zip(_contact_terms(tree, kin, spec, lam), spec.contacts):
        block = -cross3(f[:, None], J, axis=0)
        for i in tree.ancestors(c.body):
            out[i - 1][:3, A] += block
    return out


def contact_fo_correction(tree: KinematicTree, kin, spec: ContactSpec, lam: np.ndarray) -> np.ndarray:
    """Change of d tau / d q caused by contact forces held fixed."""
    nv = tree.nv
    corr = np.zeros((nv, nv))
    joint_of = tree.dof_joint
    for A, point, f, J in _contact_terms(tree, kin, spec, lam):
        SA = kin.S[:, A]
        F = np.concatenate((cross3(point, f), f))
        dF_top = -cross3(f[:, None], J, axis=0)          # d fextC / d q_b, moment rows
        jA = joint_of[A]
        below = jA[None, :] <= jA[:, None]                 # column joint <= row joint
        block = -SA[:3].T @ dF_top + below * (SA.T @ crf_bar(F) @ SA)
        corr[np.ix_(A, A)] += block
    return corr


def id_fo_constrained(tree: KinematicTree, state: RobotState, spec: ContactSpec,
                      lam: np.ndarray, gravity: np.ndarray | None = None) -> FirstOrderDerivs:
    """First-order derivatives of q -> ID(q, qd, qdd) - Jc(q)^T lam at fixed lam."""
    spec.validate(tree)
    kin = forward_pass(tree, state, gravity)
    base = fo_from_cache(dynamics_cache(kin))
    corr = contact_fo_correction(tree, kin, spec, lam)
    return FirstOrderDerivs(base.dtau_dq + corr, base.dtau_dqd, base.visits)


def constrained_id(tree: KinematicTree, state: RobotState, spec: ContactSpec, lam: np.ndarray,
                   gravity: np.ndarray | None = None) -> np.ndarray:
    """ID(q, qd, qdd) - Jc^T lam, evaluated through the external-force path of rnea."""
    kin = forward_pass(tree, state, gravity)
    return dynamics_cache(kin, contact_wrenches(kin, spec, lam)).tau


def dMdq_times(tree: KinematicTree, q: np.ndarray, m: np.ndarray) -> np.ndarray:
    """d(M(q) m)/dq [row, q index] via the zero-velocity, zero-gravity first-order pass."""
    state = RobotState(q, np.zeros(tree.nv), np.asarray(m, dtype=float))
    return id_fo(tree, state, gravity=np.zeros(3)).dtau_dq
