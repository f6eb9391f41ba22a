"""Second-order partial derivatives of inverse dynamics.

Tensors are (out, first variable, second variable). ``d2tau_cross`` holds
d2 tau / (d qd d q), i.e. axis 2 is the velocity and axis 3 the position;
``rot23`` of it gives the other ordering.

Every DoF ``a`` of body i gets a handful of 6x6 matrices built from i's
composite quantities. The triple loop over (i, j <= i, k <= j) then only
forms small dot products. Two interchangeable loop kernels exist: a compiled
one (``_so_kernel``) and a numpy one vectorized over the ancestor path. Set
``RBDDERIV_PURE_PYTHON=1`` to force the numpy kernel.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .contact import ContactSpec, PointKinematics
from .dynamics import DynamicsCache, dynamics_cache
from .kinematics import forward_pass
from .model import KinematicTree, RobotState
from .spatial_algebra import coriolis_batch, crf_bar_batch, crm_batch, cross3

try:  # pragma: no cover - depends on the build
    if os.environ.get("RBDDERIV_PURE_PYTHON"):
        raise ImportError
    from . import _so_kernel
    KERNEL = "cython"
except ImportError:  # pragma: no cover
    _so_kernel = None
    KERNEL = "numpy"


@dataclass(frozen=True)
class SecondOrderDerivs:
    d2tau_dq2: np.ndarray
    d2tau_dqd2: np.ndarray
    d2tau_cross: np.ndarray
    dM_dq: np.ndarray
    visits: int = 0

    @property
    def d2tau_dq_dqd(self) -> np.ndarray:
        """The cross tensor with the position on axis 2 and the velocity on axis 3."""
        return np.ascontiguousarray(np.transpose(self.d2tau_cross, (0, 2, 1)))


# batched spatial operators, leading axis indexes the vectors
def _mv(M: np.ndarray, V: np.ndarray) -> np.ndarray:
    return np.einsum("nij,nj->ni", M, V)


@dataclass(frozen=True)
class DofTerms:
    """Per-DoF 6x6 matrices and 6-vectors shared by both loop kernels.

    Row n belongs to DoF n and uses the composites of the body that owns it.
    """

    s: np.ndarray
    psid: np.ndarray
    psidd: np.ndarray
    phid: np.ndarray
    BS: np.ndarray      # coriolis matrix of IC along s
    T: np.ndarray       # s x* IC - IC s x  (symmetric)
    C: np.ndarray       # 2 (B[IC, psid] + s x* BC - BC s x)
    FBI: np.ndarray     # (IC s) swapped-force cross
    FBB: np.ndarray     # (BC^T s) swapped-force cross
    FBQ: np.ndarray     # (2 BC s + IC (psid + phid)) swapped-force cross
    G: np.ndarray       # s x* IC + FBI
    FT: np.ndarray      # 2 BC psid + IC psidd + fC swapped-cross s


def dof_terms(dyn: DynamicsCache) -> DofTerms:
    kin = dyn.kin
    jnt = kin.tree.dof_joint
    s = np.ascontiguousarray(kin.S.T)
    pd = np.ascontiguousarray(kin.Psid.T)
    pdd = np.ascontiguousarray(kin.Psidd.T)
    ph = np.ascontiguousarray(kin.Phid.T)
    IC, BC, fC = dyn.IC[jnt], dyn.BC[jnt], dyn.fC[jnt]
    Cm = crm_batch(s)
    Cf = -np.transpose(Cm, (0, 2, 1))
    ICs = _mv(IC, s)
    FBI = crf_bar_batch(ICs)
    T = Cf @ IC - IC @ Cm
    C = 2 * (coriolis_batch(IC, pd) + Cf @ BC - BC @ Cm)
    QT = 2 * _mv(BC, s) + _mv(IC, pd + ph)
    FT = 2 * _mv(BC, pd) + _mv(IC, pdd) + _mv(crf_bar_batch(fC), s)
    return DofTerms(
        s=s, psid=pd, psidd=pdd, phid=ph,
        BS=coriolis_batch(IC, s), T=T, C=C, FBI=FBI,
        FBB=crf_bar_batch(_mv(np.transpose(BC, (0, 2, 1)), s)),
        FBQ=crf_bar_batch(QT), G=Cf @ IC + FBI, FT=FT,
    )


def _fill_numpy(tree: KinematicTree, t: DofTerms, d2q, d2qd, X, dM) -> None:
    jnt = tree.dof_joint
    S, Pd, Pdd, Ph = t.s.T, t.psid.T, t.psidd.T, t.phid.T
    for a in range(tree.nv):
        ji = jnt[a]
        A = tree.ancestor_dofs[ji]
        ix = np.ix_(A, A)
        jA = jnt[A]
        s, pd, pdd, ph = S[:, A], Pd[:, A], Pdd[:, A], Ph[:, A]
        BS, T, C, FBI, FBB, FBQ, G = t.BS[a], t.T[a], t.C[a], t.FBI[a], t.FBB[a], t.FBQ[a], t.G[a]
        LE = jA[None, :] <= jA[:, None]          # [b, c]: joint(c) <= joint(b)
        LT = jA[None, :] < jA[:, None]
        EQ = LE & ~LT
        mB = LT.T                                # [c, b]: joint(c) < joint(b)
        below = jA < ji
        rl, cl = below[:, None], below[None, :]
        sT = s.T
        pdph = pd + ph

        # d2 tau / dq2
        M1A = -2 * pd.T @ BS @ pd - 2 * sT @ FBB @ pd - sT @ FBI @ pdd
        P = sT @ (C @ pd + T @ pdd)
        W = -np.einsum("bji,j->ib", crm_batch(sT), t.FT[a])     # columns crf(s_b) FT
        V1B = P + sT @ W
        d2q[a][ix] += LE * M1A + (LT * M1A).T
        d2q[:, a, :][ix] += mB * V1B + (LE & rl) * P
        d2q[:, :, a][ix] += (mB & cl) * V1B + (LE & rl) * P

        # d2 tau / dqd2
        BSm = sT @ BS @ s
        lo = LT * (-2 * BSm)
        d2qd[a][ix] += lo + lo.T + EQ * (-(sT @ T @ s))
        twoB = 2 * BSm
        d2qd[:, a, :][ix] += (mB & cl) * twoB + (rl & (jA == ji)[None, :]) * (sT @ G @ s) + (LE & rl) * twoB
        d2qd[:, :, a][ix] += (mB & cl) * twoB + (LE & rl) * twoB

        # d2 tau / dqd dq
        BSp = sT @ BS @ pd
        X1B = sT @ (-2 * BS @ pd + 2 * FBI @ pd + 2 * FBB @ s) + pdph.T @ FBI @ s
        X[a][ix] += LE * (-2 * BSp) + mB * X1B
        X[:, a, :][ix] += (LE & rl) * (2 * BSp) + mB * (sT @ (2 * BS @ pd + FBQ @ s))
        Rm = sT @ (C @ s + T @ pdph)
        X[:, :, a][ix] += (LE & rl) * Rm + (mB & cl) * Rm

        # dM / dq
        Fm = sT @ FBI @ s
        dM[:, a, :][ix] += mB * Fm
        dM[a][ix] += mB * Fm
        dM[:, :, a][ix] += (rl & cl) * (sT @ T @ s)


def _fill_cython(tree: KinematicTree, t: DofTerms, d2q, d2qd, X, dM) -> None:
    paths = tree.ancestor_dofs
    ptr = np.zeros(tree.N + 1, dtype=np.intp)
    ptr[1:] = np.cumsum([len(p) for p in paths])
    idx = np.ascontiguousarray(np.concatenate(paths).astype(np.intp))
    _so_kernel.fill(t.s, t.psid, t.psidd, t.phid, t.BS, t.T, t.C, t.FBI, t.FBB, t.FBQ, t.G, t.FT,
                    np.ascontiguousarray(tree.dof_joint, dtype=np.intp), ptr, idx, d2q, d2qd, X, dM)


def triple_visits(tree: KinematicTree) -> int:
    """Number of joint triples (i, j <= i, k <= j) the loop structure touches."""
    return sum(len(tree.ancestors(j)) for i in range(1, tree.N + 1) for j in tree.ancestors(i))


def so_from_cache(dyn: DynamicsCache, kernel: str | None = None) -> SecondOrderDerivs:
    tree = dyn.kin.tree
    nv = tree.nv
    kernel = kernel or KERNEL
    if kernel == "cython" and _so_kernel is None:
        raise RuntimeError("compiled kernel not available")
    t = dof_terms(dyn)
    out = [np.zeros((nv, nv, nv)) for _ in range(4)]
    (_fill_cython if kernel == "cython" else _fill_numpy)(tree, t, *out)
    return SecondOrderDerivs(*out, visits=triple_visits(tree))


def id_so(tree: KinematicTree, state: RobotState, gravity: np.ndarray | None = None,
          kernel: str | None = None) -> SecondOrderDerivs:
    """All second-order partials of inverse dynamics and dM/dq at a state."""
    return so_from_cache(dynamics_cache(forward_pass(tree, state, gravity)), kernel)


def contact_so_correction(tree: KinematicTree, kin, spec: ContactSpec, lam: np.ndarray) -> np.ndarray:
    """Change of d2 tau / dq2 caused by contact forces held fixed."""
    nv = tree.nv
    out = np.zeros((nv, nv, nv))
    jnt = tree.dof_joint
    for c, f in zip(spec.contacts, spec.full_forces(lam)):
        pk = PointKinematics(kin, c.body, np.asarray(c.point, dtype=float))
        A = pk.cols
        jA = jnt[A]
        s = kin.S[:, A]
        n = len(A)
        F = np.concatenate((cross3(pk.point, f), f))
        dF = np.zeros((6, n))
        dF[:3] = cross3(pk.J, f, axis=0)
        dJ = pk.XJ                                        # [3, b, c] = d J_b / d q_c
        L = np.einsum("ix,iyz->xyz", s[:3], cross3(dJ, f[:, None, None], axis=0))
        CF = -np.transpose(crm_batch(s.T), (0, 2, 1))        # crf(s_b)
        FBF = crf_bar_batch(F[None])[0]
        P3 = (np.einsum("ia,bij,jc->abc", s, CF, FBF @ s)
              - np.einsum("ia,bij,jc->abc", s, CF, dF)
              - np.einsum("ia,cij,jb->abc", s, CF, dF) + L)
        P4 = -np.einsum("ix,yij,jz->xyz", s, CF, dF) + L
        x, y, z = jA[:, None, None], jA[None, :, None], jA[None, None, :]
        m3 = (z <= y) & (y <= x)
        m3s = (z < y) & (y <= x)
        m4 = (y <= x) & (x < z)
        m5 = (x < z) & (z <= y)
        m5s = (x < z) & (z < y)
        corr = -(m3 * P3 + np.transpose(m3s * P3, (0, 2, 1))
                 + m4 * P4 + np.transpose(m4 * P4, (0, 2, 1))
                 + m5 * L + np.transpose(m5s * L, (0, 2, 1)))
        out[np.ix_(A, A, A)] += corr
    return out


def id_so_constrained(tree: KinematicTree, state: RobotState, spec: ContactSpec, lam: np.ndarray,
                      gravity: np.ndarray | None = None, kernel: str | None = None) -> SecondOrderDerivs:
    """Second-order partials of q -> ID(q, qd, qdd) - Jc(q)^T lam at fixed lam.

    Contact forces do not depend on qd, so only ``d2tau_dq2`` changes.
    """
    spec.validate(tree)
    kin = forward_pass(tree, state, gravity)
    base = so_from_cache(dynamics_cache(kin), kernel)
    d2q = base.d2tau_dq2 + contact_so_correction(tree, kin, spec, lam)
    return SecondOrderDerivs(d2q, base.d2tau_dqd2, base.d2tau_cross, base.dM_dq, base.visits)


def idsoza_c(tree: KinematicTree, q: np.ndarray, m: np.ndarray, spec: ContactSpec,
             lam: np.ndarray, kernel: str | None = None) -> np.ndarray:
    """d2(M(q) m - Jc(q)^T lam)/dq2 from one zero-velocity, zero-gravity pass."""
    state = RobotState(q, np.zeros(tree.nv), np.asarray(m, dtype=float))
    return id_so_constrained(tree, state, spec, lam, gravity=np.zeros(3), kernel=kernel).d2tau_dq2
