"""Point contacts: Jacobians, drift terms and their derivatives.

All derivatives with respect to q are directional derivatives along the
motion-subspace columns (the tangent retraction of the model). Second
derivative tensors are indexed [row, first variable, second variable] and
hold the second variable's derivative of the first derivative.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .kinematics import KinematicsCache, forward_pass
from .model import Contact, KinematicTree, ModelError, RobotState
from .spatial_algebra import cross3


@dataclass(frozen=True, eq=False)
class ContactSpec:
    """Point contacts on bodies (1-based ids) with body-frame points.

    ``axes`` selects which world-frame directions are constrained; the
    default is all three.
    """

    contacts: tuple[Contact, ...]

    @classmethod
    def from_tree(cls, tree: KinematicTree) -> "ContactSpec":
        return cls(tuple(tree.contacts))

    @classmethod
    def single(cls, body: int, point, axes=(0, 1, 2)) -> "ContactSpec":
        return cls((Contact(int(body), np.asarray(point, dtype=float), tuple(axes)),))

    @property
    def n_c(self) -> int:
        return sum(len(c.axes) for c in self.contacts)

    def validate(self, tree: KinematicTree) -> None:
        for c in self.contacts:
            if not 1 <= c.body <= tree.N:
                raise ModelError(f"contact references nonexistent body {c.body}")
            if not c.axes or any(a not in (0, 1, 2) for a in c.axes) or len(set(c.axes)) != len(c.axes):
                raise ModelError(f"contact on body {c.body} has invalid axes {c.axes}")

    def rows(self) -> list[tuple[int, int]]:
        """(contact index, world axis) of every constraint row."""
        return [(ci, ax) for ci, c in enumerate(self.contacts) for ax in c.axes]

    def full_forces(self, lam: np.ndarray) -> np.ndarray:
        """Per-contact world 3-vectors from the stacked row forces."""
        lam = np.asarray(lam, dtype=float)
        if lam.shape != (self.n_c,):
            raise ValueError(f"expected {self.n_c} contact forces, got {lam.shape}")
        out = np.zeros((len(self.contacts), 3))
        for r, (ci, ax) in enumerate(self.rows()):
            out[ci, ax] = lam[r]
        return out


# columnwise helpers on 6 x ... and 3 x ... arrays
def _mx(u: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Motion cross product u x w on leading axis 6, broadcasting the rest."""
    return np.concatenate((cross3(u[:3], w[:3], axis=0),
                           cross3(u[:3], w[3:], axis=0) + cross3(u[3:], w[:3], axis=0)))


def _x3(u: np.ndarray, w: np.ndarray) -> np.ndarray:
    return cross3(u, w, axis=0)


def _pt(u: np.ndarray, point: np.ndarray) -> np.ndarray:
    """Linear velocity at a world point for spatial motion vectors u."""
    pshape = (3,) + (1,) * (u.ndim - 1)
    return u[3:] + _x3(u[:3], point.reshape(pshape))


@dataclass(frozen=True, eq=False)
class PointKinematics:
    """Derivatives of one contact point's velocity and acceleration.

    Built from a gravity-free kinematics cache. Arrays cover only the
    columns ``cols`` (the ancestors of the contact body); every other
    column is identically zero.
    """

    kin: KinematicsCache
    body: int
    point_body: np.ndarray

    @cached_property
    def cols(self) -> np.ndarray:
        return self.kin.tree.ancestor_dofs[self.body - 1]

    @cached_property
    def point(self) -> np.ndarray:
        b = self.body - 1
        return self.kin.origins[b] + self.kin.rotations[b] @ self.point_body

    @cached_property
    def _cols_data(self):
        kin, cols = self.kin, self.cols
        tree = kin.tree
        joint = tree.dof_joint[cols]
        vpar = np.zeros((6, len(cols)))
        for n, j in enumerate(joint):
            p = tree.parent_index[j]
            if p >= 0:
                vpar[:, n] = kin.v[p]
        le = joint[None, :] <= joint[:, None]    # [b, c]: joint(c) <= joint(b)
        lt = joint[None, :] < joint[:, None]
        return kin.S[:, cols], kin.Psid[:, cols], kin.Psidd[:, cols], kin.Phid[:, cols], vpar, le, lt

    @cached_property
    def v(self) -> np.ndarray:
        return self.kin.v[self.body - 1]

    @cached_property
    def a(self) -> np.ndarray:
        return self.kin.a[self.body - 1]

    @cached_property
    def J(self) -> np.ndarray:
        return _pt(self._cols_data[0], self.point)

    @cached_property
    def pdot(self) -> np.ndarray:
        return _pt(self.v[:, None], self.point)[:, 0]

    @cached_property
    def acc(self) -> np.ndarray:
        """Classical point acceleration J qdd + Jdot qd."""
        return _pt(self.a[:, None], self.point)[:, 0] + cross3(self.v[:3], self.pdot)

    # first derivatives along q
    @cached_property
    def dv(self) -> np.ndarray:
        s, _, _, _, vpar, _, _ = self._cols_data
        return _mx(vpar - self.v[:, None], s)

    @cached_property
    def da(self) -> np.ndarray:
        s, psid, psidd, _, _, _, _ = self._cols_data
        return psidd - _mx(self.v[:, None], psid) - _mx(self.a[:, None], s)

    @cached_property
    def dpdot(self) -> np.ndarray:
        return _pt(self.dv, self.point) + _x3(self.v[:3, None], self.J)

    @cached_property
    def dacc(self) -> np.ndarray:
        w, alpha = self.v[:3, None], self.a[:3, None]
        return (_pt(self.da, self.point) + _x3(alpha, self.J) + _x3(self.dv[:3], self.pdot[:, None])
                + _x3(w, self.dpdot))

    # second derivatives along q; axis 1 is the first variable b, axis 2 the second c
    @cached_property
    def Xs(self) -> np.ndarray:
        s, _, _, _, _, le, _ = self._cols_data
        return le[None] * _mx(s[:, None, :], s[:, :, None])

    @cached_property
    def XJ(self) -> np.ndarray:
        s = self._cols_data[0]
        return _pt(self.Xs, self.point) + _x3(s[:3, :, None], self.J[:, None, :])

    @cached_property
    def Xdv(self) -> np.ndarray:
        s, _, _, _, vpar, _, lt = self._cols_data
        Xvpar = lt[None] * _mx(vpar[:, None, :] - vpar[:, :, None], s[:, None, :])
        return (_mx(Xvpar - self.dv[:, None, :], s[:, :, None])
                + _mx((vpar - self.v[:, None])[:, :, None], self.Xs))

    @cached_property
    def Xda(self) -> np.ndarray:
        s, psid, psidd, _, _, le, _ = self._cols_data
        Sb, Sc = s[:, :, None], s[:, None, :]
        Pb, Pc = psid[:, :, None], psid[:, None, :]
        Xpsid = le[None] * (_mx(Pc, Sb) + _mx(Sc, Pb))
        Xpsidd = le[None] * (_mx(psidd[:, None, :], Sb) + 2 * _mx(Pc, Pb) + _mx(Sc, psidd[:, :, None]))
        v, a = self.v[:, None, None], self.a[:, None, None]
        return (Xpsidd - _mx(self.dv[:, None, :], Pb) - _mx(v, Xpsid)
                - _mx(self.da[:, None, :], Sb) - _mx(a, self.Xs))

    @cached_property
    def ddpdot(self) -> np.ndarray:
        w = self.v[:3, None, None]
        J, dv = self.J, self.dv
        return (_pt(self.Xdv, self.point) + _x3(dv[:3, :, None], J[:, None, :])
                + _x3(dv[:3, None, :], J[:, :, None]) + _x3(w, self.XJ))

    @cached_property
    def ddacc(self) -> np.ndarray:
        w, alpha = self.v[:3, None, None], self.a[:3, None, None]
        J, dv, da, dpd = self.J, self.dv, self.da, self.dpdot
        return (_pt(self.Xda, self.point)
                + _x3(da[:3, :, None], J[:, None, :]) + _x3(da[:3, None, :], J[:, :, None])
                + _x3(alpha, self.XJ)
                + _x3(self.Xdv[:3], self.pdot[:, None, None])
                + _x3(dv[:3, :, None], dpd[:, None, :]) + _x3(dv[:3, None, :], dpd[:, :, None])
                + _x3(w, self.ddpdot))

    # velocity derivatives
    @cached_property
    def _ea(self) -> np.ndarray:
        s, psid, _, phid, _, _, _ = self._cols_data
        return psid + phid - _mx(self.v[:, None], s)

    @cached_property
    def dacc_dqd(self) -> np.ndarray:
        s = self._cols_data[0]
        return _pt(self._ea, self.point) + _x3(s[:3], self.pdot[:, None]) + _x3(self.v[:3, None], self.J)

    @cached_property
    def ddacc_dqd2(self) -> np.ndarray:
        s, _, _, _, _, le, lt = self._cols_data
        sxs = _mx(s[:, None, :], s[:, :, None])       # s_c x s_b at [b, c]
        coef = lt.astype(float) + le.astype(float) - 1.0
        J = self.J
        return (_pt(coef[None] * sxs, self.point) + _x3(s[:3, :, None], J[:, None, :])
                + _x3(s[:3, None, :], J[:, :, None]))

    @cached_property
    def ddacc_dqd_dq(self) -> np.ndarray:
        """[row, qd index b, q index c]."""
        s, psid, _, phid, _, le, _ = self._cols_data
        Sb, Sc = s[:, :, None], s[:, None, :]
        Xpsid = le[None] * (_mx(psid[:, None, :], Sb) + _mx(Sc, psid[:, :, None]))
        Xphid = le[None] * (_mx(psid[:, None, :], Sb) + _mx(Sc, phid[:, :, None]))
        Xea = Xpsid + Xphid - _mx(self.dv[:, None, :], Sb) - _mx(self.v[:, None, None], self.Xs)
        J, ea = self.J, self._ea
        w = self.v[:3, None, None]
        return (_pt(Xea, self.point) + _x3(ea[:3, :, None], J[:, None, :])
                + _x3(self.Xs[:3], self.pdot[:, None, None]) + _x3(s[:3, :, None], self.dpdot[:, None, :])
                + _x3(self.dv[:3, None, :], J[:, :, None]) + _x3(w, self.XJ))

    def d2J(self) -> np.ndarray:
        """Second derivative of every Jacobian column, [row, column l, b, c].

        Independent product-rule expansion; dense in the ancestor columns,
        so meant for small models.
        """
        s = self._cols_data[0]
        le = self._cols_data[5]
        Xs = self.Xs                                            # [6, l, b] = X_b s_l
        J, XJ = self.J, self.XJ                                 # XJ [3, l, b] = X_b J_l
        # X_c X_b s_l = [b <= l] ((X_c s_b) x s_l + s_b x (X_c s_l)), indexed [l, b, c]
        t1 = _mx(Xs[:, None, :, :], s[:, :, None, None])
        t2 = _mx(s[:, None, :, None], Xs[:, :, None, :])
        XXs = le[None, :, :, None] * (t1 + t2)
        out = (_pt(XXs, self.point)
               + _x3(Xs[:3, :, :, None], J[:, None, None, :])
               + _x3(Xs[:3, :, None, :], J[:, None, :, None])
               + _x3(s[:3, :, None, None], XJ[:, None, :, :]))
        return out


def _gravity_free_kin(tree: KinematicTree, q, qd, qdd=None) -> KinematicsCache:
    qdd = np.zeros(tree.nv) if qdd is None else qdd
    return forward_pass(tree, RobotState(q, qd, qdd), np.zeros(3))


def point_kinematics(kin: KinematicsCache, spec: ContactSpec) -> list[PointKinematics]:
    return [PointKinematics(kin, c.body, np.asarray(c.point, dtype=float)) for c in spec.contacts]


def _stack_rows(spec: ContactSpec, pks: list[PointKinematics], attr: str, nv: int) -> np.ndarray:
    """Assemble selected world rows of a per-contact array into (n_c, nv, ...)."""
    blocks = []
    for c, pk in zip(spec.contacts, pks):
        val = getattr(pk, attr)
        full = np.zeros((3,) + (nv,) * (val.ndim - 1))
        full[np.ix_(range(3), *([pk.cols] * (val.ndim - 1)))] = val
        blocks.append(full[list(c.axes)])
    return np.concatenate(blocks) if blocks else np.zeros((0,) + (nv,) * 1)


def _stack_vec(spec: ContactSpec, pks: list[PointKinematics], attr: str) -> np.ndarray:
    return np.concatenate([getattr(pk, attr)[list(c.axes)] for c, pk in zip(spec.contacts, pks)]) \
        if spec.contacts else np.zeros(0)


@dataclass(frozen=True, eq=False)
class ContactDerivs:
    """Contact Jacobian, drift and their derivatives at one (q, qd, qdd).

    ``acc`` is J qdd + Jdot qd; with qdd = 0 it is the drift Jdot qd.
    """

    spec: ContactSpec
    points: list
    nv: int

    @cached_property
    def Jc(self) -> np.ndarray:
        return self._t("J", 1)

    @cached_property
    def acc(self) -> np.ndarray:
        return _stack_vec(self.spec, self.points, "acc")

    @cached_property
    def pdot(self) -> np.ndarray:
        return _stack_vec(self.spec, self.points, "pdot")

    def _t(self, attr: str, order: int) -> np.ndarray:
        if not self.spec.contacts:
            return np.zeros((0,) + (self.nv,) * order)
        return _stack_rows(self.spec, self.points, attr, self.nv)

    @cached_property
    def dJc_dq(self) -> np.ndarray:
        """[row, column b, q index c] = X_c J_b."""
        return self._t("XJ", 2)

    @cached_property
    def dacc_dq(self) -> np.ndarray:
        return self._t("dacc", 1)

    @cached_property
    def dacc_dqd(self) -> np.ndarray:
        return self._t("dacc_dqd", 1)

    @cached_property
    def dpdot_dq(self) -> np.ndarray:
        return self._t("dpdot", 1)

    @cached_property
    def d2acc_dq2(self) -> np.ndarray:
        return self._t("ddacc", 2)

    @cached_property
    def d2acc_dqd2(self) -> np.ndarray:
        return self._t("ddacc_dqd2", 2)

    @cached_property
    def d2acc_dqd_dq(self) -> np.ndarray:
        return self._t("ddacc_dqd_dq", 2)

    @cached_property
    def d2pdot_dq2(self) -> np.ndarray:
        return self._t("ddpdot", 2)

    def d2Jc_dq2(self) -> np.ndarray:
        """[row, column l, b, c]; dense, small models only."""
        if not self.spec.contacts:
            return np.zeros((0,) + (self.nv,) * 3)
        blocks = []
        for c, pk in zip(self.spec.contacts, self.points):
            full = np.zeros((3,) + (self.nv,) * 3)
            full[np.ix_(range(3), pk.cols, pk.cols, pk.cols)] = pk.d2J()
            blocks.append(full[list(c.axes)])
        return np.concatenate(blocks)


def contact_derivs(tree: KinematicTree, q, qd, spec: ContactSpec, qdd=None) -> ContactDerivs:
    spec.validate(tree)
    kin = _gravity_free_kin(tree, q, qd, qdd)
    return ContactDerivs(spec, point_kinematics(kin, spec), tree.nv)


@dataclass(frozen=True, eq=False)
class ContactJacobian:
    """Contact Jacobian and drift Jdot qd at (q, qd); derivatives are computed on first use."""

    derivs: ContactDerivs

    @property
    def Jc(self) -> np.ndarray:
        return self.derivs.Jc

    @property
    def Jdot_qd(self) -> np.ndarray:
        return self.derivs.acc

    @property
    def dJc_dq(self) -> np.ndarray:
        return self.derivs.dJc_dq

    @property
    def d_Jdotqd_dq(self) -> np.ndarray:
        return self.derivs.dacc_dq

    @property
    def d_Jdotqd_dqd(self) -> np.ndarray:
        return self.derivs.dacc_dqd

    @property
    def d2_Jdotqd(self) -> dict:
        d = self.derivs
        return {"q_q": d.d2acc_dq2, "qd_qd": d.d2acc_dqd2, "qd_q": d.d2acc_dqd_dq}

    def d2Jc_dq2(self) -> np.ndarray:
        return self.derivs.d2Jc_dq2()


def contact_jacobian(tree: KinematicTree, q, qd, spec: ContactSpec) -> ContactJacobian:
    """Contact Jacobian, drift Jdot qd and their derivatives at (q, qd)."""
    return ContactJacobian(contact_derivs(tree, q, qd, spec))


def contact_wrenches(kin: KinematicsCache, spec: ContactSpec, lam: np.ndarray) -> np.ndarray:
    """Per-body world spatial forces [p x f; f] produced by contact forces."""
    F3 = spec.full_forces(lam)
    out = np.zeros((kin.tree.N, 6))
    for c, f in zip(spec.contacts, F3):
        b = c.body - 1
        p = kin.origins[b] + kin.rotations[b] @ np.asarray(c.point, dtype=float)
        out[b, :3] += cross3(p, f)
        out[b, 3:] += f
    return out


def default_contact_spec(tree: KinematicTree, q: np.ndarray, min_ratio: float = 0.1) -> ContactSpec:
    """One point contact at the centre of mass of the deepest body.

    World axes are kept greedily while the selected Jacobian rows stay well
    conditioned (smallest singular value at least ``min_ratio`` times the
    largest), so shallow or degenerate bodies get fewer constrained directions.
    """
    body = max(range(1, tree.N + 1), key=lambda i: (len(tree.ancestor_dofs[i - 1]), i))
    point = np.array(tree.coms[body - 1], dtype=float)
    kin = _gravity_free_kin(tree, q, np.zeros(tree.nv))
    J = PointKinematics(kin, body, point).J
    axes: list[int] = []
    for ax in range(3):
        trial = axes + [ax]
        sv = np.linalg.svd(J[trial], compute_uv=False)
        if len(sv) == len(trial) and sv[-1] > min_ratio * max(sv[0], 1e-12):
            axes = trial
    if not axes:
        raise ModelError("no contact direction is controllable from the joints")
    return ContactSpec.single(body, point, axes)
