"""Contact-constrained forward dynamics (KKT) and rigid impact, with first and second derivatives.

Both systems solve K [x; -y] = rhs with K = [[M, Jc^T], [Jc, 0]]. Every
derivative differentiates the two block equations and reuses K:

* KKT: ID(q, qd, qdd) - Jc^T lam = S tau and Jc qdd + Jdot qd = 0.
* impact: M (qd+ - qd-) - Jc^T lam_hat = 0 and Jc qd+ = 0.

Tensors are [out, u, w] (differentiate along u, then w).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve

from .contact import ContactJacobian, ContactSpec, contact_derivs, contact_jacobian
from .deriv_first import dMdq_times, id_fo_constrained
from .deriv_forward import MassSolver, dM_times_columns, forward_dynamics
from .deriv_second import id_so_constrained, idsoza_c
from .dynamics import bias_forces, crba
from .model import KinematicTree, RobotState
from .spatial_tensor import rot23

RANK_TOL = 1e-10
KKT_VARS = ("q", "qd", "tau")


class RankDeficientContact(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True, eq=False)
class KktSystem:
    K: np.ndarray
    M: np.ndarray
    Jc: np.ndarray
    Jdot_qd: np.ndarray
    selector: np.ndarray

    @property
    def nv(self) -> int:
        return self.M.shape[0]

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """K^-1 along axis 1 of a vector, matrix or Tensor3 (symmetric indefinite solve)."""
        rhs = np.asarray(rhs, dtype=float)
        flat = rhs.reshape(rhs.shape[0], -1)
        return solve(self.K, flat, assume_a="sym").reshape(rhs.shape)

    def split(self, sol: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Primal block and contact forces (sign flipped back) of a solution."""
        return sol[: self.nv], -sol[self.nv:]


def _selector(nv: int, selector) -> np.ndarray:
    if selector is None:
        return np.eye(nv)
    S = np.asarray(selector, dtype=float)
    if S.ndim == 1:
        S = np.diag(S)
    if S.shape != (nv, nv) or not np.all(np.isin(np.diag(S), (0.0, 1.0))) or np.any(S - np.diag(np.diag(S))):
        raise ValueError("selector must be an nv x nv 0/1 diagonal matrix")
    return S


def kkt_system(tree: KinematicTree, q, qd, spec: ContactSpec, selector=None,
               cj: ContactJacobian | None = None) -> KktSystem:
    spec.validate(tree)
    M = crba(tree, q)
    cj = cj or contact_jacobian(tree, q, qd, spec)
    J = cj.Jc
    nc = J.shape[0]
    if nc:
        MinvJt = MassSolver(M).solve(J.T)
        sv = np.linalg.svd(J @ MinvJt, compute_uv=False)
        if sv[-1] < RANK_TOL:
            raise RankDeficientContact(f"contact Jacobian is rank deficient (min singular value {sv[-1]:.3e})")
    K = np.zeros((tree.nv + nc, tree.nv + nc))
    K[: tree.nv, : tree.nv] = M
    K[: tree.nv, tree.nv:] = J.T
    K[tree.nv:, : tree.nv] = J
    return KktSystem(K, M, J, cj.Jdot_qd, _selector(tree.nv, selector))


def kkt_solve(tree: KinematicTree, q, qd, tau, spec: ContactSpec, selector=None) -> tuple[np.ndarray, np.ndarray]:
    """(qdd, lam) of the contact-constrained equations of motion."""
    if not spec.contacts:
        sel = _selector(tree.nv, selector)
        return forward_dynamics(tree, q, qd, sel @ np.asarray(tau, dtype=float)), np.zeros(0)
    sys_ = kkt_system(tree, q, qd, spec, selector)
    rhs = np.concatenate((sys_.selector @ np.asarray(tau, dtype=float) - bias_forces(tree, q, qd), -sys_.Jdot_qd))
    return sys_.split(sys_.solve(rhs))


@dataclass(frozen=True)
class KktDerivs:
    qdd: np.ndarray
    lam: np.ndarray
    dqdd: dict            # u -> nv x nv
    dlam: dict            # u -> n_c x nv
    d2qdd: dict = field(default_factory=dict)   # (u, w) -> Tensor3
    d2lam: dict = field(default_factory=dict)


def _fo_parts(tree, q, qd, tau, spec, selector):
    sys_ = kkt_system(tree, q, qd, spec, selector)
    rhs = np.concatenate((sys_.selector @ np.asarray(tau, dtype=float) - bias_forces(tree, q, qd), -sys_.Jdot_qd))
    qdd, lam = sys_.split(sys_.solve(rhs))
    fo = id_fo_constrained(tree, RobotState(q, qd, qdd), spec, lam)
    cd = contact_derivs(tree, q, qd, spec, qdd)
    nc = sys_.Jc.shape[0]
    dq, dl = {}, {}
    dq["q"], dl["q"] = sys_.split(-sys_.solve(np.vstack((fo.dtau_dq, cd.dacc_dq))))
    dq["qd"], dl["qd"] = sys_.split(-sys_.solve(np.vstack((fo.dtau_dqd, cd.dacc_dqd))))
    dq["tau"], dl["tau"] = sys_.split(sys_.solve(np.vstack((sys_.selector, np.zeros((nc, tree.nv))))))
    return sys_, qdd, lam, cd, dq, dl


def kkt_fo(tree: KinematicTree, q, qd, tau, spec: ContactSpec, selector=None) -> KktDerivs:
    """First derivatives of (qdd, lam) with respect to q, qd and tau."""
    _, qdd, lam, _, dq, dl = _fo_parts(tree, q, qd, tau, spec, selector)
    return KktDerivs(qdd, lam, dq, dl)


def kkt_so(tree: KinematicTree, q, qd, tau, spec: ContactSpec, selector=None) -> KktDerivs:
    """First and second derivatives of (qdd, lam) for every pair of (q, qd, tau)."""
    sys_, qdd, lam, cd, Q, L = _fo_parts(tree, q, qd, tau, spec, selector)
    nv, nc = tree.nv, sys_.Jc.shape[0]
    so = id_so_constrained(tree, RobotState(q, qd, qdd), spec, lam)
    dJ = cd.dJc_dq
    dMQ = {u: dM_times_columns(tree, q, Q[u]) for u in KKT_VARS}     # [o, a, b] = sum_l dM[o,l,b] Q_u[l,a]
    zero1 = np.zeros((nv, nv, nv))
    zero2 = np.zeros((nc, nv, nv))
    direct = {("q", "q"): (so.d2tau_dq2, cd.d2acc_dq2),
              ("qd", "qd"): (so.d2tau_dqd2, cd.d2acc_dqd2),
              ("qd", "q"): (so.d2tau_cross, cd.d2acc_dqd_dq),
              ("tau", "q"): (zero1, zero2)}

    def pair(u: str, w: str):
        top, bot = (a.copy() for a in direct[u, w])
        if w == "q":
            # M and Jc move with the second variable
            top += dMQ[u] - np.einsum("rob,ra->oab", dJ, L[u])
            bot += np.einsum("rlb,la->rab", dJ, Q[u])
        if u == "q":
            top += rot23(dMQ[w]) - np.einsum("roa,rb->oab", dJ, L[w])
            bot += np.einsum("rla,lb->rab", dJ, Q[w])
        return sys_.split(-sys_.solve(np.concatenate((top, bot))))

    d2q, d2l = {}, {}
    for u, w in direct:
        d2q[u, w], d2l[u, w] = pair(u, w)
    for u, w in (("qd", "q"), ("tau", "q")):
        d2q[w, u], d2l[w, u] = rot23(d2q[u, w]), rot23(d2l[u, w])
    for u, w in (("tau", "tau"), ("qd", "tau"), ("tau", "qd")):
        d2q[u, w], d2l[u, w] = zero1.copy(), np.zeros((nc, nv, nv))
    return KktDerivs(qdd, lam, Q, L, d2q, d2l)


@dataclass(frozen=True)
class ImpactResult:
    qd_plus: np.ndarray
    lambda_hat: np.ndarray


def impact_solve(tree: KinematicTree, q, qd_minus, spec: ContactSpec) -> ImpactResult:
    """Post-impact velocity and contact impulses for a perfectly plastic impact."""
    qd_minus = np.asarray(qd_minus, dtype=float)
    if not spec.contacts:
        return ImpactResult(qd_minus.copy(), np.zeros(0))
    sys_ = kkt_system(tree, q, qd_minus, spec)
    qp, lh = sys_.split(sys_.solve(np.concatenate((sys_.M @ qd_minus, np.zeros(sys_.Jc.shape[0])))))
    return ImpactResult(qp, lh)


@dataclass(frozen=True)
class ImpactDerivs:
    qd_plus: np.ndarray
    lambda_hat: np.ndarray
    dqd_plus: dict         # "q" | "qd_minus" -> nv x nv
    dlambda: dict
    d2qd_plus: dict = field(default_factory=dict)
    d2lambda: dict = field(default_factory=dict)


def _impact_fo_parts(tree, q, qd_minus, spec):
    qd_minus = np.asarray(qd_minus, dtype=float)
    sys_ = kkt_system(tree, q, qd_minus, spec)
    nv, nc = tree.nv, sys_.Jc.shape[0]
    qp, lh = sys_.split(sys_.solve(np.concatenate((sys_.M @ qd_minus, np.zeros(nc)))))
    dJ = contact_derivs(tree, q, qp, spec).dJc_dq
    top = dMdq_times(tree, q, qp - qd_minus) - np.einsum("rob,r->ob", dJ, lh)
    bot = np.einsum("rlb,l->rb", dJ, qp)
    V, L = {}, {}
    V["q"], L["q"] = sys_.split(-sys_.solve(np.vstack((top, bot))))
    V["qd_minus"], L["qd_minus"] = sys_.split(sys_.solve(np.vstack((sys_.M, np.zeros((nc, nv))))))
    return sys_, qp, lh, dJ, V, L


def impact_fo(tree: KinematicTree, q, qd_minus, spec: ContactSpec) -> ImpactDerivs:
    sys_, qp, lh, _, V, L = _impact_fo_parts(tree, q, qd_minus, spec)
    return ImpactDerivs(qp, lh, V, L)


def impact_so(tree: KinematicTree, q, qd_minus, spec: ContactSpec) -> ImpactDerivs:
    """First and second derivatives of (qd+, lam_hat) in q and qd-; the qd- qd- pair is zero."""
    qd_minus = np.asarray(qd_minus, dtype=float)
    sys_, qp, lh, dJ, V, L = _impact_fo_parts(tree, q, qd_minus, spec)
    nv, nc = tree.nv, sys_.Jc.shape[0]
    d2, d2l = {}, {}

    dMV = dM_times_columns(tree, q, V["q"])
    top = (idsoza_c(tree, q, qp - qd_minus, spec, lh) + dMV + rot23(dMV)
           - np.einsum("roa,rb->oab", dJ, L["q"]) - np.einsum("rob,ra->oab", dJ, L["q"]))
    bot = (contact_derivs(tree, q, qp, spec).d2pdot_dq2
           + np.einsum("rla,lb->rab", dJ, V["q"]) + np.einsum("rlb,la->rab", dJ, V["q"]))
    d2["q", "q"], d2l["q", "q"] = sys_.split(-sys_.solve(np.concatenate((top, bot))))

    # pre-impact velocity first, position second
    top = dM_times_columns(tree, q, np.eye(nv) - V["qd_minus"]) + np.einsum("rob,ra->oab", dJ, L["qd_minus"])
    bot = -np.einsum("rlb,la->rab", dJ, V["qd_minus"])
    d2["qd_minus", "q"], d2l["qd_minus", "q"] = sys_.split(sys_.solve(np.concatenate((top, bot))))
    d2["q", "qd_minus"] = rot23(d2["qd_minus", "q"])
    d2l["q", "qd_minus"] = rot23(d2l["qd_minus", "q"])
    d2["qd_minus", "qd_minus"] = np.zeros((nv, nv, nv))
    d2l["qd_minus", "qd_minus"] = np.zeros((nc, nv, nv))
    return ImpactDerivs(qp, lh, V, L, d2, d2l)
