"""Identity suites and oracle comparisons shared by the CLI and the tests.

Three families:

* property identities of the vector and matrix cross operators (P*, M*),
  evaluated on random unit-scale inputs as absolute residuals;
* kinematic/dynamic derivative identities (J*, K*), compared against
  central differences of the quantity they differentiate;
* analytic derivatives (first/second order, forward dynamics, KKT, impact)
  compared against finite differences of the function one order below.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .contact import ContactSpec, contact_jacobian, contact_wrenches, default_contact_spec
from .contact_kkt import KKT_VARS, impact_fo, impact_so, impact_solve, kkt_fo, kkt_so, kkt_solve
from .deriv_first import constrained_id, fext_cumulative_fo, id_fo, id_fo_constrained
from .deriv_forward import VARS, fd_fo, fd_so, forward_dynamics
from .deriv_second import id_so, id_so_constrained
from .dynamics import crba, dynamics_cache, rnea
from .kinematics import forward_pass
from .model import KinematicTree, RobotState, random_state
from .oracle import CompareReport, FdConfig, compare, compare_scaled, fd_hessian, fd_jacobian
from .spatial_algebra import crf, crf_bar, crm
from .spatial_tensor import (coriolis_matrix, coriolis_tensor, crossF_op, crossFbar_op, crossM_op, mtprod, rot12,
                     rot23, rot231, squeeze, tmprod)

PROPERTY_TOL = 1e-11


@dataclass(frozen=True)
class CheckResult:
    name: str
    family: str
    passed: bool
    max_abs_err: float
    max_rel_err: float = 0.0
    tol: float = 0.0
    detail: str = ""
    worst_ratio: float | None = None    # worst error over allowed error, for oracle comparisons

    def as_dict(self) -> dict:
        return {"name": self.name, "family": self.family, "pass": self.passed,
                "max_abs_err": self.max_abs_err, "max_rel_err": self.max_rel_err,
                "tol": self.tol, "worst_ratio": self.worst_ratio, "detail": self.detail}

    @classmethod
    def from_report(cls, name: str, family: str, rep: CompareReport, detail: str = "") -> "CheckResult":
        return cls(name, family, rep.passed, rep.max_abs_err, rep.max_rel_err, rep.tol_rel, detail, rep.worst_ratio)


# property identities

def _mv(rng, n=None):
    return rng.uniform(-1, 1, 6) if n is None else rng.uniform(-1, 1, (6, n))


def _inertia(rng):
    L = rng.uniform(-1, 1, (6, 6)) / np.sqrt(6)
    return L @ L.T


def _cols(rng):
    return int(rng.choice((1, 2, 3, 6)))


def _res(*pairs) -> float:
    return max(float(np.max(np.abs(np.asarray(a) - np.asarray(b)))) for a, b in pairs)


def _p_checks() -> dict[str, Callable]:
    def motion_cross_antisymmetry(r):
        u, v = _mv(r), _mv(r)
        return _res((crm(u) @ v, -crm(v) @ u))

    def motion_cross_of_cross_commutator(r):
        v, m = _mv(r), _mv(r)
        return _res((crm(crm(v) @ m), crm(v) @ crm(m) - crm(m) @ crm(v)))

    def force_cross_of_cross_commutator(r):
        v, m = _mv(r), _mv(r)
        return _res((crf(crm(v) @ m), crf(v) @ crf(m) - crf(m) @ crf(v)))

    def force_bar_of_force_cross_commutator(r):
        v, f = _mv(r), _mv(r)
        return _res((crf_bar(crf(v) @ f), crf(v) @ crf_bar(f) - crf_bar(f) @ crm(v)))

    def motion_cross_force_adjoint(r):
        u, v, f = _mv(r), _mv(r), _mv(r)
        return _res(((crm(u) @ v) @ f, -v @ (crf(u) @ f)))

    def force_cross_motion_adjoint(r):
        u, v, f = _mv(r), _mv(r), _mv(r)
        return _res(((crf(u) @ f) @ v, -f @ (crm(u) @ v)))

    def force_cross_bilinear_swap(r):
        u, v, f = _mv(r), _mv(r), _mv(r)
        return _res((u @ crf(v) @ f, f @ (crm(u) @ v)))

    def motion_cross_row_form(r):
        u, v = _mv(r), _mv(r)
        return _res((crm(u) @ v, -(v @ crf(u))))

    def force_cross_row_form(r):
        u, f = _mv(r), _mv(r)
        return _res((crf(u) @ f, -(f @ crm(u))))

    def motion_cross_right_nesting(r):
        u, v, m = _mv(r), _mv(r), _mv(r)
        return _res((crm(u) @ crm(v) @ m, crm(u) @ (crm(v) @ m)))

    return {f.__name__: f for f in (motion_cross_antisymmetry, motion_cross_of_cross_commutator, force_cross_of_cross_commutator, force_bar_of_force_cross_commutator, motion_cross_force_adjoint, force_cross_motion_adjoint, force_cross_bilinear_swap, motion_cross_row_form, force_cross_row_form, motion_cross_right_nesting)}


def _m_checks() -> dict[str, Callable]:
    def dims(r, k):
        return [_cols(r) for _ in range(k)]

    def tensor_force_op_is_negated_motion_transpose(r):
        U = _mv(r, _cols(r))
        return _res((crossF_op(U), -rot12(crossM_op(U))))

    def tensor_force_op_left_product(r):
        n, l = dims(r, 2)
        U, V = _mv(r, n), _mv(r, l)
        return _res((mtprod(-V.T, crossF_op(U)), rot12(tmprod(crossM_op(U), V))))

    def tensor_force_op_left_product_times_force(r):
        n, l, m = dims(r, 3)
        U, V, F = _mv(r, n), _mv(r, l), _mv(r, m)
        return _res((tmprod(mtprod(-V.T, crossF_op(U)), F), tmprod(rot12(tmprod(crossM_op(U), V)), F)))

    def tensor_motion_op_times_vector_rotated(r):
        U, v = _mv(r, _cols(r)), _mv(r)
        return _res((squeeze(rot23(tmprod(crossM_op(U), v[:, None])), 3), -crm(v) @ U))

    def tensor_force_op_bar_swap(r):
        n, m = dims(r, 2)
        U, F = _mv(r, n), _mv(r, m)
        return _res((tmprod(crossF_op(U), F), rot23(tmprod(crossFbar_op(F), U))))

    def tensor_bar_op_force_swap(r):
        n, m = dims(r, 2)
        U, F = _mv(r, n), _mv(r, m)
        return _res((tmprod(crossFbar_op(F), U), rot23(tmprod(crossF_op(U), F))))

    def tensor_motion_op_homogeneous(r):
        U, lam = _mv(r, _cols(r)), r.uniform(-1, 1)
        return _res((crossM_op(lam * U), lam * crossM_op(U)))

    def tensor_motion_op_antisymmetry(r):
        n, l = dims(r, 2)
        U, V = _mv(r, n), _mv(r, l)
        return _res((tmprod(crossM_op(U), V), -rot23(tmprod(crossM_op(V), U))))

    def tensor_motion_op_of_cross_commutator(r):
        U, v = _mv(r, _cols(r)), _mv(r)
        return _res((crossM_op(crm(v) @ U), mtprod(crm(v), crossM_op(U)) - tmprod(crossM_op(U), crm(v))))

    def tensor_force_op_of_cross_commutator(r):
        U, v = _mv(r, _cols(r)), _mv(r)
        return _res((crossF_op(crm(v) @ U), mtprod(crf(v), crossF_op(U)) - tmprod(crossF_op(U), crf(v))))

    def tensor_bar_op_of_force_cross_commutator(r):
        U, f = _mv(r, _cols(r)), _mv(r)
        G = squeeze(rot23(tmprod(crossF_op(U), f[:, None])), 3)
        return _res((crossFbar_op(G), tmprod(crossF_op(U), crf_bar(f)) - mtprod(crf_bar(f), crossM_op(U))))

    def tensor_force_op_page_transpose(r):
        n, m = dims(r, 2)
        U, F = _mv(r, n), _mv(r, m)
        return _res((rot12(tmprod(crossF_op(U), F)), -mtprod(F.T, crossM_op(U))))

    def tensor_force_op_row_contraction(r):
        n, l, m = dims(r, 3)
        U, V, F = _mv(r, n), _mv(r, l), _mv(r, m)
        lhs = mtprod(V.T, tmprod(crossF_op(U), F))
        VU = tmprod(crossM_op(V), U)
        return _res((lhs, tmprod(rot231(VU), F)), (lhs, rot12(mtprod(F.T, rot23(VU)))))

    def force_cross_matrix_via_bar_op(r):
        v, F = _mv(r), _mv(r, _cols(r))
        return _res((crf(v) @ F, squeeze(rot23(tmprod(crossFbar_op(F), v[:, None])), 3)))

    def force_bar_matrix_via_force_op(r):
        f, U = _mv(r), _mv(r, _cols(r))
        return _res((crf_bar(f) @ U, squeeze(rot23(tmprod(crossF_op(U), f[:, None])), 3)))

    def tensor_force_op_rotated_row_contraction(r):
        n, l, m = dims(r, 3)
        U, V, F = _mv(r, n), _mv(r, l), _mv(r, m)
        return _res((mtprod(V.T, rot23(tmprod(crossF_op(U), F))),
                     rot23(tmprod(rot231(tmprod(crossM_op(V), U)), F))))

    def tensor_force_op_rotated_antisymmetry(r):
        n, l, m = dims(r, 3)
        U, V, F = _mv(r, n), _mv(r, l), _mv(r, m)
        return _res((mtprod(V.T, rot23(tmprod(crossF_op(U), F))),
                     -rot12(mtprod(U.T, rot23(tmprod(crossF_op(V), F))))))

    def inertia_commutes_with_force_op_rotation(r):
        n, m = dims(r, 2)
        U, F, I = _mv(r, n), _mv(r, m), _inertia(r)
        T = tmprod(crossF_op(U), F)
        return _res((mtprod(I, rot23(T)), rot23(mtprod(I, T))))

    def inertia_commutes_with_motion_op_rotation(r):
        n, l = dims(r, 2)
        U, V, I = _mv(r, n), _mv(r, l), _inertia(r)
        T = tmprod(crossM_op(U), V)
        return _res((mtprod(I, rot23(T)), rot23(mtprod(I, T))))

    def matrix_tensor_product_transpose(r):
        n1, n2, n3, n4 = (int(r.integers(1, 5)) for _ in range(4))
        A, Y = r.uniform(-1, 1, (n1, n2)), r.uniform(-1, 1, (n2, n3, n4))
        return _res((rot12(mtprod(A, Y)), tmprod(rot12(Y), A.T)))

    def force_rows_times_motion_op(r):
        n, l, m = dims(r, 3)
        U, V, F = _mv(r, n), _mv(r, l), _mv(r, m)
        return _res((mtprod(F.T, tmprod(crossM_op(U), V)),
                     -rot12(mtprod(V.T, rot23(tmprod(crossFbar_op(F), U))))))

    def coriolis_matrix_transpose_antisymmetry(r):
        I, v, w = _inertia(r), _mv(r), _mv(r)
        return _res((coriolis_matrix(I, v).T @ w, -coriolis_matrix(I, w).T @ v))

    def coriolis_matrix_argument_swap(r):
        I, v, w = _inertia(r), _mv(r), _mv(r)
        return _res((coriolis_matrix(I, v) @ w, coriolis_matrix(I, w) @ v - I @ (crm(v) @ w)))

    def coriolis_matrix_bilinear_antisymmetry(r):
        I, u, v, w = _inertia(r), _mv(r), _mv(r), _mv(r)
        return _res((u @ coriolis_matrix(I, v) @ w, -(v @ coriolis_matrix(I, u) @ w)))

    def coriolis_tensor_transpose_antisymmetry(r):
        n, p = dims(r, 2)
        I, V, W = _inertia(r), _mv(r, n), _mv(r, p)
        return _res((tmprod(rot12(coriolis_tensor(I, V)), W), -rot23(tmprod(rot12(coriolis_tensor(I, W)), V))))

    def coriolis_tensor_argument_swap(r):
        n, p = dims(r, 2)
        I, V, W = _inertia(r), _mv(r, n), _mv(r, p)
        return _res((tmprod(coriolis_tensor(I, V), W),
                     rot23(tmprod(coriolis_tensor(I, W), V)) - tmprod(mtprod(I, crossM_op(V)), W)))

    def coriolis_tensor_rotated_antisymmetry(r):
        n, l, p = dims(r, 3)
        I, U, V, W = _inertia(r), _mv(r, n), _mv(r, l), _mv(r, p)
        return _res((mtprod(U.T, rot23(tmprod(coriolis_tensor(I, V), W))),
                     -rot12(mtprod(V.T, rot23(tmprod(coriolis_tensor(I, U), W))))))

    fns = (tensor_force_op_is_negated_motion_transpose, tensor_force_op_left_product, tensor_force_op_left_product_times_force, tensor_motion_op_times_vector_rotated, tensor_force_op_bar_swap, tensor_bar_op_force_swap, tensor_motion_op_homogeneous, tensor_motion_op_antisymmetry, tensor_motion_op_of_cross_commutator, tensor_force_op_of_cross_commutator, tensor_bar_op_of_force_cross_commutator, tensor_force_op_page_transpose, tensor_force_op_row_contraction, force_cross_matrix_via_bar_op, force_bar_matrix_via_force_op, tensor_force_op_rotated_row_contraction, tensor_force_op_rotated_antisymmetry, inertia_commutes_with_force_op_rotation, inertia_commutes_with_motion_op_rotation,
           matrix_tensor_product_transpose, force_rows_times_motion_op, coriolis_matrix_transpose_antisymmetry, coriolis_matrix_argument_swap, coriolis_matrix_bilinear_antisymmetry, coriolis_tensor_transpose_antisymmetry, coriolis_tensor_argument_swap, coriolis_tensor_rotated_antisymmetry)
    return {f.__name__: f for f in fns}


PROPERTY_CHECKS: dict[str, Callable[[np.random.Generator], float]] = {**_p_checks(), **_m_checks()}


def run_property_suite(instances: int = 200, seed: int = 0, tol: float = PROPERTY_TOL,
                       names=None) -> list[CheckResult]:
    out = []
    for k, name in enumerate(names or PROPERTY_CHECKS):
        rng = np.random.default_rng([seed, k])
        worst = max(PROPERTY_CHECKS[name](rng) for _ in range(instances))
        out.append(CheckResult(name, "property", worst <= tol, worst, tol=tol,
                               detail=f"{instances} random instances"))
    return out


# kinematic and dynamic derivative identities

def tree_quantities(tree: KinematicTree, state: RobotState, f_fix: np.ndarray, a_fix: np.ndarray) -> dict:
    """Every quantity the J/K identities differentiate, at one state."""
    kin = forward_pass(tree, state)
    dyn = dynamics_cache(kin)
    N, S = tree.N, kin.S
    gamma = np.zeros((N, 6))
    xi = np.zeros((N, 6))
    vJxS = np.zeros_like(S)
    for b in range(N):
        cols = kin.cols(b + 1)
        vJ = S[:, cols] @ state.qd[cols]
        p = tree.parent_index[b]
        gamma[b] = (gamma[p] if p >= 0 else 0) + S[:, cols] @ state.qdd[cols]
        xi[b] = (xi[p] if p >= 0 else 0) + crm(kin.v[b]) @ vJ
        vJxS[:, cols] = crm(vJ) @ S[:, cols]
    return {
        "S": S, "Phid": kin.Phid, "Psid": kin.Psid, "Psidd": kin.Psidd, "vJxS": vJxS,
        "I": dyn.I, "IC": dyn.IC, "BC": dyn.BC, "f": dyn.f, "fC": dyn.fC,
        "a": kin.a, "v": kin.v, "xi": xi, "gamma": gamma,
        "Ia": np.einsum("nij,nj->ni", dyn.I, kin.a),
        "Iv": np.einsum("nij,nj->ni", dyn.I, kin.v),
        "Ifa": np.einsum("nij,j->ni", dyn.I, a_fix),
        "vxf": np.stack([crf(v) @ f_fix for v in kin.v]),
        "Stf": S.T @ f_fix,
        "B": dyn.B,
    }


# identity name -> (quantity, variable, analytic builder)
def _identity_table():
    def col_rel(tree, col, p, rel):
        """Ancestry of DoF p's joint j relative to the body i owning column/body ``col``."""
        i = col + 1
        j = int(tree.dof_joint[p]) + 1
        if rel == "le":
            return j in tree.ancestors(i)
        if rel == "lt":
            return j in tree.ancestors(i) and j != i
        if rel == "gt":
            return j != i and i in tree.ancestors(j)
        raise ValueError(rel)

    def parent_val(tree, Q, p):
        par = tree.parent_index[tree.dof_joint[p]]
        return Q[par] if par >= 0 else np.zeros(Q.shape[1:])

    def per_column(fn, rel="le"):
        def build(tree, Q, f_fix, a_fix):
            nv = tree.nv
            out = np.zeros((6, nv, nv))
            for c in range(nv):
                body = int(tree.dof_joint[c])
                for p in range(nv):
                    if col_rel(tree, body, p, rel):
                        out[:, c, p] = fn(Q, c, p)
            return out
        return build

    def per_body(fn, shape, branches):
        def build(tree, Q, f_fix, a_fix):
            nv, N = tree.nv, tree.N
            out = np.zeros((N,) + shape + (nv,))
            for b in range(N):
                for p in range(nv):
                    for rel, g in branches:
                        if col_rel(tree, b, p, rel):
                            out[b, ..., p] = (g or fn)(tree, Q, b, p, f_fix, a_fix)
                            break
            return out
        return build

    S = lambda Q, p: Q["S"][:, p]
    T = {}
    T["subspace_dof_direction_wrt_q"] = ("S", "q", per_column(lambda Q, c, p: crm(S(Q, p)) @ Q["S"][:, c]))
    T["velocity_force_cross_wrt_q"] = ("vxf", "q", per_body(
        lambda tr, Q, b, p, f, a: crf_bar(f) @ crm(parent_val(tr, Q["v"], p) - Q["v"][b]) @ S(Q, p), (6,),
        [("le", None)]))
    T["inertia_times_fixed_accel_wrt_q"] = ("Ifa", "q", per_body(
        lambda tr, Q, b, p, f, a: crf_bar(Q["I"][b] @ a) @ S(Q, p) + Q["I"][b] @ (crm(a) @ S(Q, p)), (6,),
        [("le", None)]))
    T["body_momentum_wrt_q"] = ("Iv", "q", per_body(
        lambda tr, Q, b, p, f, a: crf_bar(Q["Iv"][b]) @ S(Q, p) + Q["I"][b] @ Q["Psid"][:, p], (6,),
        [("le", None)]))
    T["velocity_product_accel_wrt_q"] = ("xi", "q", per_body(
        lambda tr, Q, b, p, f, a: crm(parent_val(tr, Q["v"], p) - Q["v"][b]) @ Q["Psid"][:, p]
        + crm(parent_val(tr, Q["xi"], p) - Q["xi"][b]) @ S(Q, p), (6,), [("le", None)]))
    T["joint_accel_sum_wrt_q"] = ("gamma", "q", per_body(
        lambda tr, Q, b, p, f, a: crm(parent_val(tr, Q["gamma"], p) - Q["gamma"][b]) @ S(Q, p), (6,),
        [("le", None)]))
    T["body_velocity_wrt_q"] = ("v", "q", per_body(
        lambda tr, Q, b, p, f, a: crm(parent_val(tr, Q["v"], p) - Q["v"][b]) @ S(Q, p), (6,), [("le", None)]))
    T["body_velocity_wrt_qd"] = ("v", "qd", per_body(lambda tr, Q, b, p, f, a: S(Q, p), (6,), [("le", None)]))
    T["velocity_product_accel_wrt_qd"] = ("xi", "qd", per_body(
        lambda tr, Q, b, p, f, a: Q["Psid"][:, p] + Q["Phid"][:, p] - crm(Q["v"][b]) @ S(Q, p), (6,),
        [("le", None)]))
    T["subspace_wrt_q"] = T["subspace_dof_direction_wrt_q"]
    T["phid_wrt_q"] = ("Phid", "q", per_column(
        lambda Q, c, p: crm(Q["Psid"][:, p]) @ Q["S"][:, c] + crm(S(Q, p)) @ Q["Phid"][:, c]))
    T["joint_velocity_cross_subspace_wrt_q"] = ("vJxS", "q", per_column(lambda Q, c, p: crm(S(Q, p)) @ Q["vJxS"][:, c]))
    T["psid_wrt_q"] = ("Psid", "q", per_column(
        lambda Q, c, p: crm(Q["Psid"][:, p]) @ Q["S"][:, c] + crm(S(Q, p)) @ Q["Psid"][:, c]))

    def xI(key, own):
        return lambda tr, Q, b, p, f, a: (crf(S(Q, p)) @ Q[key][own(tr, b, p)]
                                          - Q[key][own(tr, b, p)] @ crm(S(Q, p)))

    here = lambda tr, b, p: b
    there = lambda tr, b, p: int(tr.dof_joint[p])
    T["body_inertia_wrt_q"] = ("I", "q", per_body(xI("I", here), (6, 6), [("le", None)]))
    T["composite_inertia_wrt_q"] = ("IC", "q", per_body(xI("IC", here), (6, 6), [("le", None), ("gt", xI("IC", there))]))
    T["body_accel_wrt_q"] = ("a", "q", per_body(
        lambda tr, Q, b, p, f, a: Q["Psidd"][:, p] - crm(Q["v"][b]) @ Q["Psid"][:, p] - crm(Q["a"][b]) @ S(Q, p),
        (6,), [("le", None)]))
    T["body_inertial_force_wrt_q"] = ("Ia", "q", per_body(
        lambda tr, Q, b, p, f, a: crf_bar(Q["Ia"][b]) @ S(Q, p) + Q["I"][b] @ Q["Psidd"][:, p]
        - Q["I"][b] @ (crm(Q["v"][b]) @ Q["Psid"][:, p]), (6,), [("le", None)]))
    T["psidd_wrt_q"] = ("Psidd", "q", per_column(
        lambda Q, c, p: crm(Q["Psidd"][:, p]) @ Q["S"][:, c] + 2 * crm(Q["Psid"][:, p]) @ Q["Psid"][:, c]
        + crm(S(Q, p)) @ Q["Psidd"][:, c]))

    def dB(own):
        return lambda tr, Q, b, p, f, a: (coriolis_matrix(Q["IC"][own(tr, b, p)], Q["Psid"][:, p])
                                          + crf(S(Q, p)) @ Q["BC"][own(tr, b, p)]
                                          - Q["BC"][own(tr, b, p)] @ crm(S(Q, p)))

    T["composite_coriolis_wrt_q"] = ("BC", "q", per_body(dB(here), (6, 6), [("le", None), ("gt", dB(there))]))
    T["body_force_wrt_q"] = ("f", "q", per_body(
        lambda tr, Q, b, p, f, a: Q["I"][b] @ Q["Psidd"][:, p] + crf_bar(Q["f"][b]) @ S(Q, p)
        + 2 * Q["B"][b] @ Q["Psid"][:, p], (6,), [("le", None)]))

    def dfC(own):
        return lambda tr, Q, b, p, f, a: (Q["IC"][own(tr, b, p)] @ Q["Psidd"][:, p]
                                          + crf_bar(Q["fC"][own(tr, b, p)]) @ S(Q, p)
                                          + 2 * Q["BC"][own(tr, b, p)] @ Q["Psid"][:, p])

    T["composite_force_wrt_q"] = ("fC", "q", per_body(dfC(here), (6,), [("le", None), ("gt", dfC(there))]))
    T["phid_wrt_qd"] = ("Phid", "qd", per_column(lambda Q, c, p: crm(S(Q, p)) @ Q["S"][:, c]))
    T["psid_wrt_qd"] = ("Psid", "qd", per_column(lambda Q, c, p: crm(S(Q, p)) @ Q["S"][:, c], rel="lt"))

    def dBqd(own):
        return lambda tr, Q, b, p, f, a: coriolis_matrix(Q["IC"][own(tr, b, p)], S(Q, p))

    T["composite_coriolis_wrt_qd"] = ("BC", "qd", per_body(dBqd(here), (6, 6), [("le", None), ("gt", dBqd(there))]))

    # scalar and row-shaped identities
    def subspace_transpose_force(tree, Q, f_fix, a_fix):
        nv = tree.nv
        out = np.zeros((nv, nv))
        for c in range(nv):
            for p in range(nv):
                if col_rel(tree, int(tree.dof_joint[c]), p, "le"):
                    out[c, p] = -Q["S"][:, c] @ (crf_bar(f_fix) @ S(Q, p))
        return out

    T["subspace_transpose_force_wrt_q"] = ("Stf", "q", subspace_transpose_force)

    def subspace_transpose(tree, Q, f_fix, a_fix):
        nv = tree.nv
        out = np.zeros((nv, 6, nv))          # d S^T / dq: rows are S columns
        for c in range(nv):
            for p in range(nv):
                if col_rel(tree, int(tree.dof_joint[c]), p, "le"):
                    out[c, :, p] = -Q["S"][:, c] @ crf(S(Q, p))
        return out

    T["subspace_transpose_wrt_q"] = ("ST", "q", subspace_transpose)
    return T


IDENTITY_TABLE = _identity_table()
TREE_IDENTITIES = tuple(IDENTITY_TABLE)


def run_tree_identities(tree: KinematicTree, state: RobotState, seed: int = 0, tol: float = 1e-6,
                        h: float = 4e-6, names=None, family: str = "identity") -> list[CheckResult]:
    """FD-validate the J/K identities on one tree at one state."""
    rng = np.random.default_rng(seed)
    f_fix, a_fix = rng.uniform(-1, 1, 6), rng.uniform(-1, 1, 6)
    Q0 = tree_quantities(tree, state, f_fix, a_fix)
    Q0["ST"] = Q0["S"].T
    names = names or TREE_IDENTITIES
    keys = sorted({IDENTITY_TABLE[n][0] for n in names})

    def flat(Q):
        Q = dict(Q, ST=Q["S"].T)
        return np.concatenate([np.ravel(Q[k]) for k in keys])

    fd = {}
    if any(IDENTITY_TABLE[n][1] == "q" for n in names):
        cfg = FdConfig(h_fo=h, retraction=tree.retract)
        J = fd_jacobian(lambda q: flat(tree_quantities(tree, RobotState(q, state.qd, state.qdd), f_fix, a_fix)),
                        state.q, cfg, tree.nv)
        fd["q"] = _split(J, keys, Q0, tree.nv)
    if any(IDENTITY_TABLE[n][1] == "qd" for n in names):
        J = fd_jacobian(lambda qd: flat(tree_quantities(tree, RobotState(state.q, qd, state.qdd), f_fix, a_fix)),
                        state.qd, FdConfig(h_fo=h), tree.nv)
        fd["qd"] = _split(J, keys, Q0, tree.nv)
    out = []
    for n in names:
        key, var, build = IDENTITY_TABLE[n]
        rep = compare_scaled(build(tree, Q0, f_fix, a_fix), fd[var][key], tol)
        out.append(CheckResult.from_report(n, family, rep, f"d {key} / d {var}"))
    return out


def _split(J: np.ndarray, keys, Q0, nv) -> dict:
    out, o = {}, 0
    for k in keys:
        shape = Q0[k].shape
        n = int(np.prod(shape))
        out[k] = J[o:o + n].reshape(shape + (nv,))
        o += n
    return out


# analytic derivatives against finite differences

@dataclass
class OracleConfig:
    tol_fo: float = 1e-6
    tol_so: float = 1e-7
    tol_double_fd: float = 5e-4
    h_fo: float = 4e-6
    h_so: float = 1e-4
    # quantities behind an M^-1 or KKT solve: q directions use a 4-point stencil, and the
    # velocity/torque directions, which enter polynomially (degree <= 2), a wide 2-point step
    h_solve: float = 2e-3
    h_poly: float = 0.5
    double_fd_max_nv: int = 24
    inject: str | None = None           # name of a check whose analytic side gets corrupted


def _maybe_inject(cfg: OracleConfig, name: str, value: np.ndarray) -> np.ndarray:
    if cfg.inject and cfg.inject == name:
        value = np.array(value, dtype=float, copy=True)
        value.flat[0] += 1e-2 * max(1.0, float(np.max(np.abs(value))))
    return value


def _cmp(out: list, cfg: OracleConfig, name: str, family: str, analytic, fd, tol: float, detail: str = ""):
    rep = compare_scaled(_maybe_inject(cfg, name, analytic), fd, tol)
    out.append(CheckResult.from_report(name, family, rep, detail))


def _exact(out: list, cfg: OracleConfig, name: str, family: str, value, detail: str = "", tol: float = 0.0):
    value = _maybe_inject(cfg, name, value)
    err = float(np.max(np.abs(value))) if np.size(value) else 0.0
    out.append(CheckResult(name, family, err <= tol, err, tol=tol, detail=detail))


def check_first_order(tree, state, spec, lam, cfg: OracleConfig) -> list[CheckResult]:
    out = []
    fc = FdConfig(h_fo=cfg.h_fo, retraction=tree.retract)
    fo = id_fo(tree, state)
    _cmp(out, cfg, "id_fo.dtau_dq", "first_order", fo.dtau_dq,
         fd_jacobian(lambda q: rnea(tree, RobotState(q, state.qd, state.qdd))[0], state.q, fc, tree.nv), cfg.tol_fo)
    _cmp(out, cfg, "id_fo.dtau_dqd", "first_order", fo.dtau_dqd,
         fd_jacobian(lambda qd: rnea(tree, RobotState(state.q, qd, state.qdd))[0], state.qd, FdConfig(cfg.h_fo)),
         cfg.tol_fo)
    foc = id_fo_constrained(tree, state, spec, lam)
    _cmp(out, cfg, "id_fo_constrained.dtau_dq", "first_order", foc.dtau_dq,
         fd_jacobian(lambda q: constrained_id(tree, RobotState(q, state.qd, state.qdd), spec, lam), state.q, fc,
                     tree.nv), cfg.tol_fo)

    def fextC(q):
        kin = forward_pass(tree, RobotState(q, state.qd, state.qdd))
        return dynamics_cache(kin, contact_wrenches(kin, spec, lam)).fextC

    _cmp(out, cfg, "fext_cumulative_fo", "first_order", fext_cumulative_fo(tree, state.q, spec, lam),
         fd_jacobian(fextC, state.q, fc, tree.nv), cfg.tol_fo)
    return out


def check_second_order(tree, state, spec, lam, cfg: OracleConfig) -> list[CheckResult]:
    out = []
    fc = FdConfig(h_fo=cfg.h_fo, retraction=tree.retract)
    ev = FdConfig(h_fo=cfg.h_fo)
    so = id_so(tree, state)
    fo_q = fd_jacobian(lambda q: np.stack([(d := id_fo(tree, RobotState(q, state.qd, state.qdd))).dtau_dq,
                                           d.dtau_dqd]), state.q, fc, tree.nv)
    fo_qd = fd_jacobian(lambda qd: id_fo(tree, RobotState(state.q, qd, state.qdd)).dtau_dqd, state.qd, ev)
    _cmp(out, cfg, "id_so.d2tau_dq2", "second_order", so.d2tau_dq2, fo_q[0], cfg.tol_so, "FD of analytic first order")
    _cmp(out, cfg, "id_so.d2tau_dqd2", "second_order", so.d2tau_dqd2, fo_qd, cfg.tol_so, "FD of analytic first order")
    _cmp(out, cfg, "id_so.d2tau_cross", "second_order", so.d2tau_cross, fo_q[1], cfg.tol_so,
         "FD of analytic first order")
    fm = fd_jacobian(lambda q: crba(tree, q), state.q, fc, tree.nv)
    _cmp(out, cfg, "id_so.dM_dq", "second_order", so.dM_dq, fm, cfg.tol_fo, "FD of crba")
    soc = id_so_constrained(tree, state, spec, lam)
    fcq = fd_jacobian(lambda q: id_fo_constrained(tree, RobotState(q, state.qd, state.qdd), spec, lam).dtau_dq,
                      state.q, fc, tree.nv)
    _cmp(out, cfg, "id_so_constrained.d2tau_dq2", "second_order", soc.d2tau_dq2, fcq, cfg.tol_so,
         "FD of analytic first order")

    # structure: literal zero blocks, exact copies, velocity independence
    jnt = tree.dof_joint
    anc = np.zeros((tree.N, tree.N), dtype=bool)      # anc[j, i]: joint j is on the path to joint i
    for i in range(1, tree.N + 1):
        anc[np.array(tree.ancestors(i)) - 1, i - 1] = True
    # dM[row dof of j, column dof of i, page dof of k] with k <= j <= i
    zero_mask = anc[jnt[None, None, :], jnt[:, None, None]] & anc[jnt[:, None, None], jnt[None, :, None]]
    _exact(out, cfg, "dM_dq.zero_blocks", "structure", so.dM_dq[zero_mask], "entries with k <= j <= i")
    diff = jnt[:, None] != jnt[None, :]
    for name, Tn in (("d2tau_dq2", so.d2tau_dq2), ("d2tau_dqd2", so.d2tau_dqd2),
                     ("constrained.d2tau_dq2", soc.d2tau_dq2)):
        copied = Tn[:, diff] - np.transpose(Tn, (0, 2, 1))[:, diff]
        _exact(out, cfg, f"symmetry.{name}", "structure", copied, "entries across distinct joints")
    same = ~diff
    sym_same = so.d2tau_dqd2[:, same] - np.transpose(so.d2tau_dqd2, (0, 2, 1))[:, same]
    _exact(out, cfg, "symmetry.d2tau_dqd2.same_joint", "structure", sym_same, "same joint, roundoff only",
           tol=1e-12 * max(1.0, float(np.abs(so.d2tau_dqd2).max())))
    rng = np.random.default_rng(7)
    other = id_so(tree, RobotState(state.q, rng.uniform(-2, 2, tree.nv), state.qdd)).d2tau_dqd2
    _exact(out, cfg, "d2tau_dqd2.velocity_independence", "structure", so.d2tau_dqd2 - other, tol=1e-14)

    if tree.nv <= cfg.double_fd_max_nv:
        H = fd_hessian(lambda qd: rnea(tree, RobotState(state.q, qd, state.qdd))[0], state.qd,
                       FdConfig(h_so=cfg.h_so), tree.nv)
        _cmp(out, cfg, "id_so.d2tau_dqd2.double_fd", "second_order", so.d2tau_dqd2, H, cfg.tol_double_fd,
             "double FD of rnea in qd")
        Hq = fd_hessian(lambda q: rnea(tree, RobotState(q, state.qd, state.qdd))[0], state.q,
                        FdConfig(h_so=cfg.h_so, retraction=tree.retract), tree.nv)
        sym = 0.5 * (so.d2tau_dq2 + np.transpose(so.d2tau_dq2, (0, 2, 1)))
        _cmp(out, cfg, "id_so.d2tau_dq2.double_fd", "second_order", sym, Hq, cfg.tol_double_fd,
             "double FD of rnea, symmetric part")
    return out


def check_forward(tree, state, tau, cfg: OracleConfig) -> list[CheckResult]:
    out = []
    q, qd = state.q, state.qd
    fc = FdConfig(h_fo=cfg.h_solve, points=4, retraction=tree.retract)
    ev = FdConfig(h_fo=cfg.h_poly)
    so = fd_so(tree, q, qd, tau)
    base = {"q": q, "qd": qd, "tau": tau}
    conf = {"q": fc, "qd": ev, "tau": ev}

    def call(w, x):
        args = dict(base)
        args[w] = x
        return args

    for w in VARS:
        F = fd_jacobian(lambda x: forward_dynamics(tree, **call(w, x)), base[w], conf[w], tree.nv)
        _cmp(out, cfg, f"fd_fo.{w}", "forward", so.first(w), F, cfg.tol_fo)
    for w in VARS:
        F = fd_jacobian(lambda x: np.stack([(d := fd_fo(tree, **call(w, x))).dqdd_dq, d.dqdd_dqd, d.dqdd_dtau]),
                        base[w], conf[w], tree.nv)
        for k, u in enumerate(VARS):
            _cmp(out, cfg, f"fd_so.{u},{w}", "forward", so.d2qdd[u, w], F[k], cfg.tol_fo, "FD of analytic first order")
    # ID/FD second-order relation, pieces from independent calls
    M = crba(tree, q)
    ids = id_so(tree, RobotState(q, qd, so.qdd))
    fo = fd_fo(tree, q, qd, tau)
    R = (ids.d2tau_dq2 + rot23(tmprod(ids.dM_dq, fo.dqdd_dq)) + tmprod(ids.dM_dq, fo.dqdd_dq)
         + mtprod(M, so.d2qdd["q", "q"]))
    _exact(out, cfg, "fd_so.relation_residual", "forward", R, "q,q pair", tol=1e-8)
    _exact(out, cfg, "fd_so.tau_tau_zero", "forward", so.d2qdd["tau", "tau"])
    return out


def check_kkt(tree, state, tau, spec, cfg: OracleConfig) -> list[CheckResult]:
    out = []
    q, qd = state.q, state.qd
    fc = FdConfig(h_fo=cfg.h_solve, points=4, retraction=tree.retract)
    ev = FdConfig(h_fo=cfg.h_poly)
    qdd, lam = kkt_solve(tree, q, qd, tau, spec)
    cj = contact_jacobian(tree, q, qd, spec)
    _exact(out, cfg, "kkt.constraint_residual", "kkt", cj.Jc @ qdd + cj.Jdot_qd, tol=1e-9)
    M = crba(tree, q)
    b = rnea(tree, RobotState(q, qd, np.zeros(tree.nv)))[0]
    scale = max(1.0, float(np.abs(M @ qdd).max()), float(np.abs(tau).max()))
    _exact(out, cfg, "kkt.dynamics_residual", "kkt", (M @ qdd + b - tau - cj.Jc.T @ lam) / scale, tol=1e-9)
    so = kkt_so(tree, q, qd, tau, spec)
    base = {"q": q, "qd": qd, "tau": tau}
    conf = {"q": fc, "qd": ev, "tau": ev}

    def call(w, x):
        args = dict(base)
        args[w] = x
        return args

    for w in KKT_VARS:
        F = fd_jacobian(lambda x: np.concatenate(kkt_solve(tree, spec=spec, **call(w, x))), base[w], conf[w], tree.nv)
        _cmp(out, cfg, f"kkt_fo.{w}", "kkt", np.vstack((so.dqdd[w], so.dlam[w])), F, cfg.tol_fo)
        F = fd_jacobian(lambda x: np.stack([np.vstack((d.dqdd[u], d.dlam[u]))
                                            for d in [kkt_fo(tree, spec=spec, **call(w, x))] for u in KKT_VARS]),
                        base[w], conf[w], tree.nv)
        for k, u in enumerate(KKT_VARS):
            _cmp(out, cfg, f"kkt_so.{u},{w}", "kkt", np.concatenate((so.d2qdd[u, w], so.d2lam[u, w])), F[k],
                 cfg.tol_fo, "FD of analytic first order")
    _exact(out, cfg, "kkt_so.tau_tau_zero", "kkt", np.concatenate((so.d2qdd["tau", "tau"], so.d2lam["tau", "tau"])))
    return out


def check_impact(tree, state, spec, cfg: OracleConfig) -> list[CheckResult]:
    out = []
    q, qm = state.q, state.qd
    fc = FdConfig(h_fo=cfg.h_solve, points=4, retraction=tree.retract)
    ev = FdConfig(h_fo=cfg.h_poly)
    res = impact_solve(tree, q, qm, spec)
    J = contact_jacobian(tree, q, qm, spec).Jc
    M = crba(tree, q)
    _exact(out, cfg, "impact.constraint_residual", "impact", J @ res.qd_plus, tol=1e-9)
    _exact(out, cfg, "impact.momentum_residual", "impact", M @ (res.qd_plus - qm) - J.T @ res.lambda_hat, tol=1e-9)
    gain = float(res.qd_plus @ M @ res.qd_plus - qm @ M @ qm)
    out.append(CheckResult("impact.energy", "impact", gain <= 1e-10, max(gain, 0.0), tol=1e-10,
                           detail="post minus pre kinetic energy (x2)"))
    so = impact_so(tree, q, qm, spec)
    base = {"q": q, "qd_minus": qm}
    conf = {"q": fc, "qd_minus": ev}

    def call(w, x):
        args = dict(base)
        args[w] = x
        return args

    names = ("q", "qd_minus")
    for w in names:
        F = fd_jacobian(lambda x: (lambda r: np.concatenate((r.qd_plus, r.lambda_hat)))(
            impact_solve(tree, spec=spec, **call(w, x))), base[w], conf[w], tree.nv)
        _cmp(out, cfg, f"impact_fo.{w}", "impact", np.vstack((so.dqd_plus[w], so.dlambda[w])), F, cfg.tol_fo)
        F = fd_jacobian(lambda x: np.stack([np.vstack((d.dqd_plus[u], d.dlambda[u]))
                                            for d in [impact_fo(tree, spec=spec, **call(w, x))] for u in names]),
                        base[w], conf[w], tree.nv)
        for k, u in enumerate(names):
            _cmp(out, cfg, f"impact_so.{u},{w}", "impact",
                 np.concatenate((so.d2qd_plus[u, w], so.d2lambda[u, w])), F[k], cfg.tol_fo,
                 "FD of analytic first order")
    _exact(out, cfg, "impact_so.qd_minus_qd_minus_zero", "impact", so.d2qd_plus["qd_minus", "qd_minus"])
    return out


def is_pendulum(tree: KinematicTree) -> bool:
    """Single revolute-z joint at the origin carrying a point mass on the x axis, gravity along -y."""
    if tree.N != 1 or tree.joints[0].kind != "revolute":
        return False
    c = np.asarray(tree.coms[0])
    return (np.allclose(tree.joints[0].axis, (0, 0, 1)) and np.allclose(tree.placement_xyz[0], 0)
            and np.allclose(tree.placement_rpy[0], 0) and np.allclose(c[1:], 0) and c[0] > 0
            and np.allclose(tree.inertia_params[0], 0) and np.allclose(tree.gravity[[0, 2]], 0)
            and tree.gravity[1] < 0)


def check_pendulum(tree: KinematicTree, cfg: OracleConfig, tol: float = 1e-10) -> list[CheckResult]:
    """Closed-form point-mass pendulum values: tau = m g l cos q, M = m l^2."""
    m, l, g = tree.masses[0], float(tree.coms[0][0]), -float(tree.gravity[1])
    out = []
    z = np.zeros(1)

    def st(q):
        return RobotState(np.array([q]), z, z)

    vals = [
        ("pendulum.tau(0)", rnea(tree, st(0.0))[0][0], m * g * l),
        ("pendulum.dtau_dq(pi/2)", id_fo(tree, st(np.pi / 2)).dtau_dq[0, 0], -m * g * l),
        ("pendulum.d2tau_dq2(0)", id_so(tree, st(0.0)).d2tau_dq2[0, 0, 0], -m * g * l),
        ("pendulum.M", crba(tree, np.array([0.3]))[0, 0], m * l * l),
        ("pendulum.dM_dq", id_so(tree, st(0.3)).dM_dq[0, 0, 0], 0.0),
        ("pendulum.dqdd_dq(pi/3)", fd_fo(tree, np.array([np.pi / 3]), z, z).dqdd_dq[0, 0],
         g * np.sin(np.pi / 3) / l),
    ]
    for name, got, want in vals:
        got = _maybe_inject(cfg, name, np.array([got]))[0]
        rep = compare(got, want, 0.0, tol)
        out.append(CheckResult(name, "closed_form", rep.passed, rep.max_abs_err, tol=tol,
                               detail=f"got {got:.12g}, expected {want:.12g}"))
    return out


def check_visits(tree: KinematicTree, state: RobotState) -> list[CheckResult]:
    """Pair and triple visit counts against the ancestor-walk combinatorics."""
    depth = [len(tree.ancestors(i)) for i in range(1, tree.N + 1)]
    pairs = sum(depth)
    triples = sum(depth[j - 1] for i in range(1, tree.N + 1) for j in tree.ancestors(i))
    fo = id_fo(tree, state).visits
    so = id_so(tree, state).visits
    return [CheckResult("visits.first_order", "complexity", fo == pairs, float(abs(fo - pairs)),
                        detail=f"{fo} visits, expected {pairs}"),
            CheckResult("visits.second_order", "complexity", so == triples, float(abs(so - triples)),
                        detail=f"{so} visits, expected {triples}")]


@dataclass
class ValidationReport:
    checks: list[CheckResult] = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]


def validate(tree: KinematicTree, seed: int = 0, cfg: OracleConfig | None = None,
             state: RobotState | None = None, property_instances: int = 200) -> ValidationReport:
    """Every identity family and oracle comparison on one model."""
    cfg = cfg or OracleConfig()
    rep = ValidationReport()
    rng = np.random.default_rng(seed)
    state = state or random_state(tree, rng)
    tau = rng.uniform(-1, 1, tree.nv)
    spec = ContactSpec.from_tree(tree) if tree.contacts else default_contact_spec(tree, state.q)
    lam = rng.uniform(-1, 1, spec.n_c)

    def timed(name, fn, *args):
        t0 = time.perf_counter()
        rep.checks.extend(fn(*args))
        rep.timings[name] = time.perf_counter() - t0

    timed("properties", run_property_suite, property_instances, seed)
    timed("identities", lambda: run_tree_identities(tree, state, seed, cfg.tol_fo, cfg.h_fo))
    timed("first_order", check_first_order, tree, state, spec, lam, cfg)
    timed("second_order", check_second_order, tree, state, spec, lam, cfg)
    timed("forward", check_forward, tree, state, tau, cfg)
    timed("kkt", check_kkt, tree, state, tau, spec, cfg)
    timed("impact", check_impact, tree, state, spec, cfg)
    timed("visits", check_visits, tree, state)
    if is_pendulum(tree):
        timed("closed_form", check_pendulum, tree, cfg)
    return rep
