"""Forward dynamics and its first/second derivatives through the mass matrix."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .deriv_first import dMdq_times, id_fo
from .deriv_second import id_so
from .dynamics import bias_forces, crba
from .model import KinematicTree, RobotState
from .spatial_tensor import rot23

COND_LIMIT = 1e12
MIN_EIG = 1e-10
VARS = ("q", "qd", "tau")


class SingularMassMatrix(np.linalg.LinAlgError):
    pass


class MassSolver:
    """Cholesky factor of M reused for every M^-1 application."""

    def __init__(self, M: np.ndarray):
        w = np.linalg.eigvalsh(M)
        if w[0] <= MIN_EIG or w[-1] / w[0] > COND_LIMIT:
            raise SingularMassMatrix(f"mass matrix is singular or ill-conditioned (eigenvalues {w[0]:.3e}..{w[-1]:.3e})")
        self.M = M
        self._cf = cho_factor(M)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """M^-1 applied along axis 1 of a vector, matrix or Tensor3."""
        rhs = np.asarray(rhs, dtype=float)
        flat = rhs.reshape(rhs.shape[0], -1)
        return cho_solve(self._cf, flat).reshape(rhs.shape)


def forward_dynamics(tree: KinematicTree, q: np.ndarray, qd: np.ndarray, tau: np.ndarray,
                     fext: np.ndarray | None = None) -> np.ndarray:
    """qdd = M^-1 (tau - b)."""
    solver = MassSolver(crba(tree, q))
    return solver.solve(np.asarray(tau, dtype=float) - bias_forces(tree, q, qd, fext))


@dataclass(frozen=True)
class FdDerivs:
    qdd: np.ndarray
    dqdd_dq: np.ndarray
    dqdd_dqd: np.ndarray
    dqdd_dtau: np.ndarray
    d2qdd: dict = field(default_factory=dict)   # (u, w) -> Tensor3 [out, u, w]

    @property
    def dqdd_du(self) -> np.ndarray:
        return np.hstack((self.dqdd_dq, self.dqdd_dqd, self.dqdd_dtau))

    def first(self, u: str) -> np.ndarray:
        return {"q": self.dqdd_dq, "qd": self.dqdd_dqd, "tau": self.dqdd_dtau}[u]


def _fo(tree, q, qd, tau):
    solver = MassSolver(crba(tree, q))
    qdd = solver.solve(np.asarray(tau, dtype=float) - bias_forces(tree, q, qd))
    fo = id_fo(tree, RobotState(q, qd, qdd))
    Minv = solver.solve(np.eye(tree.nv))
    return solver, qdd, -solver.solve(fo.dtau_dq), -solver.solve(fo.dtau_dqd), Minv


def fd_fo(tree: KinematicTree, q: np.ndarray, qd: np.ndarray, tau: np.ndarray) -> FdDerivs:
    """dqdd/du = -M^-1 dID/du at qdd = FD(q, qd, tau); dqdd/dtau = M^-1."""
    _, qdd, dq, dqd, Minv = _fo(tree, q, qd, tau)
    return FdDerivs(qdd, dq, dqd, Minv)


def dM_times_columns(tree: KinematicTree, q: np.ndarray, V: np.ndarray) -> np.ndarray:
    """[i, j, k] = (dM/dq_k V[:, j])_i, one zero-velocity pass per column of V."""
    return np.stack([dMdq_times(tree, q, V[:, j]) for j in range(V.shape[1])], axis=1)


def fd_so(tree: KinematicTree, q: np.ndarray, qd: np.ndarray, tau: np.ndarray) -> FdDerivs:
    """First and second derivatives of forward dynamics for every pair of (q, qd, tau).

    d2FD/du dw = -M^-1 (d2ID/du dw + dM/dw FD_u + rot23(dM/du FD_w)), where
    only q moves M. Pairs that M and ID both ignore are zero.
    """
    solver, qdd, dq, dqd, Minv = _fo(tree, q, qd, tau)
    nv = tree.nv
    so = id_so(tree, RobotState(q, qd, qdd))
    first = {"q": dq, "qd": dqd, "tau": Minv}
    dMq = {u: dM_times_columns(tree, q, first[u]) for u in VARS}   # dM/dq applied to FD_u
    zero = np.zeros((nv, nv, nv))
    d2 = {}
    d2["q", "q"] = -solver.solve(so.d2tau_dq2 + dMq["q"] + rot23(dMq["q"]))
    d2["qd", "qd"] = -solver.solve(so.d2tau_dqd2)
    d2["qd", "q"] = -solver.solve(so.d2tau_cross + dMq["qd"])
    d2["q", "qd"] = rot23(d2["qd", "q"])
    d2["tau", "q"] = -solver.solve(dMq["tau"])
    d2["q", "tau"] = rot23(d2["tau", "q"])
    for pair in (("tau", "tau"), ("qd", "tau"), ("tau", "qd")):
        d2[pair] = zero.copy()
    return FdDerivs(qdd, dq, dqd, Minv, d2)
