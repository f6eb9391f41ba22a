"""Inverse dynamics (RNEA), mass matrix (CRBA) and composite accumulations."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .kinematics import KinematicsCache, forward_pass
from .model import KinematicTree, RobotState
from .spatial_algebra import coriolis_batch, cross_force_rows, skew_batch


@dataclass(frozen=True, eq=False)
class DynamicsCache:
    """Per-body world-frame dynamics; composite (subtree-summed) fields end in C."""

    kin: KinematicsCache
    I: np.ndarray       # N x 6 x 6
    B: np.ndarray       # N x 6 x 6
    f: np.ndarray       # N x 6
    fext: np.ndarray    # N x 6
    IC: np.ndarray | None = None
    BC: np.ndarray | None = None
    fC: np.ndarray | None = None
    fextC: np.ndarray | None = None
    tau: np.ndarray | None = None


def world_inertias(kin: KinematicsCache) -> np.ndarray:
    """Body inertias rotated and shifted into the ground frame."""
    N = kin.tree.N
    Xf = np.zeros((N, 6, 6))
    Xf[:, :3, :3] = kin.rotations
    Xf[:, 3:, 3:] = kin.rotations
    Xf[:, :3, 3:] = skew_batch(kin.origins) @ kin.rotations
    return Xf @ kin.tree.inertia_stack @ np.transpose(Xf, (0, 2, 1))


def subtree_sums(tree: KinematicTree, X: np.ndarray) -> np.ndarray:
    """Per body, the sum of X over the body and all of its descendants."""
    return (tree.ancestor_matrix @ X.reshape(tree.N, -1)).reshape(X.shape)


def accumulate_composites(cache: DynamicsCache) -> DynamicsCache:
    """Subtree sums IC, BC, fC and fextC."""
    tree = cache.kin.tree
    return replace(cache, IC=subtree_sums(tree, cache.I), BC=subtree_sums(tree, cache.B),
                   fC=subtree_sums(tree, cache.f), fextC=subtree_sums(tree, cache.fext))


def dynamics_cache(kin: KinematicsCache, fext: np.ndarray | None = None) -> DynamicsCache:
    tree = kin.tree
    I = world_inertias(kin)
    Iv = np.einsum("nij,nj->ni", I, kin.v)
    f = np.einsum("nij,nj->ni", I, kin.a) + cross_force_rows(kin.v, Iv)
    B = coriolis_batch(I, kin.v)
    fe = np.zeros((tree.N, 6)) if fext is None else np.asarray(fext, dtype=float).reshape(tree.N, 6)
    cache = accumulate_composites(DynamicsCache(kin, I, B, f, fe))
    tau = np.einsum("rc,cr->c", kin.S, (cache.fC - cache.fextC)[tree.dof_joint])
    return replace(cache, tau=tau)


def rnea(tree: KinematicTree, state: RobotState, fext: np.ndarray | None = None,
         gravity: np.ndarray | None = None) -> tuple[np.ndarray, DynamicsCache]:
    """Joint forces for (q, qd, qdd); ``fext`` holds one world-frame force per body."""
    if fext is not None and np.asarray(fext).size != 6 * tree.N:
        raise ValueError(f"fext needs one spatial force per body ({tree.N})")
    cache = dynamics_cache(forward_pass(tree, state, gravity), fext)
    if not np.all(np.isfinite(cache.tau)):
        raise FloatingPointError("non-finite joint forces")
    return cache.tau, cache


def mass_matrix_from_cache(kin: KinematicsCache, IC: np.ndarray) -> np.ndarray:
    """M[r, c] = S_r^T IC_i S_c for the DoF r of an ancestor of c's joint i, mirrored."""
    tree = kin.tree
    jnt = tree.dof_joint
    F = np.einsum("cij,jc->ic", IC[jnt], kin.S)
    G = kin.S.T @ F
    upper = tree.ancestor_matrix[jnt[:, None], jnt[None, :]] > 0
    return np.where(upper, G, np.where(upper.T, G.T, 0.0))


def crba(tree: KinematicTree, q: np.ndarray) -> np.ndarray:
    """Joint-space mass matrix, M[j, i] = S_j^T IC_i S_i over ancestor pairs."""
    zeros = np.zeros(tree.nv)
    kin = forward_pass(tree, RobotState(q, zeros, zeros), np.zeros(3))
    return mass_matrix_from_cache(kin, subtree_sums(tree, world_inertias(kin)))


def bias_forces(tree: KinematicTree, q: np.ndarray, qd: np.ndarray, fext=None) -> np.ndarray:
    """Velocity-product and gravity terms: rnea at zero acceleration."""
    return rnea(tree, RobotState(q, qd, np.zeros(tree.nv)), fext)[0]
