"""Spatial vector algebra: 6D motion/force vectors, cross operators, transforms.

Component order is angular first, linear second for motion vectors and
moment first, force second for force vectors.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def cross3(a: np.ndarray, b: np.ndarray, axis: int = -1) -> np.ndarray:
    """Broadcasting 3-vector cross product along ``axis`` (0 or -1), cheaper than np.cross on small arrays."""
    if axis == 0:
        a0, a1, a2, b0, b1, b2 = a[0], a[1], a[2], b[0], b[1], b[2]
    else:
        a0, a1, a2, b0, b1, b2 = a[..., 0], a[..., 1], a[..., 2], b[..., 0], b[..., 1], b[..., 2]
    c0 = a1 * b2 - a2 * b1
    out = np.empty((3,) + np.shape(c0) if axis == 0 else np.shape(c0) + (3,))
    if axis == 0:
        out[0], out[1], out[2] = c0, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0
    else:
        out[..., 0], out[..., 1], out[..., 2] = c0, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0
    return out


def skew(w: np.ndarray) -> np.ndarray:
    """3x3 matrix with skew(w) @ x == cross(w, x)."""
    return np.array([[0.0, -w[2], w[1]],
                     [w[2], 0.0, -w[0]],
                     [-w[1], w[0], 0.0]])


def crm(v: np.ndarray) -> np.ndarray:
    """Motion cross operator, crm(v) @ u is v x u for motion vectors."""
    w = skew(v[:3])
    out = np.zeros((6, 6))
    out[:3, :3] = w
    out[3:, 3:] = w
    out[3:, :3] = skew(v[3:])
    return out


def crf(v: np.ndarray) -> np.ndarray:
    """Force cross operator, crf(v) @ f is v x* f. Equals -crm(v).T exactly."""
    return -crm(v).T


def crf_bar(f: np.ndarray) -> np.ndarray:
    """Swapped force cross operator: crf_bar(f) @ v == crf(v) @ f."""
    out = np.zeros((6, 6))
    n = skew(f[:3])
    fx = skew(f[3:])
    out[:3, :3] = -n
    out[:3, 3:] = -fx
    out[3:, :3] = -fx
    return out


def cross_motion(v: np.ndarray, u: np.ndarray) -> np.ndarray:
    """v x u for two motion vectors, without building the 6x6 operator."""
    w, vl = v[:3], v[3:]
    return np.concatenate((cross3(w, u[:3]), cross3(w, u[3:]) + cross3(vl, u[:3])))


def cross_force(v: np.ndarray, f: np.ndarray) -> np.ndarray:
    """v x* f for a motion vector v and force vector f."""
    w, vl = v[:3], v[3:]
    return np.concatenate((cross3(w, f[:3]) + cross3(vl, f[3:]), cross3(w, f[3:])))


def cross_motion_rows(V: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Row-wise v x u for stacks of motion vectors (n x 6)."""
    w, vl = V[:, :3], V[:, 3:]
    return np.concatenate((cross3(w, U[:, :3]), cross3(w, U[:, 3:]) + cross3(vl, U[:, :3])), axis=1)


def cross_force_rows(V: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Row-wise v x* f for stacks of motion and force vectors (n x 6)."""
    w, vl = V[:, :3], V[:, 3:]
    return np.concatenate((cross3(w, F[:, :3]) + cross3(vl, F[:, 3:]), cross3(w, F[:, 3:])), axis=1)


def skew_batch(W: np.ndarray) -> np.ndarray:
    """skew of every 3-vector along the last axis."""
    out = np.zeros(W.shape[:-1] + (3, 3))
    out[..., 0, 1], out[..., 0, 2] = -W[..., 2], W[..., 1]
    out[..., 1, 0], out[..., 1, 2] = W[..., 2], -W[..., 0]
    out[..., 2, 0], out[..., 2, 1] = -W[..., 1], W[..., 0]
    return out


def crm_batch(V: np.ndarray) -> np.ndarray:
    """crm of each row of an n x 6 stack, n x 6 x 6."""
    out = np.zeros((V.shape[0], 6, 6))
    w = skew_batch(V[:, :3])
    out[:, :3, :3] = w
    out[:, 3:, 3:] = w
    out[:, 3:, :3] = skew_batch(V[:, 3:])
    return out


def crf_bar_batch(F: np.ndarray) -> np.ndarray:
    """crf_bar of each row of an n x 6 force stack."""
    out = np.zeros((F.shape[0], 6, 6))
    fx = skew_batch(F[:, 3:])
    out[:, :3, :3] = -skew_batch(F[:, :3])
    out[:, :3, 3:] = -fx
    out[:, 3:, :3] = -fx
    return out


def coriolis_batch(I: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Body Coriolis matrix for stacks of inertias (n x 6 x 6) and motions (n x 6)."""
    C = crm_batch(V)
    return 0.5 * (-np.transpose(C, (0, 2, 1)) @ I - I @ C + crf_bar_batch(np.einsum("nij,nj->ni", I, V)))


@dataclass(frozen=True)
class SpatialTransform:
    """Plucker transform from frame A to frame B.

    ``rotation`` maps A coordinates to B coordinates and ``translation`` is
    the position of B's origin expressed in A. The motion matrix is
    ``[[R, 0], [-R skew(p), R]]``.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        p = np.asarray(self.translation, dtype=float).reshape(3)
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-12 or abs(np.linalg.det(R) - 1.0) > 1e-12:
            raise ValueError("rotation is not a proper orthonormal matrix")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", p)

    @classmethod
    def identity(cls) -> "SpatialTransform":
        return cls(np.eye(3), np.zeros(3))

    def motion_matrix(self) -> np.ndarray:
        R, p = self.rotation, self.translation
        X = np.zeros((6, 6))
        X[:3, :3] = R
        X[3:, 3:] = R
        X[3:, :3] = -R @ skew(p)
        return X

    def force_matrix(self) -> np.ndarray:
        """Inverse transpose of the motion matrix."""
        R, p = self.rotation, self.translation
        X = np.zeros((6, 6))
        X[:3, :3] = R
        X[3:, 3:] = R
        X[:3, 3:] = -R @ skew(p)
        return X


def xform_motion(X: SpatialTransform, v: np.ndarray) -> np.ndarray:
    R, p = X.rotation, X.translation
    w = v[:3]
    return np.concatenate((R @ w, R @ (v[3:] - cross3(p, w))))


def xform_force(X: SpatialTransform, f: np.ndarray) -> np.ndarray:
    R, p = X.rotation, X.translation
    return np.concatenate((R @ (f[:3] - cross3(p, f[3:])), R @ f[3:]))


def xform_inertia(X: SpatialTransform, inertia: np.ndarray) -> np.ndarray:
    """Congruence transform of a spatial inertia from frame A to frame B."""
    Xf = X.force_matrix()
    Xm_inv = inverse(X).motion_matrix()
    out = Xf @ inertia @ Xm_inv
    return 0.5 * (out + out.T)


def compose(X_ab: SpatialTransform, X_bc: SpatialTransform) -> SpatialTransform:
    """Transform from A to C, applying X_ab first."""
    R1, p1 = X_ab.rotation, X_ab.translation
    R2, p2 = X_bc.rotation, X_bc.translation
    return SpatialTransform(R2 @ R1, p1 + R1.T @ p2)


def inverse(X: SpatialTransform) -> SpatialTransform:
    R, p = X.rotation, X.translation
    return SpatialTransform(R.T, -R @ p)


def spatial_inertia(mass: float, com: np.ndarray, inertia_com: np.ndarray) -> np.ndarray:
    """Spatial inertia about the frame origin from mass, centre of mass and
    the rotational inertia about the centre of mass."""
    c = skew(np.asarray(com, dtype=float))
    out = np.zeros((6, 6))
    out[:3, :3] = np.asarray(inertia_com, dtype=float) - mass * c @ c
    out[:3, 3:] = mass * c
    out[3:, :3] = -mass * c
    out[3:, 3:] = mass * np.eye(3)
    return out


def body_wrench(inertia: np.ndarray, v: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Net spatial force I a + v x* I v."""
    return inertia @ a + crf(v) @ (inertia @ v)


def point_velocity(v: np.ndarray, point: np.ndarray) -> np.ndarray:
    """Linear velocity of a world point moving with spatial velocity v."""
    return v[3:] + cross3(v[:3], point)
