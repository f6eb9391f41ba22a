"""Kinematic tree model: joints, placements, inertias, parsing and generation.

Joint ids are 1-based in every public method, with 0 standing for the fixed
base. Spherical and free joints store orientation as a unit quaternion
(w, x, y, z); their velocity coordinates are body-frame twists and all
derivatives are taken along the right (local) retraction ``retract``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy.spatial.transform import Rotation

from .spatial_algebra import SpatialTransform, spatial_inertia

JOINT_KINDS = ("revolute", "prismatic", "spherical", "free")
_NQ = {"revolute": 1, "prismatic": 1, "spherical": 4, "free": 7}
_NV = {"revolute": 1, "prismatic": 1, "spherical": 3, "free": 6}


class ModelError(ValueError):
    """Invalid model description."""


def quat_to_matrix(quat: np.ndarray) -> np.ndarray:
    w, x, y, z = quat
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_exp(w: np.ndarray) -> np.ndarray:
    """Unit quaternion of the rotation vector w."""
    angle = np.linalg.norm(w)
    if angle < 1e-12:
        return np.concatenate(([1.0], 0.5 * w))
    return np.concatenate(([np.cos(0.5 * angle)], np.sin(0.5 * angle) / angle * w))


def axis_rotation(axis: np.ndarray, angle: float) -> np.ndarray:
    return Rotation.from_rotvec(np.asarray(axis) * angle).as_matrix()


def _so3_left_jacobian(w: np.ndarray) -> np.ndarray:
    theta = np.linalg.norm(w)
    W = np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])
    if theta < 1e-8:
        return np.eye(3) + 0.5 * W + W @ W / 6.0
    a = (1 - np.cos(theta)) / theta**2
    b = (theta - np.sin(theta)) / theta**3
    return np.eye(3) + a * W + b * W @ W


@dataclass(frozen=True, eq=False)
class JointModel:
    kind: str
    axis: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.kind not in JOINT_KINDS:
            raise ModelError(f"unknown joint type {self.kind!r}")
        if self.kind in ("revolute", "prismatic"):
            if self.axis is None:
                raise ModelError(f"{self.kind} joint needs an axis")
            axis = np.asarray(self.axis, dtype=float).reshape(3)
            norm = np.linalg.norm(axis)
            if abs(norm - 1.0) > 1e-6:
                raise ModelError(f"joint axis {axis.tolist()} is not unit length")
            object.__setattr__(self, "axis", axis / norm)
        else:
            object.__setattr__(self, "axis", None)

    @property
    def nq(self) -> int:
        return _NQ[self.kind]

    @property
    def nv(self) -> int:
        return _NV[self.kind]

    def neutral(self) -> np.ndarray:
        if self.kind in ("spherical", "free"):
            q = np.zeros(self.nq)
            q[0] = 1.0
            return q
        return np.zeros(1)

    def motion_subspace(self) -> np.ndarray:
        """Motion subspace in the body frame (constant for every kind here)."""
        if self.kind == "revolute":
            return np.concatenate((self.axis, np.zeros(3)))[:, None]
        if self.kind == "prismatic":
            return np.concatenate((np.zeros(3), self.axis))[:, None]
        if self.kind == "spherical":
            return np.vstack((np.eye(3), np.zeros((3, 3))))
        return np.eye(6)

    def pose(self, qj: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(R, p): body axes and origin expressed in the joint frame."""
        if self.kind == "revolute":
            return axis_rotation(self.axis, qj[0]), np.zeros(3)
        if self.kind == "prismatic":
            return np.eye(3), self.axis * qj[0]
        if self.kind == "spherical":
            return quat_to_matrix(qj), np.zeros(3)
        return quat_to_matrix(qj[:4]), np.array(qj[4:7], dtype=float)

    def retract(self, qj: np.ndarray, delta: np.ndarray) -> np.ndarray:
        """qj moved along the body-frame tangent vector delta."""
        if self.kind in ("revolute", "prismatic"):
            return qj + delta
        if self.kind == "spherical":
            out = quat_mul(qj, quat_exp(delta))
            return out / np.linalg.norm(out)
        quat = quat_mul(qj[:4], quat_exp(delta[:3]))
        R = quat_to_matrix(qj[:4])
        pos = qj[4:7] + R @ (_so3_left_jacobian(delta[:3]) @ delta[3:])
        return np.concatenate((quat / np.linalg.norm(quat), pos))


def joint_kinematics(joint: JointModel, qj: np.ndarray) -> tuple[SpatialTransform, np.ndarray]:
    """Joint transform (joint frame to body frame) and body-frame motion subspace."""
    R, p = joint.pose(np.asarray(qj, dtype=float))
    return SpatialTransform(R.T, p), joint.motion_subspace()


@dataclass(frozen=True, eq=False)
class Contact:
    body: int
    point: np.ndarray
    axes: tuple[int, ...] = (0, 1, 2)


@dataclass(frozen=True, eq=False)
class KinematicTree:
    """Immutable rigid-body tree. Index lists are 0-based internally."""

    name: str
    joints: tuple[JointModel, ...]
    parents: tuple[int, ...]
    placement_xyz: tuple[tuple[float, ...], ...]
    placement_rpy: tuple[tuple[float, ...], ...]
    masses: tuple[float, ...]
    coms: tuple[tuple[float, ...], ...]
    inertia_params: tuple[tuple[float, ...], ...]
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    contacts: tuple[Contact, ...] = ()

    def __post_init__(self) -> None:
        n = len(self.joints)
        if n < 1:
            raise ModelError("model needs at least one joint")
        for i, par in enumerate(self.parents, start=1):
            if not 0 <= par < i:
                raise ModelError(f"joint {i} has parent {par}; parents must precede children")
        for i, (m, I6) in enumerate(zip(self.masses, self.inertia_params), start=1):
            if m < 0:
                raise ModelError(f"joint {i}: negative mass")
            Ic = _inertia_matrix(I6)
            if np.linalg.eigvalsh(Ic).min() < -1e-10 * max(1.0, np.abs(Ic).max()):
                raise ModelError(f"joint {i}: rotational inertia is not positive semi-definite")
        for c in self.contacts:
            if not 1 <= c.body <= n:
                raise ModelError(f"contact references nonexistent body {c.body}")
        object.__setattr__(self, "gravity", np.asarray(self.gravity, dtype=float).reshape(3))

    # sizes and layout
    @property
    def N(self) -> int:
        return len(self.joints)

    @cached_property
    def nv(self) -> int:
        return sum(j.nv for j in self.joints)

    @cached_property
    def nq(self) -> int:
        return sum(j.nq for j in self.joints)

    @cached_property
    def _offsets(self) -> tuple[np.ndarray, np.ndarray]:
        nvs = np.array([j.nv for j in self.joints])
        nqs = np.array([j.nq for j in self.joints])
        return np.concatenate(([0], np.cumsum(nvs)[:-1])), np.concatenate(([0], np.cumsum(nqs)[:-1]))

    def dof_offset(self, i: int) -> int:
        return int(self._offsets[0][i - 1])

    def q_offset(self, i: int) -> int:
        return int(self._offsets[1][i - 1])

    def dofs(self, i: int) -> range:
        o = self.dof_offset(i)
        return range(o, o + self.joints[i - 1].nv)

    @cached_property
    def dof_joint(self) -> np.ndarray:
        """0-based joint index owning each velocity coordinate."""
        return np.concatenate([[k] * j.nv for k, j in enumerate(self.joints)]).astype(np.int64)

    def parent(self, i: int) -> int:
        return self.parents[i - 1]

    @cached_property
    def parent_index(self) -> np.ndarray:
        """0-based parent of each body, -1 for the base."""
        return np.array(self.parents, dtype=np.int64) - 1

    @cached_property
    def _ancestor_chains(self) -> tuple[tuple[int, ...], ...]:
        chains: list[tuple[int, ...]] = []
        for i, p in enumerate(self.parents, start=1):
            chains.append((chains[p - 1] if p else ()) + (i,))
        return tuple(chains)

    def ancestors(self, i: int) -> tuple[int, ...]:
        """Joints j with j <= i in tree order, root first, including i."""
        return self._ancestor_chains[i - 1]

    def subtree(self, i: int) -> frozenset[int]:
        return frozenset(k for k in range(i, self.N + 1) if i in self.ancestors(k))

    @cached_property
    def depth(self) -> int:
        return max(len(self.ancestors(i)) for i in range(1, self.N + 1))

    @cached_property
    def ancestor_dofs(self) -> tuple[np.ndarray, ...]:
        """Per 0-based body: velocity indices of all joints k <= body, root first."""
        out = []
        for i in range(1, self.N + 1):
            out.append(np.array([d for k in self.ancestors(i) for d in self.dofs(k)], dtype=np.int64))
        return tuple(out)

    @cached_property
    def ancestor_matrix(self) -> np.ndarray:
        """[j, i] = 1.0 when joint j+1 lies on the path from the root to joint i+1 (inclusive)."""
        A = np.zeros((self.N, self.N))
        for i in range(1, self.N + 1):
            A[np.array(self.ancestors(i)) - 1, i - 1] = 1.0
        return A

    @cached_property
    def subspaces(self) -> np.ndarray:
        """Body-frame motion subspaces of every joint side by side, 6 x nv."""
        return np.hstack([j.motion_subspace() for j in self.joints])

    @cached_property
    def inertia_stack(self) -> np.ndarray:
        return np.stack(self.inertias)

    @cached_property
    def placements(self) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
        """Per body (R, p): joint frame axes and origin in the parent frame."""
        return tuple((Rotation.from_euler("XYZ", rpy).as_matrix(), np.array(xyz, dtype=float))
                     for xyz, rpy in zip(self.placement_xyz, self.placement_rpy))

    @cached_property
    def _pose_tables(self):
        Rp = np.stack([R for R, _ in self.placements])
        pp = np.stack([p for _, p in self.placements])
        kinds = np.array([j.kind for j in self.joints])
        axes = np.array([j.axis if j.axis is not None else np.zeros(3) for j in self.joints])
        qo = np.array([self.q_offset(i) for i in range(1, self.N + 1)], dtype=np.int64)
        rev = np.flatnonzero(kinds == "revolute")
        pri = np.flatnonzero(kinds == "prismatic")
        quat = np.flatnonzero((kinds == "spherical") | (kinds == "free"))
        K = np.zeros((len(rev), 3, 3))
        a = axes[rev]
        K[:, 0, 1], K[:, 0, 2], K[:, 1, 2] = -a[:, 2], a[:, 1], -a[:, 0]
        K[:, 1, 0], K[:, 2, 0], K[:, 2, 1] = a[:, 2], -a[:, 1], a[:, 0]
        return Rp, pp, axes, qo, rev, pri, quat, K, K @ K

    def local_poses(self, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per body (R, p) of the body frame in its parent frame, N x 3 x 3 and N x 3."""
        Rp, pp, axes, qo, rev, pri, quat, K, K2 = self._pose_tables
        Rj = np.broadcast_to(np.eye(3), (self.N, 3, 3)).copy()
        pj = np.zeros((self.N, 3))
        th = q[qo[rev]][:, None, None]
        Rj[rev] += np.sin(th) * K + (1 - np.cos(th)) * K2
        pj[pri] = axes[pri] * q[qo[pri]][:, None]
        for b in quat:
            Rj[b], pj[b] = self.joints[b].pose(self.joint_q(q, b + 1))
        return Rp @ Rj, pp + np.einsum("bij,bj->bi", Rp, pj)

    def placement(self, i: int) -> SpatialTransform:
        """Transform from parent frame to joint frame at q = 0."""
        R, p = self.placements[i - 1]
        return SpatialTransform(R.T, p)

    @cached_property
    def inertias(self) -> tuple[np.ndarray, ...]:
        """Body-frame spatial inertias."""
        return tuple(spatial_inertia(m, np.array(c), _inertia_matrix(I6))
                     for m, c, I6 in zip(self.masses, self.coms, self.inertia_params))

    # configuration helpers
    def neutral(self) -> np.ndarray:
        return np.concatenate([j.neutral() for j in self.joints])

    def joint_q(self, q: np.ndarray, i: int) -> np.ndarray:
        o = self.q_offset(i)
        return q[o:o + self.joints[i - 1].nq]

    def retract(self, q: np.ndarray, delta: np.ndarray) -> np.ndarray:
        """Configuration q moved by the tangent vector delta (length nv)."""
        out = np.array(q, dtype=float)
        for i, joint in enumerate(self.joints, start=1):
            qo, vo = self.q_offset(i), self.dof_offset(i)
            out[qo:qo + joint.nq] = joint.retract(out[qo:qo + joint.nq], delta[vo:vo + joint.nv])
        return out

    def with_gravity(self, gravity) -> "KinematicTree":
        return _replace(self, gravity=np.asarray(gravity, dtype=float))

    def with_contacts(self, contacts) -> "KinematicTree":
        return _replace(self, contacts=tuple(contacts))


def _replace(tree: KinematicTree, **kw) -> KinematicTree:
    return replace(tree, **kw)


def _inertia_matrix(I6) -> np.ndarray:
    ixx, iyy, izz, ixy, ixz, iyz = I6
    return np.array([[ixx, ixy, ixz], [ixy, iyy, iyz], [ixz, iyz, izz]], dtype=float)


@dataclass
class RobotState:
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray

    def __post_init__(self) -> None:
        self.q = np.asarray(self.q, dtype=float)
        self.qd = np.asarray(self.qd, dtype=float)
        self.qdd = np.asarray(self.qdd, dtype=float)
        for name in ("q", "qd", "qdd"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"state {name} has non-finite entries")

    def check(self, tree: KinematicTree) -> None:
        if self.q.shape != (tree.nq,) or self.qd.shape != (tree.nv,) or self.qdd.shape != (tree.nv,):
            raise ValueError(f"state sizes {self.q.shape}, {self.qd.shape}, {self.qdd.shape} do not match "
                             f"nq={tree.nq}, nv={tree.nv}")


# ---------------------------------------------------------------- file format

def parse_model(text: str) -> KinematicTree:
    """Build a tree from the JSON model format."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict) or "joints" not in data:
        raise ModelError("line 1: model must be an object with a 'joints' list")
    joints, parents, xyzs, rpys, masses, coms, inertias = [], [], [], [], [], [], []
    for pos, js in enumerate(data["joints"], start=1):
        try:
            if js["id"] != pos:
                raise ModelError(f"joint ids must run 1..N in order; found {js['id']} at position {pos}")
            kind = js["type"]
            if kind not in JOINT_KINDS:
                raise ModelError(f"joint {pos}: unknown type {kind!r}")
            joints.append(JointModel(kind, js.get("axis") if kind in ("revolute", "prismatic") else None))
            parents.append(int(js["parent"]))
            placement = js.get("placement", {})
            xyzs.append(tuple(float(x) for x in placement.get("xyz", (0.0, 0.0, 0.0))))
            rpys.append(tuple(float(x) for x in placement.get("rpy", (0.0, 0.0, 0.0))))
            inertia = js["inertia"]
            masses.append(float(inertia["mass"]))
            coms.append(tuple(float(x) for x in inertia.get("com", (0.0, 0.0, 0.0))))
            inertias.append(tuple(float(x) for x in inertia.get("I", (0.0,) * 6)))
        except KeyError as exc:
            raise ModelError(f"joint {pos}: missing field {exc.args[0]!r}") from None
        if parents[-1] >= pos:
            raise ModelError(f"joint {pos} has forward parent {parents[-1]}")
    contacts = []
    for c in data.get("contacts", []):
        contacts.append(Contact(int(c["body"]), np.array(c["point"], dtype=float),
                                tuple(int(a) for a in c.get("axes", (0, 1, 2)))))
    return KinematicTree(
        name=str(data.get("name", "model")),
        joints=tuple(joints),
        parents=tuple(parents),
        placement_xyz=tuple(xyzs),
        placement_rpy=tuple(rpys),
        masses=tuple(masses),
        coms=tuple(coms),
        inertia_params=tuple(inertias),
        gravity=np.array(data.get("gravity", (0.0, 0.0, -9.81)), dtype=float),
        contacts=tuple(contacts),
    )


def dump_model(tree: KinematicTree) -> str:
    joints = []
    for i, j in enumerate(tree.joints, start=1):
        entry = {"id": i, "parent": tree.parents[i - 1], "type": j.kind}
        if j.axis is not None:
            entry["axis"] = [float(x) for x in j.axis]
        entry["placement"] = {"xyz": list(tree.placement_xyz[i - 1]), "rpy": list(tree.placement_rpy[i - 1])}
        entry["inertia"] = {"mass": tree.masses[i - 1], "com": list(tree.coms[i - 1]),
                            "I": list(tree.inertia_params[i - 1])}
        joints.append(entry)
    data = {"name": tree.name, "gravity": [float(g) for g in tree.gravity], "joints": joints}
    if tree.contacts:
        data["contacts"] = [{"body": c.body, "point": [float(x) for x in c.point], "axes": list(c.axes)}
                            for c in tree.contacts]
    return json.dumps(data, indent=1) + "\n"


# ----------------------------------------------------------------- generation

_KIND_WEIGHTS = {"revolute": 0.45, "prismatic": 0.2, "spherical": 0.2, "free": 0.15}


def random_model(N: int, seed: int, branching: float = 0.0, kinds: tuple[str, ...] | None = None) -> KinematicTree:
    """Deterministic random tree with mixed joint kinds and physical inertias."""
    if N < 1:
        raise ValueError("N must be at least 1")
    if not 0.0 <= branching <= 1.0:
        raise ValueError("branching must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    names = kinds or tuple(_KIND_WEIGHTS)
    weights = np.array([_KIND_WEIGHTS.get(k, 0.25) for k in names])
    weights /= weights.sum()
    joints, parents, xyzs, rpys, masses, coms, inertias = [], [], [], [], [], [], []
    for i in range(1, N + 1):
        parent = i - 1
        if i > 1 and rng.random() < branching:
            parent = int(rng.integers(0, i - 1))
        parents.append(parent)
        kind = str(rng.choice(names, p=weights))
        axis = None
        if kind in ("revolute", "prismatic"):
            axis = rng.normal(size=3)
            axis = axis / np.linalg.norm(axis)
        joints.append(JointModel(kind, axis))
        xyzs.append(tuple(float(x) for x in rng.uniform(-0.4, 0.4, 3)))
        rpys.append(tuple(float(x) for x in rng.uniform(-np.pi, np.pi, 3)))
        mass = float(rng.uniform(0.1, 2.0))
        masses.append(mass)
        coms.append(tuple(float(x) for x in rng.uniform(-0.2, 0.2, 3)))
        # principal moments from a random solid box keep the triangle inequality
        dims = rng.uniform(0.05, 0.5, 3)
        pm = mass / 12.0 * np.array([dims[1]**2 + dims[2]**2, dims[0]**2 + dims[2]**2, dims[0]**2 + dims[1]**2])
        Q = Rotation.random(random_state=rng).as_matrix()
        Ic = Q @ np.diag(pm) @ Q.T
        inertias.append((Ic[0, 0], Ic[1, 1], Ic[2, 2], Ic[0, 1], Ic[0, 2], Ic[1, 2]))
    inertias = [tuple(float(x) for x in I6) for I6 in inertias]
    return KinematicTree(
        name=f"random_N{N}_seed{seed}_b{branching:g}",
        joints=tuple(joints), parents=tuple(parents),
        placement_xyz=tuple(xyzs), placement_rpy=tuple(rpys),
        masses=tuple(masses), coms=tuple(coms), inertia_params=tuple(inertias),
    )


def random_state(tree: KinematicTree, seed: int | np.random.Generator) -> RobotState:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    q = tree.retract(tree.neutral(), rng.uniform(-np.pi, np.pi, tree.nv))
    return RobotState(q, rng.uniform(-1, 1, tree.nv), rng.uniform(-1, 1, tree.nv))


def pendulum(mass: float = 1.0, length: float = 1.0, g: float = 9.81) -> KinematicTree:
    """Planar point-mass pendulum: revolute about z, gravity along -y."""
    return KinematicTree(
        name="pendulum", joints=(JointModel("revolute", np.array([0.0, 0.0, 1.0])),), parents=(0,),
        placement_xyz=((0.0, 0.0, 0.0),), placement_rpy=((0.0, 0.0, 0.0),),
        masses=(mass,), coms=((length, 0.0, 0.0),), inertia_params=((0.0,) * 6,),
        gravity=np.array([0.0, -g, 0.0]),
    )
