"""Analytical first- and second-order derivatives of rigid-body dynamics."""
__version__ = "0.1.0"

from .contact import ContactSpec, contact_jacobian, default_contact_spec
from .contact_kkt import (ImpactDerivs, ImpactResult, KktDerivs, RankDeficientContact, impact_fo, impact_so,
                          impact_solve, kkt_fo, kkt_so, kkt_solve)
from .deriv_first import FirstOrderDerivs, dMdq_times, fext_cumulative_fo, id_fo, id_fo_constrained
from .deriv_forward import FdDerivs, SingularMassMatrix, fd_fo, fd_so, forward_dynamics
from .deriv_second import KERNEL, SecondOrderDerivs, id_so, id_so_constrained, idsoza_c
from .dynamics import DynamicsCache, accumulate_composites, crba, rnea
from .kinematics import KinematicsCache, forward_pass
from .model import (Contact, JointModel, KinematicTree, ModelError, RobotState, dump_model, joint_kinematics,
                    parse_model, pendulum, random_model, random_state)
from .oracle import CompareReport, FdConfig, compare, fd_hessian, fd_jacobian

__all__ = [
    "CompareReport", "Contact", "ContactSpec", "DynamicsCache", "FdConfig", "FdDerivs", "FirstOrderDerivs",
    "ImpactDerivs", "ImpactResult", "JointModel", "KERNEL", "KinematicTree", "KinematicsCache", "KktDerivs",
    "ModelError", "RankDeficientContact", "RobotState", "SecondOrderDerivs", "SingularMassMatrix",
    "accumulate_composites", "compare", "contact_jacobian", "crba", "dMdq_times", "default_contact_spec",
    "dump_model", "fd_fo", "fd_hessian", "fd_jacobian", "fd_so", "fext_cumulative_fo", "forward_dynamics",
    "forward_pass", "id_fo", "id_fo_constrained", "id_so", "id_so_constrained", "idsoza_c", "impact_fo",
    "impact_so", "impact_solve", "joint_kinematics", "kkt_fo", "kkt_so", "kkt_solve", "parse_model", "pendulum",
    "random_model", "random_state", "rnea",
]
