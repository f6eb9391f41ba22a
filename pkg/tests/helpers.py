import numpy as np

from rbdderiv.contact import default_contact_spec
from rbdderiv.model import random_model, random_state
from rbdderiv.oracle import FdConfig, compare_scaled

FD = 4e-6


def case(N, seed, branch=0.3, kinds=None):
    tree = random_model(N, seed, branch, kinds)
    rng = np.random.default_rng(seed)
    state = random_state(tree, rng)
    spec = default_contact_spec(tree, state.q)
    return tree, state, spec, rng.uniform(-1, 1, spec.n_c), rng.uniform(-1, 1, tree.nv)


def fd_cfg(tree, points=2):
    return FdConfig(h_fo=FD, retraction=tree.retract, points=points)


def close(a, b, tol):
    rep = compare_scaled(a, b, tol)
    assert rep.passed, rep
