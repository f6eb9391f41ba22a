import numpy as np
import pytest

from rbdderiv.checks import IDENTITY_TABLE, TREE_IDENTITIES, run_tree_identities, tree_quantities
from rbdderiv.model import random_model, random_state

TREES = [random_model(7, 31, 0.4), random_model(5, 32, 0.0), random_model(9, 33, 0.8)]
STATES = [random_state(t, k) for k, t in enumerate(TREES)]


@pytest.mark.parametrize("k", range(len(TREES)))
def test_all_identities_on_tree(k):
    results = run_tree_identities(TREES[k], STATES[k], seed=k)
    assert [r.name for r in results] == list(TREE_IDENTITIES)
    bad = [(r.name, r.max_rel_err) for r in results if not r.passed]
    assert not bad


def test_selected_identity_only():
    results = run_tree_identities(TREES[0], STATES[0], names=["body_velocity_wrt_qd"])
    assert len(results) == 1 and results[0].passed


def test_velocity_jacobian_pattern():
    tree, state = TREES[2], STATES[2]
    key, var, build = IDENTITY_TABLE["body_velocity_wrt_qd"]
    rng = np.random.default_rng(0)
    Q = tree_quantities(tree, state, rng.normal(size=6), rng.normal(size=6))
    J = build(tree, Q, None, None)
    for i in range(1, tree.N + 1):
        for j in range(1, tree.N + 1):
            block = J[i - 1][:, tree.dofs(j).start:tree.dofs(j).stop]
            if j in tree.ancestors(i):
                np.testing.assert_array_equal(block, Q["S"][:, tree.dofs(j).start:tree.dofs(j).stop])
            else:
                np.testing.assert_array_equal(block, 0)
