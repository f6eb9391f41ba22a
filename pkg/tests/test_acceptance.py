"""Acceptance criteria, one test and one printed PASS/FAIL line each.

Run ``pytest tests/test_acceptance.py -s`` (or ``python tests/test_acceptance.py``)
to see the lines; each also lands in the pytest report as a normal test.
"""
import time

import numpy as np
import pytest

from rbdderiv.checks import (OracleConfig, PROPERTY_TOL, check_first_order, check_forward, check_impact, check_kkt,
                             check_pendulum, check_second_order, run_property_suite, run_tree_identities, validate)
from rbdderiv.contact import default_contact_spec
from rbdderiv.deriv_first import id_fo
from rbdderiv.deriv_second import triple_visits
from rbdderiv.model import pendulum, random_model, random_state

CFG = OracleConfig()


def _tree(k):
    return random_model(2 + k % 11, 100 + k, (0.0, 0.3, 0.7)[k % 3])


TREES = [_tree(k) for k in range(20)]


def _inputs(tree, seed):
    rng = np.random.default_rng(seed)
    state = random_state(tree, rng)
    tau = rng.uniform(-1, 1, tree.nv)
    spec = default_contact_spec(tree, state.q)
    return state, tau, spec, rng.uniform(-1, 1, spec.n_c)


INPUTS = [_inputs(t, 100 + k) for k, t in enumerate(TREES)]


def line(capsys, label, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] {label}: {detail}")


def summarize(results):
    bad = [r for r in results if not r.passed]
    ratio = [r for r in results if r.worst_ratio is not None]
    if ratio:
        worst = max(ratio, key=lambda r: r.worst_ratio)
        tail = f"worst {worst.name}: abs err {worst.max_abs_err:.2e} = {worst.worst_ratio:.3f} x allowed"
    else:
        worst = max(results, key=lambda r: r.max_abs_err)
        tail = f"worst {worst.name}: abs {worst.max_abs_err:.2e}"
    return bad, f"{len(results)} comparisons, {len(bad)} failing; {tail}"


def test_mixed_joint_coverage():
    kinds = {j.kind for t in TREES for j in t.joints}
    assert kinds == {"revolute", "prismatic", "spherical", "free"}
    assert max(t.N for t in TREES) <= 12


def test_identity_suite(capsys):
    t0 = time.perf_counter()
    results = run_property_suite(instances=200, seed=0)
    dt = time.perf_counter() - t0
    worst = max(r.max_abs_err for r in results)
    ok = all(r.passed for r in results) and len(results) == 37 and worst <= PROPERTY_TOL and dt < 5.0
    line(capsys, "identity suite (10 + 27 identities x 200 instances, abs <= 1e-11, < 5 s)", ok,
         f"worst residual {worst:.2e}, {dt:.2f} s")
    assert ok


def test_tree_identities(capsys):
    t0 = time.perf_counter()
    results = []
    for k, (tree, (state, *_)) in enumerate(zip(TREES, INPUTS)):
        results += run_tree_identities(tree, state, seed=k, tol=1e-6, h=4e-6)
    dt = time.perf_counter() - t0
    bad, detail = summarize(results)
    ok = not bad and dt < 30.0
    line(capsys, "kinematic/dynamic identities on 20 trees (rel <= 1e-6 at h = 4e-6, < 30 s)", ok,
         f"{detail}, {dt:.1f} s")
    assert ok, [(r.name, r.max_rel_err) for r in bad]


def test_first_order(capsys):
    results = []
    for tree, (state, tau, spec, lam) in zip(TREES, INPUTS):
        results += [r for r in check_first_order(tree, state, spec, lam, CFG) if r.name.startswith("id_fo")]
    bad, detail = summarize(results)
    line(capsys, "id_fo and id_fo_constrained vs FD on 20 trees (rel <= 1e-6)", not bad, detail)
    assert not bad


@pytest.fixture(scope="module")
def second_order():
    out = []
    for tree, (state, tau, spec, lam) in zip(TREES, INPUTS):
        out.append(check_second_order(tree, state, spec, lam, CFG))
    return out


def test_second_order(capsys, second_order):
    flat = [r for rs in second_order for r in rs]
    fd = [r for r in flat if r.name in ("id_so.d2tau_dq2", "id_so.d2tau_dqd2", "id_so.d2tau_cross",
                                        "id_so_constrained.d2tau_dq2")]
    dbl = [r for r in flat if r.name.endswith(".double_fd")]
    sym = [r for r in flat if r.name.startswith("symmetry.") and not r.name.endswith("same_joint")]
    vind = [r for r in flat if r.name == "d2tau_dqd2.velocity_independence"]
    assert fd and dbl and sym and len(vind) == 20
    parts = {"FD of analytic FO (rel <= 1e-7)": fd, "double FD (rel <= 5e-4)": dbl,
             "rot23 copies exact": sym, "qd-independence <= 1e-14": vind}
    ok = True
    for label, rs in parts.items():
        bad, detail = summarize(rs)
        ok &= not bad
        line(capsys, f"id_so {label}", not bad, detail)
    assert all(r.tol == 1e-7 for r in fd) and all(r.tol == 5e-4 for r in dbl)
    assert all(r.tol <= 1e-14 for r in vind) and all(r.max_abs_err == 0 for r in sym)
    assert ok


def test_mass_matrix_derivative(capsys, second_order):
    flat = [r for rs in second_order for r in rs]
    fd = [r for r in flat if r.name == "id_so.dM_dq"]
    zeros = [r for r in flat if r.name == "dM_dq.zero_blocks"]
    bad_fd, d1 = summarize(fd)
    bad_z = [r for r in zeros if r.max_abs_err != 0.0]
    ok = not bad_fd and not bad_z and len(zeros) == 20
    line(capsys, "dM/dq vs FD of crba (rel <= 1e-6) and literal zero blocks", ok,
         f"{d1}; zero-block max |entry| {max(r.max_abs_err for r in zeros):.1e}")
    assert ok


def test_forward_second_order_relation(capsys):
    results = []
    for tree, (state, tau, spec, lam) in list(zip(TREES, INPUTS))[:10]:
        results += check_forward(tree, state, tau, CFG)
    rel = [r for r in results if r.name == "fd_so.relation_residual"]
    fso = [r for r in results if r.name.startswith("fd_so.") and r.name != "fd_so.relation_residual"]
    bad_r = [r for r in rel if not (r.passed and r.max_abs_err <= 1e-8)]
    bad_f, detail = summarize(fso)
    ok = not bad_r and not bad_f and len(rel) == 10
    line(capsys, "inverse/forward second-order relation (abs <= 1e-8) and fd_so vs FD of fd_fo (rel <= 1e-6)",
         ok, f"max residual {max(r.max_abs_err for r in rel):.2e}; {detail}")
    assert ok


def test_kkt(capsys):
    results = []
    for tree, (state, tau, spec, lam) in zip(TREES, INPUTS):
        results += check_kkt(tree, state, tau, spec, CFG)
    res = [r for r in results if r.name == "kkt.constraint_residual"]
    tt = [r for r in results if r.name == "kkt_so.tau_tau_zero"]
    bad, detail = summarize(results)
    ok = not bad and all(r.max_abs_err <= 1e-9 for r in res) and all(r.max_abs_err == 0 for r in tt)
    line(capsys, "KKT constraint residual <= 1e-9, kkt_fo/kkt_so vs FD (rel <= 1e-6), (tau,tau) zero", ok,
         f"max constraint residual {max(r.max_abs_err for r in res):.2e}; {detail}")
    assert ok


def test_impact(capsys):
    results = []
    for tree, (state, tau, spec, lam) in zip(TREES, INPUTS):
        results += check_impact(tree, state, spec, CFG)
    bad, detail = summarize(results)
    zero = [r for r in results if r.name == "impact_so.qd_minus_qd_minus_zero"]
    ok = not bad and all(r.max_abs_err == 0 for r in zero)
    names = sorted({r.name.split(".")[1] for r in results if r.name.startswith("impact.")})
    line(capsys, "impact laws (<= 1e-9, energy non-increasing), impact_fo/so vs FD (rel <= 1e-6)", ok,
         f"{detail}; laws checked: {', '.join(names)}")
    assert ok


def test_pendulum_closed_form(capsys):
    results = check_pendulum(pendulum(), CFG, tol=1e-10)
    bad = [r for r in results if not r.passed]
    line(capsys, "pendulum closed form (1e-10)", not bad, "; ".join(f"{r.name} {r.detail}" for r in results))
    assert not bad and all(r.max_abs_err <= 1e-10 for r in results)


def test_complexity(capsys):
    counts = []
    for N in (8, 16, 32, 64):
        tree = random_model(N, 0, 0.0, kinds=("revolute",))
        fo = id_fo(tree, random_state(tree, 0)).visits
        so = triple_visits(tree)
        counts.append((N, fo, so, fo == N * (N + 1) // 2 and so == N * (N + 1) * (N + 2) // 6))
    chain = random_model(64, 0, 0.0, kinds=("revolute",))
    t0 = time.perf_counter()
    rep = validate(chain, 0)
    dt = time.perf_counter() - t0
    ok = all(c[3] for c in counts) and rep.passed and dt < 60.0
    line(capsys, "visit counts N(N+1)/2 and N(N+1)(N+2)/6 for N in 8..64; N = 64 chain validate < 60 s", ok,
         ", ".join(f"N={n}: {fo}/{so}" for n, fo, so, _ in counts) + f"; validate {dt:.1f} s, "
         f"{len(rep.checks)} checks, {len(rep.failures())} failing")
    assert ok, [c.name for c in rep.failures()]


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-s", "-q"]))
