import json
from pathlib import Path

import numpy as np
import pytest

from rbdderiv import __version__
from rbdderiv.cli import build_parser, load_inputs, load_tree, main, make_config
from rbdderiv.deriv_second import id_so
from rbdderiv.model import parse_model

PENDULUM = str(Path(__file__).resolve().parents[1] / "models" / "pendulum.json")


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def write_state(tmp_path, name, **values):
    p = tmp_path / name
    p.write_text(json.dumps({k: list(v) for k, v in values.items()}))
    return str(p)


def test_validate_generated_model_passes(capsys, tmp_path):
    out = tmp_path / "report.json"
    code, _, err = run(capsys, "validate", "--gen", "N=10,seed=1", "--instances", "20", "--out", str(out))
    assert code == 0, err
    rep = json.loads(out.read_text())
    assert rep["passed"] and rep["version"] == __version__ and rep["seed"] == 0
    assert rep["config"]["gen"] == {"N": 10, "seed": 1, "branch": 0.0}
    assert all(c["pass"] for c in rep["cases"][0]["checks"])


def test_injected_fault_is_reported(capsys, tmp_path):
    out = tmp_path / "r.json"
    code, stdout, _ = run(capsys, "validate", "--gen", "N=4,seed=2", "--instances", "2", "--out", str(out),
                          "--inject-fault", "id_so.d2tau_dq2")
    assert code == 1
    assert "FAIL case 0 id_so.d2tau_dq2" in stdout
    failed = [c["name"] for c in json.loads(out.read_text())["cases"][0]["checks"] if not c["pass"]]
    assert failed == ["id_so.d2tau_dq2"]


def test_validate_pendulum_prints_closed_form(capsys):
    code, out, err = run(capsys, "validate", "--model", PENDULUM, "--instances", "2")
    assert code == 0
    assert "PASS pendulum.dtau_dq(pi/2): got -9.81, expected -9.81" in err
    report = json.loads(out)
    names = {c["name"] for c in report["cases"][0]["checks"] if c["family"] == "closed_form"}
    assert {"pendulum.tau(0)", "pendulum.d2tau_dq2(0)", "pendulum.M", "pendulum.dM_dq"} <= names


def test_deriv_pendulum_gradient(capsys, tmp_path):
    state = write_state(tmp_path, "s.json", q=[np.pi / 2], qd=[0.0], qdd=[0.0])
    code, out, _ = run(capsys, "deriv", "--model", PENDULUM, "--state", f"file={state}",
                       "--objects", "dtau_dq,dM_dq")
    assert code == 0
    objs = json.loads(out)["objects"]
    assert objs["dtau_dq"]["dims"] == [1, 1] and abs(objs["dtau_dq"]["data"][0] + 9.81) <= 1e-12
    assert objs["dM_dq"]["data"] == [0.0]
    assert objs["dM_dq"]["axis_order"] == "out,du,dw" and objs["dM_dq"]["layout"] == "axis1-fastest"


def test_tensor_layout_is_axis1_fastest(capsys):
    code, out, _ = run(capsys, "deriv", "--gen", "N=3,seed=4", "--state", "seed=2", "--objects", "d2tau_dq2")
    rec = json.loads(out)["objects"]["d2tau_dq2"]
    T = np.array(rec["data"]).reshape(rec["dims"], order="F")
    cfg = make_config(build_parser().parse_args(["deriv", "--gen", "N=3,seed=4", "--state", "seed=2"]))
    tree = load_tree(cfg)
    np.testing.assert_array_equal(T, id_so(tree, load_inputs(tree, cfg).state).d2tau_dq2)


def test_velocity_hessian_same_for_different_velocities(capsys, tmp_path):
    payloads = []
    for k, qd in enumerate(([0.1, -0.3, 0.7], [2.0, 1.0, -5.0])):
        s = write_state(tmp_path, f"s{k}.json", q=[0.3, -0.2, 1.1], qd=qd, qdd=[0.0, 0.0, 0.0])
        out = tmp_path / f"h{k}.json"
        code, _, _ = run(capsys, "deriv", "--gen", "N=3,seed=5,kinds=revolute", "--state", f"file={s}",
                         "--objects", "d2tau_dqd2", "--out", str(out))
        assert code == 0
        payloads.append(json.dumps(json.loads(out.read_text())["objects"]))
    assert payloads[0] == payloads[1]


def test_unknown_object(capsys):
    code, _, err = run(capsys, "deriv", "--gen", "N=2,seed=1", "--objects", "tau,d3tau")
    assert code == 2 and "d3tau" in err


def test_csv_matrix(capsys, tmp_path):
    out = tmp_path / "M.csv"
    code, _, _ = run(capsys, "deriv", "--gen", "N=4,seed=1", "--objects", "M", "--format", "csv", "--out", str(out))
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith(f"# rbdderiv {__version__} seed=0")
    M = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    np.testing.assert_allclose(M, M.T, atol=1e-12)


def test_csv_rejects_tensors(capsys):
    code, _, err = run(capsys, "deriv", "--gen", "N=2,seed=1", "--objects", "dM_dq", "--format", "csv")
    assert code == 2


def test_contact_objects(capsys):
    code, out, _ = run(capsys, "deriv", "--gen", "N=4,seed=3", "--objects", "kkt_dqdd_dq,impact_d2qd_plus_dqd_minus_dqd_minus")
    assert code == 0
    rep = json.loads(out)
    objs = rep["objects"]
    nv = len(rep["inputs"]["qd"])
    assert objs["kkt_dqdd_dq"]["dims"] == [nv, nv]
    assert objs["impact_d2qd_plus_dqd_minus_dqd_minus"]["dims"] == [nv, nv, nv]
    assert max(abs(x) for x in objs["impact_d2qd_plus_dqd_minus_dqd_minus"]["data"]) == 0.0


def test_bench_visit_counts(capsys):
    code, out, _ = run(capsys, "bench", "--sizes", "8,16,32", "--reps", "1")
    assert code == 0
    rows = json.loads(out)["rows"]
    for r in rows:
        N = r["N"]
        assert r["fo_visits"] == N * (N + 1) // 2
        assert r["so_visits"] == N * (N + 1) * (N + 2) // 6
        assert r["id_so_numpy_s"] > 0
    again = json.loads(run(capsys, "bench", "--sizes", "8,16,32", "--reps", "1")[1])["rows"]
    assert [(r["fo_visits"], r["so_visits"]) for r in again] == [(r["fo_visits"], r["so_visits"]) for r in rows]


def test_gen_model_round_trip(capsys, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run(capsys, "gen-model", "--gen", "N=6,seed=3,branch=0.5", "--out", str(a))[0] == 0
    assert run(capsys, "gen-model", "--model", str(a), "--out", str(b))[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_gen_model_single_joint(capsys):
    code, out, _ = run(capsys, "gen-model", "--gen", "N=1,seed=0")
    assert code == 0 and parse_model(out).N == 1


@pytest.mark.parametrize("argv", [
    ["gen-model", "--gen", "N=4,branch=1.5"],
    ["gen-model", "--gen", "N=4,color=red"],
    ["validate", "--state", "seed=x"],
    ["validate", "--model", "/nonexistent/model.json"],
    ["deriv", "--gen", "N=2", "--state", "mode=1"],
    ["frobnicate"],
    ["validate", "--model", "a", "--gen", "N=2"],
])
def test_config_errors_exit_2(capsys, argv):
    assert main(argv) == 2


def test_bad_state_file(capsys, tmp_path):
    s = write_state(tmp_path, "s.json", q=[0.0, 1.0])
    code, _, err = run(capsys, "deriv", "--model", PENDULUM, "--state", f"file={s}")
    assert code == 2 and "'q'" in err
