"""Command-line harness: validate, deriv, bench, gen-model.

Exit codes: 0 success, 1 a check failed, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .checks import OracleConfig, is_pendulum, validate
from .contact import ContactSpec, default_contact_spec
from .contact_kkt import KKT_VARS, impact_so, kkt_so
from .deriv_first import id_fo, id_fo_constrained
from .deriv_forward import VARS, fd_so
from .deriv_second import KERNEL, id_so, id_so_constrained, triple_visits
from .dynamics import crba, rnea
from .model import KinematicTree, ModelError, RobotState, dump_model, parse_model, pendulum, random_model, random_state

TOOL = "rbdderiv"
IMPACT_VARS = ("q", "qd_minus")


class ConfigError(Exception):
    """Bad flags, unreadable inputs or an invalid model; exit code 2."""


@dataclass
class RunConfig:
    command: str
    model: str | None = None
    gen: dict = field(default_factory=dict)
    state: dict = field(default_factory=dict)
    out: str | None = None
    format: str = "json"
    tol_fo: float = 1e-6
    tol_so: float = 1e-7
    reps: int = 1
    extra: dict = field(default_factory=dict)


# ------------------------------------------------------------------ parsing

def _kv(text: str, flag: str) -> dict[str, str]:
    out = {}
    for part in filter(None, text.split(",")):
        key, sep, value = part.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{flag}: expected key=value, got {part!r}")
        out[key.strip()] = value.strip()
    return out


def parse_gen(text: str) -> dict:
    raw = _kv(text, "--gen")
    unknown = set(raw) - {"N", "seed", "branch", "kinds"}
    if unknown:
        raise ConfigError(f"--gen: unknown keys {sorted(unknown)}")
    try:
        gen = {"N": int(raw.get("N", 10)), "seed": int(raw.get("seed", 0)), "branch": float(raw.get("branch", 0.0))}
    except ValueError as exc:
        raise ConfigError(f"--gen: {exc}") from None
    if "kinds" in raw:
        gen["kinds"] = raw["kinds"].split("+")
    if gen["N"] < 1:
        raise ConfigError("--gen: N must be at least 1")
    if not 0.0 <= gen["branch"] <= 1.0:
        raise ConfigError(f"--gen: branch must lie in [0, 1], got {gen['branch']}")
    return gen


def parse_state(text: str | None) -> dict:
    if text is None:
        return {"seed": 0}
    raw = _kv(text, "--state")
    if set(raw) == {"seed"}:
        try:
            return {"seed": int(raw["seed"])}
        except ValueError:
            raise ConfigError(f"--state: bad seed {raw['seed']!r}") from None
    if set(raw) == {"file"}:
        return {"file": raw["file"]}
    raise ConfigError("--state: use seed=K or file=PATH")


def load_tree(cfg: RunConfig) -> KinematicTree:
    if cfg.model:
        try:
            return parse_model(Path(cfg.model).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read model: {exc}") from None
        except ModelError as exc:
            raise ConfigError(f"{cfg.model}: {exc}") from None
    gen = cfg.gen or {"N": 10, "seed": 0, "branch": 0.0}
    try:
        kinds = tuple(gen["kinds"]) if gen.get("kinds") else None
        return random_model(gen["N"], gen["seed"], gen["branch"], kinds)
    except (ModelError, ValueError) as exc:
        raise ConfigError(f"--gen: {exc}") from None


@dataclass
class Inputs:
    """State plus the torque and contact-force vectors the derivative layers need."""
    state: RobotState
    tau: np.ndarray
    lam: np.ndarray
    spec: ContactSpec
    seed: int


def _vector(data: dict, key: str, n: int, default=None) -> np.ndarray:
    if key not in data:
        if default is None:
            raise ConfigError(f"state file: missing {key!r}")
        return default
    v = np.asarray(data[key], dtype=float)
    if v.shape != (n,) or not np.all(np.isfinite(v)):
        raise ConfigError(f"state file: {key!r} must hold {n} finite numbers")
    return v


def load_inputs(tree: KinematicTree, cfg: RunConfig) -> Inputs:
    """Seeded draws use the same stream order as ``validate``, so both see one input set."""
    if "seed" in cfg.state:
        seed = cfg.state["seed"]
        rng = np.random.default_rng(seed)
        state = random_state(tree, rng)
        tau = rng.uniform(-1, 1, tree.nv)
        spec = ContactSpec.from_tree(tree) if tree.contacts else default_contact_spec(tree, state.q)
        return Inputs(state, tau, rng.uniform(-1, 1, spec.n_c), spec, seed)
    try:
        data = json.loads(Path(cfg.state["file"]).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read state file: {exc}") from None
    q = _vector(data, "q", tree.nq)
    qd = _vector(data, "qd", tree.nv, np.zeros(tree.nv))
    qdd = _vector(data, "qdd", tree.nv, np.zeros(tree.nv))
    state = RobotState(q, qd, qdd)
    tau = _vector(data, "tau", tree.nv, rnea(tree, state)[0])
    spec = ContactSpec.from_tree(tree) if tree.contacts else default_contact_spec(tree, q)
    lam = _vector(data, "lambda", spec.n_c, np.zeros(spec.n_c))
    return Inputs(state, tau, lam, spec, int(data.get("seed", 0)))


# ------------------------------------------------------------------ output

def tensor_record(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=float)
    order = ("out", "du", "dw")[:a.ndim]
    return {"dims": list(a.shape), "axis_order": ",".join(order), "layout": "axis1-fastest",
            "data": [float(x) for x in a.ravel(order="F")]}


def header(cfg: RunConfig, seed: int | None) -> dict:
    echo = asdict(cfg)
    echo.pop("extra")
    echo.update(cfg.extra)
    return {"tool": TOOL, "version": __version__, "python": platform.python_version(),
            "seed": seed, "config": echo}


def _json_safe(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_json_safe(v) for v in x]
    return x


def emit(cfg: RunConfig, text: str) -> None:
    if cfg.out:
        try:
            Path(cfg.out).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot write {cfg.out}: {exc}") from None
    else:
        sys.stdout.write(text)


def dump_json(obj: dict) -> str:
    return json.dumps(_json_safe(obj), indent=1) + "\n"


def csv_text(meta: dict, rows: list[list], head: list[str] | None = None) -> str:
    buf = io.StringIO()
    buf.write(f"# {meta['tool']} {meta['version']} seed={meta['seed']} config={json.dumps(meta['config'])}\n")
    w = csv.writer(buf, lineterminator="\n")
    if head:
        w.writerow(head)
    w.writerows(rows)
    return buf.getvalue()


# ------------------------------------------------------------------ deriv objects

def _objects() -> dict:
    """name -> (group, extractor); each group is computed once per run."""
    reg = {
        "tau": ("rnea", lambda r: r[0]),
        "M": ("crba", lambda r: r),
        "dtau_dq": ("fo", lambda r: r.dtau_dq),
        "dtau_dqd": ("fo", lambda r: r.dtau_dqd),
        "d2tau_dq2": ("so", lambda r: r.d2tau_dq2),
        "d2tau_dqd2": ("so", lambda r: r.d2tau_dqd2),
        "d2tau_dqd_dq": ("so", lambda r: r.d2tau_cross),
        "d2tau_dq_dqd": ("so", lambda r: r.d2tau_dq_dqd),
        "dM_dq": ("so", lambda r: r.dM_dq),
        "dtau_dq_constrained": ("fo_c", lambda r: r.dtau_dq),
        "d2tau_dq2_constrained": ("so_c", lambda r: r.d2tau_dq2),
        "qdd": ("fwd", lambda r: r.qdd),
        "kkt_qdd": ("kkt", lambda r: r.qdd),
        "kkt_lambda": ("kkt", lambda r: r.lam),
        "impact_qd_plus": ("impact", lambda r: r.qd_plus),
        "impact_lambda": ("impact", lambda r: r.lambda_hat),
    }
    for u in VARS:
        reg[f"dqdd_d{u}"] = ("fwd", lambda r, u=u: r.first(u))
        for w in VARS:
            reg[f"d2qdd_d{u}_d{w}"] = ("fwd", lambda r, k=(u, w): r.d2qdd[k])
    for u in KKT_VARS:
        reg[f"kkt_dqdd_d{u}"] = ("kkt", lambda r, u=u: r.dqdd[u])
        reg[f"kkt_dlambda_d{u}"] = ("kkt", lambda r, u=u: r.dlam[u])
        for w in KKT_VARS:
            reg[f"kkt_d2qdd_d{u}_d{w}"] = ("kkt", lambda r, k=(u, w): r.d2qdd[k])
            reg[f"kkt_d2lambda_d{u}_d{w}"] = ("kkt", lambda r, k=(u, w): r.d2lam[k])
    for u in IMPACT_VARS:
        reg[f"impact_dqd_plus_d{u}"] = ("impact", lambda r, u=u: r.dqd_plus[u])
        reg[f"impact_dlambda_d{u}"] = ("impact", lambda r, u=u: r.dlambda[u])
        for w in IMPACT_VARS:
            reg[f"impact_d2qd_plus_d{u}_d{w}"] = ("impact", lambda r, k=(u, w): r.d2qd_plus[k])
            reg[f"impact_d2lambda_d{u}_d{w}"] = ("impact", lambda r, k=(u, w): r.d2lambda[k])
    return reg


OBJECTS = _objects()
DEFAULT_OBJECTS = ("tau", "M", "dtau_dq", "dtau_dqd", "d2tau_dq2", "d2tau_dqd2", "d2tau_dqd_dq", "dM_dq")


def compute_objects(tree: KinematicTree, inp: Inputs, names: list[str]) -> dict[str, np.ndarray]:
    s = inp.state
    groups = {
        "rnea": lambda: rnea(tree, s),
        "crba": lambda: crba(tree, s.q),
        "fo": lambda: id_fo(tree, s),
        "so": lambda: id_so(tree, s),
        "fo_c": lambda: id_fo_constrained(tree, s, inp.spec, inp.lam),
        "so_c": lambda: id_so_constrained(tree, s, inp.spec, inp.lam),
        "fwd": lambda: fd_so(tree, s.q, s.qd, inp.tau),
        "kkt": lambda: kkt_so(tree, s.q, s.qd, inp.tau, inp.spec),
        "impact": lambda: impact_so(tree, s.q, s.qd, inp.spec),
    }
    cache: dict = {}
    out = {}
    for name in names:
        group, get = OBJECTS[name]
        if group not in cache:
            cache[group] = groups[group]()
        out[name] = np.asarray(get(cache[group]), dtype=float)
    return out


# ------------------------------------------------------------------ commands

def cmd_validate(cfg: RunConfig) -> int:
    tree = load_tree(cfg)
    inp = load_inputs(tree, cfg)
    ocfg = OracleConfig(tol_fo=cfg.tol_fo, tol_so=cfg.tol_so, inject=cfg.extra.get("inject_fault"))
    instances = cfg.extra.get("instances", 200)
    cases = []
    t0 = time.perf_counter()
    for rep in range(cfg.reps):
        seed = inp.seed + rep
        # explicit states are used as given on the first case; later cases draw from the seed
        state = inp.state if (rep == 0 and "file" in cfg.state) else None
        r = validate(tree, seed, ocfg, state=state, property_instances=instances)
        cases.append({"case": rep, "seed": seed, "passed": r.passed,
                      "timings": {k: round(v, 4) for k, v in r.timings.items()},
                      "checks": [c.as_dict() for c in r.checks]})
    wall = time.perf_counter() - t0
    passed = all(c["passed"] for c in cases)
    report = header(cfg, inp.seed) | {"model": tree.name, "N": tree.N, "nv": tree.nv, "kernel": KERNEL,
                                       "passed": passed, "wall_time_s": round(wall, 3), "cases": cases}
    if cfg.format != "json":
        raise ConfigError("validate writes JSON reports only")
    emit(cfg, dump_json(report))

    err = sys.stderr if not cfg.out else sys.stdout
    total = sum(len(c["checks"]) for c in cases)
    bad = [(c["case"], k) for c in cases for k in c["checks"] if not k["pass"]]
    for case, k in bad:
        ratio = f" ({k['worst_ratio']:.3g} x allowed)" if k["worst_ratio"] is not None else ""
        print(f"FAIL case {case} {k['name']}: abs {k['max_abs_err']:.3e}{ratio} tol {k['tol']:.1e} {k['detail']}",
              file=err)
    if is_pendulum(tree):
        for k in cases[0]["checks"]:
            if k["family"] == "closed_form":
                print(f"{'PASS' if k['pass'] else 'FAIL'} {k['name']}: {k['detail']}", file=err)
    print(f"{total - len(bad)}/{total} checks passed in {wall:.1f} s", file=err)
    return 0 if passed else 1


def cmd_deriv(cfg: RunConfig) -> int:
    names = cfg.extra.get("objects") or list(DEFAULT_OBJECTS)
    unknown = [n for n in names if n not in OBJECTS]
    if unknown:
        raise ConfigError(f"unknown object(s) {unknown}; known: {', '.join(OBJECTS)}")
    tree = load_tree(cfg)
    inp = load_inputs(tree, cfg)
    objs = compute_objects(tree, inp, names)
    meta = header(cfg, inp.seed)
    meta["inputs"] = {"q": inp.state.q.tolist(), "qd": inp.state.qd.tolist(), "qdd": inp.state.qdd.tolist(),
                      "tau": inp.tau.tolist(), "lambda": inp.lam.tolist(),
                      "contacts": [{"body": c.body, "point": c.point.tolist(), "axes": list(c.axes)}
                                   for c in inp.spec.contacts]}
    if cfg.format == "json":
        emit(cfg, dump_json(meta | {"model": tree.name, "objects": {n: tensor_record(a) for n, a in objs.items()}}))
        return 0
    if any(a.ndim > 2 for a in objs.values()):
        raise ConfigError("csv output holds vectors and matrices only; use --format json for tensors")
    if len(objs) > 1 and not cfg.out:
        raise ConfigError("csv with several objects needs --out DIR")
    if len(objs) == 1 and not (cfg.out and Path(cfg.out).is_dir()):
        (a,) = objs.values()
        emit(cfg, csv_text(meta, np.atleast_2d(a.T).T.tolist()))
        return 0
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    for n, a in objs.items():
        (outdir / f"{n}.csv").write_text(csv_text(meta, np.atleast_2d(a.T).T.tolist()), encoding="utf-8")
    return 0


def _best_time(fn, reps: int) -> float:
    best = math.inf
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cmd_bench(cfg: RunConfig) -> int:
    sizes = cfg.extra.get("sizes") or [8, 16, 32, 64]
    gen = cfg.gen or {"seed": 0, "branch": 0.0}
    kernels = ["numpy"] + (["cython"] if KERNEL == "cython" else [])
    rows = []
    for n in sizes:
        try:
            tree = random_model(n, gen.get("seed", 0), gen.get("branch", 0.0),
                                tuple(gen["kinds"]) if gen.get("kinds") else ("revolute",))
        except (ModelError, ValueError) as exc:
            raise ConfigError(f"--gen: {exc}") from None
        state = random_state(tree, gen.get("seed", 0))
        row = {"N": n, "nv": tree.nv, "fo_visits": id_fo(tree, state).visits, "so_visits": triple_visits(tree),
               "fo_visits_chain_formula": n * (n + 1) // 2, "so_visits_chain_formula": n * (n + 1) * (n + 2) // 6,
               "rnea_s": _best_time(lambda: rnea(tree, state), cfg.reps),
               "id_fo_s": _best_time(lambda: id_fo(tree, state), cfg.reps)}
        for k in kernels:
            row[f"id_so_{k}_s"] = _best_time(lambda: id_so(tree, state, kernel=k), cfg.reps)
        rows.append(row)
    meta = header(cfg, gen.get("seed", 0))
    if cfg.format == "json":
        emit(cfg, dump_json(meta | {"kernel": KERNEL, "rows": rows}))
    else:
        head = list(rows[0])
        emit(cfg, csv_text(meta, [[r.get(h, "") for h in head] for r in rows], head))
    return 0


def cmd_gen_model(cfg: RunConfig) -> int:
    if cfg.extra.get("preset") == "pendulum":
        tree = pendulum()
    else:
        tree = load_tree(cfg)
    emit(cfg, dump_model(tree))
    return 0


COMMANDS = {"validate": cmd_validate, "deriv": cmd_deriv, "bench": cmd_bench, "gen-model": cmd_gen_model}


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog=TOOL, description="Analytical rigid-body dynamics derivatives.")
    p.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, state=True):
        src = sp.add_mutually_exclusive_group()
        src.add_argument("--model", metavar="PATH", help="model file (JSON)")
        src.add_argument("--gen", metavar="N=..,seed=..,branch=..",
                         help="random model; optional kinds=revolute+prismatic+spherical+free")
        if state:
            sp.add_argument("--state", metavar="seed=K|file=PATH", help="seeded random state or JSON state file")
        sp.add_argument("--out", metavar="PATH")
        sp.add_argument("--format", choices=("json", "csv"), default="json")

    v = sub.add_parser("validate", help="identity suite and oracle comparisons")
    common(v)
    v.add_argument("--tol-fo", type=float, default=1e-6)
    v.add_argument("--tol-so", type=float, default=1e-7)
    v.add_argument("--reps", type=_positive_int, default=1, help="number of validation cases (seed, seed+1, ...)")
    v.add_argument("--instances", type=_positive_int, default=200, help="random instances per property identity")
    v.add_argument("--inject-fault", metavar="CHECK", help=argparse.SUPPRESS)

    d = sub.add_parser("deriv", help="write derivative objects")
    common(d)
    d.add_argument("--objects", metavar="NAMES", help="comma-separated object names (default: ID family)")
    d.add_argument("--list", action="store_true", help="print the known object names and exit")

    b = sub.add_parser("bench", help="timings and inner-visit counts")
    b.add_argument("--gen", metavar="seed=..,branch=..,kinds=..")
    b.add_argument("--sizes", metavar="N1,N2,...", default="8,16,32,64")
    b.add_argument("--reps", type=_positive_int, default=3)
    b.add_argument("--out", metavar="PATH")
    b.add_argument("--format", choices=("json", "csv"), default="json")

    g = sub.add_parser("gen-model", help="write a model file")
    common(g, state=False)
    g.add_argument("--preset", choices=("pendulum",))
    return p


def make_config(ns: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(command=ns.command, out=ns.out, format=ns.format)
    cfg.model = getattr(ns, "model", None)
    if getattr(ns, "gen", None) is not None:
        if ns.command == "bench":
            raw = _kv(ns.gen, "--gen")
            if "N" in raw:
                raise ConfigError("bench: give sizes with --sizes, not N=")
            cfg.gen = parse_gen(ns.gen)
            cfg.gen.pop("N")
        else:
            cfg.gen = parse_gen(ns.gen)
    if ns.command in ("validate", "deriv"):
        cfg.state = parse_state(ns.state)
    if ns.command == "validate":
        cfg.tol_fo, cfg.tol_so, cfg.reps = ns.tol_fo, ns.tol_so, ns.reps
        if not (cfg.tol_fo > 0 and cfg.tol_so > 0):
            raise ConfigError("tolerances must be positive")
        cfg.extra = {"instances": ns.instances}
        if ns.inject_fault:
            cfg.extra["inject_fault"] = ns.inject_fault
    elif ns.command == "deriv":
        if ns.objects:
            cfg.extra = {"objects": [n.strip() for n in ns.objects.split(",") if n.strip()]}
    elif ns.command == "bench":
        cfg.reps = ns.reps
        try:
            cfg.extra = {"sizes": [int(x) for x in ns.sizes.split(",") if x.strip()]}
        except ValueError:
            raise ConfigError(f"--sizes: bad list {ns.sizes!r}") from None
        if not cfg.extra["sizes"] or min(cfg.extra["sizes"]) < 1:
            raise ConfigError("--sizes: need positive sizes")
    elif ns.command == "gen-model":
        if ns.format != "json":
            raise ConfigError("model files are JSON")
        if ns.preset:
            if cfg.model or cfg.gen:
                raise ConfigError("--preset excludes --model and --gen")
            cfg.extra = {"preset": ns.preset}
    return cfg


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if ns.command == "deriv" and ns.list:
        print("\n".join(OBJECTS))
        return 0
    try:
        cfg = make_config(ns)
        return COMMANDS[ns.command](cfg)
    except ConfigError as exc:
        print(f"{TOOL}: error: {exc}", file=sys.stderr)
        return 2
    except np.linalg.LinAlgError as exc:
        print(f"{TOOL}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
