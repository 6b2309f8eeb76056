"""Command-line front end: ``pathhj <subcommand> --config cfg.json``.

Every subcommand writes one CSV table and ``report.json`` into the output
directory.  Reports contain the fully resolved configuration (defaults
included) and no timestamps, so identical inputs give identical bytes.

Exit codes: 0 all non-diagnostic checks pass, 1 a check failed,
2 configuration error, 3 enumeration budget exceeded.
"""

from __future__ import annotations

import argparse
import ast
import copy
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .calculus import PSI_CSV_COLUMNS, psi_bounds_report, psi_invariant_suite, random_path_pairs
from .control import BudgetExceeded, ControlProblem, ValueSolver, dpp_residual, value_function, verify_value_minimax
from .hamiltonian import AuditConfig, audit_assumptions, control_hamiltonian
from .minimax import CheckConfig, comparison_probe, sandwich_check
from .pathspace import Anchor, Path, TimeGrid, sup_history
from .presets import PRESETS

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_BUDGET = 0, 1, 2, 3
SUBCOMMANDS = ("value", "dpp", "minimax", "psi", "perron", "probe", "audit")

DEFAULTS = {
    "grid": {"N": 8},
    "bundle": {"L": None, "kappas": [0.0, 0.5, 1.0], "budget": 16},
    "zset": None,
    "anchors": [{"s": 0.0, "x": 0.0}],
    "tolerances": {"kappa": 3.0, "fixed": None, "offsets": [0.0, 0.25], "dpp": 1e-9},
    "value": {"budget": 2**16},
    "dpp": {"head_budget": 2**10},
    "psi": {"pairs": 1000, "N": 16, "d": 1},
    "probe": {"eps": 0.1, "shift": 0.1, "budget": 8},
    "audit": {"samples": 1000, "N": 16, "x_range": 2.0, "y_range": 5.0, "z_range": 3.0},
    "seed": 0,
    "out_dir": "out",
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# inline expressions

_FUNCS = {
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
    "sin": math.sin,
    "cos": math.cos,
    "abs": abs,
    "min": min,
    "max": max,
}
_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.BoolOp, ast.Compare, ast.IfExp, ast.Call,
    ast.Name, ast.Load, ast.Constant, ast.Subscript, ast.Tuple, ast.List,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.Mod, ast.USub, ast.UAdd, ast.Not,
    ast.And, ast.Or, ast.Lt, ast.LtE, ast.Gt, ast.GtE, ast.Eq, ast.NotEq,
)


def compile_expression(src: str, names: set[str]):
    """Compile an arithmetic expression over ``names`` and a few math functions.

    Only a whitelisted subset of Python syntax is accepted; attribute access,
    lambdas, comprehensions and unknown names are rejected.
    """
    try:
        tree = ast.parse(str(src), mode="eval")
    except SyntaxError as e:
        raise ConfigError(f"bad expression {src!r}: {e.msg}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _NODES):
            raise ConfigError(f"disallowed syntax {type(node).__name__} in {src!r}")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ConfigError(f"only numeric constants allowed in {src!r}")
        if isinstance(node, ast.Name) and node.id not in names and node.id not in _FUNCS:
            raise ConfigError(f"unknown name {node.id!r} in {src!r}")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and not node.keywords):
            raise ConfigError(f"only plain function calls allowed in {src!r}")
    code = compile(tree, "<config>", "eval")
    return lambda env: eval(code, {"__builtins__": {}}, {**_FUNCS, **env})


def _inline_problem(spec: dict) -> ControlProblem:
    try:
        d = int(spec.get("d", 1))
        T = float(spec.get("T", 1.0))
        controls = tuple(spec["controls"])
        C_f, C_lambda, L_f = float(spec["C_f"]), float(spec["C_lambda"]), float(spec["L_f"])
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"inline problem: missing or invalid field {e}") from None
    coeff_names = {"t", "a", "x", "sup", "lag", "T"}
    f = compile_expression(spec.get("f", "0"), coeff_names)
    lam = compile_expression(spec.get("lam", "0"), coeff_names)
    ell = compile_expression(spec.get("ell", "0"), coeff_names)
    h = compile_expression(spec.get("h", "0"), {"x", "sup", "lag", "T"})

    def env(t, x, a=None):
        now = x.at(t)
        return {
            "t": t,
            "a": a,
            "T": T,
            "x": float(now[0]) if d == 1 else now,
            "sup": sup_history(x, t),
            "lag": lambda tau: (lambda v: float(v[0]) if d == 1 else v)(x.at(max(t - tau, 0.0))),
        }

    return ControlProblem(
        name=str(spec.get("name", "inline")),
        d=d,
        controls=controls,
        f=lambda t, x, a: f(env(t, x, a)),
        lam=lambda t, x, a: float(lam(env(t, x, a))),
        ell=lambda t, x, a: float(ell(env(t, x, a))),
        h=lambda x: float(h(env(x.T, x))),
        C_f=C_f,
        C_lambda=C_lambda,
        L_f=L_f,
        T=T,
        memory=None if spec.get("memory") is None else float(spec["memory"]),
        discontinuities=tuple(float(v) for v in spec.get("discontinuities", ())),
        h_growth=None if spec.get("h_growth") is None else float(spec["h_growth"]),
    )


# ---------------------------------------------------------------------------
# configuration


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass
class Experiment:
    config: dict
    problem: ControlProblem
    grid: TimeGrid
    anchors: list
    L: float
    zset: list

    def check_config(self) -> CheckConfig:
        tol = self.config["tolerances"]
        b = self.config["bundle"]
        return CheckConfig(
            L=self.L,
            grid=self.grid,
            anchors=self.anchors,
            zset=self.zset,
            offsets=tuple(tol["offsets"]),
            budget=int(b["budget"]),
            kappa=float(tol["kappa"]),
            fixed_tol=tol["fixed"],
            kappas=tuple(b["kappas"]),
        )


def _anchor(spec: dict, grid: TimeGrid, d: int) -> Anchor:
    s = float(spec["s"])
    if not grid.has_node(s):
        raise ConfigError(f"anchor time {s} is not a grid node")
    if "x" in spec:
        return Anchor(s, Path.constant(grid, spec["x"] if d > 1 else [float(spec["x"])]))
    nodes = np.asarray(spec["nodes"], dtype=float)
    if nodes.ndim != 2 or nodes.shape[1] != d + 1:
        raise ConfigError("anchor nodes must be [[t, x...], ...]")
    vals = np.array([[np.interp(t, nodes[:, 0], nodes[:, 1 + k]) for k in range(d)] for t in grid.nodes])
    if spec.get("mode", "linear") == "step":
        idx = np.clip(np.searchsorted(nodes[:, 0], grid.nodes, side="right") - 1, 0, len(nodes) - 1)
        vals = nodes[idx, 1:]
    return Anchor(s, Path(grid, vals, mode=spec.get("mode", "linear")))


def load_config(raw: dict, seed: int | None = None, out_dir: str | None = None) -> Experiment:
    if not isinstance(raw, dict) or "problem" not in raw:
        raise ConfigError("config must be an object with a 'problem' field")
    cfg = _merge(DEFAULTS, raw)
    if seed is not None:
        cfg["seed"] = int(seed)
    if out_dir is not None:
        cfg["out_dir"] = out_dir
    try:
        prob = cfg["problem"]
        if "preset" in prob:
            if prob["preset"] not in PRESETS:
                raise ConfigError(f"unknown preset {prob['preset']!r}; choose from {sorted(PRESETS)}")
            problem = PRESETS[prob["preset"]](**prob.get("params", {}))
        elif "inline" in prob:
            problem = _inline_problem(prob["inline"])
        else:
            raise ConfigError("problem needs 'preset' or 'inline'")
        N = int(cfg["grid"]["N"])
        if N < 1:
            raise ConfigError("grid.N must be >= 1")
        grid = TimeGrid.uniform(problem.T, N)
        for t in problem.discontinuities:
            if not grid.has_node(t):
                raise ConfigError(f"discontinuity {t} is not a grid node for N={N}")
        if cfg["bundle"]["L"] is None:
            cfg["bundle"]["L"] = problem.C_f
        L = float(cfg["bundle"]["L"])
        anchors = [_anchor(a, grid, problem.d) for a in cfg["anchors"]]
        if not anchors:
            raise ConfigError("at least one anchor required")
        if cfg["zset"] is None:
            from .minimax import default_zset

            cfg["zset"] = [z.tolist() for z in default_zset(problem.d)]
        zset = [np.atleast_1d(np.asarray(z, dtype=float)) for z in cfg["zset"]]
        if any(z.shape != (problem.d,) for z in zset):
            raise ConfigError("z-set entries must have the problem dimension")
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"invalid config: {e}") from None
    return Experiment(cfg, problem, grid, anchors, L, zset)


# ---------------------------------------------------------------------------
# subcommands; each returns (csv columns, csv rows, checks, results)


def _map(fn, items, workers: int):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def _signal_str(problem, signal) -> str:
    return " ".join(repr(float(problem.controls[k])) for k in signal.atoms)


def run_value(exp: Experiment, workers: int):
    budget = int(exp.config["value"]["budget"])

    def one(anchor):
        v, sig = ValueSolver(exp.problem, exp.grid, budget).solve(anchor.s0, anchor)
        return {"s": anchor.s0, "value": v, "argmin": _signal_str(exp.problem, sig)}

    rows = _map(one, exp.anchors, workers)
    return ["s", "value", "argmin"], rows, {}, {"values": rows}


def run_dpp(exp: Experiment, workers: int):
    budget = int(exp.config["value"]["budget"])
    head = int(exp.config["dpp"]["head_budget"])
    tol = float(exp.config["tolerances"]["dpp"])
    nodes = exp.grid.nodes

    def one(anchor):
        solver = ValueSolver(exp.problem, exp.grid, budget)
        i0 = exp.grid.index_of(anchor.s0)
        out = []
        for j in range(i0 + 1, exp.grid.N + 1):
            if len(exp.problem.controls) ** (j - i0) > head:
                break
            r = dpp_residual(exp.problem, anchor.s0, float(nodes[j]), anchor, exp.grid, budget, solver)
            out.append({"s": anchor.s0, "t": float(nodes[j]), "residual": r, "passed": r <= tol})
        return out

    rows = [r for chunk in _map(one, exp.anchors, workers) for r in chunk]
    return ["s", "t", "residual", "passed"], rows, {"dpp": all(r["passed"] for r in rows)}, {"residuals": rows}


def run_minimax(exp: Experiment, workers: int):
    cc = exp.check_config()
    res = verify_value_minimax(exp.problem, cc, int(exp.config["value"]["budget"]))
    rows = []
    for kind in ("supersolution", "subsolution"):
        rep = res[kind]
        for e in rep.entries:
            rows.append({"check": kind, "anchor": e.anchor, "z": e.z, "y0": e.y0, "margin": e.margin,
                         "tol": e.tol, "witness": e.witness, "passed": e.passed})
        for e in rep.terminal:
            rows.append({"check": f"{kind}-terminal", "witness": e.path, "margin": e.gap, "tol": e.tol, "passed": e.passed})
    for r in res["sandwich"].rows:
        rows.append({"check": "sandwich", "anchor": r.anchor, "z": r.z, "u_minus": r.u_minus, "value": r.value,
                     "u_plus": r.u_plus, "tol": r.tol, "passed": r.passed})
    cols = ["check", "anchor", "z", "y0", "margin", "tol", "witness", "u_minus", "value", "u_plus", "passed"]
    results = {
        "check_config": cc.describe(),
        "supersolution": res["supersolution"].to_dict(),
        "subsolution": res["subsolution"].to_dict(),
        "sandwich": res["sandwich"].to_dict(),
        "dpp": res["dpp"],
    }
    return cols, rows, dict(res["checks"]), results


def run_psi(exp: Experiment, workers: int):
    p = exp.config["psi"]
    pairs = random_path_pairs(int(p["pairs"]), TimeGrid.uniform(1.0, int(p["N"])), int(p["d"]), int(exp.config["seed"]))
    suite = psi_invariant_suite(pairs)
    rows = [r.__dict__ for r in psi_bounds_report(pairs)]
    diag = {"lower_violations": sum(r["violated_lower"] for r in rows), "upper_violations": sum(r["violated_upper"] for r in rows)}
    return PSI_CSV_COLUMNS, rows, {"psi_invariants": suite.passed}, {"suite": suite.to_dict(), "bounds_report_diagnostic": diag}


def run_perron(exp: Experiment, workers: int):
    cc = exp.check_config()
    H = control_hamiltonian(exp.problem)
    v = value_function(exp.problem, exp.grid, int(exp.config["value"]["budget"]))

    def one(anchor):
        rep = sandwich_check(v, exp.problem.h, H, exp.L, cc.zset, [anchor], exp.grid, cc.budget, 2 * cc.tol(), cc.kappas)
        return [r.__dict__ for r in rep.rows]

    rows = [r for chunk in _map(one, exp.anchors, workers) for r in chunk]
    cols = ["anchor", "z", "u_minus", "value", "u_plus", "tol", "passed"]
    return cols, rows, {"sandwich": all(r["passed"] for r in rows)}, {"rows": rows}


def run_probe(exp: Experiment, workers: int):
    p = exp.config["probe"]
    H = control_hamiltonian(exp.problem)
    v = value_function(exp.problem, exp.grid, int(exp.config["value"]["budget"]))
    u = v.shifted(float(p["shift"]))
    rows = []
    for anchor in exp.anchors:
        if anchor.s0 >= exp.grid.T:
            continue
        rep = comparison_probe(u, v, v, H, exp.L, float(p["eps"]), anchor, exp.grid, int(p["budget"]), tuple(exp.config["bundle"]["kappas"]))
        rows.append({"anchor": anchor.s0, **rep.to_dict()})
    cols = ["anchor", "M0", "status", "s", "x_index", "xt_index", "phi_max", "psi", "inequality", "antisymmetry", "max_antisymmetry"]
    anti_ok = all((r["max_antisymmetry"] or 0.0) == 0.0 for r in rows)
    return cols, rows, {"antisymmetry": anti_ok}, {"probes": rows}


def run_audit(exp: Experiment, workers: int):
    a = exp.config["audit"]
    cfg = AuditConfig(
        samples=int(a["samples"]), T=exp.problem.T, N=int(a["N"]), d=exp.problem.d,
        x_range=float(a["x_range"]), y_range=float(a["y_range"]), z_range=float(a["z_range"]),
        L=exp.L, seed=int(exp.config["seed"]),
    )
    rep = audit_assumptions(control_hamiltonian(exp.problem), cfg)
    rows = [{k: v for k, v in r.to_dict().items() if k != "witness"} | {"witness": json.dumps(r.witness, sort_keys=True)} for r in rep.results]
    return ["condition", "declared", "worst_ratio", "witness", "passed"], rows, {r.condition: r.passed for r in rep.results}, rep.to_dict()


RUNNERS = {
    "value": run_value,
    "dpp": run_dpp,
    "minimax": run_minimax,
    "psi": run_psi,
    "perron": run_perron,
    "probe": run_probe,
    "audit": run_audit,
}


# ---------------------------------------------------------------------------
# output


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    raise TypeError(f"not serialisable: {type(v).__name__}")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return " ".join(_cell(x) for x in v)
    return str(v)


def render_csv(cols, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in cols])
    return buf.getvalue()


def run(subcommand: str, raw_config: dict, seed: int | None = None, out_dir: str | None = None, workers: int = 1) -> tuple[int, dict]:
    """Execute one subcommand; write ``<subcommand>.csv`` and ``report.json``."""
    exp = load_config(raw_config, seed, out_dir)
    cols, rows, checks, results = RUNNERS[subcommand](exp, workers)
    passed = all(checks.values())
    out = exp.config["out_dir"]
    # the output location is not part of the experiment
    recorded = {k: v for k, v in exp.config.items() if k != "out_dir"}
    report = {
        "subcommand": subcommand,
        "config": recorded,
        "checks": checks,
        "passed": passed,
        "results": results,
    }
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, f"{subcommand}.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(render_csv(cols, rows))
    with open(os.path.join(out, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=2, default=_jsonable)
        fh.write("\n")
    return (EXIT_OK if passed else EXIT_FAIL), report


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pathhj", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", required=True, help="JSON experiment config")
    ap.add_argument("--out", default=None, help="output directory (overrides out_dir)")
    ap.add_argument("--seed", type=int, default=None, help="RNG seed (overrides config)")
    ap.add_argument("--workers", type=int, default=1, help="thread pool size for per-anchor work")
    ap.add_argument("--quiet", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
        code, report = run(args.subcommand, raw, args.seed, args.out, max(1, args.workers))
    except (OSError, json.JSONDecodeError, ConfigError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceeded as e:
        print(f"budget exceeded: {e}", file=sys.stderr)
        return EXIT_BUDGET
    if not args.quiet:
        for name, ok in sorted(report["checks"].items()):
            print(f"{'PASS' if ok else 'FAIL'}  {name}")
        print(f"{args.subcommand}: {'ok' if code == EXIT_OK else 'FAILED'} -> {args.out or raw.get('out_dir', DEFAULTS['out_dir'])}")
    return code


if __name__ == "__main__":
    sys.exit(main())
