"""Acceptance criteria, one test each; tolerances are the pinned targets.

Run alone with ``pytest tests/test_acceptance.py``; the terminal summary
prints a PASS/FAIL line per criterion.
"""

import filecmp
import json
import math
import time

import numpy as np

from pathhj.calculus import SmoothFunctional, chain_rule_residual, psi_bounds_report, psi_invariant_suite, psi_report_csv, random_path_pairs
from pathhj.characteristics import classical_drift, integrate_characteristic
from pathhj.cli import SUBCOMMANDS, main
from pathhj.control import ValueSolver, dpp_residual, value, value_function
from pathhj.hamiltonian import AuditConfig, Hamiltonian, audit_assumptions, control_hamiltonian
from pathhj.minimax import CandidateSolution, CheckConfig, check_subsolution, check_supersolution, default_zset, mu_extremal, u_extremal
from pathhj.pathspace import Anchor, BundleSpec, Path, TimeGrid
from pathhj.presets import PRESETS, bang_linear, delay_drag, switch

PERRON_TARGET = (math.e - 1) * math.exp(-0.5)  # 1.042190


def check_anchors(grid):
    return [
        Anchor(0.0, Path.constant(grid, 0.0)),
        Anchor(0.25, Path.from_function(grid, lambda t: 0.5 - t)),
        Anchor(0.5, Path.constant(grid, -1.0)),
    ]


def test_criterion_01_value_bang_linear(record_property):
    g = TimeGrid.uniform(1.0, 8)
    start = time.perf_counter()
    v, sig = value(bang_linear(c=0.5), 0.0, Path.constant(g, 0.0), g)
    elapsed = time.perf_counter() - start
    record_property("v", f"{v:.10f}")
    record_property("seconds", f"{elapsed:.3f}")
    assert abs(v - (-math.exp(-0.5))) <= 1e-9
    assert [bang_linear().controls[k] for k in sig.atoms] == [-1.0] * 8
    assert elapsed < 1.0


def test_criterion_02_value_switch(record_property):
    g = TimeGrid.uniform(1.0, 8)
    assert g.has_node(0.5)
    v, sig = value(switch(), 0.0, Path.constant(g, 0.0), g)
    record_property("v", f"{v:.12f}")
    assert abs(v - (-1.5)) <= 1e-9
    assert set(sig.atoms) == {0}


def test_criterion_03_dpp(record_property):
    g = TimeGrid.uniform(1.0, 8)
    worst = 0.0
    for make in (bang_linear, switch):
        p = make()
        solver = ValueSolver(p, g)
        for i in range(g.N):
            for j in range(i + 1, g.N + 1):
                x0 = Anchor(float(g.nodes[i]), Path.constant(g, 0.0))
                r = dpp_residual(p, float(g.nodes[i]), float(g.nodes[j]), x0, g, solver=solver)
                worst = max(worst, r)
    record_property("max_residual", f"{worst:.3e}")
    assert worst <= 1e-9


def test_criterion_04_delay_convergence(record_property):
    start = time.perf_counter()
    p = delay_drag()

    def v(N):
        g = TimeGrid.uniform(1.0, N)
        return value(p, 0.0, Path.constant(g, 1.0), g)[0]

    ref = v(256)
    errs = [abs(v(N) - ref) for N in (16, 32, 64, 128)]
    ratios = [b / a for a, b in zip(errs, errs[1:])]
    elapsed = time.perf_counter() - start
    record_property("ratios", " ".join(f"{r:.3f}" for r in ratios))
    record_property("seconds", f"{elapsed:.2f}")
    assert all(r <= 0.75 for r in ratios)
    assert elapsed < 30.0


def test_criterion_05_minimax_value(record_property):
    g = TimeGrid.uniform(1.0, 32)
    outcomes = []
    for p in (bang_linear(), switch()):
        cfg = CheckConfig(L=p.C_f, grid=g, anchors=check_anchors(g), zset=default_zset(1), kappa=3.0)
        H = control_hamiltonian(p)
        v = value_function(p, g)
        sup = check_supersolution(v, H, cfg, p.h)
        sub = check_subsolution(v, H, cfg, p.h)
        record_property(p.name, f"sup {sup.worst_margin:.2e} sub {sub.worst_margin:.2e}")
        outcomes.append(sup.passed and sub.passed)
    assert all(outcomes)


def test_criterion_06_classical_consistency(record_property):
    b, p, T = 0.7, 2.0, 1.0
    g = TimeGrid.uniform(T, 32)
    H = Hamiltonian(lambda t, x, y, z: b * z[0], L_H=b)
    u = CandidateSolution(lambda t, x: p * x.at(t)[0] + b * p * (T - t), dx=lambda t, x: np.array([p]))
    h = lambda x: p * x.terminal()[0]
    anchors = check_anchors(g)
    worst = 0.0
    for anchor in anchors:
        x0 = anchor.frozen_on(g)
        for z in default_zset(1):
            pair = integrate_characteristic(H, BundleSpec(b, anchor), classical_drift(u, H, z), u(anchor.s0, x0), z, g)
            worst = max(worst, max(abs(pair.y_at_node(i) - u(g.nodes[i], pair.x)) for i in range(pair.start, g.N + 1)))
    cfg = CheckConfig(L=b, grid=g, anchors=anchors, fixed_tol=1e-6)
    sup = check_supersolution(u, H, cfg, h)
    sub = check_subsolution(u, H, cfg, h)
    record_property("max_gap", f"{worst:.2e}")
    assert worst <= 1e-9
    assert sup.passed and sub.passed


def test_criterion_07_perron_sandwich(record_property):
    p = bang_linear()
    g = TimeGrid.uniform(1.0, 128)
    H = control_hamiltonian(p)
    anchor = Anchor(0.0, Path.constant(g, 0.0))
    tol = 2 * 3.0 * g.max_step
    lo = u_extremal("minus", p.h, H, p.C_f, 0.0, anchor, g, budget=16)
    hi = u_extremal("plus", p.h, H, p.C_f, 0.0, anchor, g, budget=16)
    v, _ = value(p, 0.0, anchor, g)
    record_property("u_minus", f"{lo:.6f}")
    record_property("u_plus", f"{hi:.6f}")
    record_property("target", f"{PERRON_TARGET:.6f}")
    assert lo - tol <= v <= hi + tol
    assert abs(lo + PERRON_TARGET) <= 1e-3
    assert abs(hi - PERRON_TARGET) <= 1e-3


def test_criterion_08_monotone_shift(record_property):
    rng = np.random.default_rng(0)
    g = TimeGrid.uniform(1.0, 8)
    zs = default_zset(1)
    worst = -math.inf
    for name, make in PRESETS.items():
        prob = make()
        H = control_hamiltonian(prob)
        for _ in range(100):
            i0 = int(rng.integers(0, g.N))
            anchor = Anchor(float(g.nodes[i0]), Path(g, rng.uniform(-1, 1, size=g.N + 1)))
            z = zs[int(rng.integers(len(zs)))]
            y0 = float(rng.uniform(-2, 2))
            base = mu_extremal("plus", prob.h, H, prob.C_f, z, anchor, y0, g, budget=8)
            for s in (0.1, 0.5, 1.0):
                shifted = mu_extremal("plus", prob.h, H, prob.C_f, z, anchor, y0 + s, g, budget=8)
                worst = max(worst, shifted - (base - s))
    record_property("max_excess", f"{worst:.2e}")
    assert worst <= 1e-9


def test_criterion_09_psi_suite(record_property, tmp_path):
    pairs = random_path_pairs(1000, TimeGrid.uniform(1.0, 16), d=1, seed=0)
    res = psi_invariant_suite(pairs)
    report = psi_bounds_report(pairs)
    (tmp_path / "psi_bounds.csv").write_text(psi_report_csv(report))
    record_property("violations", res.violations)
    record_property("bound_checked", res.bound_checked)
    assert res.pairs == 1000 and res.violations == 0
    assert res.bound_checked > 0
    assert len(report) == 1000 and (tmp_path / "psi_bounds.csv").stat().st_size > 0


def test_criterion_10_chain_rule(record_property):
    phi = SmoothFunctional.single_path(lambda t, x: float(x.at(t) @ x.at(t)), lambda t, x: 0.0, lambda t, x: 2.0 * x.at(t))
    x = Path.from_function(TimeGrid.uniform(1.0, 4096), lambda t: math.sin(3 * t) + t)
    res = [chain_rule_residual(phi, 0.0, x, x, x, x, 1.0, grid=TimeGrid.uniform(1.0, N)) for N in (32, 64, 128)]
    ratios = [b / a for a, b in zip(res, res[1:])]
    record_property("ratios", " ".join(f"{r:.3f}" for r in ratios))
    assert all(r <= 0.6 for r in ratios)


def test_criterion_11_audit(record_property):
    p = bang_linear()
    H = control_hamiltonian(p)
    assert H.L_H == p.C_f == 1.0 and H.C_H == p.C_f + p.C_lambda
    rep = audit_assumptions(H, AuditConfig(samples=10_000, L=p.C_f, seed=0))
    record_property("ratios", " ".join(f"{r.condition}={r.worst_ratio:.3f}" for r in rep.results))
    assert rep.passed


def test_criterion_12_determinism(record_property, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "problem": {"preset": "bang-linear"},
        "grid": {"N": 8},
        "anchors": [{"s": 0, "x": 0}, {"s": 0.5, "nodes": [[0, 0], [1, -1]]}],
        "psi": {"pairs": 200},
        "audit": {"samples": 200},
    }))
    for sub in SUBCOMMANDS:
        outs = []
        for run in ("a", "b"):
            out = tmp_path / f"{sub}_{run}"
            main([sub, "--config", str(cfg), "--out", str(out), "--seed", "7", "--quiet"])
            outs.append(out)
        for name in ("report.json", f"{sub}.csv"):
            assert filecmp.cmp(outs[0] / name, outs[1] / name, shallow=False), (sub, name)
    record_property("subcommands", len(SUBCOMMANDS))
