import math

import numpy as np
import pytest

from pathhj.control import value_function
from pathhj.hamiltonian import Hamiltonian, control_hamiltonian
from pathhj.minimax import (
    CandidateSolution,
    CheckConfig,
    check_subsolution,
    check_supersolution,
    comparison_probe,
    default_zset,
    mu_extremal,
    sandwich_check,
    u_extremal,
)
from pathhj.pathspace import Anchor, Path, TimeGrid
from pathhj.presets import bang_linear

H0 = Hamiltonian(lambda t, x, y, z: 0.0)
G16 = TimeGrid.uniform(1.0, 16)
ANCHOR0 = Anchor(0.0, Path.constant(G16, 0.0))
H_BANG = control_hamiltonian(bang_linear())
TERMINAL = lambda x: float(x.terminal()[0])


def bang_anchors(grid):
    return [Anchor(0.0, Path.constant(grid, 0.0)), Anchor(0.5, Path.from_function(grid, lambda t: 0.5 - t))]


def test_default_zset():
    assert [z.tolist() for z in default_zset(1)] == [[0.0], [1.0], [-1.0], [2.0], [-2.0]]
    assert len(default_zset(2)) == 9


def test_tolerance_schedule():
    cfg = CheckConfig(1.0, G16, [ANCHOR0])
    assert cfg.tol(np.array([2.0])) == pytest.approx(3 * 3 / 16)
    assert CheckConfig(1.0, G16, [ANCHOR0], fixed_tol=1e-6).tol(np.array([2.0])) == 1e-6
    with pytest.raises(ValueError):
        CheckConfig(1.0, G16, [])


def test_constant_candidate_margins_equal_offsets():
    u = CandidateSolution(lambda t, x: 0.4)
    cfg = CheckConfig(1.0, G16, [ANCHOR0], offsets=(0.0, 0.25), fixed_tol=0.0)
    sup = check_supersolution(u, H0, cfg, h=lambda x: 0.4)
    sub = check_subsolution(u, H0, cfg, h=lambda x: 0.4)
    assert sup.passed and sub.passed
    for e in sup.entries + sub.entries:
        # zero drift keeps y at y0, which is u0 +- offset
        offset = abs(e.y0 - 0.4)
        assert e.margin == pytest.approx(offset) or e.margin >= offset


@pytest.mark.parametrize("check", [check_supersolution, check_subsolution])
def test_bang_linear_value_passes(check):
    v = value_function(bang_linear(), G16)
    rep = check(v, H_BANG, CheckConfig(1.0, G16, bang_anchors(G16)), h=TERMINAL)
    assert rep.passed
    assert len(rep.entries) == 2 * 5 * 2


def test_shifted_value_fails_terminal():
    v = value_function(bang_linear(), G16)
    cfg = CheckConfig(1.0, G16, [ANCHOR0])
    low = check_supersolution(v.shifted(-0.5), H_BANG, cfg, h=TERMINAL)
    assert not low.passed and not all(e.passed for e in low.terminal)
    high = check_subsolution(v.shifted(0.5), H_BANG, cfg, h=TERMINAL)
    assert not high.passed and not all(e.passed for e in high.terminal)


def test_doubled_value_fails():
    v = value_function(bang_linear(), G16)
    cfg = CheckConfig(1.0, G16, bang_anchors(G16))
    sup = check_supersolution(v.scaled(2.0), H_BANG, cfg, h=TERMINAL)
    sub = check_subsolution(v.scaled(2.0), H_BANG, cfg, h=TERMINAL)
    assert not (sup.passed and sub.passed)


def test_classical_candidate_passes_tight():
    b, p = 0.7, 2.0
    Hb = Hamiltonian(lambda t, x, y, z: b * z[0], L_H=b)
    u = CandidateSolution(lambda t, x: p * x.at(t)[0] + b * p * (1 - t), dx=lambda t, x: np.array([p]))
    h = lambda x: p * x.terminal()[0]
    cfg = CheckConfig(b, G16, [ANCHOR0, Anchor(0.25, Path.from_function(G16, lambda t: t))], fixed_tol=1e-6, budget=32)
    assert check_supersolution(u, Hb, cfg, h).passed
    assert check_subsolution(u, Hb, cfg, h).passed


def test_report_serialisation():
    u = CandidateSolution(lambda t, x: 0.0)
    rep = check_supersolution(u, H0, CheckConfig(1.0, TimeGrid.uniform(1.0, 4), [Anchor(0.0, Path.constant(TimeGrid.uniform(1.0, 4), 0.0))]))
    d = rep.to_dict()
    assert d["kind"] == "supersolution" and d["passed"] and d["config"]["N"] == 4
    assert rep.rows()[0]["section"] == "interior"


@pytest.mark.parametrize("mode,sign", [("plus", 1), ("minus", -1)])
def test_mu_extremal_bang_linear(mode, sign):
    N = 16
    mu = mu_extremal(mode, TERMINAL, H_BANG, 1.0, 0.0, ANCHOR0, 0.0, G16, budget=16)
    assert mu == pytest.approx(sign * ((1 + 1 / N) ** N - 1), rel=1e-12)


def test_mu_at_horizon():
    anchor = Anchor(1.0, Path.constant(G16, 0.3))
    for mode in ("plus", "minus"):
        assert mu_extremal(mode, TERMINAL, H_BANG, 1.0, 1.0, anchor, 0.1, G16, 4) == pytest.approx(0.2)
        assert u_extremal(mode, TERMINAL, H_BANG, 1.0, 1.0, anchor, G16, 4) == pytest.approx(0.3, abs=1e-8)


def test_u_extremal_bang_linear_discrete_closed_form():
    # root r of  top - r (1 + c/N)^N = 0
    N = 16
    top = (1 + 1 / N) ** N - 1
    expect = top / (1 + 0.5 / N) ** N
    assert u_extremal("plus", TERMINAL, H_BANG, 1.0, 0.0, ANCHOR0, G16, 16) == pytest.approx(expect, abs=2e-9)
    assert u_extremal("minus", TERMINAL, H_BANG, 1.0, 0.0, ANCHOR0, G16, 16) == pytest.approx(-expect, abs=2e-9)


def test_monotone_shift_and_budget_monotonicity():
    rng = np.random.default_rng(1)
    g = TimeGrid.uniform(1.0, 8)
    for _ in range(5):
        anchor = Anchor(float(g.nodes[rng.integers(0, 8)]), Path(g, rng.normal(size=9)))
        z = float(rng.choice([-2, -1, 0, 1, 2]))
        base = mu_extremal("plus", TERMINAL, H_BANG, 1.0, z, anchor, 0.0, g, 8)
        for s in (0.1, 0.5, 1.0):
            assert mu_extremal("plus", TERMINAL, H_BANG, 1.0, z, anchor, s, g, 8) <= base - s + 1e-9
        assert mu_extremal("plus", TERMINAL, H_BANG, 1.0, z, anchor, 0.0, g, 20) >= base
        lo = mu_extremal("minus", TERMINAL, H_BANG, 1.0, z, anchor, 0.0, g, 8)
        assert mu_extremal("minus", TERMINAL, H_BANG, 1.0, z, anchor, 0.0, g, 20) <= lo


def test_bad_mode():
    with pytest.raises(ValueError):
        mu_extremal("up", TERMINAL, H_BANG, 1.0, 0.0, ANCHOR0, 0.0, G16, 4)


def test_sandwich_bang_linear_and_corruption():
    v = value_function(bang_linear(), G16)
    tol = 2 * 3 / 16
    ok = sandwich_check(v, TERMINAL, H_BANG, 1.0, [np.zeros(1)], [ANCHOR0], G16, 16, tol)
    assert ok.passed
    row = ok.rows[0]
    assert row.u_minus < row.value < row.u_plus
    bad = sandwich_check(v.shifted(3.0), TERMINAL, H_BANG, 1.0, [np.zeros(1)], [ANCHOR0], G16, 16, tol)
    assert not bad.passed
    horizon = Anchor(1.0, Path.constant(G16, 0.2))
    at_T = sandwich_check(v, TERMINAL, H_BANG, 1.0, [np.zeros(1)], [horizon], G16, 4, 1e-8)
    assert at_T.passed


def test_probe_cases():
    g = TimeGrid.uniform(1.0, 8)
    v = value_function(bang_linear(), g)
    anchor = Anchor(0.0, Path.constant(g, 0.0))
    same = comparison_probe(v, v, v, H_BANG, 1.0, 0.1, anchor, g)
    assert same.status == "no positive gap" and same.inequality is None
    rep = comparison_probe(v.shifted(0.1), v, v, H_BANG, 1.0, 0.1, anchor, g)
    assert rep.status == "evaluated"
    assert rep.M0 == pytest.approx(0.1)
    assert rep.max_antisymmetry == 0.0 and rep.antisymmetry == 0.0
    assert math.isfinite(rep.inequality)
    with pytest.raises(ValueError):
        comparison_probe(v, v, v, H_BANG, 1.0, 0.0, anchor, g)
