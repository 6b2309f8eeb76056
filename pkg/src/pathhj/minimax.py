"""Finite-resolution checks of the minimax sub/supersolution conditions.

The universal quantifiers (over directions ``z`` and initial values ``y0``)
range over the finite sets of a :class:`CheckConfig`; the existential one
(over characteristic pairs) over the configured drift family.  A pass is
evidence at that resolution; a fail beyond tolerance is a counterexample for
the discretised problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .calculus import psi, psi_partials
from .characteristics import bundle_paths, euler_values
from .hamiltonian import Hamiltonian
from .pathspace import Anchor, BundleSpec, Path, TimeGrid, sup_distance, sup_history

BISECT_WIDTH = 1e-9
MAX_DOUBLINGS = 200


@dataclass(frozen=True)
class CandidateSolution:
    """A functional ``u(t, x)``; classical candidates also carry ``dt`` and ``dx``."""

    fn: Callable[[float, Path], float]
    dt: Callable[[float, Path], float] | None = None
    dx: Callable[[float, Path], np.ndarray] | None = None
    name: str = "u"

    def __call__(self, t: float, x: Path) -> float:
        return float(self.fn(t, x))

    def shifted(self, delta: float) -> "CandidateSolution":
        return CandidateSolution(lambda t, x: self.fn(t, x) + delta, self.dt, self.dx, f"{self.name}{delta:+g}")

    def scaled(self, factor: float) -> "CandidateSolution":
        return CandidateSolution(lambda t, x: factor * self.fn(t, x), None, None, f"{factor:g}*{self.name}")


def default_zset(d: int) -> list[np.ndarray]:
    zs = [np.zeros(d)]
    for k in range(d):
        for v in (1.0, -1.0, 2.0, -2.0):
            z = np.zeros(d)
            z[k] = v
            zs.append(z)
    return zs


@dataclass
class CheckConfig:
    L: float
    grid: TimeGrid
    anchors: list
    zset: list | None = None
    offsets: tuple = (0.0, 0.25)
    budget: int = 16
    kappa: float = 3.0
    fixed_tol: float | None = None
    kappas: tuple = (0.0, 0.5, 1.0)

    def __post_init__(self):
        if not self.anchors:
            raise ValueError("need at least one anchor")
        if self.zset is None:
            self.zset = default_zset(self.anchors[0].d)
        self.zset = [np.atleast_1d(np.asarray(z, dtype=float)) for z in self.zset]
        if not self.zset:
            raise ValueError("z-set must be non-empty")
        if self.kappa < 0 or (self.fixed_tol is not None and self.fixed_tol < 0) or min(self.offsets) < 0:
            raise ValueError("tolerances and offsets must be non-negative")

    def tol(self, z=None) -> float:
        if self.fixed_tol is not None:
            return self.fixed_tol
        zn = 0.0 if z is None else float(np.linalg.norm(z))
        return self.kappa * (1.0 + zn) * self.grid.max_step

    def describe(self) -> dict:
        return {
            "L": self.L,
            "N": self.grid.N,
            "T": self.grid.T,
            "zset": [z.tolist() for z in self.zset],
            "offsets": list(self.offsets),
            "budget": self.budget,
            "kappa": self.kappa,
            "fixed_tol": self.fixed_tol,
            "kappas": list(self.kappas),
            "anchors": [a.s0 for a in self.anchors],
        }


@dataclass
class CheckEntry:
    anchor: float
    z: list
    y0: float
    margin: float
    tol: float
    witness: str
    passed: bool


@dataclass
class TerminalEntry:
    path: str
    gap: float
    tol: float
    passed: bool


@dataclass
class CheckReport:
    kind: str
    config: dict
    entries: list = field(default_factory=list)
    terminal: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries) and all(e.passed for e in self.terminal)

    @property
    def worst_margin(self) -> float:
        return min((e.margin for e in self.entries), default=math.inf)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "passed": self.passed,
            "config": self.config,
            "entries": [e.__dict__ for e in self.entries],
            "terminal": [e.__dict__ for e in self.terminal],
        }

    def rows(self) -> list[dict]:
        out = [
            {"kind": self.kind, "section": "interior", "anchor": e.anchor, "z": " ".join(map(repr, e.z)), "y0": e.y0,
             "margin": e.margin, "tol": e.tol, "witness": e.witness, "passed": e.passed}
            for e in self.entries
        ]
        out += [
            {"kind": self.kind, "section": "terminal", "anchor": "", "z": "", "y0": "", "margin": e.gap, "tol": e.tol,
             "witness": e.path, "passed": e.passed}
            for e in self.terminal
        ]
        return out


def _check(kind: str, u: CandidateSolution, H: Hamiltonian, cfg: CheckConfig, h=None) -> CheckReport:
    sign = 1.0 if kind == "supersolution" else -1.0
    grid = cfg.grid
    report = CheckReport(kind, cfg.describe())
    for anchor in cfg.anchors:
        spec = BundleSpec(cfg.L, anchor, cfg.kappas)
        paths = bundle_paths(spec, grid, cfg.budget)
        i0 = grid.index_of(anchor.s0)
        times = grid.nodes[i0:]
        u_cache: dict[int, np.ndarray] = {}

        def u_along(k):
            if k not in u_cache:
                u_cache[k] = np.array([u(float(t), paths[k][1]) for t in times])
            return u_cache[k]

        u0 = u(anchor.s0, anchor.frozen_on(grid))
        if h is not None:
            for label, x in paths:
                gap = sign * (u(grid.T, x) - h(x))
                tol = cfg.tol()
                report.terminal.append(TerminalEntry(f"{anchor.s0:g}:{label}", gap, tol, gap >= -tol))
        if i0 == grid.N:
            continue
        for z in cfg.zset:
            tol = cfg.tol(z)
            for off in cfg.offsets:
                y0 = u0 + sign * off
                best, witness = -math.inf, ""
                for k, (label, x) in enumerate(paths):
                    y = euler_values(H, x, i0, y0, z)
                    margin = float(np.min(sign * (y - u_along(k))))
                    if margin > best:
                        best, witness = margin, label
                report.entries.append(CheckEntry(anchor.s0, z.tolist(), y0, best, tol, witness, best >= -tol))
    return report


def check_supersolution(u: CandidateSolution, H: Hamiltonian, cfg: CheckConfig, h=None) -> CheckReport:
    """Margins are ``min_t (y(t) - u(t, x))`` for the best pair; pass when ``>= -tol``."""
    return _check("supersolution", u, H, cfg, h)


def check_subsolution(u: CandidateSolution, H: Hamiltonian, cfg: CheckConfig, h=None) -> CheckReport:
    """Margins are ``min_t (u(t, x) - y(t))`` for the best pair; pass when ``>= -tol``."""
    return _check("subsolution", u, H, cfg, h)


# ---------------------------------------------------------------------------
# Perron extremal functionals


class _Extremal:
    """Bundle paths are independent of ``y0``; only the ``y`` recursion is redone."""

    def __init__(self, h, H, L, z, anchor: Anchor, grid: TimeGrid, budget: int, kappas=(0.0, 0.5, 1.0)):
        if budget < 1:
            raise ValueError("budget must be at least 1")
        self.H = H
        self.z = np.atleast_1d(np.asarray(z, dtype=float))
        self.grid = grid
        self.i0 = grid.index_of(anchor.s0)
        if self.i0 == grid.N:
            self.paths = [anchor.frozen_on(grid)]
        else:
            self.paths = [x for _, x in bundle_paths(BundleSpec(L, anchor, tuple(kappas)), grid, budget)]
        self.h_vals = np.array([float(h(x)) for x in self.paths])

    def mu(self, mode: str, y0: float) -> float:
        if self.i0 == self.grid.N:
            vals = self.h_vals - y0
        else:
            vals = np.array([hv - euler_values(self.H, x, self.i0, y0, self.z)[-1] for hv, x in zip(self.h_vals, self.paths)])
        return float(vals.max() if mode == "plus" else vals.min())

    def root(self, mode: str) -> float:
        mu = lambda r: self.mu(mode, r)
        # plus: sup{r: mu(r) >= 0}; minus: inf{r: mu(r) <= 0}; mu decreases with slope <= -1
        inside = (lambda v: v >= 0.0) if mode == "plus" else (lambda v: v > 0.0)
        lo = hi = 0.0
        width = 1.0
        if inside(mu(0.0)):
            for _ in range(MAX_DOUBLINGS):
                hi = lo + width
                if not inside(mu(hi)):
                    break
                lo, width = hi, 2 * width
            else:
                raise RuntimeError("bracket search failed; mu appears unbounded")
        else:
            for _ in range(MAX_DOUBLINGS):
                lo = hi - width
                if inside(mu(lo)):
                    break
                hi, width = lo, 2 * width
            else:
                raise RuntimeError("bracket search failed; mu appears unbounded")
        while hi - lo > BISECT_WIDTH:
            mid = 0.5 * (lo + hi)
            if inside(mu(mid)):
                lo = mid
            else:
                hi = mid
        return lo if mode == "plus" else hi


def _check_mode(mode):
    if mode not in ("plus", "minus"):
        raise ValueError("mode must be 'plus' or 'minus'")


def mu_extremal(mode: str, h, H: Hamiltonian, L: float, z, anchor: Anchor, y0: float, grid: TimeGrid, budget: int, kappas=(0.0, 0.5, 1.0)) -> float:
    """Sup (``plus``) or inf (``minus``) of ``h(x) - y(T)`` over the enumerated bundle."""
    _check_mode(mode)
    return _Extremal(h, H, L, z, anchor, grid, budget, kappas).mu(mode, y0)


def u_extremal(mode: str, h, H: Hamiltonian, L: float, z, anchor: Anchor, grid: TimeGrid, budget: int, kappas=(0.0, 0.5, 1.0)) -> float:
    """Zero crossing in ``y0`` of :func:`mu_extremal`, located by bisection."""
    _check_mode(mode)
    return _Extremal(h, H, L, z, anchor, grid, budget, kappas).root(mode)


@dataclass
class SandwichRow:
    anchor: float
    z: list
    u_minus: float
    value: float
    u_plus: float
    tol: float
    passed: bool


@dataclass
class SandwichReport:
    rows: list

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "rows": [r.__dict__ for r in self.rows]}


def sandwich_check(v: CandidateSolution, h, H: Hamiltonian, L: float, zset, anchors: Sequence[Anchor], grid: TimeGrid, budget: int, tol: float, kappas=(0.0, 0.5, 1.0)) -> SandwichReport:
    rows = []
    for anchor in anchors:
        vv = v(anchor.s0, anchor.frozen_on(grid))
        for z in zset:
            ext = _Extremal(h, H, L, z, anchor, grid, budget, kappas)
            lo, hi = ext.root("minus"), ext.root("plus")
            ok = lo - tol <= vv <= hi + tol
            rows.append(SandwichRow(anchor.s0, np.atleast_1d(z).astype(float).tolist(), lo, vv, hi, tol, ok))
    return SandwichReport(rows)


# ---------------------------------------------------------------------------
# comparison probe


@dataclass
class ProbeReport:
    M0: float
    status: str
    s: float | None = None
    x_index: int | None = None
    xt_index: int | None = None
    phi_max: float | None = None
    psi: float | None = None
    inequality: float | None = None
    antisymmetry: float | None = None
    max_antisymmetry: float | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def comparison_probe(
    u: CandidateSolution,
    v: CandidateSolution,
    upsilon: CandidateSolution,
    H: Hamiltonian,
    L: float,
    eps: float,
    anchor: Anchor,
    grid: TimeGrid,
    budget: int = 8,
    kappas=(0.0, 0.5, 1.0),
) -> ProbeReport:
    """Maximise the penalised doubled difference over sampled bundle pairs and
    evaluate the doubled-equation inequality at the maximiser."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    s0 = anchor.s0
    x0 = anchor.frozen_on(grid)
    M0 = u(s0, x0) - v(s0, x0)
    if M0 <= 0:
        return ProbeReport(M0, "no positive gap")
    T = grid.T
    if s0 >= T:
        raise ValueError("anchor must lie before the horizon")
    paths = [x for _, x in bundle_paths(BundleSpec(L, anchor, tuple(kappas)), grid, budget)]
    i0 = grid.index_of(s0)
    times = [float(t) for t in grid.nodes[i0:]]
    U = np.array([[u(t, x) for t in times] for x in paths])
    V = np.array([[v(t, x) for t in times] for x in paths])
    best = None
    max_anti = 0.0
    for k, s in enumerate(times):
        ramp = (T - s) / (T - s0) * M0 / 2
        for a, x in enumerate(paths):
            for b, xt in enumerate(paths):
                val = U[a, k] - V[b, k] - ramp - psi(s, x, xt) / eps
                _, gx, gxt = psi_partials(s, x, xt)
                max_anti = max(max_anti, float(np.linalg.norm(gx + gxt)))
                if best is None or val > best[0]:
                    best = (val, k, a, b)
    val, k, a, b = best
    s, x, xt = times[k], paths[a], paths[b]
    _, gx, gxt = psi_partials(s, x, xt)
    dphi_t = -M0 / (2 * (T - s0))
    dx, dxt = gx / eps, gxt / eps
    gap = sup_distance(x, xt, s)
    ineq = (
        dphi_t
        + H.m_l(L) * (1 + abs(upsilon(s, x)) + float(np.linalg.norm(dx))) * gap
        + H.L_H * (1 + sup_history(xt, s)) * float(np.linalg.norm(dx + dxt))
    )
    return ProbeReport(
        M0=M0,
        status="evaluated",
        s=s,
        x_index=a,
        xt_index=b,
        phi_max=val,
        psi=psi(s, x, xt),
        inequality=float(ineq),
        antisymmetry=float(np.linalg.norm(dx + dxt)),
        max_antisymmetry=max_anti,
    )
