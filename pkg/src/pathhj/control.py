"""Discounted optimal control of functional ODEs on grid-piecewise-constant controls.

The value at ``(s, x)`` is the exact minimum of the discretised cost over
every control signal that is constant on each grid interval.  Problems that
declare a finite memory (``memory=0`` for Markov data, ``memory=tau`` for a
delay) are solved by exhaustive recursion with memoised cost-to-go keyed on
the remembered window of the state; the others by depth-first enumeration
with branch-and-bound.  Both return the same minimiser, the
lexicographically smallest atom sequence among the optimal ones.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .pathspace import Anchor, BundleSpec, Path, TimeGrid, sup_distance, sup_history
from .characteristics import bundle_paths

DEFAULT_BUDGET = 2**16
_KEY_DECIMALS = 12


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class ControlProblem:
    """Data of a discounted control problem with a finite control set.

    Coefficients take ``(t, x, a)`` with ``x`` a :class:`Path` read only on
    ``[0, t]``; ``h`` takes the terminal path.  ``memory`` tells the solver
    how much history the coefficients and ``h`` actually look at (``None``:
    all of it).  ``h_growth`` (``|h(x)| <= h_growth (1 + sup|x|)``) enables
    branch-and-bound pruning.
    """

    name: str
    d: int
    controls: tuple
    f: Callable
    lam: Callable
    ell: Callable
    h: Callable
    C_f: float
    C_lambda: float
    L_f: float
    T: float = 1.0
    memory: float | None = None
    discontinuities: tuple = ()
    h_growth: float | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.controls:
            raise ValueError("control set is empty")
        if min(self.C_f, self.C_lambda, self.L_f) < 0:
            raise ValueError("problem constants must be non-negative")


@dataclass(frozen=True)
class ControlSignal:
    """One control atom index per grid interval from ``start`` to the horizon."""

    grid: TimeGrid
    start: int
    atoms: tuple

    def __post_init__(self):
        if len(self.atoms) != self.grid.N - self.start:
            raise ValueError("need one atom per interval after the start node")

    def atom_at(self, i: int) -> int:
        return self.atoms[i - self.start]


@dataclass(frozen=True)
class Trajectory:
    state: Path
    chi: np.ndarray
    running_cost: np.ndarray
    start: int


def _x0_buffer(x0, s: float, grid: TimeGrid) -> tuple[np.ndarray, int]:
    anchor = x0 if isinstance(x0, Anchor) else Anchor(s, x0)
    return np.array(anchor.frozen_on(grid).samples), grid.index_of(s)


def _coefficients(problem: ControlProblem, t: float, path: Path, a):
    fv = np.atleast_1d(np.asarray(problem.f(t, path, a), dtype=float))
    lv = float(problem.lam(t, path, a))
    ev = float(problem.ell(t, path, a))
    if not (math.isfinite(lv) and math.isfinite(ev) and np.isfinite(fv).all()):
        raise ValueError(f"non-finite coefficient at t={t}, a={a!r}")
    return fv, lv, ev


def _advance(buf: np.ndarray, i: int, dt: float, fv: np.ndarray) -> np.ndarray:
    out = buf.copy()
    out[i + 1 :] = buf[i] + dt * fv
    return out


def integrate_state(problem: ControlProblem, s: float, x0, alpha: ControlSignal, grid: TimeGrid) -> Path:
    traj, _ = evaluate_control(problem, s, x0, alpha, grid)
    return traj.state


def evaluate_control(problem: ControlProblem, s: float, x0, alpha: ControlSignal, grid: TimeGrid) -> tuple[Trajectory, float]:
    buf, i0 = _x0_buffer(x0, s, grid)
    if alpha.start != i0:
        raise ValueError("control signal does not start at s")
    nodes = grid.nodes
    lam_sum = np.zeros(grid.N - i0 + 1)
    ells = np.zeros(grid.N - i0)
    for k, i in enumerate(range(i0, grid.N)):
        dt = nodes[i + 1] - nodes[i]
        a = problem.controls[alpha.atom_at(i)]
        fv, lv, ev = _coefficients(problem, float(nodes[i]), Path(grid, buf), a)
        ells[k] = ev
        lam_sum[k + 1] = lam_sum[k] + lv * dt
        buf = _advance(buf, i, dt, fv)
    state = Path(grid, buf)
    chi = np.exp(-lam_sum)
    running = np.concatenate([[0.0], np.cumsum(chi[:-1] * ells * np.diff(nodes[i0:]))])
    hv = float(problem.h(state))
    if not math.isfinite(hv):
        raise ValueError("terminal cost is not finite")
    cost = float(running[-1] + chi[-1] * hv)
    return Trajectory(state, chi, running, i0), cost


class ValueSolver:
    """Exact minimiser over grid-piecewise-constant signals for one problem and grid.

    Cost-to-go tables are kept between calls, so evaluating the value along
    many paths (as the minimax checks do) reuses earlier work.
    """

    def __init__(self, problem: ControlProblem, grid: TimeGrid, budget: int = DEFAULT_BUDGET, method: str = "auto"):
        if method not in ("auto", "memo", "enumerate"):
            raise ValueError(f"unknown method {method!r}")
        if method == "memo" and problem.memory is None:
            raise ValueError("memoisation needs a problem with finite memory")
        self.problem = problem
        self.grid = grid
        self.budget = budget
        self.method = "memo" if (method == "auto" and problem.memory is not None) else ("enumerate" if method == "auto" else method)
        self._table: dict = {}
        self._expanded = 0

    # -- memoised recursion -------------------------------------------------

    def _key(self, buf: np.ndarray, i: int) -> tuple:
        nodes = self.grid.nodes
        lo = int(np.searchsorted(nodes, nodes[i] - self.problem.memory - 1e-12, side="right")) - 1
        window = np.round(buf[max(lo, 0) : i + 1], _KEY_DECIMALS) + 0.0
        return (i, window.tobytes())

    def _cost_to_go(self, buf: np.ndarray, i: int) -> tuple[float, int]:
        key = self._key(buf, i)
        hit = self._table.get(key)
        if hit is not None:
            return hit
        p = self.problem
        grid = self.grid
        if i == grid.N:
            out = (float(p.h(Path(grid, buf))), -1)
        else:
            self._expanded += 1
            if self._expanded > self.budget:
                raise BudgetExceeded(f"more than {self.budget} states expanded")
            dt = grid.nodes[i + 1] - grid.nodes[i]
            path = Path(grid, buf)
            best, arg = math.inf, -1
            for k, a in enumerate(p.controls):
                fv, lv, ev = _coefficients(p, float(grid.nodes[i]), path, a)
                tail, _ = self._cost_to_go(_advance(buf, i, dt, fv), i + 1)
                c = ev * dt + math.exp(-lv * dt) * tail
                if c < best:
                    best, arg = c, k
            out = (best, arg)
        self._table[key] = out
        return out

    def _memo_solve(self, buf: np.ndarray, i0: int) -> tuple[float, tuple]:
        v, _ = self._cost_to_go(buf, i0)
        atoms = []
        dt_nodes = self.grid.nodes
        for i in range(i0, self.grid.N):
            _, k = self._cost_to_go(buf, i)
            atoms.append(k)
            fv, _, _ = _coefficients(self.problem, float(dt_nodes[i]), Path(self.grid, buf), self.problem.controls[k])
            buf = _advance(buf, i, dt_nodes[i + 1] - dt_nodes[i], fv)
        return v, tuple(atoms)

    # -- enumeration with branch and bound ---------------------------------

    def _lower_bound(self, cost: float, chi: float, buf: np.ndarray, i: int) -> float:
        p = self.problem
        if p.h_growth is None:
            return -math.inf
        rest = self.grid.T - self.grid.nodes[i]
        sup = float(np.linalg.norm(buf[: i + 1], axis=1).max())
        state_bound = (1.0 + sup) * math.exp(p.C_f * rest) - 1.0
        return cost - chi * p.C_f * (1.0 + state_bound) * rest - chi * p.h_growth * (1.0 + state_bound)

    def _enumerate_solve(self, buf: np.ndarray, i0: int) -> tuple[float, tuple]:
        p = self.problem
        n = self.grid.N - i0
        if len(p.controls) ** n > self.budget:
            raise BudgetExceeded(f"{len(p.controls)}^{n} signals exceed the budget {self.budget}")
        nodes = self.grid.nodes
        best = [math.inf, ()]

        def dfs(buf, i, cost, lam_sum, prefix):
            chi = math.exp(-lam_sum)
            if i == self.grid.N:
                total = cost + chi * float(p.h(Path(self.grid, buf)))
                if total < best[0]:
                    best[0], best[1] = total, tuple(prefix)
                return
            if self._lower_bound(cost, chi, buf, i) > best[0]:
                return
            dt = nodes[i + 1] - nodes[i]
            path = Path(self.grid, buf)
            for k, a in enumerate(p.controls):
                fv, lv, ev = _coefficients(p, float(nodes[i]), path, a)
                prefix.append(k)
                dfs(_advance(buf, i, dt, fv), i + 1, cost + chi * ev * dt, lam_sum + lv * dt, prefix)
                prefix.pop()

        dfs(buf, i0, 0.0, 0.0, [])
        return best[0], best[1]

    # -- public -------------------------------------------------------------

    def solve(self, s: float, x0) -> tuple[float, ControlSignal]:
        buf, i0 = _x0_buffer(x0, s, self.grid)
        return self.solve_buffer(buf, i0)

    def solve_buffer(self, buf: np.ndarray, i0: int) -> tuple[float, ControlSignal]:
        if i0 == self.grid.N:
            return float(self.problem.h(Path(self.grid, buf))), ControlSignal(self.grid, i0, ())
        self._expanded = 0
        if self.method == "memo":
            v, atoms = self._memo_solve(buf, i0)
        else:
            v, atoms = self._enumerate_solve(buf, i0)
        return v, ControlSignal(self.grid, i0, atoms)

    def __call__(self, t: float, x: Path) -> float:
        """Value at node ``t`` along ``x`` (history of ``x`` on ``[0, t]`` is used)."""
        i = self.grid.index_of(t)
        samples = np.array([x.at(r) for r in self.grid.nodes[: i + 1]])
        buf = np.vstack([samples, np.tile(samples[-1], (self.grid.N - i, 1))])
        if i == self.grid.N:
            return float(self.problem.h(Path(self.grid, buf)))
        if self.method == "memo":
            self._expanded = 0
            return self._cost_to_go(buf, i)[0]
        return self.solve_buffer(buf, i)[0]


def value(problem: ControlProblem, s: float, x0, grid: TimeGrid, budget: int = DEFAULT_BUDGET, method: str = "auto") -> tuple[float, ControlSignal]:
    return ValueSolver(problem, grid, budget, method).solve(s, x0)


def dpp_residual(
    problem: ControlProblem,
    s: float,
    t: float,
    x0,
    grid: TimeGrid,
    budget: int = DEFAULT_BUDGET,
    solver: ValueSolver | None = None,
) -> float:
    """``|v(s,x0) - min_alpha [running cost on [s,t] + chi(t) v(t, phi)]|``."""
    solver = solver or ValueSolver(problem, grid, budget)
    buf0, i0 = _x0_buffer(x0, s, grid)
    j = grid.index_of(t)
    if j <= i0:
        raise ValueError("need s < t")
    v_s, _ = solver.solve_buffer(buf0, i0)
    n = j - i0
    if len(problem.controls) ** n > budget:
        raise BudgetExceeded(f"{len(problem.controls)}^{n} head signals exceed the budget {budget}")
    nodes = grid.nodes
    best = math.inf
    for atoms in itertools.product(range(len(problem.controls)), repeat=n):
        buf = buf0
        cost, lam_sum = 0.0, 0.0
        for i, k in zip(range(i0, j), atoms):
            dt = nodes[i + 1] - nodes[i]
            fv, lv, ev = _coefficients(problem, float(nodes[i]), Path(grid, buf), problem.controls[k])
            cost += math.exp(-lam_sum) * ev * dt
            lam_sum += lv * dt
            buf = _advance(buf, i, dt, fv)
        tail, _ = solver.solve_buffer(buf, j)
        best = min(best, cost + math.exp(-lam_sum) * tail)
    return abs(v_s - best)


def regularity_modulus(
    problem: ControlProblem,
    L: float,
    anchor: Anchor,
    times: Sequence[float],
    grid: TimeGrid,
    budget: int = 8,
    kappas: Sequence[float] = (0.0, 0.5, 1.0),
    solver: ValueSolver | None = None,
    min_separation: float = 1e-6,
) -> tuple[float, float]:
    """Empirical Lipschitz constants of the value in time and in the path.

    Paths are sampled from the bundle anchored at ``anchor`` and compared at
    the given node ``times`` (all at or after the anchor).  The time modulus
    compares ``(ta, x)`` with ``(tb, x stopped at ta)``.
    """
    solver = solver or ValueSolver(problem, grid)
    paths = [x for _, x in bundle_paths(BundleSpec(L, anchor, tuple(kappas)), grid, budget)]
    times = sorted(float(t) for t in times)
    if times and (times[0] < anchor.s0 - 1e-12 or times[-1] > grid.T + 1e-12):
        raise ValueError("times must lie in [s0, T]")
    vals = [[solver(t, x) for t in times] for x in paths]
    c_time = 0.0
    for x, row in zip(paths, vals):
        for k, ta in enumerate(times):
            # the path stopped at ta sits at d-infinity distance tb - ta from (ta, x)
            stopped = Anchor(ta, x).frozen_on(grid)
            for tb in times[k + 1 :]:
                if tb - ta >= min_separation:
                    c_time = max(c_time, abs(row[k] - solver(tb, stopped)) / (tb - ta))
    c_space = 0.0
    for k, t in enumerate(times):
        for a, b in itertools.combinations(range(len(paths)), 2):
            gap = sup_distance(paths[a], paths[b], t)
            if gap >= min_separation:
                c_space = max(c_space, abs(vals[a][k] - vals[b][k]) / gap)
    return c_time, c_space


def value_function(problem: ControlProblem, grid: TimeGrid, budget: int = DEFAULT_BUDGET, method: str = "auto"):
    """The discrete value as a candidate solution ``(t, x) -> v(t, x)``."""
    from .minimax import CandidateSolution

    solver = ValueSolver(problem, grid, budget, method)
    return CandidateSolution(solver, name=f"v[{problem.name}]")


def verify_value_minimax(problem: ControlProblem, cfg, budget: int = DEFAULT_BUDGET, dpp_head_budget: int = 2**10) -> dict:
    """Run both minimax checks, the Perron sandwich and DPP residuals on the value.

    ``cfg`` is a :class:`~pathhj.minimax.CheckConfig` whose level must equal
    ``C_f``; the sandwich tolerance is twice the checker tolerance at ``z = 0``.
    """
    from .hamiltonian import control_hamiltonian
    from .minimax import check_subsolution, check_supersolution, sandwich_check

    if abs(cfg.L - problem.C_f) > 1e-12:
        raise ValueError(f"check level L={cfg.L} must equal C_f={problem.C_f}")
    H = control_hamiltonian(problem)
    v = value_function(problem, cfg.grid, budget)
    solver = v.fn
    sup = check_supersolution(v, H, cfg, problem.h)
    sub = check_subsolution(v, H, cfg, problem.h)
    sandwich = sandwich_check(v, problem.h, H, cfg.L, cfg.zset, cfg.anchors, cfg.grid, cfg.budget, 2 * cfg.tol(), cfg.kappas)
    dpp_rows = []
    nodes = cfg.grid.nodes
    for anchor in cfg.anchors:
        i0 = cfg.grid.index_of(anchor.s0)
        for j in range(i0 + 1, cfg.grid.N + 1):
            if len(problem.controls) ** (j - i0) > dpp_head_budget:
                break
            r = dpp_residual(problem, anchor.s0, float(nodes[j]), anchor, cfg.grid, budget, solver)
            dpp_rows.append({"s": anchor.s0, "t": float(nodes[j]), "residual": r, "passed": r <= 1e-9})
    checks = {
        "supersolution": sup.passed,
        "subsolution": sub.passed,
        "sandwich": sandwich.passed,
        "dpp": all(r["passed"] for r in dpp_rows),
    }
    return {
        "problem": problem.name,
        "passed": all(checks.values()),
        "checks": checks,
        "supersolution": sup,
        "subsolution": sub,
        "sandwich": sandwich,
        "dpp": dpp_rows,
    }
