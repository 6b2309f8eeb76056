"""Time grids, sampled paths with frozen histories, and Lipschitz-like bundles.

A path is stored as one sample per grid node.  Bundle members are
piecewise linear between nodes; user supplied initial histories may also be
piecewise constant (right-continuous).  Every supremum is taken over grid
nodes, so the grid is the only source of resolution.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

HISTORY_ATOL = 1e-12
_EPS = np.finfo(float).eps

DriftSelector = Callable[[float, "Path"], np.ndarray]


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class TimeGrid:
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float).ravel().copy()
        if nodes.size < 2:
            raise ValueError("a time grid needs at least two nodes")
        if nodes[0] != 0.0:
            raise ValueError("grid must start at 0")
        if not np.all(np.isfinite(nodes)) or np.any(np.diff(nodes) <= 0):
            raise ValueError("grid nodes must be finite and strictly increasing")
        object.__setattr__(self, "nodes", _readonly(nodes))

    @classmethod
    def uniform(cls, T: float, N: int) -> "TimeGrid":
        if T <= 0 or N < 1:
            raise ValueError("need T > 0 and N >= 1")
        nodes = np.linspace(0.0, T, N + 1)
        nodes[-1] = T
        return cls(nodes)

    @property
    def T(self) -> float:
        return float(self.nodes[-1])

    @property
    def N(self) -> int:
        return self.nodes.size - 1

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def max_step(self) -> float:
        return float(self.steps.max())

    def index_of(self, t: float, atol: float = 1e-12) -> int:
        """Index of the node equal to ``t``; raises if ``t`` is not a node."""
        i = int(np.searchsorted(self.nodes, t - atol))
        if i < self.nodes.size and abs(self.nodes[i] - t) <= atol:
            return i
        raise ValueError(f"time {t!r} is not a grid node")

    def has_node(self, t: float, atol: float = 1e-12) -> bool:
        try:
            self.index_of(t, atol)
        except ValueError:
            return False
        return True

    def refine(self, factor: int) -> "TimeGrid":
        parts = [np.linspace(a, b, factor + 1)[:-1] for a, b in zip(self.nodes[:-1], self.nodes[1:])]
        return TimeGrid(np.concatenate(parts + [self.nodes[-1:]]))

    def __eq__(self, other) -> bool:
        return isinstance(other, TimeGrid) and np.array_equal(self.nodes, other.nodes)

    def __hash__(self) -> int:
        return hash(self.nodes.tobytes())

    def __repr__(self) -> str:
        return f"TimeGrid(T={self.T}, N={self.N})"


@dataclass(frozen=True, eq=False)
class Path:
    """A d-dimensional path sampled on a :class:`TimeGrid`.

    ``mode="linear"`` interpolates between nodes; ``mode="step"`` holds the
    value of the last node at or before ``t`` (right-continuous).
    """

    grid: TimeGrid
    samples: np.ndarray
    mode: str = "linear"

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2 or s.shape[0] != self.grid.nodes.size:
            raise ValueError("need one sample per grid node")
        if self.mode not in ("linear", "step"):
            raise ValueError(f"unknown interpolation mode {self.mode!r}")
        if not np.isfinite(s).all():
            raise ValueError("path samples must be finite")
        if s.flags.writeable:
            s = _readonly(s.copy())
        object.__setattr__(self, "samples", s)

    @classmethod
    def constant(cls, grid: TimeGrid, value, mode: str = "linear") -> "Path":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(grid, np.tile(v, (grid.nodes.size, 1)), mode)

    @classmethod
    def from_function(cls, grid: TimeGrid, fn: Callable[[float], object], mode: str = "linear") -> "Path":
        return cls(grid, np.array([np.atleast_1d(fn(t)) for t in grid.nodes], dtype=float), mode)

    @property
    def d(self) -> int:
        return self.samples.shape[1]

    @property
    def T(self) -> float:
        return self.grid.T

    def at(self, t: float) -> np.ndarray:
        nodes = self.grid.nodes
        t = min(max(t, 0.0), nodes[-1])
        if self.mode == "step":
            i = int(np.searchsorted(nodes, t, side="right")) - 1
            return self.samples[i]
        i = int(np.searchsorted(nodes, t, side="right")) - 1
        if i >= nodes.size - 1 or nodes[i] == t:
            return self.samples[i]
        w = (t - nodes[i]) / (nodes[i + 1] - nodes[i])
        return (1.0 - w) * self.samples[i] + w * self.samples[i + 1]

    def __call__(self, t: float) -> np.ndarray:
        return self.at(t)

    def terminal(self) -> np.ndarray:
        return self.samples[-1]

    def resample(self, grid: TimeGrid, mode: str | None = None) -> "Path":
        return Path(grid, np.array([self.at(t) for t in grid.nodes]), mode or self.mode)

    def __repr__(self) -> str:
        return f"Path(d={self.d}, {self.grid!r}, mode={self.mode!r})"


@dataclass(frozen=True)
class Anchor:
    s0: float
    history: Path

    def __post_init__(self):
        if not (0.0 <= self.s0 <= self.history.T + 1e-12):
            raise ValueError("anchor time outside [0, T]")

    @property
    def d(self) -> int:
        return self.history.d

    def frozen_on(self, grid: TimeGrid) -> Path:
        """History restricted to ``[0, s0]`` and held constant afterwards."""
        i0 = grid.index_of(self.s0)
        x = np.array([self.history.at(t) for t in grid.nodes[: i0 + 1]])
        samples = np.vstack([x, np.tile(x[-1], (grid.N - i0, 1))])
        return Path(grid, samples, "linear")


def _check_pair(x: Path, y: Path):
    if x.d != y.d:
        raise ValueError(f"dimension mismatch: {x.d} vs {y.d}")


def d_infty(t: float, x: Path, s: float, x_tilde: Path) -> float:
    """Pseudo-distance ``|t-s| + sup_r |x(r∧t) - x_tilde(r∧s)|``."""
    _check_pair(x, x_tilde)
    rs = np.union1d(np.union1d(x.grid.nodes, x_tilde.grid.nodes), [t, s])
    sup = max(float(np.linalg.norm(x.at(min(r, t)) - x_tilde.at(min(r, s)))) for r in rs)
    return abs(t - s) + sup


def sup_history(x: Path, t: float) -> float:
    nodes = x.grid.nodes
    k = int(np.searchsorted(nodes, t, side="right"))
    m = float(np.linalg.norm(x.samples[:k], axis=1).max()) if k else 0.0
    return max(m, float(np.linalg.norm(x.at(t))))


def sup_distance(x: Path, x_tilde: Path, t: float) -> float:
    """``sup_{r<=t} |x(r) - x_tilde(r)|`` over the union of both grids."""
    _check_pair(x, x_tilde)
    rs = np.union1d(x.grid.nodes, x_tilde.grid.nodes)
    rs = np.append(rs[rs <= t], t)
    return max(float(np.linalg.norm(x.at(r) - x_tilde.at(r))) for r in rs)


# ---------------------------------------------------------------------------
# drift families


def direction_set(d: int, kappas: Sequence[float]) -> list[np.ndarray]:
    """Zero vector first, then ``kappa * (+-e_k)`` for every positive kappa."""
    dirs = [np.zeros(d)]
    for kappa in kappas:
        if kappa <= 0:
            continue
        for k in range(d):
            for sign in (1.0, -1.0):
                e = np.zeros(d)
                e[k] = sign * kappa
                dirs.append(e)
    return dirs


@dataclass(frozen=True, eq=False)
class ScheduledDrift:
    """Piecewise-constant drift ``L (1 + sup|x|) * direction_k`` on ``[switch_k, switch_{k+1})``."""

    L: float
    switch_times: tuple
    directions: tuple

    def direction(self, t: float) -> np.ndarray:
        k = int(np.searchsorted(self.switch_times, t, side="right"))
        return self.directions[k]

    def __call__(self, t: float, x: Path) -> np.ndarray:
        return self.L * (1.0 + sup_history(x, t)) * self.direction(t)

    def describe(self) -> str:
        dirs = ",".join("[" + " ".join(f"{v:g}" for v in e) + "]" for e in self.directions)
        if not self.switch_times:
            return f"const{dirs}"
        return f"switch@{','.join(f'{s:g}' for s in self.switch_times)}:{dirs}"


@dataclass(frozen=True)
class BundleSpec:
    L: float
    anchor: Anchor
    kappas: tuple = (0.0, 0.5, 1.0)

    def __post_init__(self):
        if self.L < 0:
            raise ValueError("bundle level L must be non-negative")
        if not self.kappas:
            raise ValueError("drift family must be non-empty")
        object.__setattr__(self, "kappas", tuple(float(k) for k in self.kappas))

    @property
    def d(self) -> int:
        return self.anchor.d

    def family(self, grid: TimeGrid, budget: int | None = None) -> Iterator[ScheduledDrift]:
        """Deterministic enumeration: constant drifts, then one switch, then two, ..."""
        dirs = direction_set(self.d, self.kappas)
        i0 = grid.index_of(self.anchor.s0)
        switch_nodes = [float(t) for t in grid.nodes[i0 + 1 : -1]]
        count = 0
        for n_switch in range(len(switch_nodes) + 1):
            for times in itertools.combinations(switch_nodes, n_switch):
                for combo in itertools.product(range(len(dirs)), repeat=n_switch + 1):
                    if any(a == b for a, b in zip(combo, combo[1:])):
                        continue
                    if budget is not None and count >= budget:
                        return
                    count += 1
                    yield ScheduledDrift(self.L, times, tuple(dirs[c] for c in combo))


def _slope_ok(dx: np.ndarray, dt: float, bound: float, xl: np.ndarray, xr: np.ndarray) -> bool:
    # a few ulps of slack for sums like x + dt*v re-differenced
    slack = 8 * _EPS * (float(np.abs(xl).max()) + float(np.abs(xr).max()) + bound * dt)
    return float(np.linalg.norm(dx)) <= bound * dt + slack


def sample_extension(spec: BundleSpec, drift_selector: DriftSelector, grid: TimeGrid) -> Path:
    """Freeze the anchor history and extend by clamped explicit Euler steps."""
    if not grid.has_node(spec.anchor.s0):
        raise ValueError("anchor time is not a node of the grid")
    buf = np.array(spec.anchor.frozen_on(grid).samples)
    i0 = grid.index_of(spec.anchor.s0)
    nodes = grid.nodes
    sup = float(np.linalg.norm(buf[: i0 + 1], axis=1).max())
    for i in range(i0, grid.N):
        dt = nodes[i + 1] - nodes[i]
        bound = spec.L * (1.0 + sup)
        v = np.asarray(drift_selector(float(nodes[i]), Path(grid, buf)), dtype=float).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ValueError("drift selector returned a non-finite value")
        speed = float(np.linalg.norm(v))
        if speed > bound:
            v = v * (bound / speed)
        nxt = buf[i] + dt * v
        while not _slope_ok(nxt - buf[i], dt, bound, buf[i], nxt):
            v = v * (1.0 - 4 * _EPS)
            nxt = buf[i] + dt * v
        buf[i + 1 :] = nxt
        sup = max(sup, float(np.linalg.norm(nxt)))
    return Path(grid, buf, "linear")


def check_membership(x: Path, spec: BundleSpec, tol: float = 0.0) -> bool:
    if tol < 0 or x.d != spec.d:
        return False
    grid = x.grid
    if not grid.has_node(spec.anchor.s0):
        return False
    i0 = grid.index_of(spec.anchor.s0)
    hist_tol = max(tol, HISTORY_ATOL)
    for i in range(i0 + 1):
        if np.max(np.abs(x.samples[i] - spec.anchor.history.at(grid.nodes[i]))) > hist_tol:
            return False
    if x.mode != "linear" and i0 < grid.N:
        return False
    norms = np.linalg.norm(x.samples, axis=1)
    sup = float(norms[: i0 + 1].max())
    for i in range(i0, grid.N):
        dt = grid.nodes[i + 1] - grid.nodes[i]
        bound = spec.L * (1.0 + sup) + tol
        if not _slope_ok(x.samples[i + 1] - x.samples[i], dt, bound, x.samples[i], x.samples[i + 1]):
            return False
        sup = max(sup, float(norms[i + 1]))
    return True


def growth_envelope(spec: BundleSpec, T: float) -> float:
    """Upper bound for ``|x(t)|`` over every member of the bundle."""
    s0 = spec.anchor.s0
    x0 = sup_history(spec.anchor.history, s0)
    return (1.0 + x0) * math.exp(spec.L * (T - s0)) - 1.0 + x0
