"""Characteristic pairs ``(x, y)``: a bundle path and the value carried along it."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .hamiltonian import Hamiltonian
from .pathspace import Anchor, BundleSpec, DriftSelector, Path, TimeGrid, sample_extension

GRADIENT_GAP_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class CharacteristicPair:
    """``x`` on the whole grid and ``y`` on the nodes from the anchor onwards."""

    x: Path
    y: np.ndarray
    anchor: Anchor
    y0: float
    z: np.ndarray
    L: float
    label: str = ""

    @property
    def grid(self) -> TimeGrid:
        return self.x.grid

    @property
    def start(self) -> int:
        return self.grid.index_of(self.anchor.s0)

    @property
    def times(self) -> np.ndarray:
        return self.grid.nodes[self.start :]

    def y_at_node(self, i: int) -> float:
        return float(self.y[i - self.start])

    def y_terminal(self) -> float:
        return float(self.y[-1])


def euler_values(H: Hamiltonian, x: Path, start: int, y0: float, z: np.ndarray) -> np.ndarray:
    """``y_{i+1} = y_i + (x_{i+1}-x_i).z - H(t_i, x, y_i, z) dt_i``."""
    nodes = x.grid.nodes
    dx = np.diff(x.samples[start:], axis=0) @ z
    y = np.empty(nodes.size - start)
    y[0] = y0
    for k, i in enumerate(range(start, nodes.size - 1)):
        h = H(float(nodes[i]), x, y[k], z)
        if not np.isfinite(h):
            raise ValueError(f"Hamiltonian is not finite at t={nodes[i]}")
        y[k + 1] = y[k] + dx[k] - h * (nodes[i + 1] - nodes[i])
    y.flags.writeable = False
    return y


def integrate_characteristic(
    H: Hamiltonian,
    spec: BundleSpec,
    drift_selector: DriftSelector,
    y0: float,
    z,
    grid: TimeGrid,
) -> CharacteristicPair:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    x = sample_extension(spec, drift_selector, grid)
    start = grid.index_of(spec.anchor.s0)
    y = euler_values(H, x, start, float(y0), z)
    label = drift_selector.describe() if hasattr(drift_selector, "describe") else ""
    return CharacteristicPair(x, y, spec.anchor, float(y0), z, spec.L, label)


class ClassicalDrift:
    """Drift along which a classical solution ``u`` stays on its characteristic."""

    def __init__(self, u, H: Hamiltonian, z, tol: float = GRADIENT_GAP_TOL):
        self.u = u
        self.H = H
        self.z = np.atleast_1d(np.asarray(z, dtype=float))
        self.tol = tol

    def __call__(self, t: float, x: Path) -> np.ndarray:
        p = np.atleast_1d(np.asarray(self.u.dx(t, x), dtype=float))
        gap = p - self.z
        g2 = float(gap @ gap)
        if np.sqrt(g2) <= self.tol:
            return np.zeros_like(gap)
        uv = self.u(t, x)
        return (self.H(t, x, uv, p) - self.H(t, x, uv, self.z)) / g2 * gap

    def describe(self) -> str:
        return "classical"


def classical_drift(u, H: Hamiltonian, z, tol: float = GRADIENT_GAP_TOL) -> ClassicalDrift:
    if getattr(u, "dx", None) is None:
        raise ValueError("candidate must supply its path derivative dx")
    return ClassicalDrift(u, H, z, tol)


def concat_pairs(pairs: Sequence[CharacteristicPair], tol: float = 1e-9) -> CharacteristicPair:
    """Glue pairs whose anchors sit on the end states of their predecessors.

    Pair ``i`` contributes its values on ``[s_i, s_{i+1}]``; the last pair
    contributes everything after its anchor.
    """
    if not pairs:
        raise ValueError("nothing to concatenate")
    first = pairs[0]
    grid = first.grid
    ys = []
    for prev, nxt in zip(pairs[:-1], pairs[1:]):
        if nxt.grid != grid:
            raise ValueError("pairs live on different grids")
        if nxt.L != first.L or not np.array_equal(nxt.z, first.z):
            raise ValueError("level or direction mismatch")
        j = nxt.start
        if j < prev.start:
            raise ValueError("anchors are not ordered in time")
        if np.max(np.abs(nxt.x.samples[: j + 1] - prev.x.samples[: j + 1])) > tol:
            raise ValueError(f"history mismatch at splice t={nxt.anchor.s0}")
        if abs(nxt.y0 - prev.y_at_node(j)) > tol:
            raise ValueError(f"y mismatch at splice t={nxt.anchor.s0}: gap {abs(nxt.y0 - prev.y_at_node(j))}")
        ys.append(prev.y[: j - prev.start])
    ys.append(pairs[-1].y)
    y = np.concatenate(ys)
    y.flags.writeable = False
    return CharacteristicPair(pairs[-1].x, y, first.anchor, first.y0, first.z, first.L, "+".join(p.label for p in pairs))


def enumerate_bundle(
    H: Hamiltonian,
    spec: BundleSpec,
    y0: float,
    z,
    grid: TimeGrid,
    budget: int,
) -> list[CharacteristicPair]:
    if budget < 1:
        raise ValueError("budget must be at least 1")
    return [integrate_characteristic(H, spec, sel, y0, z, grid) for sel in spec.family(grid, budget)]


def bundle_paths(spec: BundleSpec, grid: TimeGrid, budget: int) -> list[tuple[str, Path]]:
    """The x-components of :func:`enumerate_bundle`; they do not depend on ``y0`` or ``z``."""
    return [(sel.describe(), sample_extension(spec, sel, grid)) for sel in spec.family(grid, budget)]
