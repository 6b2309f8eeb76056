"""Path derivatives along Lipschitz extensions and the comparison penalty functional."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .pathspace import Path, TimeGrid, _check_pair

PSI_LOWER_CONST = (3.0 - math.sqrt(5.0)) / 2.0


def _zero_grad(t, x, xt):
    return np.zeros(x.d)


@dataclass(frozen=True)
class SmoothFunctional:
    """``phi(t, x, x_tilde)`` together with its claimed path derivatives."""

    value: Callable[[float, Path, Path], float]
    dt: Callable[[float, Path, Path], float]
    dx: Callable[[float, Path, Path], np.ndarray]
    dxt: Callable[[float, Path, Path], np.ndarray] = _zero_grad

    @classmethod
    def single_path(cls, value, dt, dx) -> "SmoothFunctional":
        """Wrap ``value(t, x)``, ``dt(t, x)``, ``dx(t, x)``; ``x_tilde`` is ignored."""
        return cls(
            value=lambda t, x, xt: value(t, x),
            dt=lambda t, x, xt: dt(t, x),
            dx=lambda t, x, xt: np.atleast_1d(dx(t, x)),
        )


def _quadrature_nodes(t0: float, t: float, grids: Sequence[TimeGrid]) -> np.ndarray:
    nodes = np.unique(np.concatenate([g.nodes for g in grids] + [np.array([t0, t])]))
    return nodes[(nodes >= t0) & (nodes <= t)]


def chain_rule_residual(
    phi: SmoothFunctional,
    t0: float,
    x0: Path,
    xt0: Path,
    x: Path,
    xt: Path,
    t: float,
    grid: TimeGrid | None = None,
) -> float:
    """Gap between ``phi(t) - phi(t0)`` and the integrated path derivatives.

    The integral uses the midpoint rule on ``grid`` (default: the union of the
    two path grids): on each panel the chord slope of ``x`` multiplies
    ``dx`` evaluated at the panel midpoint.
    """
    _check_pair(x, xt)
    if t <= t0:
        raise ValueError("need t > t0")
    for path, anchor in ((x, x0), (xt, xt0)):
        if path.mode != "linear":
            raise ValueError("extensions must be piecewise linear")
        hist = path.grid.nodes[path.grid.nodes <= t0]
        for r in np.append(hist, t0):
            if np.max(np.abs(path.at(r) - anchor.at(r))) > 1e-12:
                raise ValueError("extension does not agree with its anchor on [0, t0]")
    nodes = _quadrature_nodes(t0, t, [grid] if grid is not None else [x.grid, xt.grid])
    total = 0.0
    for a, b in zip(nodes[:-1], nodes[1:]):
        h = b - a
        m = 0.5 * (a + b)
        sx = (x.at(b) - x.at(a)) / h
        sxt = (xt.at(b) - xt.at(a)) / h
        g = phi.dt(m, x, xt) + sx @ np.atleast_1d(phi.dx(m, x, xt)) + sxt @ np.atleast_1d(phi.dxt(m, x, xt))
        total += g * h
    return abs(phi.value(t, x, xt) - phi.value(t0, x0, xt0) - total)


def _sup_sq_and_delta(s: float, x: Path, xt: Path) -> tuple[float, np.ndarray]:
    _check_pair(x, xt)
    rs = np.union1d(x.grid.nodes, xt.grid.nodes)
    rs = np.append(rs[rs <= s], s)
    sup_sq = max(float(np.sum((x.at(r) - xt.at(r)) ** 2)) for r in rs)
    return sup_sq, x.at(s) - xt.at(s)


def psi(s: float, x: Path, xt: Path) -> float:
    S, delta = _sup_sq_and_delta(s, x, xt)
    if S == 0.0:
        return 0.0
    dd = float(delta @ delta)
    return (S - dd) / S + dd


def psi_partials(s: float, x: Path, xt: Path) -> tuple[float, np.ndarray, np.ndarray]:
    """``(d_t psi, d_x psi, d_xtilde psi)``; the two gradients are exact negatives."""
    S, delta = _sup_sq_and_delta(s, x, xt)
    if S == 0.0:
        return 0.0, np.zeros(x.d), np.zeros(x.d)
    dd = float(delta @ delta)
    gx = (2.0 - (4.0 * S - dd) / S) * delta
    return 0.0, gx, -gx


@dataclass(frozen=True)
class PsiBoundRow:
    s: float
    psi: float
    lower_bound: float
    upper_bound: float
    grad_norm: float
    grad_bound: float
    violated_lower: bool
    violated_upper: bool


PSI_CSV_COLUMNS = list(PsiBoundRow.__dataclass_fields__)


def psi_bounds_report(pairs: Iterable[tuple[float, Path, Path]]) -> list[PsiBoundRow]:
    rows = []
    for s, x, xt in pairs:
        S, delta = _sup_sq_and_delta(s, x, xt)
        value = psi(s, x, xt)
        _, gx, _ = psi_partials(s, x, xt)
        lower = PSI_LOWER_CONST * S
        upper = 2.0 * S
        rows.append(
            PsiBoundRow(
                s=float(s),
                psi=value,
                lower_bound=lower,
                upper_bound=upper,
                grad_norm=float(np.linalg.norm(gx)),
                grad_bound=2.0 * float(np.linalg.norm(delta)),
                violated_lower=bool(value < lower),
                violated_upper=bool(value > upper),
            )
        )
    return rows


def psi_report_csv(rows: Sequence[PsiBoundRow]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=PSI_CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in asdict(row).items()})
    return buf.getvalue()


# ---------------------------------------------------------------------------
# invariant suite


def random_path_pairs(n: int, grid: TimeGrid, d: int = 1, seed: int = 0) -> list[tuple[float, Path, Path]]:
    """Seeded ``(s, x, xt)`` triples mixing four kinds of pair, in rotation:
    identical paths, paths whose gap peaks at ``s``, paths that differ only
    strictly before ``s``, and unrelated random paths."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        i = int(rng.integers(1, grid.N + 1))
        s = float(grid.nodes[i])
        x = rng.normal(size=(grid.N + 1, d))
        kind = k % 4
        if kind == 0:
            xt = x.copy()
        elif kind == 1:
            # |gap| non-decreasing in time, so the sup is attained at s
            ramp = np.minimum(grid.nodes, s) / s
            xt = x + np.outer(ramp, rng.normal(size=d) * rng.uniform(0.1, 3.0))
        elif kind == 2:
            xt = x.copy()
            xt[int(rng.integers(0, i))] += rng.normal(size=d)
        else:
            xt = rng.normal(size=(grid.N + 1, d))
        out.append((s, Path(grid, x), Path(grid, xt)))
    return out


@dataclass
class PsiSuiteResult:
    pairs: int
    negative: int = 0
    zero_mismatch: int = 0
    antisymmetry: int = 0
    gradient: int = 0
    bound_checked: int = 0
    bound_violations: int = 0

    @property
    def violations(self) -> int:
        return self.negative + self.zero_mismatch + self.antisymmetry + self.gradient + self.bound_violations

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(violations=self.violations, passed=self.passed)
        return d


def psi_invariant_suite(pairs: Iterable[tuple[float, Path, Path]]) -> PsiSuiteResult:
    """Count violations of the exact properties of ``psi`` over the pairs.

    The two-sided bound is enforced only where the sup of the gap is attained
    at ``s``; elsewhere it is reported by :func:`psi_bounds_report`.
    """
    res = PsiSuiteResult(0)
    for s, x, xt in pairs:
        res.pairs += 1
        S, delta = _sup_sq_and_delta(s, x, xt)
        value = psi(s, x, xt)
        _, gx, gxt = psi_partials(s, x, xt)
        dd = float(delta @ delta)
        idx = x.grid.nodes <= s
        equal = bool(np.array_equal(x.samples[idx], xt.samples[idx])) and dd == 0.0
        res.negative += value < 0.0
        res.zero_mismatch += (value == 0.0) != equal
        res.antisymmetry += not np.array_equal(gx, -gxt)
        res.gradient += float(np.linalg.norm(gx)) > 2.0 * math.sqrt(dd) + 1e-12
        if S > 0.0 and dd == S:
            res.bound_checked += 1
            res.bound_violations += not (PSI_LOWER_CONST * S <= value <= 2.0 * S)
    return res
