"""Hamiltonians, the control Hamiltonian, and sampled audits of their structural bounds."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Sequence

import numpy as np

from .pathspace import Anchor, BundleSpec, Path, ScheduledDrift, TimeGrid, direction_set, sample_extension, sup_distance, sup_history

if TYPE_CHECKING:
    from .control import ControlProblem


@dataclass(frozen=True)
class Hamiltonian:
    """``H(t, x, y, z)`` with declared structural constants.

    ``M_L`` is either a number (independent of the bundle level) or a
    callable ``L -> M_L``.  ``exceptions`` lists times where ``H`` may jump;
    audits never sample them.
    """

    fn: Callable[[float, Path, float, np.ndarray], float]
    L_H: float = 0.0
    C_H: float = 0.0
    M_L: float | Callable[[float], float] = 0.0
    exceptions: tuple = ()
    name: str = "H"

    def __post_init__(self):
        if self.L_H < 0 or self.C_H < 0:
            raise ValueError("Hamiltonian constants must be non-negative")

    def __call__(self, t: float, x: Path, y: float, z) -> float:
        if not isinstance(z, np.ndarray) or z.ndim != 1:
            z = np.atleast_1d(np.asarray(z, dtype=float))
        return float(self.fn(t, x, float(y), z))

    def m_l(self, L: float) -> float:
        return float(self.M_L(L)) if callable(self.M_L) else float(self.M_L)


def control_hamiltonian(problem: "ControlProblem") -> Hamiltonian:
    """Pointwise minimum over the finite control set of ``l + f.z - lambda*y``."""
    if not problem.controls:
        raise ValueError("control set is empty")
    atoms = problem.controls

    def fn(t, x, y, z):
        best = np.inf
        for a in atoms:
            val = problem.ell(t, x, a) + float(np.atleast_1d(problem.f(t, x, a)) @ z) - problem.lam(t, x, a) * y
            best = min(best, val)
        return best

    return Hamiltonian(
        fn=fn,
        L_H=problem.C_f,
        C_H=problem.C_f + problem.C_lambda,
        M_L=problem.L_f,
        exceptions=tuple(problem.discontinuities),
        name=f"control[{problem.name}]",
    )


# ---------------------------------------------------------------------------
# audits


@dataclass(frozen=True)
class AuditConfig:
    samples: int = 1000
    T: float = 1.0
    N: int = 16
    d: int = 1
    x_range: float = 2.0
    y_range: float = 5.0
    z_range: float = 3.0
    L: float = 1.0
    seed: int = 0


@dataclass
class ConditionResult:
    condition: str
    declared: float
    worst_ratio: float = 0.0
    witness: dict = field(default_factory=dict)
    passed: bool = True

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "declared": self.declared,
            "worst_ratio": self.worst_ratio,
            "witness": self.witness,
            "passed": self.passed,
        }


@dataclass
class AuditReport:
    hamiltonian: str
    config: AuditConfig
    results: list

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def __getitem__(self, condition: str) -> ConditionResult:
        for r in self.results:
            if r.condition == condition:
                return r
        raise KeyError(condition)

    def to_dict(self) -> dict:
        return {
            "hamiltonian": self.hamiltonian,
            "config": dict(self.config.__dict__),
            "passed": self.passed,
            "conditions": [r.to_dict() for r in self.results],
        }


class _RandomSchedule:
    """Per-interval random direction and magnitude; used to sample bundle members."""

    def __init__(self, L, grid, dirs, rng):
        self.L = L
        self.nodes = grid.nodes
        k = rng.integers(len(dirs), size=grid.N)
        self.dirs = [dirs[i] * rng.uniform(0.0, 1.0) for i in k]

    def __call__(self, t, x):
        i = min(int(np.searchsorted(self.nodes, t, side="right")) - 1, len(self.dirs) - 1)
        return self.L * (1.0 + sup_history(x, t)) * self.dirs[i]


def _random_history(grid: TimeGrid, d: int, amp: float, rng) -> Path:
    return Path(grid, rng.uniform(-amp, amp, size=(grid.N + 1, d)))


def _sample_time(lo: float, hi: float, avoid: Sequence[float], rng) -> float:
    while True:
        t = float(rng.uniform(lo, hi))
        if all(abs(t - e) > 1e-9 for e in avoid):
            return t


def _record(res: ConditionResult, ratio: float, witness: dict):
    if ratio > res.worst_ratio or not res.witness:
        res.worst_ratio = max(ratio, res.worst_ratio)
        res.witness = witness


def audit_assumptions(H: Hamiltonian, cfg: AuditConfig = AuditConfig()) -> AuditReport:
    """Estimate the structural constants of ``H`` by seeded random sampling."""
    rng = np.random.default_rng(cfg.seed)
    grid = TimeGrid.uniform(cfg.T, cfg.N)
    dirs = direction_set(cfg.d, (1.0,))
    res_z = ConditionResult("z_lipschitz", H.L_H)
    res_x = ConditionResult("x_lipschitz", H.m_l(cfg.L))
    res_y = ConditionResult("y_monotone", 0.0)
    res_g = ConditionResult("growth", H.C_H)

    for _ in range(cfg.samples):
        x = _random_history(grid, cfg.d, cfg.x_range, rng)
        t = _sample_time(0.0, cfg.T, H.exceptions, rng)
        sup = sup_history(x, t)
        y, y2 = sorted(rng.uniform(-cfg.y_range, cfg.y_range, size=2))
        z = rng.uniform(-cfg.z_range, cfg.z_range, size=cfg.d)
        zt = rng.uniform(-cfg.z_range, cfg.z_range, size=cfg.d)

        dz = float(np.linalg.norm(z - zt))
        if dz > 0:
            ratio = abs(H(t, x, y, z) - H(t, x, y, zt)) / ((1.0 + sup) * dz)
            _record(res_z, ratio, {"t": t, "y": float(y), "z": z.tolist(), "z_tilde": zt.tolist()})

        if y2 > y:
            ratio = max(0.0, (H(t, x, y2, z) - H(t, x, y, z)) / (y2 - y))
            _record(res_y, ratio, {"t": t, "z": z.tolist(), "y1": float(y), "y2": float(y2)})

        ratio = abs(H(t, x, y, np.zeros(cfg.d))) / (1.0 + sup + abs(y))
        _record(res_g, ratio, {"t": t, "y": float(y), "sup_x": sup})

        # x-Lipschitz: two members of one bundle, compared after the anchor
        i0 = int(rng.integers(0, cfg.N))
        spec = BundleSpec(cfg.L, Anchor(float(grid.nodes[i0]), x))
        xa = sample_extension(spec, _RandomSchedule(cfg.L, grid, dirs, rng), grid)
        xb = sample_extension(spec, _RandomSchedule(cfg.L, grid, dirs, rng), grid)
        tx = _sample_time(float(grid.nodes[i0]), cfg.T, H.exceptions, rng)
        gap = sup_distance(xa, xb, tx)
        if gap > 1e-9:
            ratio = abs(H(tx, xa, y, z) - H(tx, xb, y, z)) / ((1.0 + abs(y) + float(np.linalg.norm(z))) * gap)
            _record(res_x, ratio, {"t": tx, "anchor": float(grid.nodes[i0]), "y": float(y), "z": z.tolist(), "sup_gap": gap})

    slack = 1e-9
    res_z.passed = res_z.worst_ratio <= res_z.declared + slack
    res_x.passed = res_x.worst_ratio <= res_x.declared + slack
    res_y.passed = res_y.worst_ratio <= slack
    res_g.passed = res_g.worst_ratio <= res_g.declared + slack
    return AuditReport(H.name, cfg, [res_z, res_x, res_y, res_g])
