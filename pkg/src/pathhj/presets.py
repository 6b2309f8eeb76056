"""Named control problems on ``T = 1`` with closed-form values where they exist."""

from __future__ import annotations

import math

import numpy as np

from .control import ControlProblem

TAU = 0.25
DISCOUNT = 0.5


def _x_now(t, x):
    return float(x.at(t)[0])


def bang_linear(c: float = DISCOUNT, T: float = 1.0) -> ControlProblem:
    """``x' = a``, ``a = +-1``, constant discount ``c``, cost ``x(T)``."""
    return ControlProblem(
        name="bang-linear",
        d=1,
        controls=(-1.0, 1.0),
        f=lambda t, x, a: a,
        lam=lambda t, x, a: c,
        ell=lambda t, x, a: 0.0,
        h=lambda x: float(x.terminal()[0]),
        C_f=1.0,
        C_lambda=c,
        L_f=0.0,
        T=T,
        memory=0.0,
        h_growth=1.0,
        params={"c": c},
    )


def bang_linear_value(s: float, x_s: float, c: float = DISCOUNT, T: float = 1.0) -> float:
    return math.exp(-c * (T - s)) * (x_s - (T - s))


def delay_drag(tau: float = TAU, c: float = DISCOUNT, T: float = 1.0) -> ControlProblem:
    """Uncontrolled delayed drag ``x' = a - x((t-tau) v 0)`` with ``A = {0}``."""
    return ControlProblem(
        name="delay-drag",
        d=1,
        controls=(0.0,),
        f=lambda t, x, a: a - float(x.at(max(t - tau, 0.0))[0]),
        lam=lambda t, x, a: c,
        ell=lambda t, x, a: 0.0,
        h=lambda x: float(x.terminal()[0]),
        C_f=1.0,
        C_lambda=c,
        L_f=1.0,
        T=T,
        memory=tau,
        h_growth=1.0,
        params={"tau": tau, "c": c},
    )


def delay_drag_exact(t: float, tau: float = TAU, x0: float = 1.0) -> float:
    """Method-of-steps solution of ``x' = -x(t - tau)`` with constant history ``x0``."""
    total = 0.0
    k = 0
    while t >= (k - 1) * tau:
        total += (-1.0) ** k * (t - (k - 1) * tau) ** k / math.factorial(k)
        k += 1
    return x0 * total


def sigma(t: float, T: float = 1.0) -> float:
    return 1.0 if t < T / 2 else 2.0


def switch(T: float = 1.0) -> ControlProblem:
    """``x' = sigma(t) a`` with a speed jump at ``T/2``; no discount, cost ``x(T)``."""
    return ControlProblem(
        name="switch",
        d=1,
        controls=(-1.0, 1.0),
        f=lambda t, x, a: sigma(t, T) * a,
        lam=lambda t, x, a: 0.0,
        ell=lambda t, x, a: 0.0,
        h=lambda x: float(x.terminal()[0]),
        C_f=2.0,
        C_lambda=0.0,
        L_f=0.0,
        T=T,
        memory=0.0,
        discontinuities=(T / 2,),
        h_growth=1.0,
    )


def switch_value(s: float, x_s: float, T: float = 1.0) -> float:
    half = T / 2
    integral = (max(half - s, 0.0) * 1.0) + (T - max(s, half)) * 2.0
    return x_s - integral


def running_cost(T: float = 1.0) -> ControlProblem:
    """``x' = a``, ``a in {-1, 0, 1}``, running cost ``x(t)^2``.

    The declared constants hold on ``|x| <= 3.5``, which covers every anchor
    with ``|x0| <= 2`` on the unit horizon.
    """
    return ControlProblem(
        name="running-cost",
        d=1,
        controls=(-1.0, 0.0, 1.0),
        f=lambda t, x, a: a,
        lam=lambda t, x, a: 0.0,
        ell=lambda t, x, a: _x_now(t, x) ** 2,
        h=lambda x: 0.0,
        C_f=3.0,
        C_lambda=0.0,
        L_f=7.0,
        T=T,
        memory=0.0,
        h_growth=0.0,
    )


PRESETS = {
    "bang-linear": bang_linear,
    "delay-drag": delay_drag,
    "switch": switch,
    "running-cost": running_cost,
}


def get_preset(name: str) -> ControlProblem:
    try:
        return PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
