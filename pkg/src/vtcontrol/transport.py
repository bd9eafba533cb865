"""The inviscid limit: characteristics of ``x' = f'(x)`` and the limit observation problem.

Travel times ``J(x, y) = int_x^y ds / f'(s)`` are tabulated once per field
with a composite Gauss rule, so flowing a point forward or backward is an
inversion of a monotone function (interpolation plus Newton), never time
stepping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import AssumptionViolation, TrajectoryExited
from .problem import VectorField, validate_assumptions

__all__ = [
    "BoundaryCase",
    "FlowMap",
    "LimitSolution",
    "ObservabilityClass",
    "boundary_case",
    "flow",
    "flow_map",
    "solve_limit_equation",
    "limit_observability",
]

_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)
TABLE_CELLS = 4096


@dataclass(frozen=True)
class BoundaryCase:
    """Which boundary data each limit problem carries, by signs of ``f'`` at the ends."""

    index: int
    speed_at_0: int
    speed_at_L: int
    control_bc: str
    observation_bc: str
    controls: bool


_CASES = {
    (1, -1): BoundaryCase(1, 1, -1, "y(t,0)=h, y(t,L)=0", "none", True),
    (1, 1): BoundaryCase(2, 1, 1, "y(t,0)=h", "u(t,L)=0", True),
    (-1, -1): BoundaryCase(3, -1, -1, "y(t,L)=0", "u(t,0)=0", False),
    (-1, 1): BoundaryCase(4, -1, 1, "none", "u(t,0)=0, u(t,L)=0", False),
}


def boundary_case(field: VectorField) -> BoundaryCase:
    """Boundary-condition case of the limit problems; only the two monotone ones are supported."""
    s0 = 1 if float(field.fp(0.0)) > 0 else -1
    sL = 1 if float(field.fp(field.L)) > 0 else -1
    case = _CASES[(s0, sL)]
    if s0 != sL:
        raise AssumptionViolation(f"speed changes sign between the ends (case {case.index}); not supported")
    return case


class FlowMap:
    """Characteristic flow of a nonvanishing speed ``f'`` on ``[0, L]``."""

    def __init__(self, field: VectorField, cells: int = TABLE_CELLS):
        report = validate_assumptions(field)
        if not report.a1.passed or report.case_sign == "mixed":
            raise AssumptionViolation("the speed must not vanish for the limit flow")
        self.field = field
        self.L = field.L
        self.direction = 1 if report.case_sign == "increasing" else -1
        self.edges = np.linspace(0.0, field.L, cells + 1)
        self._cum_tau = self._cumulate(lambda s: 1.0 / field.fp(s))
        self._cum_q = self._cumulate(lambda s: field.q(s) / field.fp(s))
        # exit time from every point; the speed sign picks the exit wall
        self.T_total = abs(float(self._cum_tau[-1]))

    def _cumulate(self, g) -> np.ndarray:
        a, b = self.edges[:-1], self.edges[1:]
        half = 0.5 * (b - a)
        nodes = 0.5 * (a + b)[:, None] + half[:, None] * _GL_X[None, :]
        cell = (g(nodes) * _GL_W[None, :]).sum(axis=1) * half
        return np.concatenate(([0.0], np.cumsum(cell)))

    def _primitive(self, cum: np.ndarray, g, x) -> np.ndarray:
        x = np.clip(np.asarray(x, dtype=float), 0.0, self.L)
        i = np.clip(np.searchsorted(self.edges, x, side="right") - 1, 0, self.edges.size - 2)
        a = self.edges[i]
        half = 0.5 * (x - a)
        nodes = (a + half)[..., None] + half[..., None] * _GL_X
        part = (g(nodes) * _GL_W).sum(axis=-1) * half
        return cum[i] + part

    def tau(self, x):
        """Signed travel time ``int_0^x ds / f'(s)``."""
        return self._primitive(self._cum_tau, lambda s: 1.0 / self.field.fp(s), x)

    def qint(self, x):
        return self._primitive(self._cum_q, lambda s: self.field.q(s) / self.field.fp(s), x)

    def J(self, x, y):
        return self.tau(y) - self.tau(x)

    def T_exit(self, x):
        """Time for the characteristic through ``x`` to leave ``[0, L]``."""
        x = np.asarray(x, dtype=float)
        wall = self.L if self.direction > 0 else 0.0
        return self.J(x, wall)

    def _invert_tau(self, target: np.ndarray) -> np.ndarray:
        table = self._cum_tau
        if self.direction > 0:
            y = np.interp(target, table, self.edges)
        else:
            y = np.interp(-target, -table, self.edges)
        for _ in range(4):
            y = y - (self.tau(y) - target) * self.field.fp(y)
            y = np.clip(y, 0.0, self.L)
        return y

    def Y(self, x, t, strict: bool = True):
        """Position at time ``t`` (possibly negative) of the characteristic from ``x``."""
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        target = self.tau(x) + t
        lo, hi = min(0.0, float(self._cum_tau[-1])), max(0.0, float(self._cum_tau[-1]))
        outside = (target < lo - 1e-12) | (target > hi + 1e-12)
        if strict and np.any(outside):
            raise TrajectoryExited("time exceeds the exit time of the characteristic")
        out = self._invert_tau(np.clip(target, lo, hi))
        return out if out.ndim else float(out)


@lru_cache(maxsize=32)
def flow(field: VectorField) -> FlowMap:
    return FlowMap(field)


def flow_map(field: VectorField, x, t):
    """Position of the characteristic started at ``x`` after time ``t >= 0``."""
    return flow(field).Y(x, t)


@dataclass(frozen=True, eq=False)
class LimitSolution:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray  # shape (len(t), len(x))
    case: BoundaryCase
    T_limit: float

    def to_columns(self) -> dict:
        tt, xx = np.meshgrid(self.t, self.x, indexing="ij")
        return {"t": tt.ravel(), "x": xx.ravel(), "u": self.u.ravel()}


def solve_limit_equation(field: VectorField, u0, T: float, x=None, t=None) -> LimitSolution:
    """Exact characteristic solution of ``u_t = f' u_x + q u`` with the outflow wall condition.

    ``u0`` is a callable; the solution vanishes once the characteristic
    through ``x`` has left the interval.
    """
    case = boundary_case(field)
    fm = flow(field)
    x = np.linspace(0.0, field.L, 401) if x is None else np.asarray(x, dtype=float)
    t = np.linspace(0.0, T, 101) if t is None else np.asarray(t, dtype=float)
    exit_time = fm.T_exit(x)
    u = np.zeros((t.size, x.size))
    for i, ti in enumerate(t):
        alive = exit_time > ti
        if not alive.any():
            continue
        y = fm.Y(x[alive], ti, strict=False)
        growth = np.exp(fm.qint(y) - fm.qint(x[alive]))
        u[i, alive] = growth * np.asarray(u0(y), dtype=float)
    return LimitSolution(t, x, u, case, fm.T_total)


@dataclass(frozen=True)
class ObservabilityClass:
    observable: bool
    critical_time: float
    case: BoundaryCase
    pairing: str
    witness_support: tuple | None
    witness_observation: float | None
    witness_final_norm: float | None


def _bump(a: float, b: float):
    c, r = 0.5 * (a + b), 0.5 * (b - a)

    def g(x):
        z = (np.asarray(x, dtype=float) - c) / r
        out = np.zeros_like(z)
        inside = np.abs(z) < 1.0
        out[inside] = np.exp(-1.0 / (1.0 - z[inside] ** 2))
        return out

    return g


def limit_observability(field: VectorField, T: float) -> ObservabilityClass:
    """Observability of the limit problem at horizon ``T``.

    Below the flushing time a witness initial datum is built from the
    characteristics: invisible at the observed wall, yet alive at ``T``.
    """
    case = boundary_case(field)
    fm = flow(field)
    Tc = fm.T_total
    pairing = "f'(0) * int u(t,0) h(t-T) dt" if case.controls else "0"
    if T >= Tc:
        return ObservabilityClass(True, Tc, case, pairing, None, None, None)
    if fm.direction > 0:
        # data beyond Y_0(T) has not reached x = 0 by time T
        a = fm.Y(0.0, T)
        support = (a, field.L)
    else:
        b = fm.Y(field.L, T)
        support = (0.0, b)
    u0 = _bump(*support)
    xs = np.linspace(0.0, field.L, 2001)
    sol = solve_limit_equation(field, u0, T, x=xs, t=np.array([T]))
    final = float(np.sqrt(np.trapezoid(sol.u[0] ** 2, xs)))
    ts = np.linspace(0.0, T, 401)
    obs = solve_limit_equation(field, u0, T, x=np.array([0.0]), t=ts)
    observation = float(np.sqrt(np.trapezoid(obs.u[:, 0] ** 2, ts)))
    return ObservabilityClass(False, Tc, case, pairing, support, observation, final)
