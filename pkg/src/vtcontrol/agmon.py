"""Turning points, the Agmon distance ``d_E`` and the weights ``W_E``, ``W~_E``.

``d_E(x)`` is the distance from ``x`` to the allowed region
``{V <= E}`` in the degenerate metric ``(V - E)_+ dx^2``.  The weights are
``W_E = d_E + f/2`` and ``W~_E = f/2 - d_E``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq, minimize_scalar

from .errors import AssumptionViolation, EnergyBelowGround
from .problem import Potential, VectorField, potential

__all__ = [
    "turning_points",
    "agmon_distance",
    "agmon_on_grid",
    "AgmonProfile",
    "CaseReport",
    "weight_profiles",
    "monotonicity_case",
]

PROFILE_GRID = 2048
_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)


def _check_energy(pot: Potential, E: float) -> None:
    if E < pot.E0 - 1e-14 * max(1.0, pot.E0):
        raise EnergyBelowGround(f"E = {E!r} is below the ground energy {pot.E0!r}")


def turning_points(pot: Potential, E: float) -> tuple[float, float]:
    """Ends ``(x-, x+)`` of the allowed interval, clamped to ``[0, L]``."""
    _check_energy(pot, E)
    if E <= pot.E0:
        return pot.x0, pot.x0

    def g(x):
        return float(pot.V(x)) - E

    xm = 0.0 if E >= pot.V0 else brentq(g, 0.0, pot.x0, xtol=1e-15, rtol=1e-15, maxiter=200)
    xp = pot.L if E >= pot.VL else brentq(g, pot.x0, pot.L, xtol=1e-15, rtol=1e-15, maxiter=200)
    return float(xm), float(xp)


def _side_integral(pot: Potential, E: float, start: float, x: float) -> float:
    # substitute s = start ± u^2 so the square-root onset becomes polynomial
    direction = 1.0 if x > start else -1.0
    umax = np.sqrt(abs(x - start))

    def g(u):
        s = start + direction * u * u
        return 2.0 * u * np.sqrt(max(float(pot.V(s)) - E, 0.0))

    val, _ = quad(g, 0.0, umax, epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


def agmon_distance(pot: Potential, E: float, x):
    """Agmon distance to the allowed region at energy ``E``.

    Accepts a scalar or an array of positions; each value comes from an
    adaptive quadrature in the square-root substituted variable.
    """
    _check_energy(pot, E)
    xm, xp = turning_points(pot, E)
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros_like(xs)
    for i, xi in enumerate(xs):
        if xi > xp:
            out[i] = _side_integral(pot, E, xp, xi)
        elif xi < xm:
            out[i] = _side_integral(pot, E, xm, xi)
    return out if np.ndim(x) else float(out[0])


def _cumulative_side(pot: Potential, E: float, start: float, targets: np.ndarray) -> np.ndarray:
    """Cumulative integral of sqrt(V - E) from ``start`` to sorted ``targets``."""
    if targets.size == 0:
        return targets.copy()
    direction = 1.0 if targets[0] >= start else -1.0
    u = np.sqrt(np.abs(targets - start))
    # geometric grading inside the first cell resolves near-ground structure
    first = u[0]
    inner = first * np.geomspace(1e-6, 1.0, 24) if first > 0 else np.array([0.0])
    knots = np.concatenate(([0.0], inner[:-1], u))
    knots = np.maximum.accumulate(knots)
    a, b = knots[:-1], knots[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    nodes = mid[:, None] + half[:, None] * _GL_X[None, :]
    s = start + direction * nodes * nodes
    vals = 2.0 * nodes * np.sqrt(np.maximum(pot.V(s) - E, 0.0))
    cell = (vals * _GL_W[None, :]).sum(axis=1) * half
    cum = np.cumsum(cell)
    return cum[inner.size - 1:] if first > 0 else cum


def agmon_on_grid(pot: Potential, E: float, x: np.ndarray) -> np.ndarray:
    """Vectorized Agmon distance on a sorted grid (composite Gauss-Legendre)."""
    _check_energy(pot, E)
    x = np.asarray(x, dtype=float)
    xm, xp = turning_points(pot, E)
    d = np.zeros_like(x)
    right = x > xp
    left = x < xm
    if right.any():
        d[right] = _cumulative_side(pot, E, xp, x[right])
    if left.any():
        idx = np.flatnonzero(left)[::-1]
        d[idx] = _cumulative_side(pot, E, xm, x[idx])
    return d


@dataclass(frozen=True, eq=False)
class AgmonProfile:
    """Per-energy geometry; grid arrays plus exact closures."""

    pot: Potential
    E: float
    x_minus: float
    x_plus: float
    d0: float
    dL: float
    x: np.ndarray
    d: np.ndarray
    W: np.ndarray
    Wt: np.ndarray
    minW: float
    argminW: float
    supWt: float
    argsupWt: float

    @property
    def W0(self) -> float:
        return self.d0 + 0.5 * float(self.pot.field.f(0.0))

    @property
    def WL(self) -> float:
        return self.dL + 0.5 * float(self.pot.field.f(self.pot.L))

    def d_fn(self, x):
        return agmon_distance(self.pot, self.E, x)

    def W_fn(self, x):
        return self.d_fn(x) + 0.5 * self.pot.field.f(x)

    def Wt_fn(self, x):
        return 0.5 * self.pot.field.f(x) - self.d_fn(x)

    def to_columns(self) -> dict:
        return {"x": self.x, "V": self.pot.V(self.x), "d": self.d, "W": self.W, "Wt": self.Wt}


def _refine_extremum(fn, x: np.ndarray, values: np.ndarray, i: int, sense: float) -> tuple[float, float]:
    """Golden-section polish of a grid extremum; sense=+1 for min, -1 for max."""
    best_x, best_v = float(x[i]), float(values[i])
    if 0 < i < x.size - 1:
        res = minimize_scalar(lambda t: sense * float(fn(t)), bounds=(x[i - 1], x[i + 1]), method="bounded",
                              options={"xatol": 1e-12})
        v = sense * float(res.fun)
        if sense * v < sense * best_v:
            best_x, best_v = float(res.x), v
    return best_x, best_v


@lru_cache(maxsize=4096)
def _profile(pot: Potential, E: float, n: int) -> AgmonProfile:
    xm, xp = turning_points(pot, E)
    x = np.linspace(0.0, pot.L, n)
    d = agmon_on_grid(pot, E, x)
    # endpoint values from adaptive quadrature; they anchor the G constants
    d0 = agmon_distance(pot, E, 0.0)
    dL = agmon_distance(pot, E, pot.L)
    d[0], d[-1] = d0, dL
    half_f = 0.5 * pot.field.f(x)
    W = d + half_f
    Wt = half_f - d
    W_fn = lambda t: agmon_distance(pot, E, t) + 0.5 * float(pot.field.f(t))
    Wt_fn = lambda t: 0.5 * float(pot.field.f(t)) - agmon_distance(pot, E, t)
    i_min = int(np.argmin(W))
    i_max = int(np.argmax(Wt))
    argminW, minW = _refine_extremum(W_fn, x, W, i_min, 1.0)
    argsupWt, supWt = _refine_extremum(Wt_fn, x, Wt, i_max, -1.0)
    for arr in (x, d, W, Wt):
        arr.setflags(write=False)
    return AgmonProfile(pot, float(E), xm, xp, float(d0), float(dL), x, d, W, Wt, minW, argminW, supWt, argsupWt)


def _as_potential(obj) -> Potential:
    if isinstance(obj, Potential):
        return obj
    if isinstance(obj, VectorField):
        return potential(obj)
    raise TypeError(f"expected Potential or VectorField, got {type(obj).__name__}")


def weight_profiles(obj, E: float, n: int = PROFILE_GRID) -> AgmonProfile:
    """Profile of ``d_E``, ``W_E``, ``W~_E`` with located extrema (memoized)."""
    pot = _as_potential(obj)
    _check_energy(pot, E)
    return _profile(pot, float(max(E, pot.E0)), int(n))


@dataclass(frozen=True)
class CaseReport:
    sign_case: str
    W_monotone: str
    Wt_monotone: str
    minW_location: str
    supWt_location: str
    energies: tuple
    consistent: bool


def _direction(arr: np.ndarray, tol: float) -> str:
    diff = np.diff(arr)
    if np.all(diff >= -tol):
        return "increasing"
    if np.all(diff <= tol):
        return "decreasing"
    return "mixed"


def monotonicity_case(obj, n_energies: int = 10, n: int = PROFILE_GRID) -> CaseReport:
    """Sign case of the field and monotonicity of the weights on sample energies."""
    pot = _as_potential(obj)
    case = pot.report.case_sign
    if case == "mixed":
        raise AssumptionViolation("speed changes sign; no monotone case applies")
    energies = np.linspace(pot.E0, pot.Vmax, n_energies)
    dirs_W, dirs_Wt = set(), set()
    for E in energies:
        prof = weight_profiles(pot, float(E), n)
        tol = 1e-12 * max(1.0, float(np.abs(prof.W).max()))
        dirs_W.add(_direction(prof.W, tol))
        dirs_Wt.add(_direction(prof.Wt, tol))
    W_dir = dirs_W.pop() if len(dirs_W) == 1 else "mixed"
    Wt_dir = dirs_Wt.pop() if len(dirs_Wt) == 1 else "mixed"
    if case == "increasing":
        min_loc, sup_loc = "0", "L"
    else:
        min_loc, sup_loc = "L", "0"
    consistent = W_dir == case and Wt_dir == case
    return CaseReport(case, W_dir, Wt_dir, min_loc, sup_loc, tuple(float(e) for e in energies), consistent)
