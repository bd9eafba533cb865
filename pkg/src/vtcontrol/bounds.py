"""Control-time bounds and the constants behind the cost exponents.

Naming: ``G14`` is the energy-dependent numerator of the lower bound on the
cost without interaction term, ``G15``/``S15`` the pair of the refined lower
bound, and ``S16`` the spectral-gap contribution of the upper bound.  Every
supremum over energies runs over the range ``[E0, max V]`` of the potential.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field as dc_field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from .agmon import _as_potential, weight_profiles
from .classical import interaction_time, phase_volume, period_integral, sup_period
from .errors import AssumptionViolation, DomainError, HypothesisViolation, InvalidParameter
from .problem import Potential, VectorField, potential, validate_assumptions

__all__ = [
    "GeometricConstants",
    "BoundsReport",
    "limit_transport_time",
    "geometric_constants",
    "lower_bound_T14",
    "lower_bound_T15",
    "upper_bound_T16",
    "cost_exponent_upper",
    "min_cost_exponent_upper",
    "cost_exponent_lower",
    "minimize_F",
    "threshold_G",
    "threshold_time",
    "bounds_report",
]

E_GRID = 256
B_MAX_FACTOR = 10.0


def limit_transport_time(field: VectorField) -> float:
    """Flushing time ``integral of ds / |f'(s)|`` of the inviscid transport."""
    report = validate_assumptions(field)
    if not report.a1.passed:
        raise AssumptionViolation("the speed vanishes; trajectories never exit")
    val, _ = quad(lambda s: 1.0 / abs(float(field.fp(s))), 0.0, field.L, epsabs=1e-13, epsrel=1e-13, limit=400)
    return val


@dataclass(frozen=True)
class GeometricConstants:
    E: float
    B: float
    G14: float
    G15: float
    G16: float
    S14: float
    S15: float
    S16: float


@lru_cache(maxsize=8192)
def _G14(pot: Potential, E: float) -> float:
    # scans over the phase split revisit the same energy grid
    prof = weight_profiles(pot, E)
    return prof.W0 - prof.minW


def _G15(pot: Potential, E: float) -> float:
    prof = weight_profiles(pot, E)
    return prof.W0 - prof.supWt


def _S16(pot: Potential, T1: float) -> float:
    return 2.0 * math.sqrt(2.0) * math.sqrt(pot.E0) * T1


def geometric_constants(obj, E: float, B: float = 0.0) -> GeometricConstants:
    pot = _as_potential(obj)
    if B < 0:
        raise InvalidParameter(f"B must be nonnegative, got {B}")
    g14 = _G14(pot, E)
    T1, _ = sup_period(pot)
    return GeometricConstants(
        E=float(E), B=float(B), G14=g14, G15=_G15(pot, E), G16=g14,
        S14=0.0, S15=interaction_time(pot, E, B), S16=_S16(pot, T1),
    )


def _energy_grid(pot: Potential, n: int) -> np.ndarray:
    grid = np.linspace(pot.E0, pot.Vmax, n)
    extra = [e for e in (pot.V0, pot.VL) if pot.E0 < e < pot.Vmax]
    return np.unique(np.concatenate((grid, extra)))


def _sup_over_energy(pot: Potential, objective, n: int = E_GRID) -> tuple[float, float]:
    """Grid maximum on ``[E0, max V]`` polished by bounded Brent search."""
    grid = _energy_grid(pot, n)
    vals = np.array([objective(float(e)) for e in grid])
    i = int(vals.argmax())
    best_E, best_v = float(grid[i]), float(vals[i])
    if grid.size > 2:
        lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
        res = minimize_scalar(lambda e: -objective(float(e)), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-10 * max(1.0, pot.Vmax)})
        if -res.fun > best_v:
            best_E, best_v = float(res.x), float(-res.fun)
    return best_v, best_E


def sup_G14(obj, n: int = E_GRID) -> tuple[float, float]:
    pot = _as_potential(obj)
    return _sup_over_energy(pot, lambda e: _G14(pot, e), n)


def lower_bound_T14(obj, n: int = E_GRID) -> tuple[float, float]:
    """``sup_E G14(E) / E`` with its maximizing energy."""
    pot = _as_potential(obj)
    return _sup_over_energy(pot, lambda e: _G14(pot, e) / e, n)


def _require_zero_qf(pot: Potential) -> None:
    fld = pot.field
    if fld.half_b:
        return
    x = np.linspace(0.0, fld.L, 1024)
    if np.max(np.abs(fld.qf(x))) > 1e-12:
        raise HypothesisViolation("this bound needs b = f''/2 (vanishing operator correction)")


def lower_bound_T15(obj, B_max: float | None = None, n_E: int = 48, n_B: int = 64) -> dict:
    """``sup_{E,B} (G15(E) + T_{E,B}) / (E + B)`` over ``[E0, 4 max V] x [0, B_max]``.

    Returns the value, the maximizing pair and whether ``B`` sits on the
    upper edge of the search box.
    """
    pot = _as_potential(obj)
    _require_zero_qf(pot)
    if B_max is None:
        B_max = B_MAX_FACTOR * pot.Vmax
    if B_max < 0:
        raise InvalidParameter("B_max must be nonnegative")
    inner = np.linspace(pot.E0, pot.Vmax, n_E)
    outer = np.geomspace(pot.Vmax, 4.0 * pot.Vmax, n_E // 3 + 1)[1:]
    energies = np.unique(np.concatenate((inner, outer)))
    if B_max > 0:
        Bs = np.concatenate(([0.0], np.geomspace(1e-4 * B_max, B_max, n_B - 1)))
    else:
        Bs = np.array([0.0])

    def objective(E, B):
        return (_G15(pot, E) + interaction_time(pot, E, B)) / (E + B)

    vals = np.array([(_G15(pot, float(E)) + interaction_time(pot, float(E), Bs)) / (E + Bs) for E in energies])
    i, j = np.unravel_index(int(vals.argmax()), vals.shape)
    best = (float(vals[i, j]), float(energies[i]), float(Bs[j]))
    # coordinate polish: B then E, within neighbouring grid cells
    for _ in range(3):
        v, E, B = best
        if Bs.size > 1:
            jb = int(np.searchsorted(Bs, B))
            lo, hi = Bs[max(jb - 1, 0)], Bs[min(jb + 1, Bs.size - 1)]
            if hi > lo:
                r = minimize_scalar(lambda b: -objective(E, float(b)), bounds=(lo, hi), method="bounded",
                                    options={"xatol": 1e-9 * max(1.0, B_max)})
                if -r.fun > best[0]:
                    best = (float(-r.fun), E, float(r.x))
        v, E, B = best
        ie = int(np.searchsorted(energies, E))
        lo, hi = energies[max(ie - 1, 0)], energies[min(ie + 1, energies.size - 1)]
        if hi > lo:
            r = minimize_scalar(lambda e: -objective(float(e), B), bounds=(lo, hi), method="bounded",
                                options={"xatol": 1e-10 * max(1.0, pot.Vmax)})
            if -r.fun > best[0]:
                best = (float(-r.fun), float(r.x), B)
    value, E_star, B_star = best
    on_edge = B_max > 0 and B_star >= 0.999 * B_max
    return {"T15": value, "E": E_star, "B": B_star, "B_max": float(B_max), "B_on_edge": bool(on_edge)}


def upper_bound_T16(obj) -> float:
    """``(sup_E G14 + 2 sqrt(2) sqrt(E0) T1) / E0``."""
    pot = _as_potential(obj)
    _require_zero_qf(pot)
    g, _ = sup_G14(pot)
    T1, _ = sup_period(pot)
    return (g + _S16(pot, T1)) / pot.E0


def cost_exponent_upper(obj, T: float, m: float, delta: float = 0.0) -> float:
    """Upper exponent ``2 T1^2/((1-m)T) + sup_E [G14(E) - m(1-delta) E T]``."""
    if not 0.0 < m < 1.0:
        raise DomainError(f"m must lie in (0, 1), got {m}")
    if not T > 0:
        raise InvalidParameter(f"T must be positive, got {T}")
    pot = _as_potential(obj)
    T1, _ = sup_period(pot)
    sup, _ = _sup_over_energy(pot, lambda e: _G14(pot, e) - m * (1.0 - delta) * e * T, 128)
    return 2.0 * T1 * T1 / ((1.0 - m) * T) + sup


def min_cost_exponent_upper(obj, T: float, delta: float = 0.0) -> tuple[float, float]:
    """Minimum over ``m`` of the upper exponent, with the minimizing fraction."""
    pot = _as_potential(obj)
    ms = np.linspace(0.02, 0.98, 49)
    vals = np.array([cost_exponent_upper(pot, T, float(m), delta) for m in ms])
    i = int(vals.argmin())
    lo, hi = ms[max(i - 1, 0)], ms[min(i + 1, ms.size - 1)]
    r = minimize_scalar(lambda m: cost_exponent_upper(pot, T, float(m), delta), bounds=(lo, hi),
                        method="bounded", options={"xatol": 1e-8})
    if r.fun < vals[i]:
        return float(r.fun), float(r.x)
    return float(vals[i]), float(ms[i])


def cost_exponent_lower(obj, T: float) -> tuple[float, float]:
    """``sup_E [G14(E) - E T]``: the rate below which the cost cannot decay."""
    pot = _as_potential(obj)
    return _sup_over_energy(pot, lambda e: _G14(pot, e) - e * T)


def minimize_F(a_coef: float, b_coef: float) -> tuple[float, float]:
    """Minimum of ``a/(1-m) - b m`` over ``m`` in ``[0, 1)``: ``(m*, value)``."""
    if not (a_coef > 0 and b_coef > 0):
        raise InvalidParameter("coefficients must be positive")
    if a_coef <= b_coef:
        return 1.0 - math.sqrt(a_coef / b_coef), 2.0 * math.sqrt(a_coef * b_coef) - b_coef
    return 0.0, float(a_coef)


def threshold_G(T: float, a_coef: float, b_coef: float, c_coef: float) -> float:
    """``min_m a/((1-m)T) - b m T + c``."""
    _, v = minimize_F(a_coef / T, b_coef * T)
    return v + c_coef


def threshold_time(a_coef: float, b_coef: float, c_coef: float) -> float:
    """Time beyond which ``threshold_G`` turns negative."""
    if not (a_coef > 0 and b_coef > 0 and c_coef >= 0):
        raise InvalidParameter("need a, b > 0 and c >= 0")
    return 2.0 * math.sqrt(a_coef / b_coef) + c_coef / b_coef


@dataclass
class BoundsReport:
    T_limit: float
    T14: float
    T14_arg: float
    T15: float | None
    T15_arg: tuple | None
    T15_B_on_edge: bool | None
    T16: float | None
    T1: float
    E0: float
    sup_G14: float
    assumptions: dict = dc_field(default_factory=dict)
    notes: list = dc_field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def bounds_report(field: VectorField, with_T15: bool = True) -> BoundsReport:
    report = validate_assumptions(field)
    pot = potential(field, report)
    notes = []
    if not report.a3.passed:
        notes.append("V(0) = V(L): values computed regardless of the distinct-endpoint item")
    T14, T14_arg = lower_bound_T14(pot)
    T1, _ = sup_period(pot)
    g, _ = sup_G14(pot)
    try:
        T16 = upper_bound_T16(pot)
    except HypothesisViolation as exc:
        T16 = None
        notes.append(str(exc))
    T15 = T15_arg = edge = None
    if with_T15:
        try:
            r15 = lower_bound_T15(pot)
            T15, T15_arg, edge = r15["T15"], (r15["E"], r15["B"]), r15["B_on_edge"]
            if edge:
                notes.append("T15 maximizer sits on the B_max edge")
        except HypothesisViolation as exc:
            notes.append(str(exc))
    notes.append("T15 exponent treated as valid for all finite T (extrapolation beyond small T)")
    return BoundsReport(
        T_limit=limit_transport_time(field), T14=T14, T14_arg=T14_arg, T15=T15, T15_arg=T15_arg,
        T15_B_on_edge=edge, T16=T16, T1=T1, E0=pot.E0, sup_G14=g, assumptions=report.to_dict(), notes=notes,
    )
