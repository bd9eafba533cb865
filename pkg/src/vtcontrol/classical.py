"""Classical quantities of the Hamiltonian ``xi^2 + V(x)`` on ``[0, L]``.

``phase_volume`` is the area ``Phi(E)`` of the allowed region (half of the
phase-space area), ``period_integral`` the travel time ``T(E)``.  They are
linked by ``Phi'(E) = T(E) / (4 sqrt(E))``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import brentq, minimize_scalar
from scipy.special import xlogy

from .agmon import _as_potential, _check_energy, turning_points
from .errors import DomainError, EnergyBelowGround, InvalidParameter
from .problem import Potential

__all__ = [
    "ClassicalTable",
    "phase_volume",
    "period_integral",
    "harmonic_period",
    "sup_period",
    "classical_table",
    "phi_inverse",
    "interaction_time",
    "interaction_time_quad",
    "gamma0",
    "gamma0_quad",
    "kappa0",
]

QUAD_TOL = 1e-13
E_CAP_FACTOR = 50.0
_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)


def _half_integral(pot: Potential, E: float, tp: float, power: float) -> float:
    """Integral of (E - V)^power from x0 to the turning point ``tp``.

    The substitution s = tp -/+ u^2 cancels the square-root endpoint.
    An interior ``tp`` is taken as the exact root of ``V = E``: a root
    misplaced by round-off would otherwise cut a sliver of width
    ``sqrt(error)`` off the integral.
    """
    x0 = pot.x0
    if tp == x0:
        return 0.0
    direction = 1.0 if tp > x0 else -1.0
    umax = math.sqrt(abs(tp - x0))
    top = float(pot.V(tp))
    clamped = tp in (0.0, pot.L)
    gap0 = max(E - top, 0.0) if clamped else 0.0
    near = 1e-4 * pot.L

    def drop(s):
        # V(tp) - V(s) without cancellation close to tp
        d = tp - s
        if abs(d) < near:
            return float(pot.dV(0.5 * (tp + s))) * d
        return top - float(pot.V(s))

    def g(u):
        s = tp - direction * u * u
        gap = gap0 + drop(s)
        if gap <= 0.0:
            return 0.0
        return 2.0 * u * gap ** power

    # a clamped endpoint leaves a near-kink where E - V(tp) ~ |V'(tp)| u^2
    pts = None
    slope = abs(float(pot.dV(tp)))
    if gap0 > 0.0 and slope > 0.0:
        ustar = math.sqrt(gap0 / slope)
        if ustar < umax:
            pts = [ustar * k for k in (0.25, 1.0, 4.0) if ustar * k < umax]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        val, _ = quad(g, 0.0, umax, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=400, points=pts)
    return val


def phase_volume(obj, E: float) -> float:
    """``Phi(E)``; exactly zero at the ground energy."""
    pot = _as_potential(obj)
    _check_energy(pot, E)
    if E <= pot.E0:
        return 0.0
    xm, xp = turning_points(pot, E)
    return _half_integral(pot, E, xm, 0.5) + _half_integral(pot, E, xp, 0.5)


def period_integral(obj, E: float) -> float:
    """``T(E) = 2 sqrt(E) * integral of (E - V)^(-1/2)`` over the allowed region."""
    pot = _as_potential(obj)
    if E <= pot.E0:
        raise EnergyBelowGround("the period integral diverges at the ground energy; use harmonic_period")
    xm, xp = turning_points(pot, E)
    return 2.0 * math.sqrt(E) * (_half_integral(pot, E, xm, -0.5) + _half_integral(pot, E, xp, -0.5))


def harmonic_period(obj) -> float:
    """Limit of ``T(E)`` as ``E`` decreases to the ground energy."""
    pot = _as_potential(obj)
    return 2.0 * math.pi * math.sqrt(pot.E0) / math.sqrt(0.5 * pot.V2)


def sup_period(obj, n_grid: int = 48) -> tuple[float, float]:
    """Supremum of ``T`` over energies above the ground energy, with its location.

    Beyond ``max V`` the period decreases toward ``2L``, so the search is
    restricted to ``(E0, max V]``.  The harmonic limit at ``E0`` is a
    candidate; it is returned with argument ``E0`` when it wins.
    """
    return _sup_period(_as_potential(obj), int(n_grid))


@lru_cache(maxsize=256)
def _sup_period(pot: Potential, n_grid: int) -> tuple[float, float]:
    lo, hi = pot.E0, pot.Vmax
    span = hi - lo
    grid = lo + span * (np.linspace(0.0, 1.0, n_grid + 1)[1:])
    extra = [e for e in (pot.V0, pot.VL) if lo < e <= hi]
    grid = np.unique(np.concatenate((grid, extra)))
    vals = np.array([period_integral(pot, float(e)) for e in grid])
    i = int(vals.argmax())
    best_E, best_T = float(grid[i]), float(vals[i])
    if 0 < i < grid.size - 1:
        res = minimize_scalar(lambda e: -period_integral(pot, e), bounds=(grid[i - 1], grid[i + 1]),
                              method="bounded", options={"xatol": 1e-12 * max(1.0, hi)})
        if -res.fun > best_T:
            best_E, best_T = float(res.x), float(-res.fun)
    harm = harmonic_period(pot)
    if harm > best_T:
        return harm, lo
    return best_T, best_E


@dataclass(frozen=True, eq=False)
class ClassicalTable:
    energies: np.ndarray
    phi: np.ndarray
    period_T: np.ndarray
    calT: np.ndarray
    T1: float
    T1_arg: float
    E_cap: float

    def to_columns(self) -> dict:
        return {"E": self.energies, "Phi": self.phi, "T": self.period_T, "calT": self.calT}


@lru_cache(maxsize=64)
def _table(pot: Potential, n: int, cap_factor: float) -> ClassicalTable:
    E_cap = cap_factor * pot.Vmax
    # dense near the well, geometric toward the cap
    inner = np.linspace(pot.E0, pot.Vmax, n // 2 + 1)
    outer = np.geomspace(pot.Vmax, E_cap, n - n // 2 + 1)[1:]
    energies = np.concatenate((inner, outer))
    phi = np.array([phase_volume(pot, float(e)) for e in energies])
    per = np.empty_like(energies)
    per[0] = np.nan
    per[1:] = [period_integral(pot, float(e)) for e in energies[1:]]
    calT = per / (2.0 * np.sqrt(energies))
    T1, T1_arg = sup_period(pot)
    for arr in (energies, phi, per, calT):
        arr.setflags(write=False)
    return ClassicalTable(energies, phi, per, calT, T1, T1_arg, E_cap)


def classical_table(obj, n: int = 200, cap_factor: float = E_CAP_FACTOR) -> ClassicalTable:
    """Tabulated ``Phi``, ``T`` and ``T/(2 sqrt E)`` on ``[E0, cap_factor * max V]``.

    The period column holds NaN at ``E0`` where the integral is undefined.
    """
    return _table(_as_potential(obj), int(n), float(cap_factor))


def phi_inverse(obj, value: float) -> float:
    """Energy with ``Phi(E) = value``; values at or below zero map to ``E0``."""
    pot = _as_potential(obj)
    if value <= 0.0:
        return pot.E0
    hi = max(pot.Vmax, pot.E0 * 2.0)
    while phase_volume(pot, hi) < value:
        hi *= 2.0
    return brentq(lambda e: phase_volume(pot, e) - value, pot.E0, hi, xtol=1e-14, rtol=1e-15, maxiter=300)


# -- interaction time ------------------------------------------------------

def _graded(a: float, b: float, toward: str, levels: int = 44, ratio: float = 2.0) -> np.ndarray:
    """Breakpoints on [a, b] shrinking geometrically toward one end."""
    if b <= a:
        return np.array([a])
    t = ratio ** -np.arange(levels, dtype=float)
    if toward == "b":
        pts = b - (b - a) * t
        return np.concatenate((pts, [b]))
    pts = a + (b - a) * t[::-1]
    return np.concatenate(([a], pts))


def _panel_nodes(breaks: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a, b = breaks[:-1], breaks[1:]
    keep = b > a
    a, b = a[keep], b[keep]
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    x = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    w = (half[:, None] * _GL_W[None, :]).ravel()
    return x, w


@dataclass(frozen=True, eq=False)
class _PhaseNodes:
    x: np.ndarray
    w: np.ndarray
    phi: np.ndarray
    tail_w: np.ndarray
    tail_wt: np.ndarray
    tail_phi: np.ndarray
    X1: float


@lru_cache(maxsize=64)
def _phase_nodes(pot: Potential) -> _PhaseNodes:
    """Fixed quadrature nodes on ``[E0, inf)`` with cached ``Phi`` values."""
    E0, lo, hi = pot.E0, pot.Vmin_edge, pot.Vmax
    X1 = 2.0 * hi + (hi - E0)
    edges = [E0] + [e for e in (lo, hi) if e > E0] + [X1]
    edges = sorted(set(edges))
    pieces = []
    # every region is graded toward both ends: kinks of Phi at V(0), V(L)
    # and the 1/(x + c) scale near E0
    for a, b in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (a + b)
        pieces.append(_graded(a, mid, "a"))
        pieces.append(_graded(mid, b, "b"))
    breaks = np.unique(np.concatenate(pieces))
    x, w = _panel_nodes(breaks)
    phi = np.array([phase_volume(pot, float(e)) for e in x])
    # tail x = X1 / s^2 on s in (0, 1]
    s, ws = _panel_nodes(np.linspace(0.0, 1.0, 9))
    xt = X1 / (s * s)
    tail_phi = np.array([phase_volume(pot, float(e)) for e in xt])
    return _PhaseNodes(x, w, phi, s, ws, tail_phi, X1)


def interaction_time(obj, E: float, B=0.0):
    """Interaction term ``T_{E,B}`` between energy levels.

    After an integration by parts against ``Phi(x) - Phi(E)`` the integrand
    is bounded, so a fixed composite Gauss rule applies.  ``B`` may be an
    array; the energy-dependent work is shared across its entries.
    """
    pot = _as_potential(obj)
    Bs = np.atleast_1d(np.asarray(B, dtype=float))
    if np.any(Bs < 0):
        raise InvalidParameter(f"B must be nonnegative, got {B}")
    _check_energy(pot, E)
    E = max(float(E), pot.E0)
    nodes = _phase_nodes(pot)
    phiE = phase_volume(pot, E)
    dphiE = period_integral(pot, E) / (4.0 * math.sqrt(E)) if E > pot.E0 else math.nan

    def quotient(x, phi):
        dx = x - E
        near = np.abs(dx) < 1e-7 * max(1.0, E)
        if near.any() and math.isfinite(dphiE):
            return np.where(near, dphiE, (phi - phiE) / np.where(near, 1.0, dx))
        return (phi - phiE) / np.where(dx == 0.0, 1.0, dx)

    s = nodes.tail_w
    xt = nodes.X1 / (s * s)
    xs = np.concatenate((nodes.x, xt))
    ws = np.concatenate((nodes.w, nodes.tail_wt * 2.0 * nodes.X1 / s ** 3))
    wq = ws * quotient(xs, np.concatenate((nodes.phi, nodes.tail_phi)))
    c = E + 2.0 * Bs
    integral = (wq[None, :] / (xs[None, :] + c[:, None])).sum(axis=1)
    if E <= pot.E0:
        boundary = np.zeros_like(c)
    else:
        boundary = np.log((pot.E0 + c) / (E - pot.E0)) * phiE
    out = (boundary + (c + E) * integral) / math.pi
    return out if np.ndim(B) else float(out[0])


def interaction_time_quad(obj, E: float, B: float = 0.0) -> float:
    """Adaptive-quadrature evaluation of ``T_{E,B}`` from its defining integral.

    Slow; kept as an independent cross-check of ``interaction_time``.
    """
    pot = _as_potential(obj)
    c = E + 2.0 * B

    def dphi(x):
        return period_integral(pot, x) / (4.0 * math.sqrt(x))

    def g(x):
        return math.log(abs((x + c) / (x - E))) * dphi(x)

    pts = sorted({p for p in (E, pot.V0, pot.VL) if pot.E0 < p})
    edges = [pot.E0] + pts
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b > a:
            total += quad(g, a, b, epsabs=1e-11, epsrel=1e-10, limit=400)[0]
    top = edges[-1]
    total += quad(g, top, top + 1.0, epsabs=1e-11, epsrel=1e-10, limit=400)[0]
    total += quad(g, top + 1.0, np.inf, epsabs=1e-11, epsrel=1e-10, limit=400)[0]
    return total / math.pi


# -- Gamma_0 and kappa_0 ---------------------------------------------------

def gamma0(alpha: float, beta: float) -> float:
    """Closed form of the integral of log|(y^2 + alpha^2)/(y^2 - beta^2)| over y > 1."""
    if not (beta >= 1.0 and alpha >= beta):
        raise DomainError(f"need 1 <= beta <= alpha, got alpha={alpha}, beta={beta}")
    head = math.pi * alpha - math.log1p(alpha * alpha) - 2.0 * alpha * math.atan(1.0 / alpha)
    # (1+b)log(1+b) + (1-b)log(b-1), continuous at b = 1
    tail = (1.0 + beta) * math.log1p(beta) - float(xlogy(beta - 1.0, beta - 1.0))
    return head + tail


def gamma0_quad(alpha: float, beta: float) -> float:
    """Direct quadrature of the defining integral (log singularity at ``beta``)."""

    def g(y):
        return math.log(abs((y * y + alpha * alpha) / (y * y - beta * beta)))

    total = 0.0
    if beta > 1.0:
        total += quad(g, 1.0, beta, epsabs=1e-13, epsrel=1e-13, limit=400)[0]
        total += quad(g, beta, beta + 1.0, epsabs=1e-13, epsrel=1e-13, limit=400)[0]
    else:
        total += quad(g, 1.0, 2.0, epsabs=1e-13, epsrel=1e-13, limit=400)[0]
    start = beta + 1.0 if beta > 1.0 else 2.0
    # large-y integrand ~ (alpha^2 + beta^2)/y^2; map to (0, 1/start]
    h = lambda t: g(1.0 / t) / (t * t)
    total += quad(h, 0.0, 1.0 / start, epsabs=1e-13, epsrel=1e-13, limit=400)[0]
    return total


def _ratio(alpha: float, beta: float) -> float:
    return gamma0(alpha, beta) / (alpha * alpha + beta * beta)


def kappa0(n_grid: int = 64, log_span: float = 4.0) -> tuple[float, float, float]:
    """``kappa_0`` with its maximizer ``(alpha, beta)`` on the wedge ``alpha >= beta >= 1``.

    Searches a log-spaced grid in ``(alpha, beta/alpha)`` then polishes with
    Nelder-Mead inside the wedge.
    """
    from scipy.optimize import minimize

    alphas = np.logspace(0.0, log_span, n_grid)
    best = (-np.inf, 1.0, 1.0)
    for al in alphas:
        betas = np.logspace(0.0, math.log10(al), max(2, n_grid // 2)) if al > 1.0 else np.array([1.0])
        for be in betas:
            v = _ratio(float(al), float(min(be, al)))
            if v > best[0]:
                best = (v, float(al), float(min(be, al)))

    # wedge coordinates: alpha = 1 + p^2, beta = 1 + (alpha - 1) * sin(q)^2
    def to_ab(z):
        al = 1.0 + z[0] * z[0]
        be = 1.0 + (al - 1.0) * math.sin(z[1]) ** 2
        return al, be

    p0 = math.sqrt(best[1] - 1.0)
    q0 = math.asin(math.sqrt((best[2] - 1.0) / (best[1] - 1.0))) if best[1] > 1.0 else 0.0
    res = minimize(lambda z: -_ratio(*to_ab(z)), np.array([p0, q0]), method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
    if -res.fun > best[0]:
        al, be = to_ab(res.x)
        best = (float(-res.fun), al, be)
    return best[0] / (2.0 * math.pi * math.sqrt(2.0)), best[1], best[2]
