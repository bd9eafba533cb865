"""Dirichlet spectrum of ``-eps^2 d^2/dx^2 + V + eps q_f`` on a uniform grid.

Eigenfunction tails are exponentially small, so besides the normalized
grid vectors every ``Spectrum`` keeps ``log|phi|`` recomputed from the
boundary by the three-term recurrence (stable in the inward direction).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq

from .agmon import agmon_on_grid, turning_points
from .classical import ClassicalTable, phase_volume, period_integral
from .errors import InvalidParameter, ResolutionError, SolverFailure
from .problem import Potential, VectorField, potential

__all__ = [
    "OperatorDiscretization",
    "Spectrum",
    "WeylReport",
    "GapReport",
    "LocalizationReport",
    "discretize",
    "eigenpairs",
    "weyl_check",
    "weyl_count",
    "gap_check",
    "localization_check",
    "default_points",
]

POINTS_PER_EPS = 40


def default_points(L: float, eps: float, per_eps: int = POINTS_PER_EPS) -> int:
    return max(64, int(math.ceil(per_eps * L / eps)))


@dataclass(frozen=True, eq=False)
class OperatorDiscretization:
    field: VectorField
    eps: float
    n: int
    h: float
    x: np.ndarray
    diag: np.ndarray
    offdiag: float

    @property
    def L(self) -> float:
        return self.field.L

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * v
        out[1:] += self.offdiag * v[:-1]
        out[:-1] += self.offdiag * v[1:]
        return out


def discretize(field: VectorField, eps: float, n: int | None = None) -> OperatorDiscretization:
    """Second-order finite differences on ``n`` interior nodes; Dirichlet ends."""
    if not eps > 0:
        raise InvalidParameter(f"eps must be positive, got {eps}")
    if n is None:
        n = default_points(field.L, eps)
    if n < 64:
        raise InvalidParameter(f"need at least 64 interior points, got {n}")
    h = field.L / (n + 1)
    if h > eps / 4:
        warnings.warn(f"h = {h:.3g} > eps/4: semiclassical oscillations under-resolved", stacklevel=2)
    x = h * np.arange(1, n + 1)
    fp = field.fp(x)
    k = eps * eps / (h * h)
    diag = 2.0 * k + 0.25 * fp * fp + eps * field.qf(x)
    return OperatorDiscretization(field, float(eps), int(n), h, x, diag, -k)


@dataclass(frozen=True, eq=False)
class Spectrum:
    disc: OperatorDiscretization
    lambdas: np.ndarray
    eigfuns: np.ndarray  # shape (k_max, n), sum(phi^2) h = 1
    log_abs: np.ndarray  # log|phi| with recurrence-refined tails
    dphi0: np.ndarray  # eps * phi'(0)
    dphiL: np.ndarray  # eps * phi'(L)
    log_dphi0: np.ndarray  # log(eps |phi'(0)|)

    @property
    def eps(self) -> float:
        return self.disc.eps

    @property
    def betas(self) -> np.ndarray:
        return np.sqrt(self.lambdas)

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(self.betas)

    @property
    def log_wall_coupling(self) -> np.ndarray:
        """``log(eps |phi(x_1)| / h)``: the weight with which a wall value drives each discrete mode.

        Equals ``eps phi'(0)`` to second order since ``phi`` and ``phi''``
        vanish at the wall.
        """
        return math.log(self.eps) + self.log_abs[:, 0] - math.log(self.disc.h)

    def __len__(self) -> int:
        return self.lambdas.size

    def to_columns(self) -> dict:
        gaps = np.append(self.gaps, np.nan)
        return {"k": np.arange(len(self)), "lambda": self.lambdas, "beta": self.betas, "gap": gaps,
                "dphi0": self.dphi0, "dphiL": self.dphiL}


def _tail_logs(disc: OperatorDiscretization, lam: float, vec: np.ndarray) -> tuple[np.ndarray, float]:
    """``log|phi|`` with both tails rebuilt by inward recurrence from the walls.

    Also returns the sign of ``phi`` at the first node as implied by the
    recurrence, which stays reliable when the stored value is at round-off.
    """
    logs = np.log(np.maximum(np.abs(vec), 1e-300))
    peak = np.abs(vec).max()
    idx = np.flatnonzero(np.abs(vec) > 1e-4 * peak)
    first_sign = 1.0 if vec[0] >= 0 else -1.0
    if idx.size == 0:
        return logs, first_sign
    c = disc.offdiag
    for side in ("left", "right"):
        m = int(idx[0]) if side == "left" else int(disc.n - 1 - idx[-1])
        if m < 2:
            continue
        d = disc.diag if side == "left" else disc.diag[::-1]
        target = vec if side == "left" else vec[::-1]
        # psi_{-1} = 0 is the wall; psi_0 = 1
        psi = np.empty(m + 1)
        psi[0] = 1.0
        psi[1] = (lam - d[0]) / c
        for i in range(1, m):
            psi[i + 1] = ((lam - d[i]) * psi[i] - c * psi[i - 1]) / c
            if abs(psi[i + 1]) > 1e150:
                psi[: i + 2] *= 1e-150
        # only the ratio to the matching node matters; rescaling keeps it exact
        with np.errstate(divide="ignore"):
            rel = np.log(np.abs(psi)) - math.log(abs(psi[m]))
        rel = rel + math.log(abs(target[m]))
        seg = slice(0, m + 1)
        if side == "left":
            logs[seg] = rel
            first_sign = float(np.sign(target[m]) * np.sign(psi[m]))
        else:
            logs[disc.n - 1 - m:] = rel[::-1]
    return logs, first_sign


def eigenpairs(disc: OperatorDiscretization, k_max: int) -> Spectrum:
    """Lowest ``k_max`` eigenpairs by bisection and inverse iteration.

    Vectors are normalized in the discrete ``L^2`` norm and signed so that
    ``phi'(0) > 0``.
    """
    if k_max < 1:
        raise InvalidParameter("k_max must be positive")
    if k_max > disc.n // 4:
        raise ResolutionError(f"k_max = {k_max} exceeds n/4 = {disc.n // 4}")
    off = np.full(disc.n - 1, disc.offdiag)
    try:
        lam, vecs = eigh_tridiagonal(disc.diag, off, select="i", select_range=(0, k_max - 1),
                                     lapack_driver="stemr")
    except np.linalg.LinAlgError as exc:
        raise SolverFailure(f"tridiagonal eigensolver failed: {exc}") from exc
    vecs = vecs.T / math.sqrt(disc.h)
    logs = np.empty_like(vecs)
    dphi0 = np.empty(k_max)
    dphiL = np.empty(k_max)
    log_d0 = np.empty(k_max)
    h, eps = disc.h, disc.eps
    # phi(2h)/phi(h) from the first row of the recurrence
    r0 = (lam - disc.diag[0]) / disc.offdiag
    for k in range(k_max):
        logs[k], s0 = _tail_logs(disc, float(lam[k]), vecs[k])
        vecs[k] *= s0
        # one-sided three-point stencil with phi(0) = 0
        factor = (4.0 - r0[k]) / (2.0 * h)
        log_d0[k] = math.log(eps) + logs[k][0] + math.log(abs(factor))
        dphi0[k] = math.copysign(math.exp(log_d0[k]), factor)
        vl = vecs[k]
        dphiL[k] = eps * (vl[-2] - 4.0 * vl[-1]) / (2.0 * h)
    if np.any(np.diff(lam) <= 0):
        i = int(np.flatnonzero(np.diff(lam) <= 0)[0])
        raise SolverFailure(f"eigenvalues {i} and {i + 1} are not simple")
    for arr in (lam, vecs, logs, dphi0, dphiL, log_d0):
        arr.setflags(write=False)
    return Spectrum(disc, lam, vecs, logs, dphi0, dphiL, log_d0)


@dataclass(frozen=True)
class WeylReport:
    D_fit: float
    C_fit: float
    band_violations: int
    K_range: tuple
    excluded: int
    residuals: tuple
    outside_hypotheses: bool


def _phi_inverse_bracketed(pot: Potential, table: ClassicalTable, value: float) -> float:
    if value <= 0.0:
        return pot.E0
    phi = table.phi
    j = int(np.searchsorted(phi, value))
    if j >= phi.size:
        raise InvalidParameter("value beyond the tabulated range")
    lo, hi = table.energies[max(j - 1, 0)], table.energies[j]
    return brentq(lambda e: phase_volume(pot, e) - value, lo, hi, xtol=1e-14, rtol=1e-15)


def weyl_check(spec: Spectrum, table: ClassicalTable, eps: float | None = None, pot: Potential | None = None,
               D_ref: float = math.pi / 2) -> WeylReport:
    """Fit the smallest band constants for ``Phi^-1(eps(pi k -/+ D)) -/+ C eps^1.5``.

    ``D_fit`` is the smallest ``D`` with ``C = 0``; ``C_fit`` the smallest
    ``C`` once ``D`` is fixed to ``D_ref``.
    """
    eps = spec.eps if eps is None else eps
    pot = pot or potential(spec.disc.field)
    ks = np.arange(len(spec))
    keep = spec.lambdas <= table.E_cap
    excluded = int((~keep).sum())
    if excluded:
        warnings.warn(f"{excluded} eigenvalues above E_cap excluded from the band check", stacklevel=2)
    lam = spec.lambdas[keep]
    ks = ks[keep]
    r = np.array([phase_volume(pot, float(max(l, pot.E0))) / eps for l in lam]) - math.pi * ks
    D_fit = float(np.max(np.abs(r))) if r.size else 0.0
    c_need = 0.0
    scale = eps ** 1.5
    for k, l in zip(ks, lam):
        lo = _phi_inverse_bracketed(pot, table, eps * (math.pi * k - D_ref))
        hi = _phi_inverse_bracketed(pot, table, eps * (math.pi * k + D_ref))
        c_need = max(c_need, (lo - l) / scale, (l - hi) / scale)
    violations = int(np.sum(np.abs(r) > D_fit * (1 + 1e-12)))
    return WeylReport(D_fit, float(c_need), violations, (int(ks[0]), int(ks[-1])) if ks.size else (0, -1),
                      excluded, tuple(float(v) for v in r), not spec.disc.field.half_b)


def weyl_count(spec: Spectrum, pot: Potential, E: float) -> tuple[int, float]:
    """Count of eigenvalues up to ``E`` and the phase-space prediction ``Phi(E)/(pi eps)``."""
    return int(np.sum(spec.lambdas <= E)), phase_volume(pot, E) / (math.pi * spec.eps)


@dataclass(frozen=True)
class GapReport:
    N_obs: int | None
    threshold: float
    gamma_obs: float
    gamma2_obs: float
    period_ratio: tuple
    gaps_over_eps: tuple


def gap_check(spec: Spectrum, T1: float, eps: float | None = None, delta: float = 0.5,
              pot: Potential | None = None) -> GapReport:
    """Index from which ``beta_{l+1} - beta_l >= 2 pi eps / (T1 + delta)`` holds."""
    eps = spec.eps if eps is None else eps
    g = spec.gaps
    thr = 2.0 * math.pi * eps / (T1 + delta)
    bad = np.flatnonzero(g < thr)
    N_obs = 0 if bad.size == 0 else int(bad[-1] + 1)
    if N_obs >= g.size:
        N_obs = None
    pot = pot or potential(spec.disc.field)
    ratios = []
    for k in range(g.size):
        lam = float(spec.lambdas[k])
        if lam > pot.E0:
            ratios.append(float(g[k] * period_integral(pot, lam) / (2.0 * math.pi * eps)))
        else:
            ratios.append(float("nan"))
    return GapReport(N_obs, thr, float(g.min() / eps), float(np.diff(spec.lambdas).min() / eps),
                     tuple(ratios), tuple(float(v) for v in g / eps))


@dataclass(frozen=True)
class LocalizationReport:
    k_set: tuple
    slopes: tuple
    r2: tuple
    n_points: tuple
    delta_upper: tuple
    delta_flux: tuple
    delta_obs: float
    floor_hits: int


def _forbidden_mask(x: np.ndarray, d: np.ndarray, eps: float, L: float, xm: float, xp: float) -> np.ndarray:
    # skip the Airy layer at the turning points and the wall layer at the ends
    airy = 2.0 * eps ** (2.0 / 3.0)
    wall = 4.0 * eps
    outside = (x < xm - airy) | (x > xp + airy)
    return outside & (x > wall) & (x < L - wall) & (d > 0)


def localization_check(spec: Spectrum, field: VectorField | None = None, eps: float | None = None,
                       k_set=(0, 3, 10), pot: Potential | None = None) -> LocalizationReport:
    """Agmon decay diagnostics for the eigenfunctions in ``k_set``.

    For each index the regression of ``-eps log|phi|`` on the Agmon
    distance over the forbidden region gives a slope and ``R^2``;
    ``delta_flux`` is the smallest ``delta`` making the two-sided boundary
    flux bound hold.
    """
    field = field or spec.disc.field
    eps = spec.eps if eps is None else eps
    pot = pot or potential(field)
    x = spec.disc.x
    slopes, r2s, npts, dup, dflux = [], [], [], [], []
    floor_hits = 0
    for k in k_set:
        if k >= len(spec):
            raise InvalidParameter(f"index {k} beyond computed spectrum")
        E = float(max(spec.lambdas[k], pot.E0))
        xm, xp = turning_points(pot, E)
        d = agmon_on_grid(pot, E, x)
        logs = spec.log_abs[k]
        floor_hits += int(np.sum(logs <= math.log(1e-300) + 1))
        mask = _forbidden_mask(x, d, eps, field.L, xm, xp)
        y = -eps * logs
        if mask.sum() >= 3:
            A = np.vstack((d[mask], np.ones(mask.sum()))).T
            coef, *_ = np.linalg.lstsq(A, y[mask], rcond=None)
            pred = A @ coef
            ss_res = float(np.sum((y[mask] - pred) ** 2))
            ss_tot = float(np.sum((y[mask] - y[mask].mean()) ** 2))
            slopes.append(float(coef[0]))
            r2s.append(1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan"))
        else:
            slopes.append(float("nan"))
            r2s.append(float("nan"))
        npts.append(int(mask.sum()))
        dup.append(float(max(0.0, np.max(d + eps * logs))))
        d0 = float(agmon_on_grid(pot, E, np.array([0.0]))[0])
        flux = spec.log_dphi0[k] - 0.5 * math.log(E + 1.0)
        dflux.append(abs(eps * flux + d0))
    return LocalizationReport(tuple(k_set), tuple(slopes), tuple(r2s), tuple(npts), tuple(dup), tuple(dflux),
                              float(max(dflux)), floor_hits)
