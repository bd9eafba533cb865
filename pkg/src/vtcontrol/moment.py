"""Moment method for boundary null control of the conjugated heat problem.

The pipeline is: a family biorthogonal to ``sin(beta_n s)`` on ``(-S, S)``
from a Gram solve, the flat transmutation kernel ``k_T(t, s)`` as an odd
power series in ``s``, and the exponential family ``u_n = w_n / c_n`` with
``w_n(t) = int k_T(t, s) v_n(s) ds``.  Two-phase control synthesis sits on
top.

Normalizers like ``c_n`` and factors like ``exp(beta^2 T)`` leave double
range by design, so kernel and family values are mpmath numbers.  Only
logarithms and rescaled mantissas are handed back as floats.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field
from functools import lru_cache

import gmpy2
import mpmath as mp
import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import brentq
from scipy.special import logsumexp
from gmpy2 import mpfr
from mpmath.libmp import from_man_exp

from .agmon import _as_potential, weight_profiles
from .classical import classical_table
from .errors import (DomainError, HypothesisViolation, IllConditionedFamily, InsufficientFamily,
                     InvalidParameter, TruncationError)
from .problem import VectorField
from .spectral import Spectrum

__all__ = [
    "KernelEvaluator",
    "SineFamily",
    "BiorthogonalFamily",
    "ControlSignal",
    "gevrey_derivative",
    "heat_kernel",
    "sine_biorthogonal",
    "log_normalizer",
    "exp_biorthogonal",
    "synthesize_control",
    "dissipation_sum",
    "observation_weight",
    "observation_exponent",
]

DPS = 300
J_CAP = 4000
MARGIN = 0.05  # alpha = 2 S^2 (1 + MARGIN)
COND_MAX = 1e12
PANEL_NODES = 80
MAX_PANEL_NODES = 600
RESIDUAL_TOL = 1e-10
PANEL_RATIO = 1.6


def _bits(dps: int) -> int:
    return int(math.ceil(dps * 3.3219281)) + 16


def _ctx(dps: int):
    return gmpy2.context(gmpy2.get_context(), precision=_bits(dps))


def _to_mp(x) -> mp.mpf:
    """Exact conversion of a gmpy2 float to mpmath."""
    man, exp = x.as_mantissa_exp()
    # mp.mpf(...) would round to the global mpmath precision
    return mp.make_mpf(from_man_exp(int(man), int(exp)))


def _from_mp(x):
    """Exact conversion of an mpmath real to gmpy2 (inside a wide enough context)."""
    x = x if isinstance(x, mp.mpf) else mp.mpf(x)
    sign, man, exp, _ = x._mpf_
    if not man:
        return mpfr(0)
    return gmpy2.mul_2exp(mpfr(-int(man) if sign else int(man)), int(exp))


@lru_cache(maxsize=16)
def _gauss_legendre(n: int, dps: int) -> tuple[tuple, tuple]:
    """Gauss-Legendre rule on ``[-1, 1]`` at working precision."""
    with _ctx(dps + 20):
        tol = mpfr(2) ** -(_bits(dps) + 8)
        pi = gmpy2.const_pi()
        nodes, weights = [], []
        for i in range(n):
            x = gmpy2.cos(pi * (i + mpfr(0.75)) / (n + mpfr(0.5)))
            for _ in range(200):
                p0, p1 = mpfr(1), x
                for k in range(2, n + 1):
                    p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
                dp = n * (x * p1 - p0) / (x * x - 1)
                step = p1 / dp
                x -= step
                if abs(step) < tol:
                    break
            p0, p1 = mpfr(1), x
            for k in range(2, n + 1):
                p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
            dp = n * (x * p1 - p0) / (x * x - 1)
            nodes.append(x)
            weights.append(2 / ((1 - x * x) * dp * dp))
    with _ctx(dps):
        return tuple(+x for x in nodes), tuple(+w for w in weights)


class KernelEvaluator:
    """Series realization of the flat kernel ``k_T``.

    ``k_T(t, s) = sum_j (-1)^j a^(j)(t) s^(2j+1) / (2j+1)!`` with
    ``a(t) = exp(-alpha (1/t + 1/(T-t)))``.  Derivatives of ``a`` come from
    Taylor coefficients at ``t`` generated by the first-order relation
    ``t^2 (T-t)^2 a' = alpha T (T - 2t) a``.  The series alternates with
    intermediate terms far above the sum, hence the extended precision
    (gmpy2 floats internally, mpmath numbers at the interface).
    """

    def __init__(self, alpha, T, S=None, J=None, J_cap: int = J_CAP, dps: int = DPS):
        if not alpha > 0 or not T > 0:
            raise InvalidParameter("alpha and T must be positive")
        self.dps = int(dps)
        with _ctx(self.dps):
            self.alpha = _from_mp(alpha) if isinstance(alpha, mp.mpf) else mpfr(alpha)
            self.T = _from_mp(T) if isinstance(T, mp.mpf) else mpfr(T)
            self.radius = gmpy2.sqrt(2 * self.alpha)
            if S is None:
                self.S = self.radius / gmpy2.sqrt(2 * (1 + mpfr(MARGIN)))
            else:
                self.S = _from_mp(S) if isinstance(S, mp.mpf) else mpfr(S)
        if self.S >= self.radius:
            raise DomainError(f"|s| <= S = {float(self.S):.6g} needs S < sqrt(2 alpha) = {float(self.radius):.6g}")
        self.J = J
        self.J_cap = int(J_cap)
        self._cache: dict = {}

    def _point(self, t):
        with _ctx(self.dps):
            if isinstance(t, mp.mpf):
                return _from_mp(t)
            return +t if isinstance(t, type(mpfr(0))) else mpfr(t)

    def _taylor(self, t0):
        """Generator of Taylor coefficients ``a_k`` of ``a`` at ``t0`` (call inside the context)."""
        alpha, T = self.alpha, self.T
        w0 = T - t0
        left = (t0 * t0, 2 * t0, mpfr(1))
        right = (w0 * w0, -2 * w0, mpfr(1))
        p = [mpfr(0)] * 5
        for i in range(3):
            for k in range(3):
                p[i + k] += left[i] * right[k]
        q0, q1 = alpha * T * (T - 2 * t0), -2 * alpha * T
        a = [gmpy2.exp(-alpha / t0 - alpha / w0)]
        yield a[0]
        k = 0
        while True:
            acc = q0 * a[k]
            if k >= 1:
                acc += q1 * a[k - 1]
            for i in range(1, 5):
                if k - i + 1 >= 0:
                    acc -= p[i] * (k - i + 1) * a[k - i + 1]
            a.append(acc / (p[0] * (k + 1)))
            k += 1
            yield a[k]

    def derivatives(self, t, j: int) -> list:
        """``[a(t), a'(t), ..., a^(j)(t)]`` as mpmath numbers; zero outside ``(0, T)``."""
        if j > self.J_cap:
            raise TruncationError(f"derivative order {j} exceeds the cap {self.J_cap}")
        t = self._point(t)
        if t <= 0 or t >= self.T:
            return [mp.mpf(0)] * (j + 1)
        with _ctx(self.dps):
            out, fact = [], mpfr(1)
            for k, ak in enumerate(self._taylor(t)):
                if k:
                    fact *= k
                out.append(_to_mp(fact * ak))
                if k == j:
                    return out

    def _coefficients(self, t, cache: bool = True) -> list:
        """Series coefficients ``b_j`` of ``k_T(t, s) = sum_j b_j s^(2j+1)`` (gmpy2 floats).

        Without a fixed order the sum runs until two consecutive terms at
        ``|s| = S`` fall below the working precision relative to the
        largest term seen.
        """
        t = self._point(t)
        key = (t, self.J)
        if key in self._cache:
            return self._cache[key]
        if t <= 0 or t >= self.T:
            return [mpfr(0)]
        with _ctx(self.dps):
            S2 = self.S * self.S
            tol = mpfr(2) ** -(_bits(self.dps) - 32)
            ratio = mpfr(1)  # j! / (2j+1)!
            scale = +self.S
            coeffs, peak, small = [], mpfr(0), 0
            for j, aj in enumerate(self._taylor(t)):
                if j:
                    ratio = ratio * j / ((2 * j) * (2 * j + 1))
                    scale *= S2
                bj = aj * ratio if j % 2 == 0 else -aj * ratio
                coeffs.append(bj)
                if self.J is not None:
                    if j >= self.J:
                        break
                    continue
                term = abs(bj) * scale
                peak = max(peak, term)
                small = small + 1 if term <= tol * peak else 0
                if small >= 2 and j > 10:
                    break
                if j >= self.J_cap:
                    raise TruncationError(f"kernel series at t = {float(t):.8g} needs more than {self.J_cap} terms")
        if cache:
            self._cache[key] = coeffs
        return coeffs

    def coefficients(self, t) -> list:
        return [_to_mp(b) for b in self._coefficients(t)]

    def _value(self, t, s):
        coeffs = self._coefficients(t)
        with _ctx(self.dps):
            s2 = s * s
            acc = mpfr(0)
            for bj in reversed(coeffs):
                acc = acc * s2 + bj
            return acc * s

    def value(self, t, s):
        """``k_T(t, s)`` as an mpmath number."""
        s = self._point(s)
        if abs(s) > self.S * (1 + mpfr(2) ** -40):
            raise DomainError(f"|s| = {float(abs(s)):.8g} exceeds the window S = {float(self.S):.8g}")
        return _to_mp(self._value(t, s))

    def boundary_datum(self, t):
        """``a(t)``, the prescribed ``d/ds k_T(t, 0)``."""
        return self.derivatives(t, 0)[0]

    def pde_residual(self, t, s, step=None) -> tuple:
        """Finite-difference ``(d_t k + d_s^2 k, scale)`` at one point, as mpmath numbers."""
        with mp.workdps(self.dps):
            t, s = mp.mpf(t), mp.mpf(s)
            d = mp.mpf(10) ** -12 if step is None else mp.mpf(step)
            k = self.value
            dt = (-k(t + 2 * d, s) + 8 * k(t + d, s) - 8 * k(t - d, s) + k(t - 2 * d, s)) / (12 * d)
            dss = (-k(t, s + 2 * d) + 16 * k(t, s + d) - 30 * k(t, s) + 16 * k(t, s - d) - k(t, s - 2 * d)) / (12 * d * d)
            return dt + dss, max(abs(dt), abs(dss))


def gevrey_derivative(alpha, T, t, j: int, J_cap: int = J_CAP):
    """``a^(j)(t)`` for ``a(t) = exp(-alpha (1/t + 1/(T-t)))``; zero outside ``(0, T)``."""
    if j > J_cap:
        raise TruncationError(f"derivative order {j} exceeds the cap {J_cap}")
    return KernelEvaluator(alpha, T, S=0.0, J_cap=J_cap).derivatives(t, j)[j]


def heat_kernel(alpha, T, t, s, J=None):
    """``k_T(t, s)``; requires ``|s| < sqrt(2 alpha)``."""
    radius = math.sqrt(2.0 * float(alpha))
    if abs(float(s)) >= radius:
        raise DomainError(f"|s| = {abs(float(s)):.6g} outside the series window sqrt(2 alpha) = {radius:.6g}")
    S = max(abs(float(s)), 1e-3)
    return KernelEvaluator(alpha, T, S=S, J=J).value(t, s)


def _sine_gram(betas, S):
    n = len(betas)
    G = mp.matrix(n, n)
    for i in range(n):
        for j in range(n):
            bi, bj = betas[i], betas[j]
            if i == j:
                G[i, j] = S - mp.sin(2 * bi * S) / (2 * bi)
            else:
                G[i, j] = mp.sin((bi - bj) * S) / (bi - bj) - mp.sin((bi + bj) * S) / (bi + bj)
    return G


@dataclass(frozen=True, eq=False)
class SineFamily:
    """``v_n = sum_m (G^-1)_nm sin(beta_m s)`` on ``(-S, S)``."""

    betas: np.ndarray
    S: float
    gram: np.ndarray
    cond: float
    inverse_residual: float
    inverse: object = dc_field(repr=False)  # mpmath matrix
    dps: int = DPS

    @property
    def size(self) -> int:
        return self.betas.size

    def coefficient_matrix(self) -> np.ndarray:
        return np.array(self.inverse.tolist(), dtype=float)

    def values(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        basis = np.sin(np.multiply.outer(self.betas, s))
        return self.coefficient_matrix() @ basis

    def biorthogonality_residual(self, nodes: int = 400) -> float:
        """``max |int v_n sin(beta_l s) ds - delta_nl|`` by composite Gauss-Legendre."""
        panels = max(8, int(math.ceil(self.betas.max() * self.S / math.pi)))
        x, w = np.polynomial.legendre.leggauss(max(8, nodes // panels))
        edges = np.linspace(-self.S, self.S, panels + 1)
        half = 0.5 * np.diff(edges)
        s = (0.5 * (edges[:-1] + edges[1:])[:, None] + half[:, None] * x).ravel()
        ws = (half[:, None] * w).ravel()
        V = self.values(s)
        B = np.sin(np.multiply.outer(self.betas, s))
        R = (V * ws) @ B.T
        return float(np.abs(R - np.eye(self.size)).max())


def sine_biorthogonal(betas, S, N_trunc: int | None = None, dps: int = DPS) -> SineFamily:
    """Family biorthogonal to ``sin(beta_n s)`` in ``L^2(-S, S)`` within their span."""
    betas = np.asarray(betas, dtype=float)
    if N_trunc is not None:
        if N_trunc > betas.size:
            raise InsufficientFamily(f"asked for {N_trunc} members, only {betas.size} frequencies given")
        betas = betas[:N_trunc]
    if betas.size == 0 or np.any(betas <= 0) or np.any(np.diff(betas) <= 0):
        raise InvalidParameter("frequencies must be positive and strictly increasing")
    if not S > 0:
        raise InvalidParameter("window half-width S must be positive")
    with mp.workdps(dps):
        G = _sine_gram([mp.mpf(b) for b in betas], mp.mpf(S))
        gram = np.array(G.tolist(), dtype=float)
        cond = float(np.linalg.cond(gram))
        if not cond < COND_MAX:
            raise IllConditionedFamily(f"Gram condition number {cond:.3g} > {COND_MAX:.0e}; "
                                       "enlarge S or reduce the family size")
        inv = mp.inverse(G)
        res = G * inv - mp.eye(betas.size)
        inverse_residual = float(max(abs(x) for x in res))
    betas.setflags(write=False)
    gram.setflags(write=False)
    return SineFamily(betas, float(S), gram, cond, inverse_residual, inv, dps)


def _sine_moments(beta, S, J: int, dps: int) -> list:
    """``int_0^S s^(2j+1) sin(beta s) ds`` for ``j = 0..J`` (gmpy2 floats).

    Backward recurrence on ``F_n = int_0^S s^n exp(i beta s) ds`` from a
    confluent hypergeometric start value; the recurrence is stable in the
    decreasing direction once ``n`` exceeds ``beta S``, and the working
    precision absorbs the growth below that.
    """
    n = 2 * J + 1
    with mp.workdps(dps + 20):
        b, Sm = mp.mpf(beta), mp.mpf(S)
        F = Sm ** (n + 1) / (n + 1) * mp.hyp1f1(n + 1, n + 2, mp.mpc(0, b * Sm))
        re, im = F.real, F.imag
    with _ctx(dps + 20):
        x, y = _from_mp(re), _from_mp(im)
        bg, Sg = _from_mp(mp.mpf(beta)), _from_mp(mp.mpf(S))
        cosb, sinb = gmpy2.cos(bg * Sg), gmpy2.sin(bg * Sg)
        Sp = Sg ** n
        out = [mpfr(0)] * (J + 1)
        while n >= 1:
            if n % 2:
                out[(n - 1) // 2] = y
            x, y = (Sp * cosb + bg * y) / n, (Sp * sinb - bg * x) / n
            Sp /= Sg
            n -= 1
    return out


def log_normalizer(alpha: float, T: float, beta: float) -> float:
    """``log c`` with ``c = (1/beta) int_0^T exp(-alpha/t - alpha/(T-t) - beta^2 t) dt``.

    The exponent is shifted by its interior maximum before integrating, so
    the result stays finite however small ``c`` is.
    """
    alpha, T, b2 = float(alpha), float(T), float(beta) ** 2

    def g(t):
        return -alpha / t - alpha / (T - t) - b2 * t

    def dg(t):
        return alpha / (t * t) - alpha / ((T - t) ** 2) - b2

    lo = T * 1e-12
    t_star = brentq(dg, lo, 0.5 * T, xtol=1e-16 * T, rtol=1e-15, maxiter=500)
    g_star = g(t_star)
    width = 1.0 / math.sqrt(2 * alpha / t_star ** 3 + 2 * alpha / (T - t_star) ** 3)
    pts = sorted({max(lo, t_star - 6 * width), t_star, min(T - lo, t_star + 6 * width)})

    def integrand(t):
        if t <= 0 or t >= T:
            return 0.0
        return math.exp(g(t) - g_star)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        val, _ = quad(integrand, 0.0, T, points=pts, epsabs=0.0, epsrel=1e-13, limit=400)
    return g_star + math.log(val) - math.log(float(beta))


def _panel_rule(T, left, right, nodes_per_panel: int, dps: int):
    """Composite Gauss rule on ``[left, T - right]`` graded toward both ends."""
    with _ctx(dps):
        half_T = T / 2
        lo = [left]
        while lo[-1] * PANEL_RATIO < half_T:
            lo.append(lo[-1] * PANEL_RATIO)
        hi = [right]
        while hi[-1] * PANEL_RATIO < half_T:
            hi.append(hi[-1] * PANEL_RATIO)
        edges = lo + [half_T] + [T - e for e in reversed(hi)]
        x, w = _gauss_legendre(nodes_per_panel, dps)
        nodes, weights = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            half, mid = (b - a) / 2, (b + a) / 2
            for xi, wi in zip(x, w):
                nodes.append(mid + half * xi)
                weights.append(half * wi)
    return nodes, weights, [float(e) for e in edges]


def _barycentric_weights(x: np.ndarray) -> np.ndarray:
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    logw = -np.log(np.abs(diff)).sum(axis=1)
    sign = np.where((diff < 0).sum(axis=1) % 2, -1.0, 1.0)
    return sign * np.exp(logw - logw.max())


@dataclass(frozen=True, eq=False)
class BiorthogonalFamily:
    """``u_n`` on ``(0, T)`` with ``int u_n exp(-beta_l^2 t) dt = delta_nl``.

    Values live at the nodes of a composite Gauss rule, which also serves
    every integral over ``(0, T)``.  Outside ``[cut_left, T - cut_right]``
    the kernel is below ``cut_level`` times the smallest normalizer and
    the family is taken as zero.
    """

    betas: np.ndarray
    T: float
    S: float
    alpha: float
    sine: SineFamily
    log_c: np.ndarray
    t_grid: np.ndarray
    nodes: tuple = dc_field(repr=False)
    weights: tuple = dc_field(repr=False)
    w: tuple = dc_field(repr=False)
    u: tuple = dc_field(repr=False)
    series_terms: int = 0
    cut_left: float = 0.0
    cut_right: float = 0.0
    cut_level: float = 0.0
    dps: int = DPS
    normalizer_drift: float = 0.0  # |log c| from the node rule minus the adaptive double-precision value
    panel_nodes: int = 0
    kernel: KernelEvaluator | None = dc_field(default=None, repr=False)
    series_moments: object = dc_field(default=None, repr=False)  # (N, J+1) weights of s^(2j+1) in v_n
    normalizers: tuple = dc_field(default=(), repr=False)
    panel_edges: tuple = ()

    @property
    def N_trunc(self) -> int:
        return self.betas.size

    def moments(self, betas=None) -> np.ndarray:
        """``int u_n exp(-beta_l^2 t) dt`` by the node rule (object array, rows n, columns l)."""
        betas = self.betas if betas is None else np.asarray(betas, dtype=float)
        with _ctx(self.dps):
            U = np.array(self.u, dtype=object)
            E = np.empty((len(self.nodes), len(betas)), dtype=object)
            for l, b in enumerate(betas):
                b2 = mpfr(float(b)) ** 2
                E[:, l] = [wi * gmpy2.exp(-b2 * ti) for ti, wi in zip(self.nodes, self.weights)]
            return U.dot(E)

    def values_at(self, times) -> list:
        """``[u_n(t) for n]`` at arbitrary times (gmpy2 floats); zero outside the cut window."""
        out = []
        with _ctx(self.dps):
            for t in times:
                tf = float(t)
                if tf <= self.cut_left or tf >= self.T - self.cut_right:
                    out.append([mpfr(0)] * self.N_trunc)
                    continue
                b = self.kernel._coefficients(mpfr(tf), cache=False)
                row = self.series_moments[:, :len(b)].dot(np.array(b, dtype=object))
                out.append([row[n] / self.normalizers[n] for n in range(self.N_trunc)])
        return out

    def residual(self) -> float:
        R = self.moments()
        with _ctx(self.dps):
            D = R - np.eye(self.N_trunc, dtype=int)
            return float(max(abs(x) for x in D.ravel()))

    def c_lower_constant(self) -> float:
        """Largest ``C`` with ``c_l >= C T^1.5 / beta_l exp(-beta_l^2 T - 4 alpha / T)`` for all l."""
        T = self.T
        logs = self.log_c + np.log(self.betas) + self.betas ** 2 * T + 4 * self.alpha / T - 1.5 * math.log(T)
        return float(math.exp(logs.min()))

    def norm_constant(self) -> float:
        """Log of the smallest ``C`` in the weighted bound on ``||sum a_n u_n||^2``.

        The bound reads ``(C / T^3) exp((16 + MARGIN) S^2 / T) sum beta_n^2
        exp(2 beta_n^2 T) |a_n|^2``; ``C`` is the top eigenvalue of the
        weight-scaled Gram matrix of the ``u_n``.
        """
        N, T = self.N_trunc, self.T
        with _ctx(self.dps):
            logD = [2 * gmpy2.log(mpfr(float(b))) + 2 * mpfr(float(b)) ** 2 * T for b in self.betas]
            U = np.array(self.u, dtype=object)
            G = (U * np.array(self.weights, dtype=object)).dot(U.T)
            scaled = [[_to_mp(G[n, m] * gmpy2.exp(-(logD[n] + logD[m]) / 2)) for m in range(N)] for n in range(N)]
        with mp.workdps(40):
            top = max(mp.eigsy(mp.matrix(scaled), eigvals_only=True))
            return float(mp.log(top)) + 3 * math.log(T) - (16 + MARGIN) * self.S ** 2 / T

    def diagnostics(self) -> dict:
        return {
            "N_trunc": self.N_trunc,
            "T": self.T,
            "S": self.S,
            "alpha": self.alpha,
            "gram_condition": self.sine.cond,
            "gram_inverse_residual": self.sine.inverse_residual,
            "log_c": [float(x) for x in self.log_c],
            "series_terms": self.series_terms,
            "nodes": len(self.nodes),
            "panel_nodes": self.panel_nodes,
            "cut": [self.cut_left, self.cut_right],
            "cut_level": self.cut_level,
            "digits": self.dps,
            "normalizer_drift": self.normalizer_drift,
        }


def _end_cut(kernel: KernelEvaluator, T: float, start: float, side: int, log_limit: float) -> float:
    """Distance from an end of ``(0, T)`` inside which ``|k_T(., s)| < exp(log_limit)`` for ``|s| <= S``."""
    d = start
    for _ in range(60):
        t = d if side < 0 else T - d
        with _ctx(kernel.dps):
            tg = mpfr(t)
            worst = max(abs(kernel._value(tg, kernel.S * r)) for r in (mpfr(0.5), mpfr(0.8), mpfr(1)))
        if worst == 0 or float(gmpy2.log(worst)) < log_limit:
            return d
        d *= 0.8
    raise TruncationError("kernel does not decay toward the end of the time window")


def exp_biorthogonal(betas, T, S, alpha=None, N_trunc: int | None = None, dps: int = DPS,
                     panel_nodes: int | None = None, cut_digits: int = 40,
                     tol: float = RESIDUAL_TOL) -> BiorthogonalFamily:
    """Family biorthogonal to ``exp(-beta_l^2 t)`` on ``(0, T)`` via the kernel ``k_T``.

    With ``panel_nodes=None`` the Gauss order per panel starts at
    ``PANEL_NODES`` and grows by half until the biorthogonality residual is
    below ``tol`` (or ``MAX_PANEL_NODES`` is reached; the last family is
    returned either way and its residual is for the caller to judge).
    """
    alpha = 2.0 * S * S * (1.0 + MARGIN) if alpha is None else float(alpha)
    if not alpha > 2.0 * S * S:
        raise DomainError(f"alpha = {alpha} must exceed 2 S^2 = {2 * S * S}")
    if not T > 0:
        raise InvalidParameter("horizon must be positive")
    betas = np.asarray(betas, dtype=float)[:N_trunc]
    if np.any(betas <= 0):
        raise InvalidParameter("frequencies must be positive")
    log_c = np.array([log_normalizer(alpha, T, b) for b in betas])
    # the moments cancel down to c_n from kernel values near exp(-alpha / T)
    dps = max(int(dps), int((4 * alpha / T - log_c.min()) / math.log(10)) + cut_digits + 40)
    sine = sine_biorthogonal(betas, S, dps=dps)
    kernel = KernelEvaluator(alpha, T, S, dps=dps)
    coef = sine.coefficient_matrix()
    v_sup = float(np.abs(coef).sum(axis=1).max())
    log_limit = float(log_c.min()) - math.log(2 * S * v_sup) - cut_digits * math.log(10.0)
    guess = min((alpha - 0.25 * S * S) / -log_limit, 0.25 * T)
    cut_left = _end_cut(kernel, T, guess, -1, log_limit)
    cut_right = _end_cut(kernel, T, guess, 1, log_limit)
    if panel_nodes is not None:
        return _assemble(betas, T, S, alpha, sine, kernel, log_c, cut_left, cut_right, int(panel_nodes),
                         cut_digits, dps)
    # wide normalizer ranges need a finer rule from the start
    spread = float(log_c.max() - log_c.min()) / math.log(10.0)
    order = PANEL_NODES if spread < 80 else int(PANEL_NODES * 1.5)
    while True:
        family = _assemble(betas, T, S, alpha, sine, kernel, log_c, cut_left, cut_right, order, cut_digits, dps)
        if family.residual() < tol or order >= MAX_PANEL_NODES:
            return family
        order = min(MAX_PANEL_NODES, int(order * 1.5))


def _assemble(betas, T, S, alpha, sine, kernel, log_c, cut_left, cut_right, panel_nodes, cut_digits, dps):
    N = betas.size
    with _ctx(dps):
        Tg = mpfr(float(T))
        nodes, weights, edges = _panel_rule(Tg, mpfr(cut_left), mpfr(cut_right), panel_nodes, dps)
        coeffs = [kernel._coefficients(t, cache=False) for t in nodes]
        J = max(len(c) for c in coeffs) - 1
        mom = np.array([_sine_moments(b, S, J, dps) for b in betas], dtype=object)
        inv = np.array([[_from_mp(sine.inverse[n, m]) for m in range(N)] for n in range(N)], dtype=object)
        # weights of s^(2j+1) in v_n, integrated over (-S, S)
        vmom = 2 * inv.dot(mom)
        B = np.zeros((len(nodes), J + 1), dtype=object)
        for i, c in enumerate(coeffs):
            B[i, :len(c)] = c
            B[i, len(c):] = mpfr(0)
        Wv = vmom.dot(B.T)
        # normalizers from the same rule keep the diagonal consistent with the moments
        c_g = []
        for b in betas:
            bg = mpfr(float(b))
            c_g.append(sum(wi * ci[0] * gmpy2.exp(-bg * bg * ti) for ti, wi, ci in zip(nodes, weights, coeffs)) / bg)
        log_c_rule = np.array([float(gmpy2.log(c)) for c in c_g])
        w = tuple(tuple(Wv[n]) for n in range(N))
        u = tuple(tuple(x / c_g[n] for x in Wv[n]) for n in range(N))
        t_grid = np.array([float(t) for t in nodes])
    normalizer_drift = float(np.max(np.abs(log_c_rule - log_c)))
    log_c_rule.setflags(write=False)
    t_grid.setflags(write=False)
    return BiorthogonalFamily(betas, float(T), float(S), alpha, sine, log_c_rule, t_grid, tuple(nodes),
                              tuple(weights), w, u, J + 1, cut_left, cut_right, 10.0 ** -cut_digits, dps,
                              normalizer_drift, panel_nodes, kernel, vmom, tuple(c_g), tuple(edges))


def _signed_flux(spec: Spectrum, k: int):
    # the scheme's own coupling, so time stepping on the same grid reproduces the moments
    return math.copysign(1.0, spec.eigfuns[k, 0]) * gmpy2.exp(mpfr(float(spec.log_wall_coupling[k])))


@dataclass(frozen=True, eq=False)
class ControlSignal:
    """Boundary control ``h(t) = h_values * exp(log_scale)`` on ``t_grid``.

    ``log_predicted_bound`` is the log of the cost estimate's right side
    without its unknown constant; ``log_bound_constant`` is the log of the
    ratio that constant would need.
    """

    t_grid: np.ndarray
    h_values: np.ndarray
    log_scale: float
    quad_weights: np.ndarray
    phase_split: float
    T: float
    log_norm_sq: float
    log_predicted_bound: float
    modal_residual: float
    n_checked: int
    family: BiorthogonalFamily = dc_field(repr=False)
    modal_weights: tuple = dc_field(default=(), repr=False)  # coefficients of u_n in the control
    eps: float = 0.0
    node_values: np.ndarray | None = dc_field(default=None, repr=False)  # h / exp(log_scale) at the family nodes

    def evaluate(self, times, scaled: bool = False, exact: bool = False) -> np.ndarray:
        """Control at arbitrary times.

        By default each Gauss panel of the family is interpolated
        barycentrically from its nodes; ``exact`` sums the kernel series
        instead, which is slow.  With ``scaled`` the values are divided by
        ``exp(log_scale)``, which keeps them in double range whatever the
        cost.
        """
        times = np.asarray(times, dtype=float)
        mT = self.phase_split * self.T
        tau = self.T - mT
        inside = (times > mT) & (times < self.T)
        out = np.zeros(times.shape)
        if not inside.any():
            return out
        fam = self.family
        s = self.eps * (tau - (times[inside] - mT))
        if not exact:
            vals = self._interpolate(s)
            out[inside] = vals if scaled else vals * math.exp(self.log_scale)
            return out
        rows = fam.values_at(s)
        with _ctx(fam.dps):
            scale = gmpy2.exp(mpfr(self.log_scale)) if scaled else mpfr(1)
            e = mpfr(self.eps)
            vals = [e * sum(a * r for a, r in zip(self.modal_weights, row)) / scale for row in rows]
        out[inside] = [float(v) for v in vals]
        return out

    def _interpolate(self, s: np.ndarray) -> np.ndarray:
        fam = self.family
        edges = np.asarray(fam.panel_edges)
        p = fam.panel_nodes
        nodes = fam.t_grid.reshape(-1, p)
        vals = self.node_values.reshape(-1, p)
        out = np.zeros(s.shape)
        panel = np.searchsorted(edges, s, side="right") - 1
        for i in np.unique(panel):
            if i < 0 or i >= nodes.shape[0]:
                continue
            sel = panel == i
            x = nodes[i]
            w = _barycentric_weights(x)
            d = s[sel][:, None] - x[None, :]
            hit = d == 0
            d[hit] = 1.0
            ratio = w / d
            est = (ratio @ vals[i]) / ratio.sum(axis=1)
            rows, cols = np.nonzero(hit)
            est[rows] = vals[i][cols]
            out[sel] = est
        return out

    @property
    def norm_sq(self) -> float:
        return math.exp(self.log_norm_sq) if self.log_norm_sq > -745 else 0.0

    @property
    def log_bound_constant(self) -> float:
        return self.log_norm_sq - self.log_predicted_bound

    def h(self) -> np.ndarray:
        """Control values in double precision; may underflow to zero."""
        return self.h_values * math.exp(self.log_scale) if self.log_scale > -745 else np.zeros_like(self.h_values)

    def to_columns(self) -> dict:
        return {"t": self.t_grid, "h_mantissa": self.h_values, "log_scale": np.full(self.t_grid.size, self.log_scale)}


def synthesize_control(spec: Spectrum, field: VectorField, T: float, modal_state, m: float = 0.0,
                       N_trunc: int = 15, eps: float | None = None, delta: float = 0.5, T1: float | None = None,
                       target: float = 1e-6, dps: int = DPS, panel_nodes: int | None = None) -> ControlSignal:
    """Null control of the conjugated problem from modal data ``<v0, phi_k>``.

    The control is zero on ``[0, mT]``, where the modes decay freely, and is
    a moment solution on ``[mT, T]`` built from the first ``N_trunc`` modes.
    Afterwards the first ``min(2 N_trunc, len(spec))`` final modes are
    recomputed from the sampled control; ``modal_residual`` is their norm
    relative to the uncontrolled final modes.
    """
    eps = spec.eps if eps is None else float(eps)
    xs = spec.disc.x
    if np.max(np.abs(field.qf(xs))) > 1e-10:
        raise HypothesisViolation("control synthesis assumes q_f = 0 (b = f''/2)")
    if not 0.0 <= m < 1.0:
        raise InvalidParameter(f"phase split m must lie in [0, 1), got {m}")
    if not T > 0:
        raise InvalidParameter("horizon must be positive")
    if N_trunc > len(spec):
        raise InsufficientFamily(f"family of {N_trunc} modes requested, spectrum has {len(spec)}")
    state = np.asarray(modal_state, dtype=float)
    n_check = min(2 * N_trunc, len(spec))
    if state.size < n_check:
        raise InvalidParameter(f"need {n_check} modal coefficients, got {state.size}")
    lam = spec.lambdas
    # modes left to free decay must already be negligible against the slowest one
    kept = np.abs(state[:N_trunc]) * np.exp(-(lam[:N_trunc] - lam[0]) * T / eps)
    dropped = np.abs(state[N_trunc:n_check]) * np.exp(-(lam[N_trunc:n_check] - lam[0]) * T / eps)
    if dropped.size and np.linalg.norm(dropped) > target * max(np.linalg.norm(kept), 1e-300):
        raise InsufficientFamily(f"modes beyond {N_trunc} are not dissipated below {target:g}; enlarge the family")
    if T1 is None:
        T1 = classical_table(_as_potential(field)).T1
    S = 0.5 * (T1 + delta)
    tau = (1.0 - m) * T
    family = exp_biorthogonal(np.sqrt(lam[:N_trunc]) / eps, eps * tau, S, N_trunc=N_trunc, dps=dps,
                              panel_nodes=panel_nodes)
    f0 = float(field.f(0.0))
    with _ctx(family.dps):
        e = mpfr(eps)
        mT, tau_g = mpfr(m * T), mpfr(tau)
        gate = gmpy2.exp(-mpfr(f0) / (2 * e))
        flux = [_signed_flux(spec, k) for k in range(n_check)]
        lam_g = [mpfr(float(x)) for x in lam[:n_check]]
        mid = [mpfr(float(state[k])) * gmpy2.exp(-lam_g[k] * mT / e) for k in range(n_check)]
        free = [mid[k] * gmpy2.exp(-lam_g[k] * tau_g / e) for k in range(n_check)]
        coef = np.array([-free[j] / (flux[j] * gate) for j in range(N_trunc)], dtype=object)
        Z = coef.dot(np.array(family.u, dtype=object))
        W = np.array(family.weights, dtype=object)
        s_nodes = family.nodes
        norm_sq = e * (W * Z * Z).sum()
        WZ = W * Z
        final = []
        for k in range(n_check):
            b2 = lam_g[k] / (e * e)
            pushed = WZ.dot(np.array([gmpy2.exp(-b2 * s) for s in s_nodes], dtype=object))
            final.append(free[k] + flux[k] * gate * pushed)
        base = gmpy2.sqrt(sum(x * x for x in free))
        residual = float(gmpy2.sqrt(sum(x * x for x in final)) / base) if base > 0 else 0.0
        weighted = sum(lam_g[k] * e * e / (flux[k] * flux[k]) * mid[k] * mid[k] for k in range(n_check))
        log_pred = (-6 * math.log(eps) - 3 * math.log(tau) + (4 * T1 ** 2 + delta) / (eps * tau) + f0 / eps
                    + (float(gmpy2.log(weighted)) if weighted > 0 else -math.inf))
        h = [e * z for z in Z]
        peak = max((abs(x) for x in h), default=mpfr(0))
        log_scale = float(gmpy2.log(peak)) if peak > 0 else 0.0
        scale = gmpy2.exp(mpfr(log_scale))
        times = [float(mT + tau_g - s / e) for s in s_nodes]
        values = [float(x / scale) for x in h]
        qw = [float(wi / e) for wi in family.weights]
        log_norm = float(gmpy2.log(norm_sq)) if norm_sq > 0 else -math.inf
    order = np.argsort(times)
    t_grid = np.concatenate(([0.0, m * T], np.asarray(times)[order], [T]))
    h_vals = np.concatenate(([0.0, 0.0], np.asarray(values)[order], [0.0]))
    weights = np.concatenate(([0.0, 0.0], np.asarray(qw)[order], [0.0]))
    if m == 0.0:
        t_grid, h_vals, weights = t_grid[1:], h_vals[1:], weights[1:]
    return ControlSignal(t_grid, h_vals, log_scale, weights, float(m), float(T), log_norm, log_pred, residual,
                         n_check, family, tuple(coef), eps, np.asarray(values))


def dissipation_sum(spec: Spectrum, theta: float, m: float, T: float) -> tuple[float, float]:
    """``A = sum_n exp(-2 lambda_n theta m T / eps)`` and the constant ``A theta m T``."""
    A = float(np.exp(-2.0 * spec.lambdas * theta * m * T / spec.eps).sum())
    return A, A * theta * m * T


def observation_weight(spec: Spectrum, field: VectorField, theta: float, m: float, T: float) -> float:
    """Log of ``sup_n lambda_n / |eps phi_n'(0)|^2 exp(-2 lambda_n (1-theta) m T / eps) ||exp(-f/2eps) phi_n||^2``."""
    eps, h = spec.eps, spec.disc.h
    tilt = -field.f(spec.disc.x) / eps
    out = -math.inf
    for k in range(len(spec)):
        lam = float(spec.lambdas[k])
        log_norm = float(logsumexp(tilt + 2.0 * spec.log_abs[k])) + math.log(h)
        val = math.log(lam) - 2.0 * spec.log_dphi0[k] - 2.0 * lam * (1.0 - theta) * m * T / eps + log_norm
        out = max(out, val)
    return out


def observation_exponent(obj, theta: float, m: float, T: float, n: int = 64) -> float:
    """``sup_E d_E(0) - E (1-theta) m T - min W_E`` over ``E`` between the well bottom and the barrier top."""
    pot = _as_potential(obj)
    best = -math.inf
    for E in np.linspace(pot.E0, pot.Vmax, n):
        prof = weight_profiles(pot, float(E))
        best = max(best, prof.d0 - float(E) * (1.0 - theta) * m * T - prof.minW)
    return best
