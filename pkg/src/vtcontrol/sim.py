"""Time-domain solvers for the viscous problems, duality checks and Gramian costs.

Both conjugated problems share the symmetric matrix of ``spectral.discretize``,
so with Crank-Nicolson the control and observation solves are exact
transposes and the duality identity holds to round-off once the boundary
integral uses the product-midpoint rule of the scheme.  The direct
(non-conjugated) finite-difference routes exist only as cross-checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import mpmath as mp
import numpy as np
from scipy.linalg import eigvalsh_tridiagonal, lapack
from scipy.special import logsumexp
from scipy.stats import linregress

from .errors import FitUnreliable, InconsistencyFlag, InvalidParameter, ResolutionError, SolverFailure
from .problem import VectorField
from .spectral import OperatorDiscretization, Spectrum, default_points, discretize, eigenpairs

__all__ = [
    "Trajectory",
    "CostEstimate",
    "CostScan",
    "ExponentFit",
    "solve_conjugated_heat",
    "solve_viscous_transport",
    "solve_observation",
    "conjugation_mismatch",
    "duality_residual",
    "gramian_cost",
    "cost_scan",
    "exponent_fit",
    "random_smooth",
    "simulate_control",
    "ControlCheck",
    "DEFAULT_EPS_GRID",
]

STEPS_PER_EPS = 50
DEFAULT_EPS_GRID = (0.08, 0.06, 0.045, 0.034, 0.025)
CONVERGENCE_TOL = 0.05
MISMATCH_TOL = 1e-5
CROSS_CHECK_PER_EPS = 160
HEAD_DECAY = 100.0


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Snapshots of one of the four state variables on ``[0, L]`` (walls included).

    ``flux`` holds ``eps * d/dx`` of the state at ``x = 0`` on every time
    step, ``boundary`` the Dirichlet value there.  For the homogeneous
    observation problems the flux is the one-sided difference the discrete
    duality pairs with; it is second order because the state's second
    derivative vanishes at a homogeneous wall.
    """

    t: np.ndarray
    x: np.ndarray
    states: np.ndarray  # (len(t_snap), len(x))
    t_snap: np.ndarray
    variable: str  # "y", "u", "zeta" or "v"
    flux: np.ndarray
    boundary: np.ndarray
    eps: float
    field: VectorField = dc_field(repr=False)
    route: str = "conjugated"

    @property
    def initial(self) -> np.ndarray:
        return self.states[0]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    @property
    def T(self) -> float:
        return float(self.t[-1])

    def conjugation_weight(self) -> np.ndarray:
        """Factor turning this variable into its conjugated partner (``v`` for ``y``, ``zeta`` for ``u``)."""
        f = self.field.f(self.x) / (2.0 * self.eps)
        return {"y": np.exp(-f), "u": np.exp(f), "v": np.exp(f), "zeta": np.exp(-f)}[self.variable]

    def to_columns(self) -> dict:
        tt, xx = np.meshgrid(self.t_snap, self.x, indexing="ij")
        return {"t": tt.ravel(), "x": xx.ravel(), self.variable: self.states.ravel()}


class _CrankNicolson:
    """``w' = L w + r(t) e_1`` on interior nodes with a tridiagonal ``L``."""

    def __init__(self, lower, diag, upper, k: float):
        self.lower, self.diag, self.upper, self.k = lower, diag, upper, k
        dl, d, du, du2, ipiv, info = lapack.dgttrf(-0.5 * k * lower, 1.0 - 0.5 * k * diag, -0.5 * k * upper)
        if info != 0:
            raise SolverFailure(f"tridiagonal factorization failed (info = {info})")
        self._lu = (dl, d, du, du2, ipiv)

    def step(self, w: np.ndarray, r_now: float, r_next: float, row: float) -> np.ndarray:
        half = 0.5 * self.k
        rhs = w + half * (self.diag * w)
        rhs[1:] += half * self.lower * w[:-1]
        rhs[:-1] += half * self.upper * w[1:]
        rhs[0] += half * row * (r_now + r_next)
        out, info = lapack.dgttrs(*self._lu, rhs)
        if info != 0:
            raise SolverFailure(f"tridiagonal solve failed (info = {info})")
        return out


def _time_grid(T: float, eps: float, dt: float | None) -> np.ndarray:
    if not T > 0:
        raise InvalidParameter(f"horizon must be positive, got {T}")
    dt = eps / STEPS_PER_EPS if dt is None else float(dt)
    steps = max(1, int(math.ceil(T / dt - 1e-9)))
    return np.linspace(0.0, T, steps + 1)


def _sample(data, points: np.ndarray, name: str) -> np.ndarray:
    if data is None:
        return np.zeros(points.size)
    if callable(data):
        return np.asarray(data(points), dtype=float) * np.ones(points.size)
    arr = np.asarray(data, dtype=float)
    if arr.shape != points.shape:
        raise InvalidParameter(f"{name} has {arr.size} samples, the grid has {points.size}")
    return arr


def _run(stepper: _CrankNicolson, w0: np.ndarray, bvals: np.ndarray, row: float, stride: int):
    snaps = [w0.copy()]
    firsts = np.empty((bvals.size, 2))
    firsts[0] = w0[:2]
    w = w0
    for i in range(bvals.size - 1):
        w = stepper.step(w, bvals[i], bvals[i + 1], row)
        firsts[i + 1] = w[:2]
        if (i + 1) % stride == 0 or i + 1 == bvals.size - 1:
            snaps.append(w.copy())
    return np.array(snaps), firsts


def _snap_times(t: np.ndarray, stride: int) -> np.ndarray:
    idx = list(range(0, t.size, stride))
    if idx[-1] != t.size - 1:
        idx.append(t.size - 1)
    return t[idx]


def _with_walls(interior: np.ndarray, left: np.ndarray) -> np.ndarray:
    out = np.zeros((interior.shape[0], interior.shape[1] + 2))
    out[:, 0] = left
    out[:, 1:-1] = interior
    return out


def solve_conjugated_heat(disc: OperatorDiscretization, T: float, boundary=None, initial=None,
                          dt: float | None = None, stride: int = 1, variable: str = "v") -> Trajectory:
    """``eps w_t + P w = 0`` with ``w(t, 0)`` given and ``w(t, L) = 0``.

    ``boundary`` is a callable of time or an array on the step grid;
    ``initial`` a callable of ``x`` or an array on the interior nodes.
    """
    if variable not in ("v", "zeta"):
        raise InvalidParameter("the conjugated variables are 'v' and 'zeta'")
    eps, h = disc.eps, disc.h
    t = _time_grid(T, eps, dt)
    g = _sample(boundary, t, "boundary")
    w0 = _sample(initial, disc.x, "initial")
    lower = np.full(disc.n - 1, -disc.offdiag / eps)
    stepper = _CrankNicolson(lower, -disc.diag / eps, lower, t[1] - t[0])
    interior, firsts = _run(stepper, w0, g, eps / (h * h), stride)
    t_snap = _snap_times(t, stride)
    left = np.interp(t_snap, t, g)
    states = _with_walls(interior, left)
    if np.any(g != 0.0):
        flux = eps * (-3.0 * g + 4.0 * firsts[:, 0] - firsts[:, 1]) / (2.0 * h)
    else:
        flux = eps * firsts[:, 0] / h
    x = np.concatenate(([0.0], disc.x, [disc.L]))
    return Trajectory(t, x, states, t_snap, variable, flux, g, eps, disc.field)


def _direct_operator(field: VectorField, eps: float, x: np.ndarray, h: float, observation: bool):
    a = field.fp(x)
    diff = eps / (h * h)
    if observation:
        # u_t = eps u_xx + f' u_x + q u
        return diff - a / (2 * h), -2.0 * diff + field.q(x), diff + a / (2 * h)
    # y_t = eps y_xx - f' y_x - b y
    return diff + a / (2 * h), -2.0 * diff - field.b(x), diff - a / (2 * h)


def _direct_solve(field, eps, T, boundary, initial, n, dt, stride, observation):
    n = default_points(field.L, eps) if n is None else int(n)
    h = field.L / (n + 1)
    x = h * np.arange(1, n + 1)
    t = _time_grid(T, eps, dt)
    g = _sample(boundary, t, "boundary")
    w0 = _sample(initial, x, "initial")
    lo, di, up = _direct_operator(field, eps, x, h, observation)
    stepper = _CrankNicolson(lo[1:], di, up[:-1], t[1] - t[0])
    interior, firsts = _run(stepper, w0, g, float(lo[0]), stride)
    t_snap = _snap_times(t, stride)
    states = _with_walls(interior, np.interp(t_snap, t, g))
    flux = eps * (-3.0 * g + 4.0 * firsts[:, 0] - firsts[:, 1]) / (2.0 * h)
    return t, np.concatenate(([0.0], x, [field.L])), states, t_snap, flux, g


def solve_viscous_transport(field: VectorField, eps: float, T: float, h=None, y0=None, route: str = "conjugated",
                            n: int | None = None, dt: float | None = None, stride: int = 1) -> Trajectory:
    """``y_t + f' y_x + b y - eps y_xx = 0``, ``y(t, 0) = h(t)``, ``y(t, L) = 0``, ``y(0) = y0``.

    The conjugated route solves for ``v = exp(-f/2eps) y`` and maps back;
    the direct route discretizes the transport form with central
    differences.
    """
    if route == "direct":
        t, x, states, t_snap, flux, g = _direct_solve(field, eps, T, h, y0, n, dt, stride, observation=False)
        return Trajectory(t, x, states, t_snap, "y", flux, g, eps, field, "direct")
    if route != "conjugated":
        raise InvalidParameter(f"unknown route {route!r}")
    disc = discretize(field, eps, n)
    t = _time_grid(T, eps, dt)
    hv = _sample(h, t, "h")
    gate = math.exp(-float(field.f(0.0)) / (2.0 * eps))
    y0v = _sample(y0, disc.x, "y0")
    v0 = np.exp(-field.f(disc.x) / (2.0 * eps)) * y0v
    traj = solve_conjugated_heat(disc, T, gate * hv, v0, dt, stride, "v")
    lift = np.exp(field.f(traj.x) / (2.0 * eps))
    states = traj.states * lift
    states[:, 0] = np.interp(traj.t_snap, t, hv)
    # y = exp(f/2eps) v at the wall: eps y_x = exp(f0/2eps) (eps v_x + f'(0) v / 2)
    flux = (traj.flux + 0.5 * float(field.fp(0.0)) * traj.boundary) / gate
    return Trajectory(t, traj.x, states, traj.t_snap, "y", flux, hv, eps, field, "conjugated")


def solve_observation(field: VectorField, eps: float, T: float, u0=None, route: str = "conjugated",
                      n: int | None = None, dt: float | None = None, stride: int = 1) -> Trajectory:
    """``u_t = eps u_xx + f' u_x + q u`` with homogeneous Dirichlet walls."""
    if route == "direct":
        t, x, states, t_snap, flux, g = _direct_solve(field, eps, T, None, u0, n, dt, stride, observation=True)
        return Trajectory(t, x, states, t_snap, "u", flux, g, eps, field, "direct")
    if route != "conjugated":
        raise InvalidParameter(f"unknown route {route!r}")
    disc = discretize(field, eps, n)
    u0v = _sample(u0, disc.x, "u0")
    zeta0 = np.exp(field.f(disc.x) / (2.0 * eps)) * u0v
    traj = solve_conjugated_heat(disc, T, None, zeta0, dt, stride, "zeta")
    states = traj.states * np.exp(-field.f(traj.x) / (2.0 * eps))
    flux = traj.flux * math.exp(-float(field.f(0.0)) / (2.0 * eps))
    return Trajectory(traj.t, traj.x, states, traj.t_snap, "u", flux, traj.boundary, eps, field, "conjugated")


def conjugation_mismatch(field: VectorField, eps: float, T: float, h=None, y0=None, n: int | None = None,
                         dt: float | None = None, tol: float | None = MISMATCH_TOL) -> float:
    """Relative sup-distance between the direct and the conjugated solves of the control problem.

    Raises ``InconsistencyFlag`` beyond ``tol`` (pass ``None`` to only measure).
    The two discretizations differ at second order in the mesh, so the
    default grid is four times finer than the solvers' own default.
    """
    if n is None:
        n = default_points(field.L, eps, CROSS_CHECK_PER_EPS)
    a = solve_viscous_transport(field, eps, T, h, y0, "conjugated", n, dt)
    b = solve_viscous_transport(field, eps, T, h, y0, "direct", n, dt)
    scale = max(np.abs(a.states).max(), np.abs(b.states).max())
    gap = float(np.abs(a.states - b.states).max() / scale) if scale > 0 else 0.0
    if tol is not None and gap > tol:
        raise InconsistencyFlag(f"direct and conjugated solves differ by {gap:.3g} (relative)")
    return gap


def _inner(x: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    # walls carry zero weight: one of the factors vanishes there
    h = x[1] - x[0]
    return float(h * np.dot(a[1:-1], b[1:-1]))


def duality_residual(u_traj: Trajectory, y_traj: Trajectory, h=None) -> float:
    """``|(u(T), y0) - (u0, y(T)) + int eps u_x(t, 0) h(T - t) dt|`` over the largest of the three terms.

    The boundary integral uses the product-midpoint rule, the quadrature
    Crank-Nicolson pairs with.
    """
    if u_traj.variable != "u" or y_traj.variable != "y":
        raise InvalidParameter("expected an observation (u) and a control (y) trajectory")
    if u_traj.t.shape != y_traj.t.shape or not np.allclose(u_traj.t, y_traj.t, rtol=0, atol=1e-12):
        raise InvalidParameter("time grids differ")
    if u_traj.x.shape != y_traj.x.shape or not np.allclose(u_traj.x, y_traj.x, rtol=0, atol=1e-12):
        raise InvalidParameter("space grids differ")
    hv = y_traj.boundary if h is None else _sample(h, y_traj.t, "h")
    x = u_traj.x
    end = _inner(x, u_traj.final, y_traj.initial)
    start = _inner(x, u_traj.initial, y_traj.final)
    a = u_traj.flux
    b = hv[::-1]
    k = np.diff(u_traj.t)
    boundary = float(np.sum(k * 0.25 * (a[:-1] + a[1:]) * (b[:-1] + b[1:])))
    scale = max(abs(end), abs(start), abs(boundary))
    return abs(end - start + boundary) / scale if scale > 0 else 0.0


def random_smooth(rng: np.random.Generator, length: float, modes: int = 6):
    """Random combination of ``sin(k pi s / length)`` with ``1/k^2`` decay; zero at both ends."""
    coef = rng.standard_normal(modes) / np.arange(1, modes + 1) ** 2

    def fn(s):
        s = np.asarray(s, dtype=float)
        k = np.arange(1, modes + 1)
        return np.sin(np.multiply.outer(s, k) * math.pi / length) @ coef

    return fn


@dataclass(frozen=True)
class ControlCheck:
    """Time-domain replay of a synthesized control over its active window."""

    residual: float  # final modal norm over the uncontrolled one, first n_check modes
    log10_amplification: float
    dt: float
    n_check: int

    @property
    def resolvable(self) -> bool:
        # double-precision stepping cannot see below round-off times the cancellation
        return self.log10_amplification < 8.0


def simulate_control(spec: Spectrum, field: VectorField, control, modal_state, steps_per_eps: int = 800,
                     n_check: int | None = None) -> ControlCheck:
    """Replay ``control`` with Crank-Nicolson on the spectrum's own grid.

    The state at the phase split is rebuilt exactly from the modes and the
    run is rescaled by the control's ``log_scale``.  ``log10_amplification``
    measures how much the control's contributions to the slowest modes
    cancel; the residual is meaningful only when it is modest.
    """
    eps = spec.eps
    n_check = control.n_checked if n_check is None else int(n_check)
    state = np.asarray(modal_state, dtype=float)[:n_check]
    lam = spec.lambdas[:n_check]
    mT = control.phase_split * control.T
    tau = control.T - mT
    steps = max(1, int(math.ceil(tau * steps_per_eps / eps)))
    t = np.linspace(0.0, tau, steps + 1)
    gate = math.exp(-float(field.f(0.0)) / (2.0 * eps))
    hv = gate * control.evaluate(t + mT, scaled=True)
    v0 = (state * np.exp(-lam * mT / eps - control.log_scale)) @ spec.eigfuns[:n_check]
    dt = tau / steps
    driven = solve_conjugated_heat(spec.disc, tau, hv, v0, dt=dt, stride=steps)
    free = solve_conjugated_heat(spec.disc, tau, None, v0, dt=dt, stride=steps)
    proj = spec.eigfuns[:n_check] * spec.disc.h
    pd, pf = proj @ driven.final[1:-1], proj @ free.final[1:-1]
    base = float(np.linalg.norm(pf))
    residual = float(np.linalg.norm(pd)) / base if base > 0 else 0.0
    # size of each mode's pushed contribution before cancellation, against the free final norm
    fam = control.family
    s = fam.t_grid
    w = np.array([float(x) for x in fam.weights]) / eps
    mag = np.log(np.abs(control.node_values) + 1e-300) + np.log(w)
    log_free = float(logsumexp(2.0 * (np.log(np.abs(state) + 1e-300) - lam * control.T / eps))) / 2.0
    pushes = [float(logsumexp(mag - lam[k] * s / eps ** 2)) + control.log_scale + spec.log_wall_coupling[k]
              + math.log(gate) for k in range(n_check)]
    amp = (max(pushes) - log_free) / math.log(10.0)
    return ControlCheck(residual, float(amp), dt, n_check)


# -- observability cost ----------------------------------------------------

@dataclass(frozen=True)
class CostEstimate:
    log_C0: float
    K: int
    log_C0_half: float
    change: float  # |C0(K) / C0(K/2) - 1|
    eps: float
    T: float

    @property
    def converged(self) -> bool:
        return self.change < CONVERGENCE_TOL


def _signed_logs(spec: Spectrum, K: int) -> tuple[np.ndarray, np.ndarray]:
    """Signs of ``phi_k`` valid in the tails, where the stored vectors underflow."""
    vecs = spec.eigfuns[:K]
    signs = np.sign(vecs)
    for k in range(K):
        peak = np.abs(vecs[k]).max()
        live = np.flatnonzero(np.abs(vecs[k]) > 1e-6 * peak)
        signs[k, :live[0]] = signs[k, live[0]]
        signs[k, live[-1] + 1:] = signs[k, live[-1]]
    return signs, spec.log_abs[:K]


def _tail_screening(disc: OperatorDiscretization, lam: np.ndarray, dps: int) -> list:
    """Log Blaschke factors ``sum_k log((l_k - l_i) / (l_k + l_i))`` over every mode above the head.

    Modes past the head decay within a sliver of the horizon, so their
    boundary Gram block is a Cauchy matrix and eliminating them scales the
    head block by these factors exactly.  Eigenvalues up to ``n/4`` are
    computed; beyond that they follow ``c j^2`` and the product is a ratio
    of Gamma functions.
    """
    K, m = len(lam), disc.n // 4
    off = np.full(disc.n - 1, disc.offdiag)
    tail = eigvalsh_tridiagonal(disc.diag, off, select="i", select_range=(K, m - 1)) if m > K else lam[-1:]
    top = m if m > K else K
    with mp.workdps(dps):
        mids = [mp.mpf(v) for v in tail] if m > K else []
        c = mp.mpf(tail[-1]) / top ** 2
        n0 = top + 1
        out = []
        for li in lam:
            li = mp.mpf(li)
            acc = mp.fsum(mp.log((lk - li) / (lk + li)) for lk in mids)
            a = mp.sqrt(li / c)
            acc += mp.re(mp.loggamma(n0 + 1j * a) + mp.loggamma(n0 - 1j * a)) \
                - mp.loggamma(n0 + a) - mp.loggamma(n0 - a)
            out.append(acc)
    return out


def _pencil(spec: Spectrum, field: VectorField, T: float, K: int, dps: int, screen: bool = True):
    eps, x, h = spec.eps, spec.disc.x, spec.disc.h
    lam = spec.lambdas[:K]
    signs, logs = _signed_logs(spec, K)
    tilt = -field.f(x) / eps
    f0 = float(field.f(0.0))
    logr = _tail_screening(spec.disc, lam, dps) if screen else [0] * K
    with mp.workdps(dps):
        M = mp.matrix(K, K)
        G = mp.matrix(K, K)
        for j in range(K):
            for k in range(j, K):
                val, sgn = logsumexp(tilt + logs[j] + logs[k], b=signs[j] * signs[k], return_sign=True)
                decay = -(lam[j] + lam[k]) * T / eps
                M[j, k] = M[k, j] = sgn * mp.exp(mp.mpf(val) + math.log(h) + decay) if sgn else mp.mpf(0)
                # the sum is formed in extended precision so G stays an exact Gram matrix
                s = mp.mpf(lam[j]) + mp.mpf(lam[k])
                g = (mp.sign(spec.dphi0[j]) * mp.sign(spec.dphi0[k])
                     * mp.exp(mp.mpf(spec.log_dphi0[j]) + spec.log_dphi0[k] - f0 / eps)
                     * (mp.exp(logr[j] + logr[k]) - mp.exp(-s * T / eps)) * eps / s)
                G[j, k] = G[k, j] = g
    return M, G


def _top_eigenvalue(M, G, dps: int) -> float:
    with mp.workdps(dps):
        try:
            Lc = mp.cholesky(G)
        except (ValueError, ZeroDivisionError) as exc:
            raise SolverFailure("boundary Gram matrix is not positive definite") from exc
        Li = mp.inverse(Lc)
        A = Li * M * Li.T
        A = (A + A.T) / 2
        top = max(mp.eigsy(A, eigvals_only=True))
        return float(mp.log(top))


def _head_size(spec: Spectrum, T: float) -> int:
    # the first screened mode must be dead long before T for the Cauchy form to hold
    fast = np.flatnonzero(spec.lambdas * T / spec.eps >= HEAD_DECAY)
    k = int(fast[0]) if fast.size else len(spec)
    return max(4, 1 << max(0, k - 1).bit_length())


def gramian_cost(spec: Spectrum, field: VectorField, T: float, K_modes: int | None = None,
                 dps: int | None = None, screen: bool = True) -> CostEstimate:
    """Observability constant from the modal Gramian pencil.

    ``C0^2`` is the top generalized eigenvalue of the final-state Gram
    matrix against the boundary-observation Gram matrix on the first
    ``K_modes`` modes.  Modes past the truncation enter through their exact
    screening factors.  Without ``K_modes`` the head starts where
    ``lambda_K T / eps`` reaches 100 and doubles until ``C0`` moves by less
    than 5% or the spectrum runs out.
    """
    if np.max(np.abs(field.qf(spec.disc.x))) > 1e-10:
        raise InvalidParameter("the Gramian path assumes q_f = 0")
    if not T > 0:
        raise InvalidParameter("horizon must be positive")

    def run(K):
        d = dps or 40 + 3 * K
        M, G = _pencil(spec, field, T, K, d, screen)
        return 0.5 * _top_eigenvalue(M, G, d)

    if K_modes is not None:
        if K_modes > len(spec):
            raise ResolutionError(f"{K_modes} modes requested, spectrum has {len(spec)}")
        half = max(1, K_modes // 2)
        lc = run(K_modes)
        lh = run(half) if half < K_modes else lc
        return CostEstimate(lc, K_modes, lh, abs(math.expm1(lc - lh)), spec.eps, float(T))
    K, prev = min(_head_size(spec, T), len(spec)), None
    while True:
        try:
            lc = run(K)
        except SolverFailure:
            if K == len(spec):
                raise
            K = min(2 * K, len(spec))
            continue
        if prev is not None:
            change = abs(math.expm1(lc - prev))
            if change < CONVERGENCE_TOL or K == len(spec):
                return CostEstimate(lc, K, prev, change, spec.eps, float(T))
        elif K == len(spec):
            return CostEstimate(lc, K, lc, math.inf, spec.eps, float(T))
        prev = lc
        K = min(2 * K, len(spec))


@dataclass(frozen=True)
class ExponentFit:
    rate: float
    band: tuple
    intercept: float
    r2: float
    reliable: bool


@dataclass(frozen=True, eq=False)
class CostScan:
    eps_list: tuple
    log_C0: tuple
    K_used: tuple
    changes: tuple
    T: float
    bounds_ref: dict = dc_field(default_factory=dict)

    def to_columns(self) -> dict:
        return {"eps": np.array(self.eps_list), "log_C0": np.array(self.log_C0),
                "eps_log_C0": np.array(self.eps_list) * np.array(self.log_C0),
                "K": np.array(self.K_used), "T": np.full(len(self.eps_list), self.T)}


def cost_scan(field: VectorField, T: float, eps_list=DEFAULT_EPS_GRID, k_max: int = 48,
              bounds_ref: dict | None = None) -> CostScan:
    """``log C0(T, eps)`` over an ``eps`` grid; one spectrum per ``eps``."""
    logs, Ks, changes = [], [], []
    for eps in eps_list:
        disc = discretize(field, float(eps))
        spec = eigenpairs(disc, min(k_max, disc.n // 4))
        est = gramian_cost(spec, field, T)
        logs.append(est.log_C0)
        Ks.append(est.K)
        changes.append(est.change)
    return CostScan(tuple(float(e) for e in eps_list), tuple(logs), tuple(Ks), tuple(changes), float(T),
                    dict(bounds_ref or {}))


def exponent_fit(scan: CostScan, strict: bool = True) -> ExponentFit:
    """Rate ``r`` in ``log C0 ~ r / eps + c`` by least squares, with a two-sigma band.

    ``r`` is the limit of ``eps log C0``.  An ``R^2`` below 0.8 raises
    ``FitUnreliable`` when ``strict``.
    """
    if len(scan.eps_list) < 4:
        raise InvalidParameter("need at least four eps values")
    inv = 1.0 / np.asarray(scan.eps_list)
    res = linregress(inv, np.asarray(scan.log_C0))
    r2 = float(res.rvalue ** 2)
    band = (float(res.slope - 2 * res.stderr), float(res.slope + 2 * res.stderr))
    fit = ExponentFit(float(res.slope), band, float(res.intercept), r2, r2 >= 0.8)
    if strict and not fit.reliable:
        raise FitUnreliable(f"log C0 is not affine in 1/eps (R^2 = {r2:.3f})")
    return fit
