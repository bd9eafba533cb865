"""Reference values computed without the package.

Every number here comes from a route the package does not use: mpmath
tanh-sinh quadrature of the defining integrals, closed-form derivatives of
the example family, Chebyshev collocation for eigenvalues, mpmath ODE
integration for characteristics and mpmath numerical differentiation for
the flat boundary datum.  Run ``python3 tests/oracles/build_oracle.py`` to
regenerate ``frozen.json``; the tests only read the frozen file.
"""

import json
import math
from pathlib import Path

import mpmath as mp
import numpy as np

OUT = Path(__file__).with_name("frozen.json")
mp.mp.dps = 40


# -- example family: speed sqrt(a^2 (x - L/2)^2 + M^2) ----------------------

def example_V(M, a, L):
    c = mp.mpf(L) / 2
    return lambda x: (a * a * (x - c) ** 2 + M * M) / 4


def allowed_interval(M, a, L, E):
    half = mp.sqrt(max(4 * E - M * M, 0)) / a
    c = mp.mpf(L) / 2
    return max(c - half, 0), min(c + half, L)


def phase_volume(M, a, L, E):
    V = example_V(M, a, L)
    lo, hi = allowed_interval(M, a, L, E)
    return mp.quad(lambda s: mp.sqrt(max(E - V(s), 0)), [lo, mp.mpf(L) / 2, hi])


def period(M, a, L, E):
    V = example_V(M, a, L)
    lo, hi = allowed_interval(M, a, L, E)
    return 2 * mp.sqrt(E) * mp.quad(lambda s: 1 / mp.sqrt(abs(E - V(s))), [lo, mp.mpf(L) / 2, hi])


def phase_derivative(M, a, L, x):
    # closed form of Phi'(x) for the example family
    top = (a * a * L * L / 4 + M * M) / 4
    if x <= top:
        return mp.pi / a
    return 2 / a * mp.asin(a * L / (2 * mp.sqrt(4 * x - M * M)))


def interaction(M, a, L, E, B):
    E0 = mp.mpf(M) ** 2 / 4
    top = (a * a * L * L / 4 + M * M) / 4
    c = E + 2 * B

    def g(x):
        if x == E:
            return mp.mpf(0)  # tanh-sinh nodes can round onto the log singularity
        return mp.log(abs((x + c) / (x - E))) * phase_derivative(M, a, L, x)

    # the log singularity at x = E must be a breakpoint of whichever piece holds it
    pts = sorted({E0, top} | ({E} if E0 < E < top else set()))
    total = mp.quad(g, pts)
    far = max(top, E) + 1
    total += mp.quad(g, sorted({top, far} | ({E} if E > top else set())) + [mp.inf])
    return total / mp.pi


def agmon_ground(M, a, L, x):
    V = example_V(M, a, L)
    E0 = mp.mpf(M) ** 2 / 4
    c = mp.mpf(L) / 2
    return abs(mp.quad(lambda s: mp.sqrt(V(s) - E0), [c, x]))


# -- Gamma_0 and kappa_0 ------------------------------------------------------

def gamma0_quad(alpha, beta):
    def g(y):
        return mp.log(abs((y * y + alpha * alpha) / (y * y - beta * beta)))

    pts = [1, beta, beta + 1, mp.inf] if beta > 1 else [1, 2, mp.inf]
    return mp.quad(g, pts)


def gamma0_closed(alpha, beta):
    head = mp.pi * alpha - mp.log(1 + alpha ** 2) - 2 * alpha * mp.atan(1 / alpha)
    if beta == 1:
        return head + 2 * mp.log(2)
    return head + mp.log(beta ** 2 - 1) + beta * mp.log((beta + 1) / (beta - 1))


def kappa0():
    ratio = lambda al, be: gamma0_closed(al, be) / (al * al + be * be)
    best = (mp.mpf(-1), None, None)
    for al in np.logspace(0, 2, 81):
        for be in np.logspace(0, math.log10(al), 41) if al > 1 else [1.0]:
            v = ratio(mp.mpf(al), mp.mpf(min(be, al)))
            if v > best[0]:
                best = (v, mp.mpf(al), mp.mpf(min(be, al)))

    def inner(al):
        # golden section in beta on [1, al]
        lo, hi = mp.mpf(1), al
        gr = (mp.sqrt(5) - 1) / 2
        for _ in range(90):
            m1, m2 = hi - gr * (hi - lo), lo + gr * (hi - lo)
            if ratio(al, m1) < ratio(al, m2):
                lo = m1
            else:
                hi = m2
        be = (lo + hi) / 2
        return max(ratio(al, be), ratio(al, mp.mpf(1))), be

    lo, hi = best[1] / 2 if best[1] > 2 else mp.mpf(1), best[1] * 2
    gr = (mp.sqrt(5) - 1) / 2
    for _ in range(90):
        m1, m2 = hi - gr * (hi - lo), lo + gr * (hi - lo)
        if inner(m1)[0] < inner(m2)[0]:
            lo = m1
        else:
            hi = m2
    al = (lo + hi) / 2
    val, be = inner(al)
    return val / (2 * mp.pi * mp.sqrt(2)), al, be


# -- eigenvalues by Chebyshev collocation ------------------------------------

def cheb(N):
    x = np.cos(np.pi * np.arange(N + 1) / N)
    c = np.hstack([2, np.ones(N - 1), 2]) * (-1) ** np.arange(N + 1)
    X = np.tile(x, (N + 1, 1)).T
    dX = X - X.T
    D = np.outer(c, 1 / c) / (dX + np.eye(N + 1))
    D -= np.diag(D.sum(axis=1))
    return D, x


def collocation_eigenvalues(M, a, L, eps, N, count):
    D, z = cheb(N)
    x = (z + 1) * L / 2
    D2 = (D @ D)[1:-1, 1:-1] * (2 / L) ** 2
    V = (a * a * (x[1:-1] - L / 2) ** 2 + M * M) / 4
    A = -eps * eps * D2 + np.diag(V)
    lam = np.sort(np.linalg.eigvals(A).real)
    return lam[:count]


def eigenvalues(M, a, L, eps, count):
    lo = collocation_eigenvalues(M, a, L, eps, 260, count)
    hi = collocation_eigenvalues(M, a, L, eps, 340, count)
    assert np.max(np.abs(lo - hi)) < 1e-9, np.max(np.abs(lo - hi))
    return hi


# -- flat boundary datum and kernel series -----------------------------------

def flat_derivatives(alpha, T, t, count):
    a = lambda s: mp.exp(-alpha * (1 / s + 1 / (T - s)))
    return [mp.diff(a, t, j) for j in range(count)]


def kernel_series(alpha, T, t, s, terms):
    with mp.workdps(120):
        a = lambda r: mp.exp(-alpha * (1 / r + 1 / (T - r)))
        coef = mp.taylor(a, mp.mpf(t), terms)
        total = mp.mpf(0)
        for j in range(terms + 1):
            deriv = coef[j] * mp.factorial(j)
            total += (-1) ** j * deriv * mp.mpf(s) ** (2 * j + 1) / mp.factorial(2 * j + 1)
        return total


def log_normalizer(alpha, T, beta):
    g = lambda t: -alpha / t - alpha / (T - t) - beta * beta * t
    # the integrand peaks where alpha/t^2 - alpha/(T-t)^2 = beta^2
    peak = mp.findroot(lambda t: alpha / t ** 2 - alpha / (T - t) ** 2 - beta ** 2, (T * mp.mpf(10) ** -6, T / 2),
                       solver="anderson")
    shift = g(peak)
    pts = [0, peak / 4, peak / 2, peak, (peak + T) / 2, T]
    val = mp.quad(lambda t: mp.exp(g(t) - shift), pts)
    return mp.log(val) + shift - mp.log(beta)


# -- characteristics ----------------------------------------------------------

def flow_position(M, a, L, x, t):
    c = mp.mpf(L) / 2
    sol = mp.odefun(lambda _, y: mp.sqrt(a * a * (y - c) ** 2 + M * M), 0, mp.mpf(x))
    return sol(mp.mpf(t))


def main():
    out = {}
    M, a, L = 1, 2, 2
    out["example_speed_at_L"] = float(-mp.sqrt(a * a * (L / 2) ** 2 + M * M))
    out["turning_points_E_half"] = [float(v) for v in allowed_interval(M, a, L, mp.mpf("0.5"))]
    out["agmon_ground_half"] = float(agmon_ground(M, a, L, mp.mpf("1.5")))
    energies = ["0.3", "0.5", "1.0", "1.25", "3.0", "20.0"]
    out["phase_volume"] = {e: float(phase_volume(M, a, L, mp.mpf(e))) for e in energies}
    out["period"] = {e: float(period(M, a, L, mp.mpf(e))) for e in energies}
    out["T1"] = float(mp.pi * mp.sqrt(5))

    out["interaction"] = {}
    for (Mi, ai, Li, E, B) in [(1, "0.001", 2, "0.25", "0"), (1, "0.001", 2, "0.25", "0.25"),
                               (1, "0.001", 2, "0.25", "1"), (1, "50", 2, "0.25", "0"),
                               (1, "2", 2, "0.25", "0"), (1, "2", 2, "0.6", "0.5"), (1, "2", 2, "2.0", "0")]:
        key = f"M={Mi},a={ai},L={Li},E={E},B={B}"
        out["interaction"][key] = float(interaction(mp.mpf(Mi), mp.mpf(ai), mp.mpf(Li), mp.mpf(E), mp.mpf(B)))

    rng = np.random.default_rng(20261016)
    pairs = [(1.0, 1.0), (2.0, 1.0), (3.0, 3.0), (1.5, 1.5), (10.0, 1.0), (10.0, 9.5)]
    while len(pairs) < 30:
        al = float(np.exp(rng.uniform(0, math.log(30))))
        be = float(1 + (al - 1) * rng.uniform(0, 1))
        pairs.append((round(al, 6), round(be, 6)))
    out["gamma0"] = [[al, be, float(gamma0_quad(mp.mpf(al), mp.mpf(be)))] for al, be in pairs]
    k0, al, be = kappa0()
    out["kappa0"] = {"value": float(k0), "alpha": float(al), "beta": float(be)}

    out["eigenvalues"] = {str(eps): [float(v) for v in eigenvalues(M, a, L, eps, 12)] for eps in (0.05, 0.02)}

    with mp.workdps(60):
        out["flat_derivatives"] = {"alpha": 2.0, "T": 1.0, "t": 1 / 3,
                                   "values": [float(v) for v in flat_derivatives(2, 1, mp.mpf(1) / 3, 9)]}
    out["kernel"] = [[2.0, 1.0, t, s, float(kernel_series(2, 1, t, s, 60))]
                     for t, s in ((1 / 3, 0.5), (0.5, 1.0), (0.8, -1.2))]
    out["log_normalizer"] = [[30.0, 1.0, b, float(log_normalizer(mp.mpf(30), mp.mpf(1), mp.mpf(b)))]
                             for b in (1.0, 5.0, 20.0, 60.0)]
    out["flow_plus"] = [[x, t, float(flow_position(1, 2, 2, x, t))] for x, t in ((0.3, 0.2), (0.3, 0.5), (1.0, 0.4))]
    OUT.write_text(json.dumps(out, indent=1, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
