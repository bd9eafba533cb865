"""Vector fields, the effective potential and the single-well assumption checks.

A field is given through its antiderivative ``f`` on ``[0, L]`` together
with ``f'`` (the transport speed) and ``f''``.  The zeroth order
coefficient ``b`` defaults to ``f''/2`` which makes the operator
correction ``q_f = f''/2 - q`` vanish identically.

The effective potential is ``V = f'^2 / 4``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, minimize_scalar

from .errors import AssumptionViolation, ConfigError, InvalidParameter

__all__ = [
    "VectorField",
    "Potential",
    "ItemCheck",
    "AssumptionReport",
    "make_example_field",
    "tabulated_field",
    "custom_field",
    "field_from_spec",
    "load_field",
    "validate_assumptions",
    "potential",
]

ASSUMPTION_GRID = 4096
CRITICAL_TOL = 1e-10

Array = np.ndarray


@dataclass(frozen=True, eq=False)
class VectorField:
    """Transport field on ``[0, L]`` with ``f(0) = 0``.

    ``half_b`` records that ``b = f''/2``; in that case ``qf`` returns an
    exact zero array instead of a floating point difference.
    """

    L: float
    f: Callable[[Array], Array]
    fp: Callable[[Array], Array]
    fpp: Callable[[Array], Array]
    b: Callable[[Array], Array]
    kind: str
    params: dict = dc_field(default_factory=dict)
    half_b: bool = True
    shift: float = 0.0

    def a(self, x):
        return self.fp(x)

    def q(self, x):
        return self.fpp(x) - self.b(x)

    def qf(self, x):
        x = np.asarray(x, dtype=float)
        if self.half_b:
            return np.zeros_like(x)
        return 0.5 * self.fpp(x) - self.q(x)

    def shifted(self, c: float) -> "VectorField":
        """Same field with ``f`` replaced by ``f + c`` (no renormalization)."""
        f0 = self.f
        return VectorField(
            L=self.L,
            f=lambda x: f0(x) + c,
            fp=self.fp,
            fpp=self.fpp,
            b=self.b,
            kind=self.kind,
            params=dict(self.params),
            half_b=self.half_b,
            shift=self.shift + c,
        )

    def describe(self) -> dict:
        return {"kind": self.kind, "L": self.L, **self.params, "f_shift": self.shift}


def _b_half(fpp):
    return lambda x: 0.5 * fpp(x)


def _example_antiderivative(M: float, a: float):
    if a == 0.0:
        return lambda s: M * np.asarray(s, dtype=float)

    def F(s):
        s = np.asarray(s, dtype=float)
        return 0.5 * s * np.sqrt(a * a * s * s + M * M) + (M * M / (2.0 * a)) * np.arcsinh(a * s / M)

    return F


def make_example_field(M: float, a: float, sign: str | int, L: float = 2.0, b=None) -> VectorField:
    """Field with speed ``±sqrt(a^2 (x - L/2)^2 + M^2)`` on ``[0, L]``.

    The symmetric interval ``(-L/2, L/2)`` is translated by ``L/2``; the
    potential minimum sits at the midpoint.  ``b`` may be a callable to
    override the default ``f''/2``.
    """
    if not M > 0:
        raise InvalidParameter(f"M must be positive, got {M}")
    if not a >= 0:
        raise InvalidParameter(f"a must be nonnegative, got {a}")
    if not L > 0:
        raise InvalidParameter(f"L must be positive, got {L}")
    s = _parse_sign(sign)
    M, a, L = float(M), float(a), float(L)
    c = 0.5 * L
    F = _example_antiderivative(M, a)
    offset = float(F(c))  # F is odd so f(0) = s*(F(-c) + F(c)) = 0

    def f(x):
        return s * (F(np.asarray(x, dtype=float) - c) + offset)

    def fp(x):
        y = np.asarray(x, dtype=float) - c
        return s * np.sqrt(a * a * y * y + M * M)

    def fpp(x):
        y = np.asarray(x, dtype=float) - c
        return s * a * a * y / np.sqrt(a * a * y * y + M * M)

    half = b is None
    return VectorField(
        L=L,
        f=f,
        fp=fp,
        fpp=fpp,
        b=_b_half(fpp) if half else b,
        kind="example",
        params={"M": M, "a": a, "sign": "+" if s > 0 else "-"},
        half_b=half,
        shift=s * offset,
    )


def _parse_sign(sign) -> int:
    if sign in ("+", 1, "plus", "+1"):
        return 1
    if sign in ("-", -1, "minus", "-1"):
        return -1
    raise InvalidParameter(f"sign must be '+' or '-', got {sign!r}")


def tabulated_field(grid, f_values, b=None) -> VectorField:
    """Natural cubic spline field through samples of ``f``.

    The abscissae are translated so that the interval starts at 0 and the
    values so that ``f(0) = 0``.
    """
    x = np.asarray(grid, dtype=float)
    y = np.asarray(f_values, dtype=float)
    if x.ndim != 1 or x.shape != y.shape:
        raise InvalidParameter("grid and f_values must be 1-D arrays of equal length")
    if x.size < 16:
        raise InvalidParameter(f"need at least 16 samples, got {x.size}")
    if np.any(np.diff(x) <= 0):
        raise InvalidParameter("grid must be strictly increasing")
    x = x - x[0]
    shift = -y[0]
    spline = CubicSpline(x, y - y[0], bc_type="natural")
    d1 = spline.derivative(1)
    d2 = spline.derivative(2)

    def f(t):
        return spline(np.asarray(t, dtype=float))

    def fp(t):
        return d1(np.asarray(t, dtype=float))

    def fpp(t):
        return d2(np.asarray(t, dtype=float))

    half = b is None
    return VectorField(
        L=float(x[-1]),
        f=f,
        fp=fp,
        fpp=fpp,
        b=_b_half(fpp) if half else b,
        kind="tabulated",
        params={"n_samples": int(x.size)},
        half_b=half,
        shift=shift,
    )


def custom_field(L: float, f, fp, fpp, b=None, name: str = "custom") -> VectorField:
    """Field from user callables; ``f`` is renormalized to vanish at 0."""
    if not L > 0:
        raise InvalidParameter(f"L must be positive, got {L}")
    f00 = float(np.asarray(f(np.array([0.0])))[0])

    def fn(x):
        return np.asarray(f(np.asarray(x, dtype=float)), dtype=float) - f00

    def fpn(x):
        return np.asarray(fp(np.asarray(x, dtype=float)), dtype=float)

    def fppn(x):
        return np.asarray(fpp(np.asarray(x, dtype=float)), dtype=float)

    half = b is None
    return VectorField(
        L=float(L),
        f=fn,
        fp=fpn,
        fpp=fppn,
        b=_b_half(fppn) if half else b,
        kind=name,
        params={},
        half_b=half,
        shift=-f00,
    )


def field_from_spec(spec: dict) -> VectorField:
    """Build a field from a decoded JSON object.

    Accepted shapes: ``{"kind": "example", "M", "a", "sign", "L"}`` and
    ``{"kind": "tabulated", "grid": [...], "f_values": [...]}``.
    """
    if not isinstance(spec, dict):
        raise ConfigError("field specification must be a JSON object")
    kind = spec.get("kind")
    try:
        if kind == "example":
            return make_example_field(spec["M"], spec["a"], spec["sign"], spec.get("L", 2.0))
        if kind == "tabulated":
            return tabulated_field(spec["grid"], spec["f_values"])
    except KeyError as exc:
        raise ConfigError(f"missing field key {exc.args[0]!r}") from exc
    raise ConfigError(f"unknown field kind {kind!r}")


def load_field(path) -> VectorField:
    with open(path, encoding="utf-8") as fh:
        try:
            spec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return field_from_spec(spec)


@dataclass(frozen=True)
class ItemCheck:
    passed: bool
    witness: tuple = ()
    note: str = ""


@dataclass(frozen=True)
class AssumptionReport:
    a1: ItemCheck
    a2: ItemCheck
    a3: ItemCheck
    a4: ItemCheck
    case_sign: str
    margin: float
    x0: float | None = None

    @property
    def all_passed(self) -> bool:
        return self.a1.passed and self.a2.passed and self.a3.passed and self.a4.passed

    def failures(self) -> list[str]:
        names = ("A1", "A2", "A3", "A4")
        items = (self.a1, self.a2, self.a3, self.a4)
        return [n for n, it in zip(names, items) if not it.passed]

    def to_dict(self) -> dict:
        out = {"case_sign": self.case_sign, "margin": self.margin, "x0": self.x0}
        for name in ("a1", "a2", "a3", "a4"):
            it = getattr(self, name)
            out[name] = {"passed": it.passed, "witness": list(it.witness), "note": it.note}
        return out


def _dV(field: VectorField, x):
    return 0.5 * field.fp(x) * field.fpp(x)


def _critical_points(field: VectorField, x: Array) -> tuple[list[float], list[tuple[float, float]]]:
    """Isolated roots of V' on the grid plus extended runs where V' vanishes."""
    dv = _dV(field, x)
    h = x[1] - x[0]
    flagged = np.abs(dv) <= CRITICAL_TOL
    change = np.zeros_like(flagged)
    sc = np.signbit(dv[:-1]) != np.signbit(dv[1:])
    sc &= (dv[:-1] != 0) & (dv[1:] != 0)
    change[:-1] |= sc
    idx = np.flatnonzero(flagged | change)
    points: list[float] = []
    runs: list[tuple[float, float]] = []
    if idx.size == 0:
        return points, runs
    groups = np.split(idx, np.flatnonzero(np.diff(idx) > 2) + 1)
    for g in groups:
        lo, hi = x[g[0]], x[min(g[-1] + 1, x.size - 1)]
        if g[-1] - g[0] > 8:
            runs.append((float(x[g[0]]), float(x[g[-1]])))
            continue
        # refine: prefer a bracketed root of V', fall back to min |V'|
        a_ = max(lo - h, 0.0)
        b_ = min(hi + h, field.L)
        fa, fb = _dV(field, a_), _dV(field, b_)
        if fa == 0.0:
            root = a_
        elif fb == 0.0:
            root = b_
        elif np.sign(fa) != np.sign(fb):
            root = brentq(lambda t: float(_dV(field, t)), a_, b_, xtol=1e-15, rtol=1e-15)
        else:
            res = minimize_scalar(lambda t: abs(float(_dV(field, t))), bounds=(a_, b_), method="bounded",
                                  options={"xatol": 1e-13})
            root = float(res.x)
        points.append(float(root))
    return points, runs


def _second_derivative_V(field: VectorField, x0: float) -> float:
    h = 1e-4 * field.L
    lo, hi = max(x0 - h, 0.0), min(x0 + h, field.L)
    return float((_dV(field, hi) - _dV(field, lo)) / (hi - lo))


def validate_assumptions(field: VectorField, n: int = ASSUMPTION_GRID) -> AssumptionReport:
    """Check the four single-well items on a uniform grid.

    Failures are reported, never raised.
    """
    x = np.linspace(0.0, field.L, n)
    fp = np.asarray(field.fp(x), dtype=float)
    V = 0.25 * fp * fp
    absfp = np.abs(fp)
    margin = float(absfp.min())
    i_m = int(absfp.argmin())
    witness = float(x[i_m])
    if fp.min() > 0:
        case = "increasing"
    elif fp.max() < 0:
        case = "decreasing"
    else:
        case = "mixed"
        # a sign change between nodes still means the speed vanishes
        margin = 0.0
        flips = np.flatnonzero(np.signbit(fp[:-1]) != np.signbit(fp[1:]))
        if flips.size and fp[flips[0]] != 0.0:
            j = int(flips[0])
            witness = float(brentq(lambda t: float(field.fp(t)), x[j], x[j + 1]))
    a1 = ItemCheck(margin > 0.0, (witness,), "" if margin > 0 else "speed vanishes")

    points, runs = _critical_points(field, x)
    if field.kind == "tabulated":
        # the natural spline pins f'' = 0 at both ends, so V' = 0 there by construction
        edge = 2.0 * (x[1] - x[0])
        points = [p for p in points if edge < p < field.L - edge]
    x0 = None
    tol_end = 2.0 * (x[1] - x[0])
    if runs:
        a2 = ItemCheck(False, tuple(v for r in runs for v in r), "derivative of V vanishes on an interval")
    elif len(points) != 1:
        note = "no critical point" if not points else f"{len(points)} critical points"
        a2 = ItemCheck(False, tuple(points), note)
    else:
        xc = points[0]
        interior = tol_end < xc < field.L - tol_end
        vmin = float(V.min())
        Vc = 0.25 * float(field.fp(xc)) ** 2
        is_min = Vc <= vmin + 1e-12 * max(1.0, abs(vmin))
        if interior and is_min:
            a2 = ItemCheck(True, (xc,))
            x0 = xc
        else:
            a2 = ItemCheck(False, (xc,), "critical point on the boundary" if not interior else "not the minimum")

    V0, VL = float(V[0]), float(V[-1])
    scale = max(1.0, abs(V0), abs(VL))
    a3 = ItemCheck(abs(V0 - VL) > 1e-12 * scale, (0.0, field.L), "" if abs(V0 - VL) > 1e-12 * scale else "V(0) = V(L)")
    x_probe = x0 if x0 is not None else float(x[int(V.argmin())])
    V2 = _second_derivative_V(field, x_probe)
    a4 = ItemCheck(V2 > CRITICAL_TOL, (x_probe, V2), "" if V2 > CRITICAL_TOL else "degenerate minimum")
    return AssumptionReport(a1, a2, a3, a4, case, margin, x0)


@dataclass(frozen=True, eq=False)
class Potential:
    """Effective potential ``V = f'^2/4`` with its well data."""

    field: VectorField
    x0: float
    E0: float
    V0: float
    VL: float
    V2: float
    report: AssumptionReport

    @property
    def L(self) -> float:
        return self.field.L

    @property
    def Vmax(self) -> float:
        return max(self.V0, self.VL)

    @property
    def Vmin_edge(self) -> float:
        return min(self.V0, self.VL)

    def V(self, x):
        fp = self.field.fp(x)
        return 0.25 * fp * fp

    def dV(self, x):
        return _dV(self.field, x)


def potential(field: VectorField, report: AssumptionReport | None = None) -> Potential:
    """Locate the well of ``V``; requires items A1 and A2."""
    if report is None:
        report = validate_assumptions(field)
    if not report.a1.passed or not report.a2.passed:
        failed = [n for n, it in (("A1", report.a1), ("A2", report.a2)) if not it.passed]
        raise AssumptionViolation(f"potential requires A1 and A2; failed: {', '.join(failed)}")
    x0 = float(report.x0)
    E0 = 0.25 * float(field.fp(x0)) ** 2
    V0 = 0.25 * float(field.fp(0.0)) ** 2
    VL = 0.25 * float(field.fp(field.L)) ** 2
    return Potential(field, x0, E0, V0, VL, _second_derivative_V(field, x0), report)
