"""Command-line entry point: ``vtcontrol <command> [--config PATH] [--preset NAME] [--eps LIST] [--out DIR]``.

Every run writes CSV tables, a JSON summary and ``manifest.json`` into the
output directory.  Floats are written with ``repr`` and JSON with sorted
keys, so an identical configuration reproduces identical bytes.

Exit codes: 0 ok, 1 other failure, 2 configuration, 3 assumptions,
4 resolution, 5 moment family.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import dataclass, field as dc_field
from importlib import metadata
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import bounds_report, cost_exponent_lower, min_cost_exponent_upper
from .classical import classical_table, phase_volume
from .errors import (AssumptionViolation, ConfigError, FitUnreliable, HypothesisViolation, IllConditionedFamily,
                     InsufficientFamily, ResolutionError, VTError)
from .moment import synthesize_control
from .problem import VectorField, field_from_spec, potential, validate_assumptions
from .sim import DEFAULT_EPS_GRID, cost_scan, exponent_fit, simulate_control
from .spectral import discretize, eigenpairs, gap_check, localization_check, weyl_check

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_ASSUMPTIONS, EXIT_RESOLUTION, EXIT_FAMILY = 0, 1, 2, 3, 4, 5

PRESETS = {
    "example5": {"kind": "example", "M": 1.0, "a": 2.0, "sign": "-", "L": 2.0},
    "example5-": {"kind": "example", "M": 1.0, "a": 2.0, "sign": "-", "L": 2.0},
    "example5+": {"kind": "example", "M": 1.0, "a": 2.0, "sign": "+", "L": 2.0},
    "flat": {"kind": "example", "M": 1.0, "a": 0.0, "sign": "-", "L": 2.0},
}

SPECTRUM_EPS = (0.08, 0.04, 0.02)
T_REFS = ("T1", "T14", "T16", "T_limit", "mid")
CONFIG_KEYS = {"field", "eps_list", "T", "T_ref", "T_factor", "k_max", "toggles", "N_trunc", "phase_split",
               "seed", "tolerances", "delta", "preset"}


@dataclass
class RunConfig:
    field_spec: dict
    eps_list: tuple | None = None
    T: float | None = None
    T_ref: str | None = None
    T_factor: float = 1.0
    k_max: int | None = None
    toggles: dict = dc_field(default_factory=lambda: {"weyl": True, "gaps": True, "localization": True,
                                                      "simulate": True})
    N_trunc: int = 15
    phase_split: float = 0.9
    seed: int = 0
    tolerances: dict = dc_field(default_factory=lambda: {"modal_residual": 1e-6, "r2_min": 0.8})
    delta: float = 0.5

    def to_dict(self) -> dict:
        return {"field": self.field_spec, "eps_list": list(self.eps_list) if self.eps_list else None, "T": self.T,
                "T_ref": self.T_ref, "T_factor": self.T_factor, "k_max": self.k_max, "toggles": self.toggles,
                "N_trunc": self.N_trunc, "phase_split": self.phase_split, "seed": self.seed,
                "tolerances": self.tolerances, "delta": self.delta}


def _number(raw, name: str, kind=float):
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise ConfigError(f"{name} must be a number, got {raw!r}")
    val = kind(raw)
    if kind is int and val != raw:
        raise ConfigError(f"{name} must be an integer, got {raw!r}")
    return val


def parse_eps_list(raw) -> tuple:
    if isinstance(raw, str):
        try:
            raw = [float(p) for p in raw.split(",") if p.strip()]
        except ValueError as exc:
            raise ConfigError(f"cannot parse eps list {raw!r}") from exc
    if not isinstance(raw, (list, tuple)) or not raw:
        raise ConfigError("eps_list must be a nonempty list of numbers")
    out = tuple(_number(e, "eps", float) for e in raw)
    if any(not (0 < e < 1) for e in out):
        raise ConfigError("every eps must lie in (0, 1)")
    return out


def build_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = set(data) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
    if "preset" in data:
        if data["preset"] not in PRESETS:
            raise ConfigError(f"unknown preset {data['preset']!r}")
        spec = dict(PRESETS[data["preset"]])
    elif "field" in data:
        spec = data["field"]
    else:
        raise ConfigError("configuration needs a 'field' object or a 'preset' name")
    if not isinstance(spec, dict):
        raise ConfigError("'field' must be a JSON object")
    cfg = RunConfig(field_spec=spec)
    if data.get("eps_list") is not None:
        cfg.eps_list = parse_eps_list(data["eps_list"])
    if data.get("T") is not None:
        cfg.T = _number(data["T"], "T")
        if not cfg.T > 0:
            raise ConfigError("T must be positive")
    if data.get("T_ref") is not None:
        if data["T_ref"] not in T_REFS:
            raise ConfigError(f"T_ref must be one of {', '.join(T_REFS)}")
        cfg.T_ref = data["T_ref"]
    if "T_factor" in data:
        cfg.T_factor = _number(data["T_factor"], "T_factor")
    if data.get("k_max") is not None:
        cfg.k_max = _number(data["k_max"], "k_max", int)
    if "toggles" in data:
        if not isinstance(data["toggles"], dict):
            raise ConfigError("'toggles' must be an object")
        cfg.toggles.update({k: bool(v) for k, v in data["toggles"].items()})
    for key, kind in (("N_trunc", int), ("seed", int), ("phase_split", float), ("delta", float)):
        if key in data:
            setattr(cfg, key, _number(data[key], key, kind))
    if "tolerances" in data:
        if not isinstance(data["tolerances"], dict):
            raise ConfigError("'tolerances' must be an object")
        cfg.tolerances.update({k: _number(v, k) for k, v in data["tolerances"].items()})
    return cfg


def load_config(path: str) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return build_config(data)


def _field(cfg: RunConfig) -> VectorField:
    try:
        return field_from_spec(cfg.field_spec)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid field: {exc}") from exc


# -- output ------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


class Writer:
    """Single writer for one run's output directory."""

    def __init__(self, out: Path):
        self.out = out
        self.files: dict[str, str] = {}

    def _write(self, name: str, text: str) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        data = text.encode("utf-8")
        (self.out / name).write_bytes(data)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def csv(self, name: str, columns: dict) -> None:
        keys = list(columns)
        cols = [np.atleast_1d(np.asarray(columns[k])) for k in keys]
        n = max(c.size for c in cols) if cols else 0
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(keys)
        for i in range(n):
            w.writerow([_fmt(c[i].item() if c.dtype != object else c[i]) if i < c.size else "" for c in cols])
        self._write(name, buf.getvalue())

    def json(self, name: str, payload: dict) -> None:
        self._write(name, json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")

    def manifest(self, command: str, cfg: RunConfig, extra: dict | None = None) -> None:
        versions = {"vtcontrol": __version__}
        for pkg in ("numpy", "scipy", "mpmath", "gmpy2"):
            try:
                versions[pkg] = metadata.version(pkg)
            except metadata.PackageNotFoundError:
                versions[pkg] = None
        payload = {"command": command, "config": cfg.to_dict(), "versions": versions,
                   "files": dict(sorted(self.files.items())), **(extra or {})}
        self.out.mkdir(parents=True, exist_ok=True)
        text = json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n"
        (self.out / "manifest.json").write_text(text, encoding="utf-8")


def _tag(eps: float) -> str:
    return repr(float(eps)).replace(".", "p")


# -- commands ----------------------------------------------------------------

def _check_assumptions(field: VectorField, writer: Writer) -> None:
    report = validate_assumptions(field)
    blocking = [n for n in report.failures() if n != "A3"]
    if blocking:
        writer.json("assumptions.json", report.to_dict())
        notes = "; ".join(f"{n}: {getattr(report, n.lower()).note}" for n in blocking)
        raise AssumptionViolation(f"items {', '.join(blocking)} fail ({notes})")


def _horizon(cfg: RunConfig, field: VectorField, default_ref: str | None = None):
    if cfg.T is not None:
        return cfg.T, None
    ref = cfg.T_ref or default_ref
    if ref is None:
        raise ConfigError("set T or T_ref")
    rep = bounds_report(field, with_T15=False)
    if ref == "mid":
        if rep.T16 is None:
            raise HypothesisViolation("T16 is unavailable for this field")
        base = 0.5 * (rep.T14 + rep.T16)
    else:
        base = getattr(rep, ref)
        if base is None:
            raise HypothesisViolation(f"{ref} is unavailable for this field")
    return cfg.T_factor * base, rep


def cmd_bounds(cfg: RunConfig, writer: Writer) -> int:
    field = _field(cfg)
    _check_assumptions(field, writer)
    rep = bounds_report(field)
    writer.json("bounds.json", rep.to_dict())
    names = ["T_limit", "T14", "T15", "T16", "T1", "E0", "sup_G14"]
    writer.csv("bounds.csv", {"quantity": names, "value": [getattr(rep, n) for n in names]})
    writer.manifest("bounds", cfg)
    return EXIT_OK


def _auto_kmax(field: VectorField, eps: float, n: int) -> int:
    # cover lambda_k <= 4 max V as far as the grid resolves
    pot = potential(field)
    table = classical_table(pot)
    count = int(phase_volume(pot, min(4.0 * pot.Vmax, table.E_cap)) / (math.pi * eps)) + 2
    return min(count, n // 4)


def cmd_spectrum(cfg: RunConfig, writer: Writer, command: str = "spectrum") -> int:
    field = _field(cfg)
    _check_assumptions(field, writer)
    eps_list = cfg.eps_list or SPECTRUM_EPS
    pot = potential(field)
    table = classical_table(pot)
    toggles = cfg.toggles
    summary = {}
    for eps in eps_list:
        disc = discretize(field, eps)
        k_max = cfg.k_max if cfg.k_max is not None else _auto_kmax(field, eps, disc.n)
        spec = eigenpairs(disc, k_max)
        entry = {"n": disc.n, "k_max": k_max}
        writer.csv(f"spectrum_eps{_tag(eps)}.csv", spec.to_columns())
        if toggles.get("weyl", True):
            w = weyl_check(spec, table, pot=pot)
            entry["weyl"] = {"D_fit": w.D_fit, "C_fit": w.C_fit, "band_violations": w.band_violations,
                             "excluded": w.excluded}
        if toggles.get("gaps", True):
            g = gap_check(spec, table.T1, delta=cfg.delta, pot=pot)
            entry["gaps"] = {"N_obs": g.N_obs, "threshold": g.threshold, "gamma_obs": g.gamma_obs}
        if toggles.get("localization", True):
            k_set = tuple(k for k in (0, 3, 10) if k < k_max)
            loc = localization_check(spec, field, k_set=k_set, pot=pot)
            entry["localization"] = {"k": loc.k_set, "slope": loc.slopes, "r2": loc.r2,
                                     "delta_flux": loc.delta_flux, "delta_obs": loc.delta_obs}
            writer.csv(f"localization_eps{_tag(eps)}.csv",
                       {"k": loc.k_set, "slope": loc.slopes, "r2": loc.r2, "points": loc.n_points,
                        "delta_flux": loc.delta_flux})
        summary[repr(float(eps))] = entry
    writer.json(f"{command}.json", summary)
    writer.manifest(command, cfg, {"grids": {repr(float(e)): v["n"] for e, v in
                                            zip(eps_list, summary.values())}})
    return EXIT_OK


def cmd_localization(cfg: RunConfig, writer: Writer) -> int:
    cfg.toggles = {**cfg.toggles, "weyl": False, "gaps": False, "localization": True}
    return cmd_spectrum(cfg, writer, "localization")


def cmd_control(cfg: RunConfig, writer: Writer) -> int:
    field = _field(cfg)
    _check_assumptions(field, writer)
    eps = (cfg.eps_list or (0.05,))[0]
    if cfg.T is None and cfg.T_ref is None:
        # default horizon: 20% past the upper control time
        cfg.T_ref, cfg.T_factor = "T16", 1.2
    T, _ = _horizon(cfg, field)
    N = cfg.N_trunc
    disc = discretize(field, eps)
    spec = eigenpairs(disc, min(max(2 * N, 40), disc.n // 4))
    rng = np.random.default_rng(cfg.seed)
    state = rng.standard_normal(2 * N)
    state /= np.linalg.norm(state)
    ctl = synthesize_control(spec, field, T, state, m=cfg.phase_split, N_trunc=N, eps=eps,
                             delta=cfg.delta, target=cfg.tolerances.get("modal_residual", 1e-6))
    result = {"eps": eps, "T": T, "N_trunc": N, "phase_split": cfg.phase_split, "seed": cfg.seed,
              "modal_residual": ctl.modal_residual, "log_norm_sq": ctl.log_norm_sq,
              "log_predicted_bound": ctl.log_predicted_bound, "log_bound_constant": ctl.log_bound_constant,
              "family": ctl.family.diagnostics()}
    if cfg.toggles.get("simulate", True):
        check = simulate_control(spec, field, ctl, state)
        result["simulation"] = {"residual": check.residual, "log10_amplification": check.log10_amplification,
                                "resolvable": check.resolvable, "dt": check.dt}
    writer.csv("control.csv", ctl.to_columns())
    writer.csv("cost.csv", {"quantity": ["norm_sq", "predicted_bound", "bound_constant"],
                            "log_value": [ctl.log_norm_sq, ctl.log_predicted_bound, ctl.log_bound_constant]})
    writer.csv("initial_state.csv", {"k": np.arange(state.size), "coefficient": state})
    writer.json("control.json", result)
    writer.manifest("control", cfg)
    tol = cfg.tolerances.get("modal_residual", 1e-6)
    return EXIT_OK if ctl.modal_residual < tol else EXIT_RESOLUTION


def envelope_verdict(rate_band: tuple, lower: float, upper: float, slack: float, reliable: bool) -> str:
    if not reliable:
        return "inconclusive"
    lo, hi = rate_band
    if hi >= lower - slack and lo <= upper + slack:
        return "inside envelope"
    return "outside envelope"


def cmd_cost_scan(cfg: RunConfig, writer: Writer) -> int:
    if cfg.eps_list is None:
        raise ConfigError("cost-scan needs eps_list (config key or --eps)")
    field = _field(cfg)
    _check_assumptions(field, writer)
    T, _ = _horizon(cfg, field, default_ref="mid")
    pot = potential(field)
    scan = cost_scan(field, T, cfg.eps_list)
    fit = exponent_fit(scan, strict=False)
    r2_min = cfg.tolerances.get("r2_min", 0.8)
    reliable = fit.r2 >= r2_min
    lower, _ = cost_exponent_lower(pot, T)
    upper, m_best = min_cost_exponent_upper(pot, T)
    slack = 0.1 * pot.E0 * T
    verdict = envelope_verdict(fit.band, lower, upper, slack, reliable)
    writer.csv("cost_scan.csv", {**scan.to_columns(), "change": np.array(scan.changes)})
    writer.json("cost_scan.json", {"T": T, "rate": fit.rate, "band": fit.band, "intercept": fit.intercept,
                                   "r2": fit.r2, "reliable": reliable, "lower": lower, "upper": upper,
                                   "upper_phase_split": m_best, "slack": slack, "verdict": verdict,
                                   "flag": None if reliable else "fit-unreliable"})
    writer.manifest("cost-scan", cfg)
    print(f"verdict: {verdict}")
    return EXIT_OK


def cmd_example5(cfg: RunConfig, writer: Writer) -> int:
    cfg.field_spec = dict(PRESETS["example5"])
    cmd_bounds(cfg, Writer(writer.out / "bounds"))
    cmd_spectrum(RunConfig(cfg.field_spec, eps_list=cfg.eps_list), Writer(writer.out / "spectrum"))
    scan_cfg = RunConfig(cfg.field_spec, eps_list=DEFAULT_EPS_GRID, T_ref="mid")
    cmd_cost_scan(scan_cfg, Writer(writer.out / "cost-scan"))
    writer.manifest("example5", cfg, {"parts": ["bounds", "spectrum", "cost-scan"]})
    return EXIT_OK


COMMANDS = {
    "bounds": cmd_bounds,
    "spectrum": cmd_spectrum,
    "localization": cmd_localization,
    "control": cmd_control,
    "cost-scan": cmd_cost_scan,
    "example5": cmd_example5,
}


def exit_code(exc: Exception) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (AssumptionViolation, HypothesisViolation)):
        return EXIT_ASSUMPTIONS
    if isinstance(exc, ResolutionError):
        return EXIT_RESOLUTION
    if isinstance(exc, (InsufficientFamily, IllConditionedFamily)):
        return EXIT_FAMILY
    return EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vtcontrol", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--preset", choices=sorted(PRESETS), help="named field instead of a config file")
    parser.add_argument("--eps", help="comma-separated eps values; overrides eps_list")
    parser.add_argument("--out", default="vtcontrol-out", help="output directory")
    return parser


def resolve_config(args) -> RunConfig:
    if args.config:
        cfg = load_config(args.config)
        if args.preset:
            cfg.field_spec = dict(PRESETS[args.preset])
    elif args.preset or args.command == "example5":
        cfg = RunConfig(dict(PRESETS[args.preset or "example5"]))
    else:
        raise ConfigError("give --config or --preset")
    if args.eps:
        cfg.eps_list = parse_eps_list(args.eps)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, Writer(Path(args.out)))
    except FitUnreliable as exc:
        print(f"vtcontrol: {exc}", file=sys.stderr)
        return EXIT_OK
    except VTError as exc:
        print(f"vtcontrol: {exc.kind}: {exc}", file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
