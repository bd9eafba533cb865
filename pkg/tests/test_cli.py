import hashlib
import json

import pytest

from vtcontrol.bounds import bounds_report
from vtcontrol.cli import (
    EXIT_ASSUMPTIONS,
    EXIT_CONFIG,
    EXIT_FAMILY,
    EXIT_OK,
    EXIT_RESOLUTION,
    build_config,
    envelope_verdict,
    main,
    parse_eps_list,
)
from vtcontrol.errors import ConfigError

QUICK_SPECTRUM = {"preset": "example5", "eps_list": [0.08], "k_max": 12,
                  "toggles": {"weyl": False, "gaps": True, "localization": False}}


def write_config(tmp_path, payload, name="cfg.json"):
    path = tmp_path / name
    path.write_text(payload if isinstance(payload, str) else json.dumps(payload))
    return str(path)


@pytest.fixture(scope="module")
def bounds_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("bounds")
    code = main(["bounds", "--preset", "example5", "--out", str(out)])
    return code, out


def test_bounds_command(bounds_run, minus_field):
    code, out = bounds_run
    assert code == EXIT_OK
    written = json.loads((out / "bounds.json").read_text())
    rep = bounds_report(minus_field, with_T15=False)
    for name in ("T_limit", "T14", "T16", "T1", "E0", "sup_G14"):
        assert written[name] == pytest.approx(getattr(rep, name), rel=1e-12)
    assert written["T15"] == pytest.approx(7.19141, abs=1e-4)
    assert written["assumptions"]


def test_manifest_lists_every_file(bounds_run):
    _, out = bounds_run
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "bounds"
    assert manifest["config"]["field"]["sign"] == "-"
    assert set(manifest["files"]) == {"bounds.csv", "bounds.json"}
    for name, digest in manifest["files"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    assert manifest["versions"]["numpy"]


def test_identical_runs_write_identical_bytes(tmp_path):
    cfg = write_config(tmp_path, QUICK_SPECTRUM)
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert main(["spectrum", "--config", cfg, "--out", str(out)]) == EXIT_OK
    names = sorted(p.name for p in outs[0].iterdir())
    assert "spectrum_eps0p08.csv" in names
    for name in names:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_malformed_json_reports_position(tmp_path, capsys):
    cfg = write_config(tmp_path, '{"preset": "example5",\n  "eps_list": [0.05,,]}')
    assert main(["spectrum", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "line 2 column" in capsys.readouterr().err


def test_cost_scan_needs_eps_list(tmp_path, capsys):
    assert main(["cost-scan", "--preset", "example5", "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "eps_list" in capsys.readouterr().err


@pytest.mark.parametrize("payload", [
    {"preset": "nowhere"},
    {"field": {"kind": "example"}, "surprise": 1},
    {"preset": "example5", "T": -1.0},
    {"preset": "example5", "eps_list": [0.5, 1.5]},
    {"preset": "example5", "k_max": 2.5},
    {"eps_list": [0.05]},
])
def test_invalid_configs(tmp_path, payload):
    cfg = write_config(tmp_path, payload)
    assert main(["bounds", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_missing_config_file(tmp_path):
    assert main(["bounds", "--config", str(tmp_path / "absent.json"), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_flat_field_fails_assumptions(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["bounds", "--preset", "flat", "--out", str(out)]) == EXIT_ASSUMPTIONS
    err = capsys.readouterr().err
    assert "A2" in err and "A4" in err
    assert (out / "assumptions.json").exists()


def test_oversized_k_max_is_a_resolution_error(tmp_path):
    cfg = write_config(tmp_path, {**QUICK_SPECTRUM, "k_max": 10000})
    assert main(["spectrum", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_RESOLUTION


def test_short_horizon_leaves_family_insufficient(tmp_path):
    cfg = write_config(tmp_path, {"preset": "example5", "T": 0.05, "N_trunc": 2, "eps_list": [0.05],
                                  "toggles": {"simulate": False}})
    assert main(["control", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_FAMILY


def test_eps_flag_overrides_config(tmp_path):
    cfg = write_config(tmp_path, QUICK_SPECTRUM)
    out = tmp_path / "o"
    assert main(["spectrum", "--config", cfg, "--eps", "0.1", "--out", str(out)]) == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["eps_list"] == [0.1]
    assert (out / "spectrum_eps0p1.csv").exists()


def test_parse_eps_list():
    assert parse_eps_list("0.08, 0.04,0.02") == (0.08, 0.04, 0.02)
    for bad in ("0.1,x", "", [], [0.0], [True]):
        with pytest.raises(ConfigError):
            parse_eps_list(bad)


def test_build_config_defaults():
    cfg = build_config({"preset": "example5+"})
    assert cfg.field_spec["sign"] == "+"
    assert cfg.N_trunc == 15 and cfg.phase_split == 0.9
    assert cfg.tolerances["modal_residual"] == 1e-6


def test_envelope_verdict():
    assert envelope_verdict((1.0, 2.0), 1.5, 3.0, 0.1, True) == "inside envelope"
    assert envelope_verdict((4.0, 5.0), 1.5, 3.0, 0.1, True) == "outside envelope"
    assert envelope_verdict((4.0, 5.0), 1.5, 3.0, 0.1, False) == "inconclusive"
    assert envelope_verdict((3.05, 5.0), 1.5, 3.0, 0.1, True) == "inside envelope"
