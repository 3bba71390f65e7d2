import copy
import hashlib
import json
from pathlib import Path

import pytest

from stochelastic import cli, lippmann, validation
from stochelastic.config import ConfigError, explain, from_dict, load_config, validate
from stochelastic.randfield import read_field_binary

REFERENCE = Path(__file__).parents[1] / "configs" / "reference.json"

TINY = {
    "schema_version": 1,
    "medium": {"lambda": 1.0, "mu": 1.0},
    "field": {
        "m": 1.8,
        "phi_profile": {"kind": "gaussian_bump", "center": [0.0, 0.0], "width": 0.15, "amplitude": 1.0,
                        "cutoff": 0.45},
        "seed": 3,
    },
    "grids": {"box": [[-0.5, -0.5], [0.5, 0.5]], "h": 0.1,
              "arc": {"center": [0.0, 0.0], "radius": 1.5, "count": 3}},
    "band": {"Q": 4.0, "count": 13},
    "solver": {"mode": "direct"},
    "inversion": {"alphas": [1e-4, 1e-3, 1e-2]},
    "output": "out",
}


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def _edit(**changes):
    cfg = copy.deepcopy(TINY)
    for path, value in changes.items():
        node = cfg
        keys = path.split("__")
        for k in keys[:-1]:
            node = node[k]
        node[keys[-1]] = value
    return cfg


def _md5(p):
    return hashlib.md5(Path(p).read_bytes()).hexdigest()


# --- config --------------------------------------------------------------------


def test_reference_config_loads():
    cfg = load_config(REFERENCE)
    assert cfg.d_grid().shape == (24, 24)
    assert cfg.solver_grid().shape == (80, 80)
    assert cfg.band_obj().spacing == 0.25
    assert len(cfg.receivers()) == 16
    phi = cfg.phi_on(cfg.d_grid())
    assert phi.max() == pytest.approx(40.0, rel=0.05)


def test_seed_override(tmp_path):
    assert load_config(_write(tmp_path, TINY), seed=11).field.seed == 11


@pytest.mark.parametrize("changes,needle", [
    ({"field__m": 2.5}, "field.m"),
    ({"field__m": 1.0}, "field.m"),
    ({"medium__mu": 0.0}, "medium.mu"),
    ({"medium__lambda": -5.0}, "medium.lambda"),
    ({"grids__h": 0.3}, "grids.box"),
    ({"grids__arc__radius": 0.2}, "receivers"),
    ({"band__count": 3}, "band.count"),
    ({"solver__mode": "exact"}, "solver.mode"),
    ({"inversion__alphas": [0.0]}, "inversion.alphas"),
    ({"field__phi_profile": {"kind": "gaussian_bump", "center": [0.35, 0.0], "width": 0.15,
                             "amplitude": 1.0}}, "boundary ring"),
    ({"field__phi_profile": {"kind": "cone"}}, "phi_profile"),
    ({"schema_version": 7}, "schema_version"),
    ({"extra": 1}, "extra"),
])
def test_invalid_configs_rejected_with_field_name(tmp_path, changes, needle):
    with pytest.raises(ConfigError) as exc:
        load_config(_write(tmp_path, _edit(**changes)))
    assert any(needle in e for e in exc.value.errors)


def test_statistic_stages_need_m_above_five_thirds(tmp_path):
    cfg = load_config(_write(tmp_path, _edit(field__m=1.6)))
    validate(cfg, stage="sample")
    with pytest.raises(ConfigError):
        validate(cfg, stage="sweep")


def test_missing_sections_all_reported():
    with pytest.raises(ConfigError) as exc:
        from_dict({"schema_version": 1})
    text = " ".join(exc.value.errors)
    for sec in ("medium", "field", "grids", "band", "solver", "inversion"):
        assert sec in text


def test_explain_lists_fields():
    text = explain()
    for key in ("field.m", "grids.h_solver", "band.count", "solver.omega_threshold"):
        assert key in text


# --- cli -----------------------------------------------------------------------


def test_pipeline_end_to_end(tmp_path):
    cfgp = _write(tmp_path, TINY)
    out = tmp_path / "run"
    base = ["--config", str(cfgp), "--out", str(out)]
    assert cli.main(["sample", *base, "--count", "2"]) == 0
    rho, m = read_field_binary(out / "realization_0001.bin")
    assert m == 1.8 and rho.values.shape == (10, 10)
    assert cli.main(["sweep", *base]) == 0
    meta = json.loads((out / "sweep_meta.json").read_text())
    assert meta["records"] == 3 * 13 * 2
    assert cli.main(["estimate", *base]) == 0
    est = json.loads((out / "estimate.json").read_text())
    assert len(est["receivers"]) == 3 and est["schema_version"] == 1
    assert cli.main(["invert", *base]) == 0
    rec = json.loads((out / "recovery.json").read_text())
    assert rec["selection"] == "smallest_alpha"
    assert (out / "plot_estimate.py").exists() and (out / "plot_recovery.py").exists()
    assert cli.main(["invert", *base, "--synthetic"]) == 0
    assert json.loads((out / "recovery.json").read_text())["selection"] == "best_error"


def test_sweep_reproducible_across_runs_and_threads(tmp_path):
    cfgp = _write(tmp_path, TINY)
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["sweep", "--config", str(cfgp), "--out", str(a)]) == 0
    assert cli.main(["sweep", "--config", str(cfgp), "--out", str(b), "--threads", "3"]) == 0
    assert _md5(a / "sweep.csv") == _md5(b / "sweep.csv")
    assert cli.main(["sample", "--config", str(cfgp), "--out", str(a)]) == 0
    assert cli.main(["sample", "--config", str(cfgp), "--out", str(b)]) == 0
    assert _md5(a / "realization_0000.bin") == _md5(b / "realization_0000.bin")


def test_noise_level_selects_discrepancy(tmp_path):
    cfgp = _write(tmp_path, _edit(inversion__noise_level=0.05))
    out = tmp_path / "o"
    assert cli.main(["invert", "--config", str(cfgp), "--out", str(out), "--synthetic"]) == 0
    assert json.loads((out / "recovery.json").read_text())["selection"] == "discrepancy"


@pytest.mark.parametrize("argv_tail", [[], ["--seed", "1"]])
def test_config_errors_exit_2(tmp_path, argv_tail):
    cfgp = _write(tmp_path, _edit(field__m=2.5))
    assert cli.main(["sweep", "--config", str(cfgp), "--out", str(tmp_path), *argv_tail]) == 2
    assert cli.main(["sweep", "--config", str(tmp_path / "nope.json")]) == 2
    assert cli.main([]) == 2


def test_missing_inputs_exit_2(tmp_path):
    cfgp = _write(tmp_path, TINY)
    assert cli.main(["estimate", "--config", str(cfgp), "--out", str(tmp_path / "empty")]) == 2
    assert cli.main(["invert", "--config", str(cfgp), "--out", str(tmp_path / "empty")]) == 2
    assert cli.main(["sweep", "--config", str(cfgp), "--out", str(tmp_path), "--threads", "0"]) == 2


def test_bad_suite_name_exits_2(tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.main(["validate", "--config", str(_write(tmp_path, TINY)), "--suite", "nope"])
    assert exc.value.code == 2


def test_numeric_failure_exit_3_with_manifest(tmp_path, monkeypatch):
    cfgp = _write(tmp_path, _edit(solver__omega_threshold=100.0))
    monkeypatch.setattr(lippmann, "COND_LIMIT", 1.0)
    out = tmp_path / "f"
    assert cli.main(["sweep", "--config", str(cfgp), "--out", str(out)]) == 3
    manifest = json.loads((out / "failure_manifest.json").read_text())
    assert manifest["stage"] == "sweep" and len(manifest["failures"]) == 13
    assert cli.main(["estimate", "--config", str(cfgp), "--out", str(out)]) == 3


def test_suite_failure_exit_4(tmp_path, monkeypatch):
    monkeypatch.setattr(validation, "suite_hankel", lambda: [validation.Check("x", 1.0, "< 0", False)])
    out = tmp_path / "v"
    assert cli.main(["validate", "--config", str(_write(tmp_path, TINY)), "--out", str(out), "--suite", "hankel"]) == 4
    assert json.loads((out / "validate_hankel.json").read_text())["passed"] is False


def test_validate_suites_pass_on_tiny_config(tmp_path):
    cfgp = _write(tmp_path, TINY)
    for suite in ("hankel", "green", "born"):
        assert cli.main(["validate", "--config", str(cfgp), "--out", str(tmp_path), "--suite", suite]) == 0


def test_explain_flag(capsys):
    assert cli.main(["--explain-config"]) == 0
    assert "field.m" in capsys.readouterr().out
