import hashlib
import json
from pathlib import Path

import pytest

from plurizero.cli import main
from plurizero.config import validate_config
from plurizero.errors import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMALL = """
experiment = "expected"
seed = 7
trials = 20
degrees = [10, 20, 30]

[law]
kind = "gaussian"

[[forms]]
center = [[0.8, 0.0]]
radius = 0.6
"""


def _errors(text):
    with pytest.raises(ConfigError) as exc:
        validate_config(text)
    return exc.value.errors


def test_gamma_rejected():
    errs = _errors('experiment = "moment"\ndegrees = [64]\n[law]\nkind = "heavy_tail_iid"\ngamma = 2.0\n')
    assert any("gamma must exceed 2m" in m for _, m in errs)


def test_variance_alpha_rejected():
    text = SMALL.replace('"expected"', '"variance"').replace("[10, 20, 30]", "[10, 20, 30, 40]")
    errs = _errors(text.replace('kind = "gaussian"', 'kind = "gaussian"\nalpha = 1.0'))
    assert any(p == "law.alpha" and "alpha >= 2" in m for p, m in errs)


def test_errors_are_aggregated_with_paths():
    text = SMALL.replace("[10, 20, 30]", "[30, 20]").replace("trials = 20", "trials = 1")
    text = text.replace("[[0.8, 0.0]]", "[[0.8, 0.0], [0.1, 0.1]]")
    paths = {p for p, _ in _errors(text)}
    assert {"degrees", "trials", "forms[0].center"} <= paths


def test_unknown_key_rejected():
    errs = _errors("mystery = 3\n" + SMALL)
    assert errs[0][0] == "mystery"


def test_echo_fixed_point():
    cfg = validate_config(SMALL)
    again = validate_config(cfg.echo())
    assert again == cfg
    assert again.echo() == cfg.echo()


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.toml")), ids=lambda p: p.name)
def test_shipped_configs_validate(path, capsys):
    assert main(["validate", str(path)]) == 0
    assert "experiment" in capsys.readouterr().out


def _digest(out: Path) -> dict:
    files = [out / "report.json"] + sorted((out / "tables").glob("*.csv"))
    return {f.name: hashlib.sha256(f.read_bytes()).hexdigest() for f in files}


def test_run_is_deterministic_across_workers(tmp_path, monkeypatch):
    cfg = tmp_path / "small.toml"
    cfg.write_text(SMALL)
    assert main(["run", str(cfg), "--seed", "7", "--out", str(tmp_path / "a")]) == 0
    monkeypatch.setenv("PLURIZERO_WORKERS", "3")
    assert main(["run", str(cfg), "--seed", "7", "--out", str(tmp_path / "b")]) == 0
    assert _digest(tmp_path / "a") == _digest(tmp_path / "b")
    manifest = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert manifest["workers"] == 3
    assert manifest["outputs"]["report.json"] == _digest(tmp_path / "a")["report.json"]
    report = json.loads((tmp_path / "a" / "report.json").read_text())
    assert report["theorem"] == "lem:expw" and report["seed"] == 7


def test_seed_override_changes_report(tmp_path):
    cfg = tmp_path / "small.toml"
    cfg.write_text(SMALL)
    main(["run", str(cfg), "--seed", "1", "--out", str(tmp_path / "a")])
    main(["run", str(cfg), "--seed", "2", "--out", str(tmp_path / "b")])
    assert _digest(tmp_path / "a")["report.json"] != _digest(tmp_path / "b")["report.json"]


def test_audit_failure_exit_code(tmp_path, capsys):
    cfg = tmp_path / "strict.toml"
    cfg.write_text(SMALL + "\n[audit]\nmax_deviation = 1e-9\n")
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "FAILED" in capsys.readouterr().out


def test_invalid_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text('experiment = "nope"\ndegrees = [1]\n')
    assert main(["validate", str(cfg)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "config" and err["details"][0]["path"] == "experiment"


def test_missing_file_exit_code(tmp_path, capsys):
    assert main(["run", str(tmp_path / "none.toml")]) == 2


def test_bad_worker_env(tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "small.toml"
    cfg.write_text(SMALL)
    monkeypatch.setenv("PLURIZERO_WORKERS", "zero")
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_bm_run_writes_tables(tmp_path):
    assert main(["run", str(CONFIGS / "bm_circle.toml"), "--out", str(tmp_path)]) == 0
    header = (tmp_path / "tables" / "bm.csv").read_text().splitlines()[0]
    assert header.startswith("n,R_n")
