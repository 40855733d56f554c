import json

import numpy as np
import pytest

from psdlab.cli import main
from psdlab.errors import ConfigError
from psdlab.harness import ExperimentConfig, export_plot_data, output_directory, run, sweep
from psdlab.trajectory import TrajectoryRecord, write_trajectory

BASE = """[experiment]
kind = classical
seed = 3
arclength = 0.3
samples = 31

[initial]
preset = generic-expanding
"""


def config(**overrides):
    cfg = ExperimentConfig.from_text(BASE)
    for key, value in overrides.items():
        cfg = cfg.with_value(key.replace("__", "."), value)
    return cfg


def read_table(path):
    lines = path.read_text().splitlines()
    header = [line for line in lines if line.startswith("#")]
    rows = np.array([[float(x) for x in line.split()] for line in lines if not line.startswith("#")])
    return header, rows


# --------------------------------------------------------------------------- configuration


def test_config_errors_are_itemized():
    text = """[experiment]
kind = wobble
samples = zero

[system]
masses = 1 1
softening = -1

[initial]
preset = nothing
"""
    with pytest.raises(ConfigError) as err:
        ExperimentConfig.from_text(text)
    problems = err.value.problems
    assert len(problems) == 5
    assert any("kind" in p for p in problems) and any("nothing" in p for p in problems)


def test_inline_comments_are_ignored():
    cfg = ExperimentConfig.from_text(BASE.replace("kind = classical", "kind = oracle   ; Newtonian run"))
    assert cfg.kind == "oracle"


def test_unknown_section_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text("[bogus]\nx = 1\n")


def test_hash_ignores_output_section():
    a = config()
    b = config(output__directory="/somewhere/else")
    c = config(experiment__seed=4)
    assert a.config_hash() == b.config_hash() != c.config_hash()
    assert ExperimentConfig.from_text(a.to_text()).config_hash() == a.config_hash()


def test_output_directory_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("PSDLAB_OUT", str(tmp_path))
    cfg = config()
    assert output_directory(cfg) == tmp_path / cfg.config_hash()[:12]
    assert output_directory(cfg, tmp_path / "x") == tmp_path / "x"


# --------------------------------------------------------------------------- runs


def test_classical_run_is_reproducible(tmp_path):
    first = run(config(), tmp_path / "a")
    second = run(config(), tmp_path / "b")
    assert first.status == "complete"
    for name in first.files + ["manifest.json"]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["config_hash"] == config().config_hash()
    assert "started" in json.loads((tmp_path / "a" / "timestamps.json").read_text())
    assert second.summary["samples"] == 31


def test_diagnostics_table(tmp_path):
    run(config(), tmp_path)
    header, rows = read_table(tmp_path / "trajectory.diagnostics.tsv")
    assert header[0] == f"# config_hash={config().config_hash()}"
    assert np.all(np.diff(rows[:, 0]) > 0)


def test_runtime_failure_is_reported(tmp_path):
    manifest = run(config(initial__preset="equilateral-rest"), tmp_path)
    assert manifest.status == "failure" and "UndefinedDirectionError" in manifest.message
    assert json.loads((tmp_path / "manifest.json").read_text())["status"] == "failure"


def test_oracle_comparison_report(tmp_path):
    manifest = run(config(experiment__kind="oracle-compare"), tmp_path)
    report = json.loads((tmp_path / "report.json").read_text())
    assert manifest.status == "complete" and report["sup_error"] < 1e-6
    assert (tmp_path / "oracle.txt").exists()


def test_complexity_scan_minimum(tmp_path):
    manifest = run(config(experiment__kind="complexity-scan", quantum__lmax=8), tmp_path)
    assert manifest.summary["min_com"] >= 1 / (3 * np.sqrt(3)) - 1e-12


def test_quantum_run_records_guidance(tmp_path):
    cfg = config(experiment__kind="quantum", system__softening=0.7, quantum__lmax=16, quantum__guided="true",
                 quantum__wavefunction="plane-phase", quantum__ktilde="guidance", experiment__arclength=0.05, experiment__samples=6)
    manifest = run(cfg, tmp_path)
    assert manifest.status == "complete" and manifest.summary["max_delta"] < 1e-6
    real = run(cfg.with_value("quantum.wavefunction", "Y20-band"), tmp_path / "real")
    assert real.status == "failure" and "phase gradient vanishes" in real.message


# --------------------------------------------------------------------------- sweeps


def test_sweep_point_matches_single_run(tmp_path):
    result = sweep(config(), tmp_path / "sweep", parameter="experiment.seed", values=["3"])
    single = run(config(), tmp_path / "single")
    assert result["completed"] == 1
    assert (tmp_path / "sweep" / "point-000" / "trajectory.txt").read_bytes() == \
        (tmp_path / "single" / "trajectory.txt").read_bytes()
    assert single.status == "complete"


def test_sweep_isolates_failures(tmp_path):
    result = sweep(config(), tmp_path, parameter="initial.preset",
                   values=["generic-expanding", "equilateral-rest", "no-such-preset"], threads=2)
    statuses = [p["status"] for p in result["points"]]
    assert statuses == ["complete", "failure", "failure"]
    assert (tmp_path / "sweep.tsv").read_text().count("\n") == 5


# --------------------------------------------------------------------------- export


def test_sphere_path_export_lies_on_the_sphere(tmp_path):
    run(config(), tmp_path)
    (out,) = export_plot_data([tmp_path / "trajectory.txt"], "sphere-path")
    _, rows = read_table(out)
    assert np.allclose(np.sum(rows[:, 1:] ** 2, axis=1), 0.25, atol=1e-10)


def test_complexity_export_is_ordered(tmp_path):
    run(config(), tmp_path)
    (out,) = export_plot_data([tmp_path / "trajectory.txt"], "complexity", tmp_path / "plots")
    header, rows = read_table(out)
    assert header[1] == "# columns: s com" and np.all(np.diff(rows[:, 0]) > 0)


def test_empty_trajectory_exports_header_only(tmp_path):
    empty = TrajectoryRecord(np.zeros(0), np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0), np.zeros(0),
                             np.zeros(0), np.zeros(0))
    write_trajectory(tmp_path / "empty.txt", empty, "h")
    (out,) = export_plot_data([tmp_path / "empty.txt"], "time")
    lines = out.read_text().splitlines()
    assert len(lines) == 3 and all(line.startswith("#") for line in lines)


def test_export_problems_are_itemized(tmp_path):
    (tmp_path / "bad.txt").write_text('{"magic": "nope"}\n')
    run(config(), tmp_path)
    with pytest.raises(ConfigError) as err:
        export_plot_data([tmp_path / "bad.txt", tmp_path / "trajectory.txt"], "guidance")
    assert len(err.value.problems) >= 2


# --------------------------------------------------------------------------- command line


def test_cli_exit_codes(tmp_path, capsys):
    good = tmp_path / "good.ini"
    good.write_text(BASE)
    assert main(["simulate", "--config", str(good), "--out", str(tmp_path / "run")]) == 0
    rest = tmp_path / "rest.ini"
    rest.write_text(BASE.replace("generic-expanding", "equilateral-rest"))
    assert main(["simulate", "--config", str(rest), "--out", str(tmp_path / "rest")]) == 2
    broken = tmp_path / "broken.ini"
    broken.write_text(BASE.replace("classical", "nonsense"))
    assert main(["simulate", "--config", str(broken)]) == 2
    assert "error: experiment.kind" in capsys.readouterr().err
    assert main(["export", str(tmp_path / "run" / "trajectory.txt"), "--kind", "time"]) == 0


def test_cli_seed_override_and_env_output(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("PSDLAB_OUT", str(tmp_path))
    cfg_path = tmp_path / "c.ini"
    cfg_path.write_text(BASE.replace("generic-expanding", "random"))
    assert main(["simulate", "--config", str(cfg_path), "--seed", "9"]) == 0
    manifest = json.loads(capsys.readouterr().out)
    expected = ExperimentConfig.from_text(BASE.replace("generic-expanding", "random")).with_value("experiment.seed", 9)
    assert manifest["config_hash"] == expected.config_hash()
    assert (tmp_path / expected.config_hash()[:12] / "manifest.json").exists()


def test_cli_partial_sweep(tmp_path):
    cfg_path = tmp_path / "s.ini"
    cfg_path.write_text(BASE + "\n[sweep]\nparameter = initial.preset\nvalues = generic-expanding equilateral-rest\n")
    assert main(["sweep", "--config", str(cfg_path), "--out", str(tmp_path / "out")]) == 1
