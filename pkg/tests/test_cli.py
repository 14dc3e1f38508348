"""End-to-end CLI behavior: configs, artifacts, exit codes, JSON errors."""

import json
from textwrap import dedent

import numpy as np
import pytest

from geoctrl.cli import main

FLAT_SIM = dedent(
    """\
    experiment: simulate
    model: {name: flat}
    integrator: {dt: 0.001}
    simulate:
      t1: 1.0
      q0: [0.0, 0.0]
      controls: [{type: sinusoid, amplitude: 0.5, omega: 2.0}]
    """
)


def write(tmp_path, text, name="config.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def run_json(capsys, argv):
    rc = main(argv)
    out, err = capsys.readouterr()
    payload = json.loads(out) if out.strip() else None
    error = json.loads(err) if err.strip() else None
    return rc, payload, error


# -- list / validate -------------------------------------------------------------


def test_list_models_mentions_all_builtins(capsys):
    assert main(["list-models"]) == 0
    out = capsys.readouterr().out
    for name in ("flat", "planar-body", "blimp", "pvtol", "three-link"):
        assert name in out
    assert "default actuators" in out


def test_validate_good_config(tmp_path, capsys):
    rc, payload, _ = run_json(capsys, ["validate", write(tmp_path, FLAT_SIM)])
    assert rc == 0
    assert payload["ok"] is True
    assert payload["model"] == "flat"
    assert (payload["n"], payload["m"]) == (2, 1)


def test_validate_missing_file(tmp_path, capsys):
    rc, _, error = run_json(capsys, ["validate", str(tmp_path / "nope.yaml")])
    assert rc == 2
    assert error["error"]["kind"] == "config"
    assert "not found" in error["error"]["message"]


def test_validate_rejects_bad_yaml(tmp_path, capsys):
    rc, _, error = run_json(capsys, ["validate", write(tmp_path, "a: [unclosed")])
    assert rc == 2
    assert error["error"]["kind"] == "config"


def test_validate_rejects_unknown_experiment(tmp_path, capsys):
    cfg = "experiment: teleport\nmodel: {name: flat}\n"
    rc, _, error = run_json(capsys, ["validate", write(tmp_path, cfg)])
    assert rc == 2
    assert "unknown experiment" in error["error"]["message"]


def test_validate_rejects_bad_actuator(tmp_path, capsys):
    cfg = "experiment: simulate\nmodel: {name: flat, actuators: [5]}\n"
    rc, _, error = run_json(capsys, ["validate", write(tmp_path, cfg)])
    assert rc == 2


# -- running experiments -----------------------------------------------------------


def test_run_simulate_writes_artifacts_and_manifest(tmp_path, capsys):
    out = tmp_path / "results"
    rc, payload, _ = run_json(
        capsys, ["run", write(tmp_path, FLAT_SIM), "--out", str(out)]
    )
    assert rc == 0
    assert payload["ok"] is True
    assert payload["artifacts"] == ["trajectory.csv"]
    csv = (out / "trajectory.csv").read_text().splitlines()
    assert csv[0] == "t,q1,q2,qd1,qd2,u1"
    assert len(csv) == 1002
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["experiment"] == "simulate"
    assert manifest["model"] == {"name": "flat", "n": 2, "m": 1}
    for key in ("geoctrl", "python", "numpy", "scipy"):
        assert key in manifest["versions"]
    assert manifest["results"]["samples"] == 1001
    assert manifest["wall_time_s"] >= 0.0


def test_identical_runs_are_byte_identical(tmp_path, capsys):
    cfg = write(tmp_path, FLAT_SIM)
    assert main(["run", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["run", cfg, "--out", str(tmp_path / "b")]) == 0
    capsys.readouterr()
    a = (tmp_path / "a" / "trajectory.csv").read_bytes()
    b = (tmp_path / "b" / "trajectory.csv").read_bytes()
    assert a == b


def test_output_key_in_config_is_used(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    cfg = write(tmp_path, FLAT_SIM + "output: from-config\n")
    rc, payload, _ = run_json(capsys, ["run", cfg])
    assert rc == 0
    assert (tmp_path / "from-config" / "trajectory.csv").exists()


def test_run_rejects_wrong_control_count(tmp_path, capsys):
    cfg = FLAT_SIM.replace(
        "controls: [{type: sinusoid, amplitude: 0.5, omega: 2.0}]",
        "controls: [{type: const}, {type: const}]",
    )
    rc, _, error = run_json(capsys, ["run", write(tmp_path, cfg), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert error["error"]["kind"] == "config"


def test_run_rejects_unknown_signal_type(tmp_path, capsys):
    cfg = FLAT_SIM.replace("type: sinusoid, amplitude: 0.5, omega: 2.0", "type: square")
    rc, _, error = run_json(capsys, ["run", write(tmp_path, cfg), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "signal type" in error["error"]["message"]


def test_run_missing_required_key(tmp_path, capsys):
    cfg = FLAT_SIM.replace("  t1: 1.0\n", "")
    rc, _, error = run_json(capsys, ["run", write(tmp_path, cfg), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "t1" in error["error"]["message"]


def test_numerical_failure_is_json_exit_3(tmp_path, capsys):
    # the offset thruster violates the span assumption behind the synthesis
    cfg = dedent(
        """\
        experiment: oscillatory-track
        model: {name: planar-body, actuators: [1, 4]}
        oscillatory-track:
          epsilon: 0.1
          t1: 0.5
          gains:
            z: [{type: const, value: 0.1}]
            pairs: [{pair: [1, 2], type: const, value: 0.5}]
        """
    )
    rc = main(["run", write(tmp_path, cfg), "--out", str(tmp_path / "o")])
    out, err = capsys.readouterr()
    assert rc == 3
    error = json.loads(err)
    assert error["error"]["kind"] == "numerical"
    assert error["error"]["type"] == "SpanAssumptionError"
    assert "Traceback" not in err


def test_decoupling_run_reports_fields(tmp_path, capsys):
    cfg = dedent(
        """\
        experiment: decoupling
        model: {name: three-link}
        decoupling: {q: [0.4, 0.9, -1.3]}
        """
    )
    out = tmp_path / "o"
    rc, payload, _ = run_json(capsys, ["run", write(tmp_path, cfg), "--out", str(out)])
    assert rc == 0
    report = json.loads((out / "controllability.json").read_text())
    assert set(report) == {"rank", "depth", "verdict", "residuals"}
    assert report["verdict"] is True and report["rank"] == 3
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["results"]["fields_found"] >= 2


def test_larc_run_three_link(tmp_path, capsys):
    cfg = dedent(
        """\
        experiment: larc
        model: {name: three-link}
        larc: {q: [0.3, -0.2, 0.9], depth: 2}
        """
    )
    out = tmp_path / "o"
    rc, payload, _ = run_json(capsys, ["run", write(tmp_path, cfg), "--out", str(out)])
    assert rc == 0
    report = json.loads((out / "controllability.json").read_text())
    assert report["rank"] == 3 and report["depth"] == 2


def test_oscillatory_track_run(tmp_path, capsys):
    cfg = dedent(
        """\
        experiment: oscillatory-track
        model: {name: blimp}
        oscillatory-track:
          epsilon: 0.1
          t1: 0.3
          gains:
            z: [{type: const, value: 0.2}]
            pairs: [{pair: [1, 2], type: const, value: 0.5}]
        """
    )
    out = tmp_path / "o"
    rc, payload, _ = run_json(capsys, ["run", write(tmp_path, cfg), "--out", str(out)])
    assert rc == 0
    assert sorted(payload["artifacts"]) == [
        "averaged.csv",
        "synthesis_audit.json",
        "true.csv",
    ]
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["results"]["audit_max_difference"] < 1e-6
    assert manifest["results"]["max_tracking_err"] < 0.5


def test_convergence_run_writes_csv(tmp_path, capsys):
    cfg = dedent(
        """\
        experiment: convergence
        model: {name: flat}
        convergence:
          epsilons: [0.2, 0.1]
          t1: 0.5
          gains: {z: [{type: const, value: 0.0}]}
        """
    )
    out = tmp_path / "o"
    rc, payload, _ = run_json(capsys, ["run", write(tmp_path, cfg), "--out", str(out)])
    assert rc == 0
    lines = (out / "convergence.csv").read_text().splitlines()
    assert lines[0] == "epsilon,max_err,slope_partial"
    assert len(lines) == 3
