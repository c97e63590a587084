import json

import numpy as np
import pytest

from foliage.cli import main

WAVE = {"q": 2, "m": 2, "coeffs": [{"s": [2, 0], "re": "1"}, {"s": [0, 2], "re": "-1"}]}


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def write(tmp_path, name, data):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def test_counterexample_table(capsys):
    code, out, _ = run(capsys, "counterexample-1", "--n-max", "100", "--no-timestamp")
    rep = json.loads(out)
    assert code == 0 and rep["passed"] and len(rep["table"]) == 101


def test_describe_operator_flags_wave(capsys, tmp_path):
    code, out, _ = run(capsys, "describe-operator", write(tmp_path, "w.json", WAVE), "--no-timestamp")
    v = json.loads(out)["verdicts"]
    assert code == 0 and not v["elliptic"] and v["constant_coeffs"]


def test_describe_operator_bad_expression(capsys, tmp_path):
    bad = {"q": 1, "m": 2, "coeffs": [{"s": [2], "re": "1+*"}]}
    code, _, err = run(capsys, "describe-operator", write(tmp_path, "b.json", bad))
    assert code == 2 and "error" in err


def test_missing_file(capsys):
    code, _, _ = run(capsys, "describe-operator", "/nonexistent.json")
    assert code == 2


def test_invalid_json(capsys, tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{not json")
    assert run(capsys, "describe-operator", str(p))[0] == 2


def test_unknown_scenario(capsys):
    assert run(capsys, "build-metric", "--scenario", "nope")[0] == 2


def test_non_positive_grid():
    with pytest.raises(SystemExit) as exc:
        main(["orbit", "--grid", "0"])
    assert exc.value.code == 2


def test_check_commute_pass_and_fail(capsys, tmp_path):
    code, _, _ = run(capsys, "check-commute", "--scenario", "flat-torus", "--no-timestamp")
    assert code == 0
    # the scaling y -> 2y does not commute with the Laplacian
    H = {"q": 2, "charts": [{"id": "O", "box": [[-1, 1], [-1, 1]], "ambient": [[-2, 2], [-2, 2]]}],
         "generators": [{"src": "O", "dst": "O", "forward": ["2*y1", "2*y2"], "inverse": ["y1/2", "y2/2"],
                         "dom": [[-0.4, 0.4], [-0.4, 0.4]], "dom_ext": [[-0.45, 0.45], [-0.45, 0.45]]}]}
    lap = {"q": 2, "m": 2, "coeffs": [{"s": [2, 0], "re": "1"}, {"s": [0, 2], "re": "1"}]}
    code, out, _ = run(capsys, "check-commute", "--pseudogroup", write(tmp_path, "h.json", H),
                       "--operator", write(tmp_path, "p.json", lap), "--no-timestamp")
    assert code == 1 and json.loads(out)["max_residual"] >= 6.0


def test_jacobian_bounds_with_equicontinuity(capsys, tmp_path):
    csv_path = tmp_path / "norms.csv"
    code, out, _ = run(capsys, "jacobian-bounds", "--scenario", "translations", "--max-len", "4", "--mu", "1",
                       "--emit-csv", str(csv_path), "--no-timestamp")
    rep = json.loads(out)
    assert code == 0 and rep["equicontinuity"]["passed"]
    assert csv_path.read_text().splitlines()[0] == "length,min_norm,max_norm"


def test_orbit_writes_points(capsys, tmp_path):
    csv_path = tmp_path / "orbit.csv"
    H = {"q": 1, "charts": [{"id": "O", "box": [[-0.3333333333333333, 0.3333333333333333]], "ambient": [[-1, 1]]}],
         "generators": [{"src": "O", "dst": "O", "forward": [f"y1 + {s}"], "inverse": [f"y1 - {s}"],
                         "dom": [[-0.3333333333333333, 0.3333333333333333]],
                         "dom_ext": [[-0.6666666666666666, 0.6666666666666666]]}
                        for s in (0.1 * 2 ** 0.5, 0.1 * 3 ** 0.5)]}
    code, out, _ = run(capsys, "orbit", "--pseudogroup", write(tmp_path, "h.json", H), "--point", "0",
                       "--max-len", "20", "--emit-csv", str(csv_path), "--no-timestamp")
    rep = json.loads(out)
    assert code == 0 and rep["coverage_gap"] < 0.05
    assert len(csv_path.read_text().splitlines()) == rep["orbit_size"] + 1


def test_coordinate_rule(capsys):
    code, out, _ = run(capsys, "verify-coordinate-rule", "--samples", "5", "--candidates", "100", "--no-timestamp")
    rep = json.loads(out)
    assert code == 0 and rep["max_rule_residual"] < 1e-5 and rep["search"]["triangular_found"] == 0


def test_build_metric_c4(capsys):
    code, out, _ = run(capsys, "build-metric", "--scenario", "c4-suspension", "--no-timestamp")
    rep = json.loads(out)
    assert code == 0
    assert np.allclose(rep["g_z"], 1.5 * np.eye(2), atol=1e-10)


def test_build_metric_honest_failure(capsys):
    code, out, _ = run(capsys, "build-metric", "--scenario", "sphere-rotation", "--no-timestamp")
    rep = json.loads(out)
    assert code == 1 and rep["stage"] == "average" and "TransportUnavailable" in rep["error"]


def test_deterministic_and_round_trip(capsys, tmp_path):
    bundle = tmp_path / "s.json"
    assert run(capsys, "scenario", "export", "translations", "--out", str(bundle))[0] == 0
    _, first, _ = run(capsys, "build-metric", "--scenario", "translations", "--no-timestamp")
    _, second, _ = run(capsys, "build-metric", "--scenario", "translations", "--no-timestamp")
    _, from_file, _ = run(capsys, "build-metric", "--scenario-file", str(bundle), "--no-timestamp")
    assert first == second == from_file


def test_timestamp_present_by_default(capsys):
    _, out, _ = run(capsys, "counterexample-1", "--n-max", "2")
    assert "timestamp" in json.loads(out)


def test_seed_changes_samples(capsys, monkeypatch):
    monkeypatch.setenv("FOLIAGE_SEED", "7")
    _, a, _ = run(capsys, "verify-coordinate-rule", "--samples", "2", "--candidates", "5", "--no-timestamp")
    monkeypatch.setenv("FOLIAGE_SEED", "8")
    _, b, _ = run(capsys, "verify-coordinate-rule", "--samples", "2", "--candidates", "5", "--no-timestamp")
    assert a != b
    monkeypatch.setenv("FOLIAGE_SEED", "x")
    assert run(capsys, "counterexample-1")[0] == 2


def test_verify_invariance_from_report(capsys, tmp_path):
    report = tmp_path / "m.json"
    run(capsys, "build-metric", "--scenario", "conjugated-translations", "--out", str(report), "--no-timestamp")
    code, out, _ = run(capsys, "verify-invariance", "--scenario", "conjugated-translations", "--metric",
                       str(report), "--no-timestamp")
    assert code == 0 and json.loads(out)["invariance_residual"] < 1e-8


def test_verify_invariance_constant_fails(capsys):
    code, _, _ = run(capsys, "verify-invariance", "--scenario", "c4-suspension", "--constant", "[[1,0],[0,2]]",
                     "--no-timestamp")
    assert code == 1


def test_scenario_list(capsys):
    code, out, _ = run(capsys, "scenario", "list", "--no-timestamp")
    names = [r["name"] for r in json.loads(out)["scenarios"]]
    assert code == 0 and "c4-suspension" in names and "translations" in names
